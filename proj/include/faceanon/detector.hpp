#pragma once

#include "faceanon/image.hpp"

#include <memory>
#include <string>
#include <vector>

namespace faceanon {

/// Face box in the coordinates of the image it was detected in.
struct DetectionBox {
  Box box;
  double confidence = 0.0;  // in [0, 1]
  double area_ratio = 0.0;  // box area / image area
};

/// Pluggable face detector. Implementations return boxes sorted by
/// descending confidence and must be deterministic for a fixed input.
class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  virtual std::vector<DetectionBox> detect(const Rgb8Image& image) const = 0;
  virtual std::string name() const = 0;
};

/// Reference detector: connected regions of skin-coloured pixels, each
/// reported as a square box around the region. Confidence is the fraction
/// of the tight region box covered by skin.
class SkinRegionDetector : public FaceDetector {
 public:
  struct Options {
    double min_area_fraction = 0.004;  // of the image area
    Index min_pixels = 24;
    double margin = 0.05;              // per side, relative to the region extent
    double min_aspect = 0.35;          // width / height of the tight region
    double max_aspect = 2.5;
    double min_confidence = 0.3;
  };

  SkinRegionDetector() = default;
  explicit SkinRegionDetector(const Options& opt) : opt_(opt) {}

  std::vector<DetectionBox> detect(const Rgb8Image& image) const override;
  std::string name() const override { return "skin"; }

  static bool is_skin(std::uint8_t r, std::uint8_t g, std::uint8_t b);

 private:
  Options opt_;
};

/// Detector by configuration name; throws std::invalid_argument when unknown.
std::unique_ptr<FaceDetector> make_detector(const std::string& name);

struct RefineResult {
  Box crop;                   // final crop, absolute coordinates
  DetectionBox face;          // face box inside `crop`, absolute coordinates
  std::vector<double> ratios; // face/crop area ratio after each detection
  int iterations = 0;         // re-detections performed
  bool capped = false;        // stopped by max_iters below the threshold
  bool lost = false;          // re-detection found no face
};

struct RefineOptions {
  double ratio_threshold = 0.6;
  int max_iters = 4;
  /// Fraction of the gap between face box and crop kept on each side when
  /// the crop is tightened.
  double keep = 0.5;
};

/// Repetitive detection. `initial` is a detection inside `crop` (absolute
/// coordinates). While the face covers less than the threshold of the
/// crop, the crop is pulled in towards the face box and the detector runs
/// again inside it.
RefineResult refine_detection(const Rgb8Image& image, const Box& crop, const DetectionBox& initial,
                              const FaceDetector& detector, const RefineOptions& options);

/// Detects inside `crop` first and refines the top detection. With no
/// detection the result has `lost` set and no ratios.
RefineResult refine_detection(const Rgb8Image& image, const Box& crop, const FaceDetector& detector,
                              const RefineOptions& options);

}  // namespace faceanon
