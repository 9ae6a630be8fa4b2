#pragma once

#include "faceanon/detector.hpp"
#include "faceanon/io.hpp"
#include "faceanon/models.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace faceanon {

struct AnonymizerConfig {
  double ratio_threshold = 0.6;
  int max_refine_iters = 4;
  double refine_keep = 0.5;
  /// Side of the first crop around a detection, relative to the box side.
  double context = 2.0;
  std::string detector = "skin";

  void validate() const;
  RefineOptions refine_options() const { return {ratio_threshold, max_refine_iters, refine_keep}; }
};

struct FaceReport {
  DetectionBox detection;  // frame coordinates
  RefineResult refine;
  bool anonymized = false;
  bool empty_foreground = false;
};

struct FrameReport {
  std::vector<FaceReport> faces;
  std::size_t anonymized() const;
  std::size_t empty_foreground() const;
};

/// Square crop of side `context` times the box side around its centre,
/// clamped into a w x h frame.
Box context_crop(const Box& box, double context, Index w, Index h);

/// Detection, repetitive re-cropping, segmentation, synthesis and the
/// background-preserving composite, applied per detected face.
class Anonymizer {
 public:
  /// Uses G and Gs of `models`; both are switched to inference mode.
  Anonymizer(ModelBundle<float>& models, const FaceDetector& detector, AnonymizerConfig cfg);

  /// Frames without detections come back bit-exact. Faces are processed in
  /// descending confidence; a later face overwrites an earlier one where
  /// their crops overlap.
  Rgb8Image anonymize_frame(const Rgb8Image& frame, FrameReport* report = nullptr) const;

  /// Anonymizes the face inside a crop already at hand (no detection):
  /// returns the composite resized back to the crop size together with the
  /// mask used. The photo is resized to the network size for both networks.
  Rgb8Image anonymize_crop(const Rgb8Image& crop, SemanticMask* mask = nullptr) const;

  const AnonymizerConfig& config() const { return cfg_; }

 private:
  ModelBundle<float>& models_;
  const FaceDetector& detector_;
  AnonymizerConfig cfg_;
};

struct VideoSummary {
  std::size_t frames = 0;
  std::size_t copied_through = 0;  // undecodable frames passed on unchanged
  Index width = 0;
  Index height = 0;
  double fps = 0;
  std::size_t faces = 0;
  std::size_t faces_anonymized = 0;
  std::size_t empty_foreground = 0;
  std::size_t refine_capped = 0;
  std::size_t refine_lost = 0;
  std::map<std::size_t, std::size_t> faces_histogram;  // faces per frame -> frames
  std::vector<double> frame_ms;

  double timing_percentile(double p) const;
  /// Structured key: value report.
  std::string to_text() const;
};

/// Frame sink created once the first frame's size is known.
using SinkFactory = std::function<std::unique_ptr<FrameSink>(Index width, Index height, double fps)>;

/// Runs every frame of `source` through the anonymizer in order.
VideoSummary anonymize_stream(FrameSource& source, const SinkFactory& make_sink, const Anonymizer& anonymizer);

}  // namespace faceanon
