#pragma once

#include "faceanon/tensor.hpp"

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace faceanon {

/// Row-major H x W grid of 8-bit label ids.
using LabelGrid = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kNumClasses = 11;        // background + facial classes
inline constexpr int kNumFacialClasses = 10;  // N_f
inline constexpr int kNumSourceClasses = 19;  // face-parsing source annotation

enum class FaceClass : std::uint8_t {
  Background = 0,
  Skin = 1,
  Nose = 2,
  Eyes = 3,
  Eyebrows = 4,
  Ears = 5,
  Mouth = 6,
  Lip = 7,
  Hair = 8,
  Neck = 9,
  Eyeglass = 10,
};

/// Class name for each reduced label id.
const std::array<std::string_view, kNumClasses>& class_names();
/// Label id for a class name; throws std::invalid_argument when unknown.
int class_id(std::string_view name);

/// Source annotation ids (0 background, 1 skin, 2 l_brow, 3 r_brow, 4 l_eye,
/// 5 r_eye, 6 eye_g, 7 l_ear, 8 r_ear, 9 ear_r, 10 nose, 11 mouth, 12 u_lip,
/// 13 l_lip, 14 neck, 15 neck_l, 16 cloth, 17 hair, 18 hat).
const std::array<std::string_view, kNumSourceClasses>& source_class_names();
/// Reduced id for every source id.
const std::array<std::uint8_t, kNumSourceClasses>& source_to_reduced();

class UnknownLabelError : public std::invalid_argument {
 public:
  explicit UnknownLabelError(int label)
      : std::invalid_argument("unknown source label id " + std::to_string(label)), label_(label) {}
  int label() const { return label_; }

 private:
  int label_;
};

/// Label map over the 11 reduced classes. Construction validates every id.
class SemanticMask {
 public:
  SemanticMask() = default;
  explicit SemanticMask(LabelGrid labels);
  SemanticMask(Index height, Index width, FaceClass fill = FaceClass::Background);

  Index height() const { return labels_.rows(); }
  Index width() const { return labels_.cols(); }
  const LabelGrid& labels() const { return labels_; }
  std::uint8_t operator()(Index y, Index x) const { return labels_(y, x); }
  void set(Index y, Index x, FaceClass c) { labels_(y, x) = static_cast<std::uint8_t>(c); }

  /// Pixel count per class id.
  std::array<Index, kNumClasses> histogram() const;
  bool contains(int label) const;
  double foreground_fraction() const;

  /// (1, 11, H, W) one-hot encoding.
  template <typename Scalar>
  Tensor<Scalar> one_hot() const {
    Tensor<Scalar> t(Shape{1, kNumClasses, height(), width()});
    for (Index y = 0; y < height(); ++y) {
      for (Index x = 0; x < width(); ++x) t(0, labels_(y, x), y, x) = Scalar(1);
    }
    return t;
  }

  /// Per-pixel argmax over the channels of sample n of a class-score tensor.
  template <typename Scalar>
  static SemanticMask argmax(const Tensor<Scalar>& scores, Index n = 0) {
    const Shape& s = scores.shape();
    if (s.c != kNumClasses) throw ShapeError("SemanticMask::argmax expects 11 channels, got " + to_string(s));
    LabelGrid labels(s.h, s.w);
    for (Index y = 0; y < s.h; ++y) {
      for (Index x = 0; x < s.w; ++x) {
        int best = 0;
        for (int c = 1; c < kNumClasses; ++c) {
          if (scores(n, c, y, x) > scores(n, best, y, x)) best = c;
        }
        labels(y, x) = static_cast<std::uint8_t>(best);
      }
    }
    return SemanticMask(std::move(labels));
  }

  friend bool operator==(const SemanticMask& a, const SemanticMask& b) {
    return a.labels_.rows() == b.labels_.rows() && a.labels_.cols() == b.labels_.cols() &&
           (a.labels_ == b.labels_).all();
  }

 private:
  LabelGrid labels_;
};

/// Maps a 19-class source annotation onto the reduced classes: left/right
/// eyes, brows and ears merge, both lips become "lip", and hat, cloth,
/// earring and necklace fall to background.
SemanticMask reduce_classes(const LabelGrid& source);
/// Identity on masks already in the reduced space.
inline SemanticMask reduce_classes(const SemanticMask& reduced) { return reduced; }

/// Batched one-hot encoding, (N, 11, H, W).
template <typename Scalar>
Tensor<Scalar> one_hot_batch(const std::vector<SemanticMask>& masks) {
  if (masks.empty()) throw ShapeError("one_hot_batch: no masks");
  const Index h = masks.front().height();
  const Index w = masks.front().width();
  Tensor<Scalar> t(Shape{static_cast<Index>(masks.size()), kNumClasses, h, w});
  for (std::size_t n = 0; n < masks.size(); ++n) {
    if (masks[n].height() != h || masks[n].width() != w) throw ShapeError("one_hot_batch: mixed mask sizes");
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) t(static_cast<Index>(n), masks[n](y, x), y, x) = Scalar(1);
    }
  }
  return t;
}

}  // namespace faceanon
