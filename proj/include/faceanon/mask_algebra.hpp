#pragma once

#include "faceanon/ops.hpp"
#include "faceanon/semantic.hpp"

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace faceanon {

/// 0/1 grid; broadcast over colour channels wherever it is applied.
using BinaryMask = LabelGrid;

/// Labels the component discriminators look at. Must be a non-empty strict
/// subset of the facial labels 1..10.
class ComponentSet {
 public:
  ComponentSet() : ComponentSet(std::vector<int>{1, 2, 3, 6}) {}
  explicit ComponentSet(std::vector<int> labels) : labels_(std::move(labels)) {
    std::set<int> unique(labels_.begin(), labels_.end());
    if (labels_.empty()) throw std::invalid_argument("component set is empty");
    if (unique.size() != labels_.size()) throw std::invalid_argument("component set has duplicate labels");
    for (int l : labels_) {
      if (l < 1 || l > kNumFacialClasses) {
        throw std::invalid_argument("component label " + std::to_string(l) + " outside 1..10");
      }
    }
    if (static_cast<int>(labels_.size()) >= kNumFacialClasses) {
      throw std::invalid_argument("component set must be a strict subset of the facial labels");
    }
  }

  const std::vector<int>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }

 private:
  std::vector<int> labels_;
};

/// B: 1 where the mask is non-background.
BinaryMask foreground_mask(const SemanticMask& mask);
/// B^-1: 1 where the mask is background.
BinaryMask background_mask(const SemanticMask& mask);

namespace detail {
inline void require_aligned(const Shape& image, const SemanticMask& mask, const char* what) {
  if (image.h != mask.height() || image.w != mask.width()) {
    throw ShapeError(std::string(what) + ": image " + to_string(image) + " not aligned with mask " +
                     std::to_string(mask.height()) + "x" + std::to_string(mask.width()));
  }
}
}  // namespace detail

/// xi_label: keeps pixels whose mask label equals `label`, zero elsewhere.
/// Applies to every sample of `image` with the same mask.
template <typename Scalar>
Tensor<Scalar> extract_component(int label, const Tensor<Scalar>& image, const SemanticMask& mask) {
  if (label < 0 || label >= kNumClasses) throw std::invalid_argument("extract_component: label outside 0..10");
  detail::require_aligned(image.shape(), mask, "extract_component");
  const Shape& s = image.shape();
  Tensor<Scalar> out(s);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      const Scalar* src = image.plane_ptr(n, c);
      Scalar* dst = out.plane_ptr(n, c);
      for (Index i = 0; i < s.plane(); ++i) {
        if (mask.labels().data()[i] == label) dst[i] = src[i];
      }
    }
  }
  return out;
}

/// Background-preserving composite: `anonymized` on the mask foreground,
/// `original` on the background. Selection, not arithmetic, so both sides
/// carry through bit-exactly.
template <typename Scalar>
Tensor<Scalar> composite(const Tensor<Scalar>& anonymized, const Tensor<Scalar>& original, const SemanticMask& mask) {
  require_same_shape(anonymized.shape(), original.shape(), "composite");
  detail::require_aligned(original.shape(), mask, "composite");
  const Shape& s = original.shape();
  Tensor<Scalar> out = original;
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      const Scalar* a = anonymized.plane_ptr(n, c);
      Scalar* dst = out.plane_ptr(n, c);
      for (Index i = 0; i < s.plane(); ++i) {
        if (mask.labels().data()[i] != 0) dst[i] = a[i];
      }
    }
  }
  return out;
}

/// (N, 1, H, W) indicator of `label` for each mask.
template <typename Scalar>
Tensor<Scalar> component_indicator(const std::vector<SemanticMask>& masks, int label) {
  if (masks.empty()) throw ShapeError("component_indicator: no masks");
  const Index h = masks.front().height();
  const Index w = masks.front().width();
  Tensor<Scalar> t(Shape{static_cast<Index>(masks.size()), 1, h, w});
  for (std::size_t n = 0; n < masks.size(); ++n) {
    if (masks[n].height() != h || masks[n].width() != w) throw ShapeError("component_indicator: mixed mask sizes");
    Scalar* dst = t.plane_ptr(static_cast<Index>(n), 0);
    for (Index i = 0; i < h * w; ++i) dst[i] = masks[n].labels().data()[i] == label ? Scalar(1) : Scalar(0);
  }
  return t;
}

/// Differentiable xi over a batch: sample n of `images` is paired with
/// masks[n]. Components are stacked along the batch, label-major: entry
/// j * N + n holds xi_{labels[j]}(images[n]). `absent`, when given, counts
/// (label, sample) pairs whose extraction is all zero.
template <typename Scalar>
Var<Scalar> extract_components(const Var<Scalar>& images, const std::vector<SemanticMask>& masks,
                               const std::vector<int>& labels, std::size_t* absent = nullptr) {
  if (static_cast<Index>(masks.size()) != images.shape().n) {
    throw ShapeError("extract_components: one mask per sample required");
  }
  for (const auto& m : masks) detail::require_aligned(images.shape(), m, "extract_components");
  std::vector<Var<Scalar>> copies;
  std::vector<Var<Scalar>> indicators;
  for (int label : labels) {
    copies.push_back(images);
    indicators.push_back(constant(component_indicator<Scalar>(masks, label)));
    if (absent != nullptr) {
      for (const auto& m : masks) *absent += m.contains(label) ? 0 : 1;
    }
  }
  Var<Scalar> stacked = labels.size() == 1 ? images : concat_batch(copies);
  Var<Scalar> ind = labels.size() == 1 ? indicators.front() : concat_batch(indicators);
  return stacked * ind;
}

}  // namespace faceanon
