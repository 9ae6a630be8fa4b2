#include "faceanon/semantic.hpp"

#include <algorithm>

namespace faceanon {

const std::array<std::string_view, kNumClasses>& class_names() {
  static const std::array<std::string_view, kNumClasses> names = {
      "background", "skin", "nose", "eyes", "eyebrows", "ears", "mouth", "lip", "hair", "neck", "eyeglass"};
  return names;
}

int class_id(std::string_view name) {
  const auto& names = class_names();
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("unknown class name '" + std::string(name) + "'");
  return static_cast<int>(it - names.begin());
}

const std::array<std::string_view, kNumSourceClasses>& source_class_names() {
  static const std::array<std::string_view, kNumSourceClasses> names = {
      "background", "skin", "l_brow", "r_brow", "l_eye", "r_eye", "eye_g", "l_ear", "r_ear", "ear_r",
      "nose",       "mouth", "u_lip", "l_lip", "neck",  "neck_l", "cloth", "hair", "hat"};
  return names;
}

const std::array<std::uint8_t, kNumSourceClasses>& source_to_reduced() {
  static const std::array<std::uint8_t, kNumSourceClasses> table = {
      0,   // background
      1,   // skin
      4,   // l_brow
      4,   // r_brow
      3,   // l_eye
      3,   // r_eye
      10,  // eye_g
      5,   // l_ear
      5,   // r_ear
      0,   // ear_r (earring)
      2,   // nose
      6,   // mouth
      7,   // u_lip
      7,   // l_lip
      9,   // neck
      0,   // neck_l (necklace)
      0,   // cloth
      8,   // hair
      0,   // hat
  };
  return table;
}

SemanticMask::SemanticMask(LabelGrid labels) : labels_(std::move(labels)) {
  for (Index i = 0; i < labels_.size(); ++i) {
    if (labels_.data()[i] >= kNumClasses) {
      throw std::invalid_argument("SemanticMask: label " + std::to_string(labels_.data()[i]) + " outside 0..10");
    }
  }
}

SemanticMask::SemanticMask(Index height, Index width, FaceClass fill)
    : labels_(LabelGrid::Constant(height, width, static_cast<std::uint8_t>(fill))) {}

std::array<Index, kNumClasses> SemanticMask::histogram() const {
  std::array<Index, kNumClasses> h{};
  for (Index i = 0; i < labels_.size(); ++i) ++h[labels_.data()[i]];
  return h;
}

bool SemanticMask::contains(int label) const {
  if (label < 0 || label >= kNumClasses) return false;
  return (labels_ == static_cast<std::uint8_t>(label)).any();
}

double SemanticMask::foreground_fraction() const {
  if (labels_.size() == 0) return 0.0;
  return static_cast<double>((labels_ != 0).count()) / static_cast<double>(labels_.size());
}

SemanticMask reduce_classes(const LabelGrid& source) {
  const auto& table = source_to_reduced();
  LabelGrid out(source.rows(), source.cols());
  for (Index i = 0; i < source.size(); ++i) {
    const int id = source.data()[i];
    if (id >= kNumSourceClasses) throw UnknownLabelError(id);
    out.data()[i] = table[static_cast<std::size_t>(id)];
  }
  return SemanticMask(std::move(out));
}

}  // namespace faceanon
