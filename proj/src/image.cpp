#include "faceanon/image.hpp"

namespace faceanon {

LabelGrid resize_nearest(const LabelGrid& labels, Index out_h, Index out_w) {
  if (out_h <= 0 || out_w <= 0 || labels.size() == 0) throw ShapeError("resize_nearest: empty extent");
  LabelGrid out(out_h, out_w);
  const Index in_h = labels.rows();
  const Index in_w = labels.cols();
  for (Index y = 0; y < out_h; ++y) {
    const Index sy = std::min(in_h - 1, (y * in_h) / out_h);
    for (Index x = 0; x < out_w; ++x) {
      const Index sx = std::min(in_w - 1, (x * in_w) / out_w);
      out(y, x) = labels(sy, sx);
    }
  }
  return out;
}

SemanticMask resize_nearest(const SemanticMask& mask, Index out_h, Index out_w) {
  return SemanticMask(resize_nearest(mask.labels(), out_h, out_w));
}

Rgb8Image crop(const Rgb8Image& img, const Box& box) {
  if (!box.valid_in(img.width, img.height)) throw ShapeError("crop: box outside image");
  Rgb8Image out(box.height(), box.width());
  for (Index y = 0; y < box.height(); ++y) {
    const auto* src = img.pixels.data() + ((box.y0 + y) * img.width + box.x0) * 3;
    std::copy(src, src + box.width() * 3, out.pixels.begin() + y * box.width() * 3);
  }
  return out;
}

LabelGrid crop(const LabelGrid& labels, const Box& box) {
  if (!box.valid_in(labels.cols(), labels.rows())) throw ShapeError("crop: box outside mask");
  return labels.block(box.y0, box.x0, box.height(), box.width());
}

void paste(Rgb8Image& img, const Rgb8Image& patch, const Box& box) {
  if (patch.height != box.height() || patch.width != box.width() || !box.valid_in(img.width, img.height)) {
    throw ShapeError("paste: patch does not fit box");
  }
  for (Index y = 0; y < box.height(); ++y) {
    const auto* src = patch.pixels.data() + y * patch.width * 3;
    std::copy(src, src + patch.width * 3, img.pixels.begin() + ((box.y0 + y) * img.width + box.x0) * 3);
  }
}

Rgb8Image resize_bilinear(const Rgb8Image& img, Index out_h, Index out_w) {
  if (img.height == out_h && img.width == out_w) return img;
  return to_rgb8(resize_bilinear(to_tensor<float>(img), out_h, out_w));
}

}  // namespace faceanon
