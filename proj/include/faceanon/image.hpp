#pragma once

#include "faceanon/semantic.hpp"
#include "faceanon/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace faceanon {

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Box {
  Index x0 = 0;
  Index y0 = 0;
  Index x1 = 0;
  Index y1 = 0;

  Index width() const { return x1 - x0; }
  Index height() const { return y1 - y0; }
  Index area() const { return std::max<Index>(0, width()) * std::max<Index>(0, height()); }
  bool valid_in(Index img_w, Index img_h) const { return 0 <= x0 && x0 < x1 && x1 <= img_w && 0 <= y0 && y0 < y1 && y1 <= img_h; }
  bool contains(Index x, Index y) const { return x0 <= x && x < x1 && y0 <= y && y < y1; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// 8-bit interleaved RGB frame.
struct Rgb8Image {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, RGB interleaved

  Rgb8Image() = default;
  Rgb8Image(Index h, Index w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h * w * 3), fill) {}

  bool empty() const { return pixels.empty(); }
  std::uint8_t& at(Index y, Index x, int c) { return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
  std::uint8_t at(Index y, Index x, int c) const { return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
  friend bool operator==(const Rgb8Image&, const Rgb8Image&) = default;
};

/// (1, 3, H, W) tensor in [0, 1].
template <typename Scalar>
Tensor<Scalar> to_tensor(const Rgb8Image& img) {
  Tensor<Scalar> t(Shape{1, 3, img.height, img.width});
  for (Index y = 0; y < img.height; ++y) {
    for (Index x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) t(0, c, y, x) = Scalar(img.at(y, x, c)) / Scalar(255);
    }
  }
  return t;
}

/// Sample n of a [0, 1] image tensor, rounded to 8 bits.
template <typename Scalar>
Rgb8Image to_rgb8(const Tensor<Scalar>& t, Index n = 0) {
  if (t.shape().c != 3) throw ShapeError("to_rgb8 expects 3 channels, got " + to_string(t.shape()));
  Rgb8Image img(t.shape().h, t.shape().w);
  for (Index y = 0; y < img.height; ++y) {
    for (Index x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(t(n, c, y, x)), 0.0, 1.0);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

namespace detail {
struct LinearTap {
  Index i0;
  Index i1;
  double w1;
};

/// Half-pixel-centre source taps for resizing `in` samples to `out`.
inline std::vector<LinearTap> linear_taps(Index in, Index out) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const Index i0 = static_cast<Index>(std::floor(src));
    const Index i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}
}  // namespace detail

/// Bilinear resize of every sample and channel.
template <typename Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& t, Index out_h, Index out_w) {
  const Shape& s = t.shape();
  if (out_h <= 0 || out_w <= 0 || s.h <= 0 || s.w <= 0) throw ShapeError("resize_bilinear: empty extent");
  if (s.h == out_h && s.w == out_w) return t;
  const auto ty = detail::linear_taps(s.h, out_h);
  const auto tx = detail::linear_taps(s.w, out_w);
  Tensor<Scalar> out(Shape{s.n, s.c, out_h, out_w});
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      for (Index y = 0; y < out_h; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        for (Index x = 0; x < out_w; ++x) {
          const auto& b = tx[static_cast<std::size_t>(x)];
          const double top = (1 - b.w1) * t(n, c, a.i0, b.i0) + b.w1 * t(n, c, a.i0, b.i1);
          const double bot = (1 - b.w1) * t(n, c, a.i1, b.i0) + b.w1 * t(n, c, a.i1, b.i1);
          out(n, c, y, x) = static_cast<Scalar>((1 - a.w1) * top + a.w1 * bot);
        }
      }
    }
  }
  return out;
}

/// Nearest-neighbour resize; labels never interpolate.
SemanticMask resize_nearest(const SemanticMask& mask, Index out_h, Index out_w);
LabelGrid resize_nearest(const LabelGrid& labels, Index out_h, Index out_w);

Rgb8Image crop(const Rgb8Image& img, const Box& box);
LabelGrid crop(const LabelGrid& labels, const Box& box);
/// Writes `patch` into `img` with its top-left corner at (box.x0, box.y0).
void paste(Rgb8Image& img, const Rgb8Image& patch, const Box& box);

/// Bilinear resize of an 8-bit frame through a [0,1] float tensor.
Rgb8Image resize_bilinear(const Rgb8Image& img, Index out_h, Index out_w);

/// Downscale to `side` then rescale to `network_size`, both bilinear.
template <typename Scalar>
Tensor<Scalar> degrade_resolution(const Tensor<Scalar>& image, Index side, Index network_size) {
  Tensor<Scalar> out = resize_bilinear(image, side, side);
  return resize_bilinear(out, network_size, network_size);
}

}  // namespace faceanon
