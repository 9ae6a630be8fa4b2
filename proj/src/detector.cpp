#include "faceanon/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace faceanon {

bool SkinRegionDetector::is_skin(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const int mx = std::max({r, g, b});
  const int mn = std::min({r, g, b});
  return r > 95 && g > 40 && b > 20 && mx - mn > 15 && std::abs(int(r) - int(g)) > 15 && r > g && r > b;
}

std::vector<DetectionBox> SkinRegionDetector::detect(const Rgb8Image& image) const {
  const Index h = image.height;
  const Index w = image.width;
  std::vector<DetectionBox> out;
  if (h == 0 || w == 0) return out;

  std::vector<std::uint8_t> skin(static_cast<std::size_t>(h * w));
  for (Index i = 0; i < h * w; ++i) {
    const auto* p = image.pixels.data() + i * 3;
    skin[static_cast<std::size_t>(i)] = is_skin(p[0], p[1], p[2]) ? 1 : 0;
  }

  const double image_area = static_cast<double>(h * w);
  const Index min_pixels = std::max(opt_.min_pixels, static_cast<Index>(opt_.min_area_fraction * image_area));
  std::vector<std::int32_t> label(skin.size(), -1);
  std::vector<Index> stack;
  std::int32_t next = 0;
  for (Index start = 0; start < h * w; ++start) {
    if (!skin[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) continue;
    Index count = 0;
    Index x0 = w, y0 = h, x1 = -1, y1 = -1;
    stack.assign(1, start);
    label[static_cast<std::size_t>(start)] = next;
    while (!stack.empty()) {
      const Index i = stack.back();
      stack.pop_back();
      const Index y = i / w;
      const Index x = i % w;
      ++count;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
      const Index nbr[4] = {x > 0 ? i - 1 : -1, x + 1 < w ? i + 1 : -1, y > 0 ? i - w : -1, y + 1 < h ? i + w : -1};
      for (Index j : nbr) {
        if (j >= 0 && skin[static_cast<std::size_t>(j)] && label[static_cast<std::size_t>(j)] < 0) {
          label[static_cast<std::size_t>(j)] = next;
          stack.push_back(j);
        }
      }
    }
    ++next;
    if (count < min_pixels) continue;
    const Index rw = x1 - x0 + 1;
    const Index rh = y1 - y0 + 1;
    const double aspect = static_cast<double>(rw) / static_cast<double>(rh);
    if (aspect < opt_.min_aspect || aspect > opt_.max_aspect) continue;
    const double confidence = static_cast<double>(count) / static_cast<double>(rw * rh);
    if (confidence < opt_.min_confidence) continue;

    const double cx = 0.5 * static_cast<double>(x0 + x1 + 1);
    const double cy = 0.5 * static_cast<double>(y0 + y1 + 1);
    const double side = static_cast<double>(std::max(rw, rh)) * (1.0 + 2.0 * opt_.margin);
    const Index sw = std::min<Index>(w, std::max<Index>(1, std::lround(side)));
    const Index sh = std::min<Index>(h, std::max<Index>(1, std::lround(side)));
    Box b;
    b.x0 = std::clamp<Index>(std::lround(cx - 0.5 * static_cast<double>(sw)), 0, w - sw);
    b.y0 = std::clamp<Index>(std::lround(cy - 0.5 * static_cast<double>(sh)), 0, h - sh);
    b.x1 = b.x0 + sw;
    b.y1 = b.y0 + sh;
    out.push_back({b, std::min(1.0, confidence), static_cast<double>(b.area()) / image_area});
  }
  std::stable_sort(out.begin(), out.end(), [](const DetectionBox& a, const DetectionBox& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.box.y0 != b.box.y0) return a.box.y0 < b.box.y0;
    return a.box.x0 < b.box.x0;
  });
  return out;
}

std::unique_ptr<FaceDetector> make_detector(const std::string& name) {
  if (name == "skin") return std::make_unique<SkinRegionDetector>();
  throw std::invalid_argument("unknown detector '" + name + "' (available: skin)");
}

namespace {

double area_ratio(const Box& face, const Box& crop) {
  return static_cast<double>(face.area()) / static_cast<double>(crop.area());
}

DetectionBox translated(DetectionBox d, const Box& crop) {
  d.box.x0 += crop.x0;
  d.box.x1 += crop.x0;
  d.box.y0 += crop.y0;
  d.box.y1 += crop.y0;
  d.area_ratio = area_ratio(d.box, crop);
  return d;
}

/// Crop pulled towards `face`, keeping `keep` of the gap on each side.
Box tighten(const Box& crop, const Box& face, double keep) {
  auto gap = [keep](Index outer, Index inner) {
    return static_cast<Index>(std::floor(keep * static_cast<double>(std::abs(outer - inner))));
  };
  Box b;
  b.x0 = face.x0 - gap(crop.x0, face.x0);
  b.y0 = face.y0 - gap(crop.y0, face.y0);
  b.x1 = face.x1 + gap(crop.x1, face.x1);
  b.y1 = face.y1 + gap(crop.y1, face.y1);
  return b;
}

double iou(const Box& a, const Box& b) {
  const Box inter{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
  if (inter.x0 >= inter.x1 || inter.y0 >= inter.y1) return 0.0;
  const double i = static_cast<double>(inter.area());
  return i / (static_cast<double>(a.area() + b.area()) - i);
}

}  // namespace

RefineResult refine_detection(const Rgb8Image& image, const Box& crop, const DetectionBox& initial,
                              const FaceDetector& detector, const RefineOptions& options) {
  if (!(options.ratio_threshold > 0 && options.ratio_threshold <= 1)) {
    throw std::invalid_argument("ratio threshold must be in (0, 1]");
  }
  if (options.max_iters < 1) throw std::invalid_argument("max refine iterations must be >= 1");
  if (!(options.keep >= 0 && options.keep < 1)) throw std::invalid_argument("refine keep fraction must be in [0, 1)");
  if (!crop.valid_in(image.width, image.height)) throw std::invalid_argument("refine_detection: crop outside image");

  RefineResult r;
  r.crop = crop;
  r.face = initial;
  double ratio = area_ratio(initial.box, crop);
  r.face.area_ratio = ratio;
  r.ratios.push_back(ratio);
  while (ratio < options.ratio_threshold) {
    if (r.iterations >= options.max_iters) {
      r.capped = true;
      break;
    }
    const Box next = tighten(r.crop, r.face.box, options.keep);
    ++r.iterations;
    if (next == r.crop) {
      // The crop cannot shrink further around this face box.
      r.capped = true;
      break;
    }
    // Follow the face being refined, not whichever detection ranks first.
    const auto found = detector.detect(faceanon::crop(image, next));
    const DetectionBox* best = nullptr;
    double best_iou = 0.0;
    for (const auto& d : found) {
      const double o = iou(translated(d, next).box, r.face.box);
      if (o > best_iou) {
        best_iou = o;
        best = &d;
      }
    }
    if (best == nullptr) {
      r.lost = true;
      break;
    }
    r.crop = next;
    r.face = translated(*best, next);
    ratio = r.face.area_ratio;
    r.ratios.push_back(ratio);
  }
  return r;
}

RefineResult refine_detection(const Rgb8Image& image, const Box& crop, const FaceDetector& detector,
                              const RefineOptions& options) {
  const auto found = detector.detect(faceanon::crop(image, crop));
  if (found.empty()) {
    RefineResult r;
    r.crop = crop;
    r.lost = true;
    return r;
  }
  return refine_detection(image, crop, translated(found.front(), crop), detector, options);
}

}  // namespace faceanon
