#include "faceanon/anonymizer.hpp"

#include "faceanon/mask_algebra.hpp"
#include "faceanon/stats.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace faceanon {

void AnonymizerConfig::validate() const {
  if (!(ratio_threshold > 0 && ratio_threshold <= 1)) throw std::invalid_argument("ratio_threshold must be in (0, 1]");
  if (max_refine_iters < 1) throw std::invalid_argument("max_refine_iters must be >= 1");
  if (!(refine_keep >= 0 && refine_keep < 1)) throw std::invalid_argument("refine_keep must be in [0, 1)");
  if (!(context >= 1)) throw std::invalid_argument("context must be >= 1");
}

std::size_t FrameReport::anonymized() const {
  std::size_t n = 0;
  for (const auto& f : faces) n += f.anonymized ? 1 : 0;
  return n;
}

std::size_t FrameReport::empty_foreground() const {
  std::size_t n = 0;
  for (const auto& f : faces) n += f.empty_foreground ? 1 : 0;
  return n;
}

Box context_crop(const Box& box, double context, Index w, Index h) {
  const double side = static_cast<double>(std::max(box.width(), box.height())) * context;
  const Index sw = std::clamp<Index>(std::lround(side), 1, w);
  const Index sh = std::clamp<Index>(std::lround(side), 1, h);
  const double cx = 0.5 * static_cast<double>(box.x0 + box.x1);
  const double cy = 0.5 * static_cast<double>(box.y0 + box.y1);
  Box c;
  c.x0 = std::clamp<Index>(std::lround(cx - 0.5 * static_cast<double>(sw)), 0, w - sw);
  c.y0 = std::clamp<Index>(std::lround(cy - 0.5 * static_cast<double>(sh)), 0, h - sh);
  c.x1 = c.x0 + sw;
  c.y1 = c.y0 + sh;
  // Never cut into the detection itself.
  c.x0 = std::min(c.x0, box.x0);
  c.y0 = std::min(c.y0, box.y0);
  c.x1 = std::max(c.x1, box.x1);
  c.y1 = std::max(c.y1, box.y1);
  return c;
}

Anonymizer::Anonymizer(ModelBundle<float>& models, const FaceDetector& detector, AnonymizerConfig cfg)
    : models_(models), detector_(detector), cfg_(std::move(cfg)) {
  cfg_.validate();
  models_.G().set_training(false);
  models_.Gs().set_training(false);
}

Rgb8Image Anonymizer::anonymize_crop(const Rgb8Image& crop, SemanticMask* mask_out) const {
  const Index s = models_.config().image_size;
  const Tensor<float> original = resize_bilinear(to_tensor<float>(crop), s, s);
  const Segmentation<float> seg = segment(models_.G(), original, s);
  const SemanticMask& mask = seg.masks.front();
  if (mask_out != nullptr) *mask_out = mask;
  if (mask.foreground_fraction() == 0.0) return crop;

  const Tensor<float> anonymized = synthesize(models_.Gs(), {mask});
  const Tensor<float> blended = composite(anonymized, original, mask);
  Rgb8Image out = to_rgb8(resize_bilinear(blended, crop.height, crop.width));
  // Background pixels of the crop keep their original values instead of a
  // resampled copy.
  const SemanticMask back = resize_nearest(mask, crop.height, crop.width);
  for (Index y = 0; y < crop.height; ++y) {
    for (Index x = 0; x < crop.width; ++x) {
      if (back(y, x) != 0) continue;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = crop.at(y, x, c);
    }
  }
  return out;
}

Rgb8Image Anonymizer::anonymize_frame(const Rgb8Image& frame, FrameReport* report) const {
  if (report != nullptr) report->faces.clear();
  const auto detections = detector_.detect(frame);
  Rgb8Image out = frame;
  for (const auto& det : detections) {
    FaceReport fr;
    fr.detection = det;
    const Box start = context_crop(det.box, cfg_.context, frame.width, frame.height);
    fr.refine = refine_detection(frame, start, det, detector_, cfg_.refine_options());
    const Box& box = fr.refine.crop;
    SemanticMask mask;
    const Rgb8Image patch = anonymize_crop(crop(frame, box), &mask);
    if (mask.foreground_fraction() == 0.0) {
      fr.empty_foreground = true;
    } else {
      paste(out, patch, box);
      fr.anonymized = true;
    }
    if (report != nullptr) report->faces.push_back(fr);
  }
  return out;
}

double VideoSummary::timing_percentile(double p) const { return frame_ms.empty() ? 0.0 : percentile(frame_ms, p); }

std::string VideoSummary::to_text() const {
  std::ostringstream o;
  o << std::fixed << std::setprecision(3);
  o << "frames: " << frames << '\n';
  o << "copied_through: " << copied_through << '\n';
  o << "resolution: " << width << "x" << height << '\n';
  o << "fps: " << fps << '\n';
  o << "faces: " << faces << '\n';
  o << "faces_anonymized: " << faces_anonymized << '\n';
  o << "faces_empty_foreground: " << empty_foreground << '\n';
  o << "refine_capped: " << refine_capped << '\n';
  o << "refine_lost: " << refine_lost << '\n';
  o << "faces_per_frame:";
  for (const auto& [k, v] : faces_histogram) o << ' ' << k << '=' << v;
  o << '\n';
  o << "frame_ms_p50: " << timing_percentile(50) << '\n';
  o << "frame_ms_p90: " << timing_percentile(90) << '\n';
  o << "frame_ms_p99: " << timing_percentile(99) << '\n';
  return o.str();
}

VideoSummary anonymize_stream(FrameSource& source, const SinkFactory& make_sink, const Anonymizer& anonymizer) {
  VideoSummary s;
  s.fps = source.fps();
  std::unique_ptr<FrameSink> sink;
  std::vector<SourceFrame> pending;  // undecodable frames seen before the first decodable one
  while (auto frame = source.next()) {
    ++s.frames;
    if (!frame->image) {
      ++s.copied_through;
      if (sink) {
        sink->copy_through(*frame);
      } else {
        pending.push_back(std::move(*frame));
      }
      continue;
    }
    const Rgb8Image& img = *frame->image;
    if (!sink) {
      s.width = img.width;
      s.height = img.height;
      sink = make_sink(img.width, img.height, s.fps);
      for (const auto& p : pending) sink->copy_through(p);
      pending.clear();
    }
    const auto t0 = std::chrono::steady_clock::now();
    FrameReport report;
    const Rgb8Image out = anonymizer.anonymize_frame(img, &report);
    s.frame_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    sink->write(out, frame->origin);
    s.faces += report.faces.size();
    s.faces_anonymized += report.anonymized();
    s.empty_foreground += report.empty_foreground();
    for (const auto& f : report.faces) {
      s.refine_capped += f.refine.capped ? 1 : 0;
      s.refine_lost += f.refine.lost ? 1 : 0;
    }
    ++s.faces_histogram[report.faces.size()];
  }
  if (!pending.empty()) {
    sink = make_sink(0, 0, s.fps);
    for (const auto& p : pending) sink->copy_through(p);
  }
  if (sink) sink->close();
  return s;
}

}  // namespace faceanon
