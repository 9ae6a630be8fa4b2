#include "faceanon/io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>

namespace faceanon {

namespace {

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

Rgb8Image from_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Rgb8Image img(rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy(rgb.ptr<std::uint8_t>(y), rgb.ptr<std::uint8_t>(y) + rgb.cols * 3,
              img.pixels.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
  }
  return img;
}

cv::Mat to_bgr(const Rgb8Image& img) {
  cv::Mat rgb(static_cast<int>(img.height), static_cast<int>(img.width), CV_8UC3,
              const_cast<std::uint8_t*>(img.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

}  // namespace

const std::vector<std::string>& supported_image_extensions() {
  static const std::vector<std::string> e = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".tif", ".tiff"};
  return e;
}

const std::vector<std::string>& supported_video_extensions() {
  static const std::vector<std::string> e = {".mkv", ".avi", ".mp4", ".mov"};
  return e;
}

bool is_image_path(const fs::path& p) {
  const auto& e = supported_image_extensions();
  return std::find(e.begin(), e.end(), lower_ext(p)) != e.end();
}

bool is_video_path(const fs::path& p) {
  const auto& e = supported_video_extensions();
  return std::find(e.begin(), e.end(), lower_ext(p)) != e.end();
}

Rgb8Image read_image(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw MediaError("cannot decode image " + path.string());
  return from_bgr(m);
}

void write_image(const fs::path& path, const Rgb8Image& image) {
  if (!is_image_path(path)) throw MediaError("unsupported image extension for " + path.string());
  if (!cv::imwrite(path.string(), to_bgr(image))) throw MediaError("cannot write image " + path.string());
}

LabelGrid read_label_image(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw MediaError("cannot decode label image " + path.string());
  if (m.depth() != CV_8U) throw MediaError("label image " + path.string() + " is not 8-bit");
  if (m.channels() != 1) throw MediaError("label image " + path.string() + " is not single-channel");
  LabelGrid labels(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    std::copy(m.ptr<std::uint8_t>(y), m.ptr<std::uint8_t>(y) + m.cols, labels.data() + static_cast<Index>(y) * m.cols);
  }
  return labels;
}

void write_label_image(const fs::path& path, const LabelGrid& labels) {
  if (lower_ext(path) != ".png") throw MediaError("label images must be PNG: " + path.string());
  cv::Mat m(static_cast<int>(labels.rows()), static_cast<int>(labels.cols()), CV_8UC1,
            const_cast<std::uint8_t*>(labels.data()));
  if (!cv::imwrite(path.string(), m)) throw MediaError("cannot write label image " + path.string());
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_path(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

class VideoSource : public FrameSource {
 public:
  explicit VideoSource(const fs::path& path) : cap_(path.string()) {
    if (!cap_.isOpened()) throw MediaError("cannot open video " + path.string());
    fps_ = cap_.get(cv::CAP_PROP_FPS);
    if (!(fps_ > 0)) fps_ = 25.0;
  }
  std::optional<SourceFrame> next() override {
    cv::Mat m;
    if (!cap_.read(m) || m.empty()) return std::nullopt;
    return SourceFrame{from_bgr(m), {}};
  }
  double fps() const override { return fps_; }

 private:
  cv::VideoCapture cap_;
  double fps_ = 25.0;
};

class VideoSink : public FrameSink {
 public:
  VideoSink(const fs::path& path, double fps, Index width, Index height) : width_(width), height_(height) {
    const std::string ext = lower_ext(path);
    const int fourcc = (ext == ".mkv" || ext == ".avi") ? cv::VideoWriter::fourcc('F', 'F', 'V', '1')
                                                         : cv::VideoWriter::fourcc('M', 'J', 'P', 'G');
    writer_.open(path.string(), cv::CAP_FFMPEG, fourcc, fps, cv::Size(static_cast<int>(width), static_cast<int>(height)));
    if (!writer_.isOpened()) throw MediaError("cannot create video " + path.string());
  }
  void write(const Rgb8Image& frame, const fs::path& = {}) override {
    if (frame.width != width_ || frame.height != height_) throw MediaError("frame size changed mid-stream");
    writer_.write(to_bgr(frame));
  }
  void copy_through(const SourceFrame& frame) override {
    if (!frame.image) throw MediaError("video sink cannot pass through an undecoded frame");
    write(*frame.image);
  }
  void close() override { writer_.release(); }

 private:
  cv::VideoWriter writer_;
  Index width_;
  Index height_;
};

class SequenceSource : public FrameSource {
 public:
  explicit SequenceSource(const fs::path& dir) : files_(list_images(dir)) {
    if (!fs::is_directory(dir)) throw MediaError("not a directory: " + dir.string());
  }
  std::optional<SourceFrame> next() override {
    if (pos_ >= files_.size()) return std::nullopt;
    const fs::path p = files_[pos_++];
    SourceFrame f;
    f.origin = p;
    cv::Mat m = cv::imread(p.string(), cv::IMREAD_COLOR);
    if (!m.empty()) f.image = from_bgr(m);
    return f;
  }
  double fps() const override { return 0.0; }

 private:
  std::vector<fs::path> files_;
  std::size_t pos_ = 0;
};

class SequenceSink : public FrameSink {
 public:
  explicit SequenceSink(const fs::path& dir) : dir_(dir) { fs::create_directories(dir); }
  void write(const Rgb8Image& frame, const fs::path& origin = {}) override {
    fs::path target = next_path(origin);
    if (!is_image_path(target)) target.replace_extension(".png");
    write_image(target, frame);
  }
  void copy_through(const SourceFrame& frame) override {
    if (frame.origin.empty()) throw MediaError("cannot pass through a frame without a source file");
    const fs::path target = next_path(frame.origin);
    fs::copy_file(frame.origin, target, fs::copy_options::overwrite_existing);
  }
 private:
  fs::path next_path(const fs::path& origin) {
    ++count_;
    if (!origin.empty()) return dir_ / origin.filename();
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.png", count_);
    return dir_ / name;
  }

  fs::path dir_;
  std::size_t count_ = 0;
};

}  // namespace

std::unique_ptr<FrameSource> open_video(const fs::path& path) { return std::make_unique<VideoSource>(path); }

std::unique_ptr<FrameSink> create_video(const fs::path& path, double fps, Index width, Index height) {
  return std::make_unique<VideoSink>(path, fps, width, height);
}

std::unique_ptr<FrameSource> open_image_sequence(const fs::path& dir) { return std::make_unique<SequenceSource>(dir); }

std::unique_ptr<FrameSink> create_image_sequence(const fs::path& dir) { return std::make_unique<SequenceSink>(dir); }

}  // namespace faceanon
