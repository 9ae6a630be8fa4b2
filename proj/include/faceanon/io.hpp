#pragma once

#include "faceanon/image.hpp"
#include "faceanon/semantic.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace faceanon {

namespace fs = std::filesystem;

class MediaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string>& supported_image_extensions();
const std::vector<std::string>& supported_video_extensions();
bool is_image_path(const fs::path& p);
bool is_video_path(const fs::path& p);

/// 8-bit RGB image; throws MediaError when unreadable.
Rgb8Image read_image(const fs::path& path);
void write_image(const fs::path& path, const Rgb8Image& image);

/// Single-channel 8-bit label image, pixel value = label id.
LabelGrid read_label_image(const fs::path& path);
void write_label_image(const fs::path& path, const LabelGrid& labels);

/// Sorted image files directly under `dir`.
std::vector<fs::path> list_images(const fs::path& dir);

struct SourceFrame {
  std::optional<Rgb8Image> image;  // empty when the frame could not be decoded
  fs::path origin;                 // file the frame came from, for image sequences
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  /// Next frame, or nullopt at end of stream.
  virtual std::optional<SourceFrame> next() = 0;
  virtual double fps() const = 0;
};

class FrameSink {
 public:
  virtual ~FrameSink() = default;
  /// `origin` names the output in image sequences; video sinks ignore it.
  virtual void write(const Rgb8Image& frame, const fs::path& origin = {}) = 0;
  /// Passes an undecodable source frame through unchanged.
  virtual void copy_through(const SourceFrame& frame) = 0;
  virtual void close() {}
};

/// Video container read through the platform codecs. Frames the decoder
/// rejects end the stream, since containers give no way to skip them.
std::unique_ptr<FrameSource> open_video(const fs::path& path);
/// Lossless FFV1 for .mkv/.avi, MJPG otherwise.
std::unique_ptr<FrameSink> create_video(const fs::path& path, double fps, Index width, Index height);

/// Directory of images processed in name order.
std::unique_ptr<FrameSource> open_image_sequence(const fs::path& dir);
/// Writes frames into `dir` under the source file names (or frame_%06d.png).
std::unique_ptr<FrameSink> create_image_sequence(const fs::path& dir);

}  // namespace faceanon
