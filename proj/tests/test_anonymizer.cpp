#include <doctest.h>

#include "checks.hpp"
#include "faceanon/anonymizer.hpp"
#include "faceanon/toy_faces.hpp"

#include <deque>

using namespace faceanon;
namespace ch = faceanon::checks;

namespace {

Rgb8Image plain(Index h, Index w) {
  Rgb8Image img(h, w);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(40 + i % 3 * 30);
  return img;
}

class MemorySource : public FrameSource {
 public:
  explicit MemorySource(std::deque<SourceFrame> frames) : frames_(std::move(frames)) {}
  std::optional<SourceFrame> next() override {
    if (frames_.empty()) return std::nullopt;
    SourceFrame f = std::move(frames_.front());
    frames_.pop_front();
    return f;
  }
  double fps() const override { return 10.0; }

 private:
  std::deque<SourceFrame> frames_;
};

class MemorySink : public FrameSink {
 public:
  explicit MemorySink(std::vector<Rgb8Image>* out) : out_(out) {}
  void write(const Rgb8Image& frame, const fs::path&) override { out_->push_back(frame); }
  void copy_through(const SourceFrame&) override { out_->push_back(Rgb8Image()); }

 private:
  std::vector<Rgb8Image>* out_;
};

struct Toy {
  ModelBundle<float> models{ModelConfig::toy(), LossConfig{}};
  SkinRegionDetector detector;
  Anonymizer anonymizer{models, detector, AnonymizerConfig{}};
};

toy::Scene walking_frame(int i) {
  toy::FacePlacement p;
  p.identity = toy::make_identity(3, 0);
  p.size = 14 + 3 * i;
  p.cx = 60 + 8 * i;
  p.cy = 70;
  return toy::render_scene(140, 200, {p}, {90, 110, 140}, 50 + static_cast<std::uint64_t>(i));
}

}  // namespace

TEST_CASE("anonymization contracts on toy scenes") {
  for (const auto& c : ch::anonymizer_contract_suite(5)) {
    INFO(c.name << ": " << c.detail);
    CHECK(c.pass);
  }
}

TEST_CASE("refine_detection on a marker with known geometry") {
  Rgb8Image img = plain(200, 200);
  ch::paint_marker(img, Box{60, 75, 140, 125});  // 10% of the frame
  const ch::MarkerDetector marker;
  const Box frame{0, 0, 200, 200};

  SUBCASE("ratio strictly increases until the threshold") {
    const RefineResult r = refine_detection(img, frame, marker, RefineOptions{0.5, 8, 0.5});
    CHECK(r.ratios.front() == doctest::Approx(0.1));
    CHECK(r.ratios.back() >= 0.5);
    for (std::size_t i = 1; i < r.ratios.size(); ++i) CHECK(r.ratios[i] > r.ratios[i - 1]);
    CHECK_FALSE(r.capped);
    CHECK_FALSE(r.lost);
  }
  SUBCASE("a detection already above the threshold is not refined") {
    const RefineResult r = refine_detection(img, frame, marker, RefineOptions{0.05, 4, 0.5});
    CHECK(r.iterations == 0);
    CHECK(r.crop == frame);
  }
  SUBCASE("max_iters caps a small face") {
    const RefineResult r = refine_detection(img, frame, marker, RefineOptions{0.9, 1, 0.5});
    CHECK(r.iterations == 1);
    CHECK(r.capped);
    CHECK(r.ratios.back() < 0.9);
  }
  SUBCASE("losing the face keeps the last crop") {
    const DetectionBox ghost{Box{10, 10, 20, 20}, 1.0, 0.0025};
    const RefineResult r = refine_detection(plain(200, 200), frame, ghost, marker, RefineOptions{0.5, 4, 0.5});
    CHECK(r.lost);
    CHECK(r.crop == frame);
  }
  CHECK_THROWS_AS(refine_detection(img, frame, marker, RefineOptions{1.5, 4, 0.5}), std::invalid_argument);
}

TEST_CASE("anonymize_frame keeps the frame shape and changes the face") {
  Toy t;
  const toy::Scene scene = walking_frame(2);
  FrameReport report;
  const Rgb8Image out = t.anonymizer.anonymize_frame(scene.photo, &report);
  CHECK(out.height == scene.photo.height);
  CHECK(out.width == scene.photo.width);
  REQUIRE(report.faces.size() == 1);
  CHECK(report.anonymized() == 1);
  const Box crop = report.faces[0].refine.crop;
  CHECK(crop.area() > 0);
  CHECK(out.pixels != scene.photo.pixels);
}

TEST_CASE("video stream: faceless clip, frame count and determinism") {
  Toy t;
  SUBCASE("ten faceless frames come back identical") {
    std::deque<SourceFrame> frames;
    for (int i = 0; i < 10; ++i) frames.push_back({plain(48, 64), {}});
    MemorySource src(frames);
    std::vector<Rgb8Image> written;
    const VideoSummary s = anonymize_stream(
        src, [&](Index, Index, double) { return std::make_unique<MemorySink>(&written); }, t.anonymizer);
    CHECK(s.frames == 10);
    CHECK(s.faces == 0);
    REQUIRE(written.size() == 10);
    for (const auto& f : written) CHECK(f.pixels == plain(48, 64).pixels);
  }
  SUBCASE("a face of varying size is replaced in every frame, reproducibly") {
    std::deque<SourceFrame> frames;
    std::vector<Rgb8Image> originals;
    for (int i = 0; i < 5; ++i) {
      originals.push_back(walking_frame(i).photo);
      frames.push_back({originals.back(), {}});
    }
    frames.push_back({std::nullopt, {}});
    std::vector<Rgb8Image> first;
    std::vector<Rgb8Image> second;
    MemorySource a(frames);
    MemorySource b(frames);
    const VideoSummary s = anonymize_stream(
        a, [&](Index, Index, double) { return std::make_unique<MemorySink>(&first); }, t.anonymizer);
    anonymize_stream(b, [&](Index, Index, double) { return std::make_unique<MemorySink>(&second); }, t.anonymizer);
    CHECK(s.frames == 6);
    CHECK(s.copied_through == 1);
    CHECK(s.faces_anonymized == 5);
    REQUIRE(first.size() == 6);
    for (int i = 0; i < 5; ++i) {
      CHECK(first[i].pixels != originals[i].pixels);
      CHECK(first[i].pixels == second[i].pixels);
    }
    CHECK(s.timing_percentile(50) > 0);
    CHECK(s.timing_percentile(90) >= s.timing_percentile(50));
    CHECK(s.to_text().find("frame_ms_p90") != std::string::npos);
  }
}

TEST_CASE("AnonymizerConfig validation") {
  AnonymizerConfig c;
  CHECK_NOTHROW(c.validate());
  c.context = 0.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
