#include <doctest.h>

#include "checks.hpp"
#include "faceanon/mask_algebra.hpp"

#include <json.hpp>

#include <fstream>

using namespace faceanon;

namespace {

SemanticMask mask_of(std::initializer_list<std::initializer_list<int>> rows) {
  LabelGrid g(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index y = 0;
  for (const auto& r : rows) {
    Index x = 0;
    for (int v : r) g(y, x++) = static_cast<std::uint8_t>(v);
    ++y;
  }
  return SemanticMask(std::move(g));
}

Tensor<double> ramp(Index h, Index w, double offset = 1.0) {
  Tensor<double> t(Shape{1, 3, h, w});
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = offset + static_cast<double>(i);
  return t;
}

}  // namespace

TEST_CASE("reduce_classes maps every source id by the mapping table") {
  std::ifstream in(FACEANON_FIXTURE_DIR "/reduce_classes_4x5.json");
  REQUIRE(in);
  const auto j = nlohmann::json::parse(in);
  LabelGrid src(4, 5);
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 5; ++x) src(y, x) = static_cast<std::uint8_t>(j["source"][y][x].get<int>());
  const SemanticMask out = reduce_classes(src);
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 5; ++x) CHECK(int(out(y, x)) == j["expected"][y][x].get<int>());
}

TEST_CASE("reduce_classes merges left and right eyes") {
  LabelGrid src = LabelGrid::Zero(2, 3);
  src(0, 0) = 4;
  src(0, 2) = 5;
  const SemanticMask out = reduce_classes(src);
  CHECK(out(0, 0) == static_cast<int>(FaceClass::Eyes));
  CHECK(out(0, 2) == static_cast<int>(FaceClass::Eyes));
  CHECK(out(1, 1) == 0);
}

TEST_CASE("reduce_classes of an all-background mask is all zero") {
  CHECK((reduce_classes(LabelGrid(LabelGrid::Zero(3, 3))).labels() == 0).all());
}

TEST_CASE("reduce_classes rejects an unknown id and names it") {
  LabelGrid src = LabelGrid::Zero(2, 2);
  src(1, 0) = 19;
  try {
    reduce_classes(src);
    FAIL("expected UnknownLabelError");
  } catch (const UnknownLabelError& e) {
    CHECK(e.label() == 19);
  }
}

TEST_CASE("SemanticMask rejects ids above 10") {
  LabelGrid g = LabelGrid::Zero(1, 2);
  g(0, 1) = 11;
  CHECK_THROWS_AS(SemanticMask{g}, std::invalid_argument);
}

TEST_CASE("extract_component keeps only the requested label") {
  const SemanticMask m = mask_of({{1, 1}, {0, 2}});
  const Tensor<double> img = ramp(2, 2);
  const Tensor<double> skin = extract_component(1, img, m);
  for (Index c = 0; c < 3; ++c) {
    CHECK(skin(0, c, 0, 0) == img(0, c, 0, 0));
    CHECK(skin(0, c, 0, 1) == img(0, c, 0, 1));
    CHECK(skin(0, c, 1, 0) == 0.0);
    CHECK(skin(0, c, 1, 1) == 0.0);
  }
  const Tensor<double> nose = extract_component(2, img, m);
  CHECK(nose(0, 1, 1, 1) == img(0, 1, 1, 1));
  CHECK(nose(0, 1, 0, 0) == 0.0);
  CHECK((extract_component(6, img, m).array() == 0).all());
  CHECK_THROWS_AS(extract_component(1, ramp(3, 2), m), ShapeError);
}

TEST_CASE("foreground and background masks") {
  const SemanticMask m = mask_of({{0, 3}, {5, 0}});
  const BinaryMask fg = foreground_mask(m);
  const BinaryMask bg = background_mask(m);
  CHECK(fg(0, 0) == 0);
  CHECK(fg(0, 1) == 1);
  CHECK(fg(1, 0) == 1);
  CHECK(fg(1, 1) == 0);
  CHECK(bg(0, 0) == 1);
  CHECK(bg(0, 1) == 0);
  CHECK(bg(1, 0) == 0);
  CHECK(bg(1, 1) == 1);
  CHECK((foreground_mask(SemanticMask(3, 3)) == 0).all());
  CHECK((background_mask(SemanticMask(3, 3)) == 1).all());
  CHECK((foreground_mask(SemanticMask(3, 3, FaceClass::Skin)) == 1).all());
}

TEST_CASE("composite selects per pixel") {
  const Tensor<double> a = ramp(2, 4, 100.0);
  const Tensor<double> d = ramp(2, 4, -50.0);
  SUBCASE("half and half") {
    const SemanticMask m = mask_of({{1, 1, 0, 0}, {1, 1, 0, 0}});
    const Tensor<double> out = composite(a, d, m);
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < 2; ++y)
        for (Index x = 0; x < 4; ++x) CHECK(out(0, c, y, x) == (x < 2 ? a(0, c, y, x) : d(0, c, y, x)));
  }
  SUBCASE("all background returns the original") {
    const Tensor<double> out = composite(a, d, SemanticMask(2, 4));
    CHECK((out.array() == d.array()).all());
  }
  SUBCASE("all foreground returns the anonymized crop") {
    const Tensor<double> out = composite(a, d, SemanticMask(2, 4, FaceClass::Hair));
    CHECK((out.array() == a.array()).all());
  }
  CHECK_THROWS_AS(composite(a, ramp(2, 3), SemanticMask(2, 4)), ShapeError);
}

TEST_CASE("ComponentSet validation") {
  CHECK(ComponentSet().labels() == std::vector<int>{1, 2, 3, 6});
  CHECK_THROWS_AS(ComponentSet(std::vector<int>{}), std::invalid_argument);
  CHECK_THROWS_AS(ComponentSet(std::vector<int>{0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(ComponentSet(std::vector<int>{2, 2}), std::invalid_argument);
  CHECK_THROWS_AS(ComponentSet(std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}), std::invalid_argument);
}

TEST_CASE("mask algebra properties over 1000 random masks") {
  for (const auto& c : checks::mask_property_suite(1000, 42)) {
    INFO(c.name << ": " << c.detail);
    CHECK(c.pass);
  }
}
