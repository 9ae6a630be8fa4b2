#include <doctest.h>

#include "checks.hpp"
#include "faceanon/models.hpp"

#include <cmath>

using namespace faceanon;
namespace ch = faceanon::checks;

namespace {

ModelBundle<float> tiny(std::uint64_t seed) {
  ModelConfig c = ch::tiny_models();
  c.init_seed = seed;
  return ModelBundle<float>(c, LossConfig{});
}

}  // namespace

TEST_CASE("segment returns 11 class scores and one mask per photo, in order") {
  const FaceDataset data = ch::portrait_dataset(3, 1, 32, 2);
  ModelBundle<float> m = tiny(1);
  m.set_training(false);
  Tensor<float> photos(Shape{3, 3, 32, 32});
  for (Index n = 0; n < 3; ++n) std::copy_n(data[n].photo.data(), 3 * 32 * 32, photos.data() + n * 3 * 32 * 32);
  const Segmentation<float> s = segment(m.G(), photos, 32);
  CHECK(s.scores.shape() == Shape{3, kNumClasses, 32, 32});
  REQUIRE(s.masks.size() == 3);
  for (Index n = 0; n < 3; ++n) {
    const Segmentation<float> single = segment(m.G(), data[n].photo, 32);
    CHECK(single.masks.front() == s.masks[n]);
  }
  CHECK_THROWS_AS(segment(m.G(), Tensor<float>(Shape{1, 3, 16, 16}), 32), ShapeError);
}

TEST_CASE("synthesize is deterministic and stays in [0, 1]") {
  ModelBundle<float> a = tiny(4);
  ModelBundle<float> b = tiny(4);
  a.set_training(false);
  b.set_training(false);
  const FaceDataset data = ch::portrait_dataset(1, 1, 32, 3);
  for (const SemanticMask& mask : {SemanticMask(32, 32), data[0].mask}) {
    const Tensor<float> x = synthesize(a.Gs(), {mask});
    const Tensor<float> y = synthesize(b.Gs(), {mask});
    CHECK(x.shape() == Shape{1, 3, 32, 32});
    CHECK((x.array() == y.array()).all());
    CHECK((x.array() >= 0).all());
    CHECK((x.array() <= 1).all());
    CHECK(x.array().isFinite().all());
  }
}

TEST_CASE("discriminator features list the hidden maps and the score grid") {
  ModelBundle<float> m = tiny(6);
  m.set_training(false);
  const FaceDataset data = ch::portrait_dataset(1, 1, 32, 3);
  const DiscriminatorFeatures<float> f = discriminator_features(m.DX(), data[0].photo);
  CHECK(f.maps.size() == static_cast<std::size_t>(m.DX().feature_layers()));
  CHECK(f.scores.shape().c == 1);
  CHECK((f.scores.array() > 0).all());
  CHECK((f.scores.array() < 1).all());
  CHECK(f.element_counts.size() == f.maps.size());
  const DiscriminatorFeatures<float> g = discriminator_features(m.DX(), data[0].photo);
  for (std::size_t i = 0; i < f.maps.size(); ++i) CHECK((f.maps[i].array() == g.maps[i].array()).all());
}

TEST_CASE("initialisation depends only on the seed") {
  ModelBundle<float> a = tiny(9);
  ModelBundle<float> b = tiny(9);
  ModelBundle<float> c = tiny(10);
  auto na = a.networks();
  auto nb = b.networks();
  auto nc = c.networks();
  REQUIRE(na.size() == 7);
  for (std::size_t i = 0; i < na.size(); ++i) CHECK(na[i].second->parameter_hash() == nb[i].second->parameter_hash());
  CHECK(na[0].second->parameter_hash() != nc[0].second->parameter_hash());
}

TEST_CASE("ModelConfig validation") {
  ModelConfig c = ModelConfig::toy();
  CHECK_NOTHROW(c.validate());
  c.image_size = 50;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
