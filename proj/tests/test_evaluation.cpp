#include <doctest.h>

#include "checks.hpp"
#include "faceanon/evaluation.hpp"

#include <random>
#include <sstream>

using namespace faceanon;
namespace ch = faceanon::checks;

namespace {

EmbeddingModel small_embedding(std::uint64_t seed = 1) {
  EmbeddingConfig c;
  c.image_size = 32;
  c.base_width = 4;
  c.embedding_dim = 8;
  c.init_seed = seed;
  return EmbeddingModel(c);
}

Tensor<float> noise(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0, 1);
  Tensor<float> t(Shape{1, 3, 32, 32});
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return t;
}

Rgb8Image invert(const Rgb8Image& img) {
  Rgb8Image out = img;
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(255 - p);
  return out;
}

}  // namespace

TEST_CASE("pair_distance is a metric on embeddings") {
  const EmbeddingModel m = small_embedding();
  std::mt19937_64 rng(4);
  for (int k = 0; k < 10; ++k) {
    const Tensor<float> a = noise(rng);
    const Tensor<float> b = noise(rng);
    const Tensor<float> c = noise(rng);
    const double ab = pair_distance(m, a, b);
    CHECK(pair_distance(m, a, a) == 0.0);
    CHECK(ab >= 0.0);
    CHECK(ab == pair_distance(m, b, a));
    CHECK(pair_distance(m, a, c) <= ab + pair_distance(m, b, c) + 1e-9);
  }
  CHECK_THROWS_AS(pair_distance(m, Tensor<float>(Shape{1, 3, 16, 16}), Tensor<float>(Shape{1, 3, 16, 16})),
                  ShapeError);
}

TEST_CASE("embedding configuration is validated") {
  EmbeddingConfig c;
  c.image_size = 16;
  CHECK_THROWS_AS(EmbeddingModel{c}, std::invalid_argument);
}

TEST_CASE("embedding save and load round trip") {
  const fs::path dir = fs::temp_directory_path() / "faceanon_unit" / "embedding";
  fs::remove_all(dir);
  EmbeddingModel m = small_embedding(3);
  m.save(dir);
  const EmbeddingModel back = EmbeddingModel::load(dir);
  std::mt19937_64 rng(1);
  const Tensor<float> x = noise(rng);
  CHECK((m.embed(x).array() == back.embed(x).array()).all());
  try {
    EmbeddingModel::load(dir / "missing");
    FAIL("expected EvaluationError");
  } catch (const EvaluationError& e) {
    CHECK(std::string(e.what()).find("train-embedding") != std::string::npos);
  }
}

TEST_CASE("evaluate_anonymizer reports criteria and per-dataset means") {
  const FaceDataset data = ch::portrait_dataset(3, 2, 32, 6);
  const EmbeddingModel m = small_embedding();
  const FaceAnonymizeFn passthrough = [](const Rgb8Image& x) { return x; };
  const FaceAnonymizeFn inverted = invert;

  const EvalReport p = evaluate_anonymizer(m, passthrough, data, {{"toy", &data}});
  CHECK(p.same_pairs == 3);
  CHECK(p.diff_pairs == 12);
  CHECK(p.criterion_same > 0);
  REQUIRE(p.datasets.size() == 1);
  CHECK(p.datasets[0].n == 6);
  CHECK(p.datasets[0].mean_distance == 0.0);

  const EvalReport r = evaluate_anonymizer(m, inverted, data, {{"toy", &data}});
  CHECK(r.datasets[0].mean_distance > 0);
  CHECK(r.criterion_gap() == doctest::Approx(r.criterion_diff - r.criterion_same));

  SUBCASE("order of the datasets does not matter") {
    std::vector<FaceSample> reversed(data.samples().rbegin(), data.samples().rend());
    const FaceDataset shuffled(std::move(reversed));
    const EvalReport s = evaluate_anonymizer(m, inverted, shuffled, {{"toy", &shuffled}});
    CHECK(s.criterion_same == doctest::Approx(r.criterion_same).epsilon(1e-12));
    CHECK(s.criterion_diff == doctest::Approx(r.criterion_diff).epsilon(1e-12));
    CHECK(s.datasets[0].mean_distance == doctest::Approx(r.datasets[0].mean_distance).epsilon(1e-12));
  }
  SUBCASE("csv schema") {
    std::istringstream csv(r.to_csv());
    std::string header;
    std::string row;
    std::getline(csv, header);
    std::getline(csv, row);
    CHECK(header == "dataset,n,mean_distance");
    CHECK(row.rfind("toy,6,", 0) == 0);
    CHECK(r.to_text().find("criterion_gap") != std::string::npos);
  }
  SUBCASE("empty datasets are rejected") {
    const FaceDataset empty;
    CHECK_THROWS_AS(evaluate_anonymizer(m, passthrough, data, {{"none", &empty}}), EvaluationError);
    CHECK_THROWS_AS(evaluate_anonymizer(m, passthrough, empty, {{"toy", &data}}), EvaluationError);
  }
}

TEST_CASE("contrastive training pulls same-identity pairs together") {
  const FaceDataset data = ch::portrait_dataset(4, 3, 32, 12);
  EmbeddingModel m = small_embedding(2);
  EmbeddingTrainConfig tc;
  tc.steps = 40;
  tc.pairs_per_step = 8;
  const std::vector<double> losses = train_embedding(m, data, tc);
  REQUIRE(losses.size() == 40);
  double head = 0;
  double tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += losses[static_cast<std::size_t>(i)];
    tail += losses[losses.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(tail < head);
}
