#include <doctest.h>

#include "checks.hpp"
#include "faceanon/dataset.hpp"
#include "faceanon/toy_faces.hpp"

#include <fstream>
#include <set>

using namespace faceanon;
namespace ch = faceanon::checks;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "faceanon_unit" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path toy_root(const std::string& name, int identities, int photos) {
  const fs::path root = fresh_dir(name);
  toy::DatasetSpec spec;
  spec.identities = identities;
  spec.photos_per_identity = photos;
  spec.side = 72;
  toy::write_dataset(root, spec);
  return root;
}

DatasetConfig config_for(const fs::path& root, std::vector<int> resolutions) {
  DatasetConfig c;
  c.root = root;
  c.image_size = 64;
  c.resolution_set = std::move(resolutions);
  return c;
}

}  // namespace

TEST_CASE("prepare_pairs emits one pair per image and resolution") {
  const fs::path root = toy_root("prepare", 2, 4);
  const SkinRegionDetector detector;
  PrepareStats stats;
  const auto single = prepare_pairs(config_for(root, {64}), detector, &stats);
  CHECK(single.size() == 8);
  CHECK(stats.usable == 8);
  const auto multi = prepare_pairs(config_for(root, {64, 48, 32}), detector);
  REQUIRE(multi.size() == 24);
  for (const auto& s : multi) {
    CHECK(s.photo.shape() == Shape{1, 3, 64, 64});
    CHECK(s.mask.height() == 64);
  }
  // Ordered by stem, then resolution.
  CHECK(multi[0].stem == multi[2].stem);
  CHECK(multi[0].source_resolution == 64);
  CHECK(multi[2].source_resolution == 32);
  // Lower resolutions lose detail but keep the geometry.
  CHECK(multi[0].mask == multi[1].mask);
  CHECK(!(multi[0].photo.array() == multi[2].photo.array()).all());
}

TEST_CASE("a truncated mask is skipped with a named warning") {
  const fs::path root = toy_root("truncated", 2, 2);
  const fs::path victim = root / "masks" / "id001_01.png";
  REQUIRE(fs::exists(victim));
  fs::resize_file(victim, fs::file_size(victim) / 3);
  fs::remove(root / "photos" / "id000_00.png");
  PrepareStats stats;
  const auto samples = prepare_pairs(config_for(root, {64}), SkinRegionDetector{}, &stats);
  CHECK(samples.size() == 2);
  CHECK(stats.unreadable == 1);
  CHECK(stats.missing_photo == 1);
  bool named = false;
  for (const auto& w : stats.warnings) named = named || w.find("id001_01") != std::string::npos;
  CHECK(named);
}

TEST_CASE("missing raw layout is reported") {
  const fs::path root = fresh_dir("empty");
  CHECK_THROWS_AS(prepare_pairs(config_for(root, {64}), SkinRegionDetector{}), DatasetError);
}

TEST_CASE("identity comes from the stem prefix") {
  CHECK(identity_from_stem("id003_02") == "id003");
  CHECK(identity_from_stem("single") == "single");
}

TEST_CASE("split_stems is seeded and disjoint") {
  std::vector<std::string> stems;
  for (int i = 0; i < 30; ++i) stems.push_back("s" + std::to_string(100 + i));
  const StemSplit a = split_stems(stems, 5, 11);
  const StemSplit b = split_stems(stems, 5, 11);
  const StemSplit c = split_stems(stems, 5, 12);
  CHECK(a.train.size() == 25);
  CHECK(a.test.size() == 5);
  CHECK(a.test == b.test);
  CHECK(a.test != c.test);
  std::set<std::string> all(a.train.begin(), a.train.end());
  all.insert(a.test.begin(), a.test.end());
  CHECK(all.size() == 30);
}

TEST_CASE("sample_triple never pairs an identity with itself") {
  const FaceDataset data = ch::portrait_dataset(10, 3, 32, 8);
  std::mt19937_64 rng(123);
  int differ = 0;
  for (int i = 0; i < 1000; ++i) {
    const Triple t = sample_triple(rng, data);
    differ += data[t.x].identity != data[t.x_tilde].identity ? 1 : 0;
  }
  CHECK(differ == 1000);

  std::mt19937_64 r1(5);
  std::mt19937_64 r2(5);
  for (int i = 0; i < 20; ++i) {
    const Triple a = sample_triple(r1, data);
    const Triple b = sample_triple(r2, data);
    CHECK(a.x == b.x);
    CHECK(a.x_tilde == b.x_tilde);
  }
}

TEST_CASE("two-sample dataset forces the reference") {
  const FaceDataset data = ch::portrait_dataset(1, 2, 32, 8);
  std::mt19937_64 rng(0);
  for (int i = 0; i < 10; ++i) CHECK(sample_triple(rng, data, 0).x_tilde == 1);
  const FaceDataset one(std::vector<FaceSample>{data[0]});
  CHECK_THROWS_AS(sample_triple(rng, one), DatasetError);
}

TEST_CASE("prepared splits round-trip through disk") {
  const fs::path root = toy_root("roundtrip_raw", 3, 2);
  const DatasetConfig cfg = config_for(root, {64});
  PrepareStats stats;
  const auto samples = prepare_pairs(cfg, SkinRegionDetector{}, &stats);
  std::vector<std::string> stems;
  for (const auto& s : samples) stems.push_back(s.stem);
  const StemSplit split = split_stems(stems, 2, 0);
  const fs::path out = fresh_dir("roundtrip_out");
  const PreparedManifest m = save_prepared(out, samples, split, cfg, stats);
  CHECK(m.train == 4);
  CHECK(m.test == 2);
  const FaceDataset train = load_prepared(out, "train");
  const FaceDataset test = load_prepared(out, "test");
  CHECK(train.size() == 4);
  CHECK(test.size() == 2);
  CHECK(test[0].stem == split.test[0]);
  for (const auto& s : samples) {
    if (s.stem != test[0].stem) continue;
    CHECK(s.mask == test[0].mask);
    // 8-bit storage.
    CHECK((s.photo.array() - test[0].photo.array()).abs().maxCoeff() <= 0.5f / 255.0f + 1e-6f);
  }
  CHECK_THROWS_AS(load_prepared(fresh_dir("nothing"), "train"), DatasetError);
}
