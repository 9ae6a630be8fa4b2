#include "faceanon/dataset.hpp"

#include "faceanon/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace faceanon {

using json = nlohmann::json;

void FaceSample::validate() const {
  const Shape& s = photo.shape();
  if (s.n != 1 || s.c != 3) throw DatasetError("sample " + stem + ": photo must be (1,3,H,W), got " + to_string(s));
  if (s.h != mask.height() || s.w != mask.width()) {
    throw DatasetError("sample " + stem + ": photo " + to_string(s) + " and mask " + std::to_string(mask.height()) +
                       "x" + std::to_string(mask.width()) + " differ");
  }
}

void DatasetConfig::validate() const {
  if (resolution_set.empty()) throw std::invalid_argument("resolution_set must not be empty");
  for (int s : resolution_set) {
    if (s < 32) throw std::invalid_argument("resolution " + std::to_string(s) + " is below 32");
  }
  if (image_size < 32) throw std::invalid_argument("image_size must be >= 32");
  if (holdout < 0) throw std::invalid_argument("holdout must be >= 0");
}

std::string identity_from_stem(const std::string& stem) {
  const auto cut = stem.find('_');
  return cut == std::string::npos ? stem : stem.substr(0, cut);
}

namespace {

std::map<std::string, fs::path> files_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& p : list_images(dir)) out.emplace(p.stem().string(), p);
  return out;
}

std::map<std::string, std::string> read_identities(const fs::path& root) {
  std::map<std::string, std::string> out;
  std::ifstream in(root / "identities.csv");
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    std::string stem = line.substr(0, comma);
    std::string id = line.substr(comma + 1);
    if (stem == "stem") continue;  // header
    out[stem] = id;
  }
  return out;
}

/// Photo crop resized through `side` to the network size.
Tensor<float> degraded(const Rgb8Image& crop, int side, int network) {
  const Tensor<float> t = to_tensor<float>(crop);
  if (side >= network) return resize_bilinear(t, network, network);
  return degrade_resolution(t, side, network);
}

}  // namespace

std::vector<FaceSample> prepare_pairs(const DatasetConfig& config, const FaceDetector& detector, PrepareStats* stats) {
  config.validate();
  PrepareStats local;
  PrepareStats& st = stats != nullptr ? *stats : local;
  st = PrepareStats{};

  const fs::path photo_dir = config.root / "photos";
  const fs::path mask_dir = config.root / "masks";
  if (!fs::is_directory(photo_dir) || !fs::is_directory(mask_dir)) {
    throw DatasetError("raw dataset not found under " + config.root.string() +
                       "; expected photos/<stem>.png (8-bit RGB) and masks/<stem>.png (8-bit label ids 0..18)");
  }
  const auto photos = files_by_stem(photo_dir);
  const auto masks = files_by_stem(mask_dir);
  const auto identities = read_identities(config.root);

  std::set<std::string> stems;
  for (const auto& [s, p] : photos) stems.insert(s);
  for (const auto& [s, p] : masks) stems.insert(s);
  st.stems = stems.size();

  std::vector<FaceSample> out;
  for (const std::string& stem : stems) {
    const auto ph = photos.find(stem);
    const auto mk = masks.find(stem);
    if (mk == masks.end()) {
      ++st.missing_mask;
      st.warnings.push_back(stem + ": photo without mask, skipped");
      continue;
    }
    if (ph == photos.end()) {
      ++st.missing_photo;
      st.warnings.push_back(stem + ": mask without photo, skipped");
      continue;
    }
    Rgb8Image photo;
    SemanticMask mask;
    try {
      photo = read_image(ph->second);
      mask = reduce_classes(read_label_image(mk->second));
    } catch (const std::exception& e) {
      ++st.unreadable;
      st.warnings.push_back(stem + ": " + e.what() + ", skipped");
      continue;
    }
    if (photo.height != mask.height() || photo.width != mask.width()) {
      ++st.unreadable;
      st.warnings.push_back(stem + ": photo and mask sizes differ, skipped");
      continue;
    }

    Box box{0, 0, photo.width, photo.height};
    if (config.crop_enabled) {
      const RefineResult r = refine_detection(photo, box, detector, config.refine);
      if (r.ratios.empty()) {
        ++st.no_face;
        st.warnings.push_back(stem + ": no face detected, using the full image");
      } else {
        box = r.crop;
        if (r.capped) ++st.capped_refine;
      }
    }
    const Rgb8Image photo_crop = crop(photo, box);
    const SemanticMask mask_crop =
        resize_nearest(SemanticMask(crop(mask.labels(), box)), config.image_size, config.image_size);

    std::string identity = identity_from_stem(stem);
    if (auto it = identities.find(stem); it != identities.end()) identity = it->second;
    for (int side : config.resolution_set) {
      FaceSample s;
      s.photo = degraded(photo_crop, side, config.image_size);
      s.mask = mask_crop;
      s.identity = identity;
      s.stem = stem;
      s.source_resolution = side;
      out.push_back(std::move(s));
    }
    ++st.usable;
  }
  return out;
}

StemSplit split_stems(std::vector<std::string> stems, int holdout, std::uint64_t seed) {
  std::sort(stems.begin(), stems.end());
  stems.erase(std::unique(stems.begin(), stems.end()), stems.end());
  if (holdout < 0 || static_cast<std::size_t>(holdout) > stems.size()) {
    throw DatasetError("cannot hold out " + std::to_string(holdout) + " of " + std::to_string(stems.size()) + " stems");
  }
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle.
  for (std::size_t i = stems.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(stems[i - 1], stems[j]);
  }
  StemSplit split;
  split.test.assign(stems.begin(), stems.begin() + holdout);
  split.train.assign(stems.begin() + holdout, stems.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

FaceDataset::FaceDataset(std::vector<FaceSample> samples) : samples_(std::move(samples)) {
  Index side = -1;
  for (const auto& s : samples_) {
    s.validate();
    if (side < 0) side = s.mask.height();
    if (s.mask.height() != side || s.mask.width() != side) {
      throw DatasetError("dataset samples must share one square size; " + s.stem + " differs");
    }
    auto [it, inserted] = identity_ids_.emplace(s.identity, static_cast<int>(identity_ids_.size()));
    identity_of_.push_back(it->second);
  }
}

Index FaceDataset::image_size() const { return samples_.empty() ? 0 : samples_.front().mask.height(); }

std::size_t sample_reference(std::mt19937_64& rng, const FaceDataset& dataset, std::size_t anchor) {
  const std::size_t n = dataset.size();
  if (anchor >= n) throw DatasetError("sample_reference: anchor out of range");
  if (n < 2) throw DatasetError("cannot draw a reference photo from a dataset with fewer than 2 samples");
  if (dataset.identity_count() >= 2) {
    const int id = dataset.identity_index(anchor);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (;;) {
      const std::size_t j = pick(rng);
      if (dataset.identity_index(j) != id) return j;
    }
  }
  std::vector<std::size_t> candidates;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != anchor && !dataset[j].photo.bitwise_equal(dataset[anchor].photo)) candidates.push_back(j);
  }
  if (candidates.empty()) throw DatasetError("every other sample is bitwise equal to sample " + std::to_string(anchor));
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  return candidates[pick(rng)];
}

Triple sample_triple(std::mt19937_64& rng, const FaceDataset& dataset, std::optional<std::size_t> anchor) {
  if (dataset.empty()) throw DatasetError("sample_triple: empty dataset");
  Triple t;
  if (anchor) {
    t.x = *anchor;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
    t.x = pick(rng);
  }
  t.x_tilde = sample_reference(rng, dataset, t.x);
  return t;
}

namespace {

std::string sample_name(const FaceSample& s) { return s.stem + "_r" + std::to_string(s.source_resolution) + ".png"; }

}  // namespace

PreparedManifest save_prepared(const fs::path& dir, const std::vector<FaceSample>& samples, const StemSplit& split,
                               const DatasetConfig& config, const PrepareStats& stats) {
  const std::set<std::string> test(split.test.begin(), split.test.end());
  for (const char* part : {"train", "test"}) {
    fs::create_directories(dir / part / "photos");
    fs::create_directories(dir / part / "masks");
  }
  PreparedManifest m;
  m.image_size = config.image_size;
  m.resolution_set = config.resolution_set;
  m.split_seed = config.split_seed;
  json entries = json::array();
  for (const auto& s : samples) {
    const std::string part = test.count(s.stem) ? "test" : "train";
    const std::string name = sample_name(s);
    write_image(dir / part / "photos" / name, to_rgb8(s.photo));
    write_label_image(dir / part / "masks" / name, s.mask.labels());
    entries.push_back({{"split", part},
                       {"stem", s.stem},
                       {"identity", s.identity},
                       {"resolution", s.source_resolution},
                       {"photo", part + "/photos/" + name},
                       {"mask", part + "/masks/" + name}});
    ++(part == "test" ? m.test : m.train);
  }
  json j;
  j["image_size"] = m.image_size;
  j["resolution_set"] = m.resolution_set;
  j["split_seed"] = m.split_seed;
  j["holdout"] = config.holdout;
  j["counts"] = {{"train", m.train}, {"test", m.test}};
  j["stats"] = {{"stems", stats.stems},
                {"usable", stats.usable},
                {"missing_mask", stats.missing_mask},
                {"missing_photo", stats.missing_photo},
                {"unreadable", stats.unreadable},
                {"no_face", stats.no_face},
                {"capped_refine", stats.capped_refine}};
  j["warnings"] = stats.warnings;
  j["samples"] = std::move(entries);
  std::ofstream out(dir / "manifest.json");
  out << j.dump(2) << '\n';
  if (!out) throw DatasetError("cannot write " + (dir / "manifest.json").string());
  return m;
}

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("prepared dataset manifest not found: " + path.string() + " (run prepare-data first)");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError("malformed manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace

PreparedManifest read_prepared_manifest(const fs::path& dir) {
  const json j = read_json(dir / "manifest.json");
  PreparedManifest m;
  m.image_size = j.at("image_size").get<int>();
  m.resolution_set = j.at("resolution_set").get<std::vector<int>>();
  m.split_seed = j.at("split_seed").get<std::uint64_t>();
  m.train = j.at("counts").at("train").get<std::size_t>();
  m.test = j.at("counts").at("test").get<std::size_t>();
  return m;
}

FaceDataset load_prepared(const fs::path& dir, const std::string& split) {
  if (split != "train" && split != "test") throw DatasetError("unknown split '" + split + "'");
  const json j = read_json(dir / "manifest.json");
  std::vector<FaceSample> samples;
  for (const auto& e : j.at("samples")) {
    if (e.at("split").get<std::string>() != split) continue;
    FaceSample s;
    s.stem = e.at("stem").get<std::string>();
    s.identity = e.at("identity").get<std::string>();
    s.source_resolution = e.at("resolution").get<int>();
    try {
      s.photo = to_tensor<float>(read_image(dir / e.at("photo").get<std::string>()));
      s.mask = SemanticMask(read_label_image(dir / e.at("mask").get<std::string>()));
    } catch (const MediaError& err) {
      throw DatasetError(err.what());
    } catch (const std::invalid_argument& err) {
      throw DatasetError(s.stem + ": " + err.what());
    }
    samples.push_back(std::move(s));
  }
  return FaceDataset(std::move(samples));
}

}  // namespace faceanon
