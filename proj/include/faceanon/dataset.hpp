#pragma once

#include "faceanon/detector.hpp"
#include "faceanon/image.hpp"
#include "faceanon/semantic.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace faceanon {

namespace fs = std::filesystem;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A paired photo and reduced mask of one face.
struct FaceSample {
  Tensor<float> photo;  // (1, 3, H, W) in [0, 1]
  SemanticMask mask;
  std::string identity;
  std::string stem;
  int source_resolution = 0;  // side length the photo was degraded to

  /// Throws DatasetError when photo and mask disagree in size.
  void validate() const;
};

struct DatasetConfig {
  fs::path root;
  bool crop_enabled = true;
  std::vector<int> resolution_set{256};
  int image_size = 256;  // network input side
  std::uint64_t split_seed = 0;
  int holdout = 0;       // stems moved to the test split
  RefineOptions refine;

  void validate() const;
};

struct PrepareStats {
  std::size_t stems = 0;           // distinct stems seen in photos/ and masks/
  std::size_t usable = 0;
  std::size_t missing_mask = 0;
  std::size_t missing_photo = 0;
  std::size_t unreadable = 0;      // undecodable files or invalid labels
  std::size_t no_face = 0;         // full-image fallbacks
  std::size_t capped_refine = 0;
  std::vector<std::string> warnings;
};

/// Reads photos/<stem>.* and masks/<stem>.png under `config.root`, reduces
/// masks to the 11 classes, crops photo and mask to the refined face box and
/// emits one sample per resolution in `resolution_set`, ordered by stem and
/// then resolution. Identity comes from identities.csv (stem,identity) when
/// present, otherwise from the stem up to its first underscore.
std::vector<FaceSample> prepare_pairs(const DatasetConfig& config, const FaceDetector& detector,
                                      PrepareStats* stats = nullptr);

/// Identity tag for a stem without an identities file.
std::string identity_from_stem(const std::string& stem);

struct StemSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Seeded shuffle of the sorted stems; the first `holdout` go to test. Both
/// lists come back sorted.
StemSplit split_stems(std::vector<std::string> stems, int holdout, std::uint64_t seed);

/// Immutable collection of samples with an identity index.
class FaceDataset {
 public:
  FaceDataset() = default;
  explicit FaceDataset(std::vector<FaceSample> samples);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const FaceSample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<FaceSample>& samples() const { return samples_; }

  std::size_t identity_count() const { return identity_ids_.size(); }
  /// Dense identity index of sample i.
  int identity_index(std::size_t i) const { return identity_of_[i]; }
  /// Spatial side of the samples; 0 when empty.
  Index image_size() const;

 private:
  std::vector<FaceSample> samples_;
  std::map<std::string, int> identity_ids_;
  std::vector<int> identity_of_;
};

struct Triple {
  std::size_t x = 0;        // index of (x, y)
  std::size_t x_tilde = 0;  // index of the reference photo
};

/// Reference index for `anchor`: uniform over samples of another identity
/// when the dataset has at least two, otherwise over the other samples whose
/// photo differs bitwise. Throws DatasetError when no candidate exists.
std::size_t sample_reference(std::mt19937_64& rng, const FaceDataset& dataset, std::size_t anchor);

/// Draws the anchor uniformly unless given, then its reference.
Triple sample_triple(std::mt19937_64& rng, const FaceDataset& dataset, std::optional<std::size_t> anchor = {});

/// On-disk layout written by prepare-data: <dir>/manifest.json plus
/// <split>/photos/*.png and <split>/masks/*.png.
struct PreparedManifest {
  int image_size = 0;
  std::vector<int> resolution_set;
  std::uint64_t split_seed = 0;
  std::size_t train = 0;
  std::size_t test = 0;
};

/// Writes both splits; samples go to test when their stem is in `split.test`.
PreparedManifest save_prepared(const fs::path& dir, const std::vector<FaceSample>& samples, const StemSplit& split,
                               const DatasetConfig& config, const PrepareStats& stats);

/// Loads one split ("train" or "test"). Throws DatasetError when the
/// manifest or a listed file is missing.
FaceDataset load_prepared(const fs::path& dir, const std::string& split);

PreparedManifest read_prepared_manifest(const fs::path& dir);

}  // namespace faceanon
