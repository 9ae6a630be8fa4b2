#pragma once

#include "faceanon/anonymizer.hpp"
#include "faceanon/dataset.hpp"
#include "faceanon/evaluation.hpp"
#include "faceanon/losses.hpp"
#include "faceanon/models.hpp"
#include "faceanon/training.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace faceanon {

namespace fs = std::filesystem;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalSettings {
  int base_width = 32;
  int embedding_dim = 128;
  EmbeddingTrainConfig train;
  /// Raw identity set (photos/ + masks/) for the criterion pairs; empty
  /// means the prepared test split.
  fs::path criterion_root;
  /// Raw datasets to anonymize; empty means the prepared test split.
  std::vector<fs::path> datasets;
  bool passthrough = false;
};

/// Everything a command needs. Every field has a default; the seed in [run]
/// drives every random stream (split, init, training, embedding).
struct RunConfig {
  std::string preset = "full";
  std::uint64_t seed = 0;
  fs::path out = "runs/default";
  DatasetConfig data;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  AnonymizerConfig anonymizer;
  EvalSettings eval;

  /// Defaults of a preset: "full" or "toy" (64 px, reduced widths, lr 1e-3).
  static RunConfig defaults(const std::string& preset);

  fs::path prepared_dir() const { return out / "data"; }
  fs::path checkpoint_root() const { return out / "checkpoints"; }
  fs::path embedding_dir() const { return out / "embedding"; }

  /// Copies the run seed into the per-module seeds and checks ranges.
  void finalize();
  /// FNV-1a over the resolved [model] and [loss] sections, margins excluded.
  std::uint64_t model_hash() const;
};

/// "section.key" -> value pairs applied after the config file.
using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Defaults of the preset named in the file or overrides, then the file,
/// then `FACEANON_OUT`, then `overrides`. Unknown keys are errors.
RunConfig load_config(const fs::path& file, const Overrides& overrides);

/// Resolved configuration in the same INI format `load_config` reads.
std::string to_ini(const RunConfig& cfg);
void write_snapshot(const RunConfig& cfg, const fs::path& path);

}  // namespace faceanon
