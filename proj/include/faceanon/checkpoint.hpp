#pragma once

#include "faceanon/models.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace faceanon {

namespace fs = std::filesystem;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the manifest was written under a different model/loss config.
class ConfigMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

template <typename Scalar>
using NamedTensorRefs = std::vector<std::pair<std::string, const Tensor<Scalar>*>>;
template <typename Scalar>
using TensorMap = std::map<std::string, Tensor<Scalar>>;

/// Binary container of named tensors, stored at the precision of Scalar.
template <typename Scalar>
void write_tensor_file(const fs::path& path, const NamedTensorRefs<Scalar>& tensors);
template <typename Scalar>
TensorMap<Scalar> read_tensor_file(const fs::path& path);

/// Parameters ("param:<name>") and buffers ("buffer:<name>") of a module.
template <typename Scalar>
NamedTensorRefs<Scalar> module_state(nn::Module<Scalar>& module);
/// Restores every parameter and buffer; missing names or shape changes throw.
template <typename Scalar>
void load_module_state(nn::Module<Scalar>& module, const TensorMap<Scalar>& state, const std::string& what);

std::uint64_t hash_file(const fs::path& path);

struct CheckpointManifest {
  std::uint64_t config_hash = 0;
  long step = 0;
  int epoch = 0;
  std::string scalar;
  std::map<std::string, std::string> files;  // file name -> hex FNV-1a of its bytes
};

struct LoadOptions {
  std::uint64_t expected_config_hash = 0;
  bool check_config = true;
  /// Accept a config-hash mismatch (reported as a warning).
  bool allow_config_mismatch = false;
  /// Load only the inference generators; other files may be missing.
  bool inference_only = false;
};

struct LoadResult {
  CheckpointManifest manifest;
  std::vector<std::string> loaded;
  std::vector<std::string> warnings;
};

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kOptimizerFile = "optim.bin";

/// Writes one file per network, the optional optimizer state and a manifest.
template <typename Scalar>
CheckpointManifest save_checkpoint(const fs::path& dir, ModelBundle<Scalar>& models, long step, int epoch,
                                   std::uint64_t config_hash, const NamedTensorRefs<Scalar>* optimizer_state = nullptr);

/// Loads network files listed in the manifest after verifying their hashes.
/// Optimizer state, when present and requested, lands in `optimizer_state`.
template <typename Scalar>
LoadResult load_checkpoint(const fs::path& dir, ModelBundle<Scalar>& models, const LoadOptions& options,
                           TensorMap<Scalar>* optimizer_state = nullptr);

CheckpointManifest read_manifest(const fs::path& dir);

/// Checkpoint directory with the highest step under `root`, if any.
std::optional<fs::path> latest_checkpoint(const fs::path& root);

}  // namespace faceanon
