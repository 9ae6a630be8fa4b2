#pragma once

#include "faceanon/dataset.hpp"
#include "faceanon/nn/networks.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace faceanon {

namespace fs = std::filesystem;

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EmbeddingConfig {
  int image_size = 256;
  int base_width = 32;
  int embedding_dim = 128;
  std::uint64_t init_seed = 0;
};

/// Twin-branch distance model: one shared embedding network applied to
/// both faces of a pair, compared by Euclidean distance.
class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  explicit EmbeddingModel(const EmbeddingConfig& cfg);

  bool loaded() const { return static_cast<bool>(net_); }
  const EmbeddingConfig& config() const { return cfg_; }
  nn::EmbeddingNet<float>& net();

  /// (N, d) embeddings of (N, 3, S, S) photos in [0, 1].
  Eigen::MatrixXd embed(const Tensor<float>& photos) const;

  void save(const fs::path& dir) const;
  static EmbeddingModel load(const fs::path& dir);

 private:
  EmbeddingConfig cfg_;
  std::unique_ptr<nn::EmbeddingNet<float>> net_;
};

/// Euclidean distance between the embeddings of two single photos.
double pair_distance(const EmbeddingModel& model, const Tensor<float>& a, const Tensor<float>& b);

struct EmbeddingTrainConfig {
  int steps = 300;
  int pairs_per_step = 16;  // half same-identity, half different
  double lr = 1e-3;
  double margin = 2.0;
  std::uint64_t seed = 0;
};

/// Contrastive training on pairs drawn from `dataset`. Returns the loss of
/// every step.
std::vector<double> train_embedding(EmbeddingModel& model, const FaceDataset& dataset, const EmbeddingTrainConfig& cfg);

struct DatasetResult {
  std::string name;
  std::size_t n = 0;
  double mean_distance = 0;
};

struct EvalReport {
  double criterion_same = 0;  // mean distance over same-identity pairs
  double criterion_diff = 0;  // mean distance over different-identity pairs
  std::size_t same_pairs = 0;
  std::size_t diff_pairs = 0;
  std::vector<DatasetResult> datasets;

  double criterion_gap() const { return criterion_diff - criterion_same; }
  std::string to_text() const;
  /// Columns: dataset,n,mean_distance.
  std::string to_csv() const;
};

/// Face-level anonymizer under evaluation: maps a face photo to its
/// anonymized version of the same size.
using FaceAnonymizeFn = std::function<Rgb8Image(const Rgb8Image&)>;

struct NamedDataset {
  std::string name;
  const FaceDataset* data = nullptr;
};

/// Criterion distances over every same- and different-identity pair of
/// `criterion_set`, then, per dataset, the mean distance between each
/// photo and its anonymized version. Results do not depend on sample order.
EvalReport evaluate_anonymizer(const EmbeddingModel& model, const FaceAnonymizeFn& anonymize,
                               const FaceDataset& criterion_set, const std::vector<NamedDataset>& datasets);

}  // namespace faceanon
