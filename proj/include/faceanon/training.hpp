#pragma once

#include "faceanon/checkpoint.hpp"
#include "faceanon/dataset.hpp"
#include "faceanon/losses.hpp"
#include "faceanon/models.hpp"
#include "faceanon/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace faceanon {

namespace fs = std::filesystem;

struct TrainConfig {
  int epochs = 1;
  long max_steps = 0;  // 0 = no step limit
  int batch_size = 1;
  double lr = 2e-4;
  double seg_beta1 = 0.5;
  double syn_beta1 = 0.0;
  double beta2 = 0.999;
  /// Learning-rate schedule in epochs: constant, then linear decay to zero.
  /// Negative values split `epochs` in half.
  int lr_constant_epochs = -1;
  int lr_decay_epochs = -1;
  std::uint64_t seed = 0;
  long checkpoint_every = 0;  // steps; 0 = end of run only
  int calibration_pairs = 32;

  /// A zero learning rate is accepted and freezes every network.
  void validate() const;
};

struct LossRecord {
  long step = 0;
  std::string term;
  double value = 0;
};

struct Incident {
  long step = 0;
  std::string what;
};

/// Per-layer margins at the configured percentile of perceptual distances
/// between random different-identity pairs of the dataset.
std::vector<double> calibrate_margins(const nn::FeatureNet<float>& psi, const FaceDataset& dataset, int pairs,
                                      double percentile, std::uint64_t seed);

/// Training-order batch for sample indices `anchors` with references drawn
/// from `rng`.
TripleBatch<float> make_triple_batch(const FaceDataset& dataset, const std::vector<std::size_t>& anchors,
                                     std::mt19937_64& rng);

/// Alternating two-part training: per batch, one step on G and F, one on
/// D_X and D_Y (Gs fixed), then one step on Gs and one on the multi-scale
/// discriminators (G and F fixed).
class Trainer {
 public:
  Trainer(ModelBundle<float>& models, const FaceDataset& dataset, LossConfig loss, TrainConfig cfg);

  /// One batch of the current epoch. Returns false when training is over.
  bool step();
  /// Runs until the end of the current epoch or the step limit.
  void run_epoch();
  /// Runs to completion, saving checkpoints into `checkpoint_root` at the
  /// configured cadence and at the end when a root is given.
  void run(const fs::path& checkpoint_root = {}, std::uint64_t config_hash = 0);

  bool finished() const;
  long global_step() const { return step_; }
  int epoch() const { return epoch_; }
  long steps_per_epoch() const { return steps_per_epoch_; }
  double current_lr() const;

  const std::vector<LossRecord>& records() const { return records_; }
  const std::vector<Incident>& incidents() const { return incidents_; }
  const LossConfig& loss_config() const { return loss_; }
  const LossCounters& counters() const { return counters_; }

  /// Streams every record as a JSON line {"step","term","value"}.
  void set_log(std::ostream* out) { log_ = out; }
  /// Called after each completed step.
  void set_step_callback(std::function<void(const Trainer&)> cb) { callback_ = std::move(cb); }

  fs::path save(const fs::path& checkpoint_root, std::uint64_t config_hash);
  /// Restores weights, optimizer moments and the step counter.
  void resume(const fs::path& checkpoint_dir, const LoadOptions& options);

  /// Generator objective per step: the segmentation generator total plus the
  /// synthesis generator total, as logged under "gen_total".
  std::vector<double> generator_totals() const;

 private:
  void record(const std::string& term, double value);
  std::vector<std::size_t> epoch_order(int epoch) const;
  bool segmentation_part(const TripleBatch<float>& batch, Tensor<float>& y_fake, Tensor<float>& x_fake);
  bool synthesis_part(const TripleBatch<float>& batch);
  bool apply(Adam<float>& opt, const Var<float>& loss, const char* what);

  ModelBundle<float>& models_;
  const FaceDataset& data_;
  LossConfig loss_;
  bool calibrated_ = false;
  TrainConfig cfg_;
  std::unique_ptr<Adam<float>> opt_gf_;
  std::unique_ptr<Adam<float>> opt_d_;
  std::unique_ptr<Adam<float>> opt_gs_;
  std::unique_ptr<Adam<float>> opt_ds_;
  long steps_per_epoch_ = 0;
  long step_ = 0;
  int epoch_ = 0;
  std::vector<LossRecord> records_;
  std::vector<Incident> incidents_;
  LossCounters counters_;
  std::ostream* log_ = nullptr;
  std::function<void(const Trainer&)> callback_;
  double pending_gen_total_ = 0;
};

/// Moving average with window `w` over `values` (shorter prefix windows at
/// the start are not emitted).
std::vector<double> moving_average(const std::vector<double>& values, std::size_t w);

}  // namespace faceanon
