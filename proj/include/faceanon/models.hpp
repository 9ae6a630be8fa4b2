#pragma once

#include "faceanon/losses.hpp"
#include "faceanon/nn/networks.hpp"
#include "faceanon/semantic.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace faceanon {

/// Widths and depths of every network. Defaults are the full-size
/// architecture; `toy()` is the reduced CPU configuration.
struct ModelConfig {
  int image_size = 256;
  int seg_base_width = 64;
  int seg_downsamplings = 2;
  int seg_blocks = 9;
  int disc_base_width = 64;
  int disc_layers = 3;
  int syn_base_width = 64;
  int syn_upsamplings = 5;
  int syn_hidden = 128;
  int syn_disc_base_width = 64;
  int syn_disc_layers = 3;
  int psi_width_divisor = 1;
  /// Optional tensor file with pretrained perceptual-net weights.
  std::string psi_weights;
  std::uint64_t init_seed = 0;

  static ModelConfig toy();
  void validate() const;
};

/// Every network of the system. Networks live at stable addresses.
template <typename Scalar>
class ModelBundle {
 public:
  ModelBundle(const ModelConfig& cfg, const LossConfig& loss);

  nn::ResnetGenerator<Scalar>& G() { return *g_; }
  nn::ResnetGenerator<Scalar>& F() { return *f_; }
  nn::PatchDiscriminator<Scalar>& DX() { return *dx_; }
  nn::PatchDiscriminator<Scalar>& DY() { return *dy_; }
  nn::SpadeGenerator<Scalar>& Gs() { return *gs_; }
  nn::MultiScaleDiscriminator<Scalar>& Ds() { return *ds_; }
  nn::FeatureNet<Scalar>& psi() { return *psi_; }
  const nn::FeatureNet<Scalar>& psi() const { return *psi_; }
  DiscList<Scalar> syn_discriminators() const { return ds_->scales(); }

  /// (file stem, network) for checkpointing, in a fixed order.
  std::vector<std::pair<std::string, nn::Module<Scalar>*>> networks();
  const ModelConfig& config() const { return cfg_; }

  void set_training(bool flag);

 private:
  ModelConfig cfg_;
  std::unique_ptr<nn::ResnetGenerator<Scalar>> g_;
  std::unique_ptr<nn::ResnetGenerator<Scalar>> f_;
  std::unique_ptr<nn::PatchDiscriminator<Scalar>> dx_;
  std::unique_ptr<nn::PatchDiscriminator<Scalar>> dy_;
  std::unique_ptr<nn::SpadeGenerator<Scalar>> gs_;
  std::unique_ptr<nn::MultiScaleDiscriminator<Scalar>> ds_;
  std::unique_ptr<nn::FeatureNet<Scalar>> psi_;
};

/// Checkpoint stems of the generators needed at inference time.
inline const std::vector<std::string>& inference_networks() {
  static const std::vector<std::string> names = {"G", "Gs"};
  return names;
}

template <typename Scalar>
struct Segmentation {
  Tensor<Scalar> scores;  // (N, 11, H, W)
  std::vector<SemanticMask> masks;
};

/// Runs G without recording a graph. Photos must be (N, 3, S, S) with S the
/// network input size.
template <typename Scalar>
Segmentation<Scalar> segment(nn::ResnetGenerator<Scalar>& g, const Tensor<Scalar>& photos, Index image_size);

/// Runs Gs on hard masks; output is (N, 3, S, S) in [0, 1].
template <typename Scalar>
Tensor<Scalar> synthesize(nn::SpadeGenerator<Scalar>& gs, const std::vector<SemanticMask>& masks);

template <typename Scalar>
struct DiscriminatorFeatures {
  std::vector<Tensor<Scalar>> maps;
  std::vector<Index> element_counts;  // N_i per map, per sample
  Tensor<Scalar> scores;
};

template <typename Scalar>
DiscriminatorFeatures<Scalar> discriminator_features(nn::Discriminator<Scalar>& d, const Tensor<Scalar>& image);

}  // namespace faceanon
