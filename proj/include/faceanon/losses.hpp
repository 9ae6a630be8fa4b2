#pragma once

#include "faceanon/mask_algebra.hpp"
#include "faceanon/nn/networks.hpp"

#include <cstddef>
#include <vector>

namespace faceanon {

struct LossConfig {
  double lambda_cyc = 10.0;
  double lambda_s = 10.0;
  double lambda_dist = 10.0;
  /// One margin per perceptual layer; empty means calibrate before training.
  std::vector<double> margins;
  /// 1-based conv indices of the perceptual layers (relu1_1 .. relu5_1).
  std::vector<int> perceptual_layers{1, 3, 5, 9, 13};
  ComponentSet components;
  int scales = 3;
  double log_eps = 1e-7;
  /// Percentile of different-identity distances used for calibrated margins.
  double margin_percentile = 25.0;

  /// Throws std::invalid_argument on negative weights or margins, a margin
  /// count that disagrees with the layer set, or fewer than one scale.
  void validate() const;
};

/// Numerical events seen while evaluating losses.
struct LossCounters {
  std::size_t clamped = 0;            // log arguments clamped to eps
  std::size_t absent_components = 0;  // (label, sample) extractions that were all zero
};

template <typename Scalar>
using DiscList = std::vector<nn::Discriminator<Scalar>*>;

/// mean log(1 - D(fake)) over patches and batch.
template <typename Scalar>
Var<Scalar> adv_loss_generator(const Var<Scalar>& fake_probs, Scalar eps = Scalar(1e-7), LossCounters* counters = nullptr);

/// mean log D(real) + mean log(1 - D(fake)); the discriminator maximises it.
template <typename Scalar>
Var<Scalar> adv_loss_discriminator(const Var<Scalar>& real_probs, const Var<Scalar>& fake_probs,
                                   Scalar eps = Scalar(1e-7), LossCounters* counters = nullptr);

/// Mean absolute difference over all elements.
template <typename Scalar>
Var<Scalar> cycle_loss(const Var<Scalar>& recon, const Var<Scalar>& original);

/// Sum over layers of max(0, per-element L1 feature distance - margin),
/// hinged per sample and averaged over the batch.
template <typename Scalar>
Var<Scalar> vgg_margin_from_features(const std::vector<Var<Scalar>>& features_x,
                                     const std::vector<Var<Scalar>>& features_syn, const std::vector<double>& margins);

template <typename Scalar>
Var<Scalar> vgg_margin_loss(const nn::FeatureNet<Scalar>& psi, const Var<Scalar>& x, const Var<Scalar>& x_syn,
                            const std::vector<double>& margins);

/// Per-layer, per-sample normalised L1 distances, (layers x N).
template <typename Scalar>
Eigen::MatrixXd perceptual_distances(const nn::FeatureNet<Scalar>& psi, const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
struct ComponentAdvTerms {
  Var<Scalar> gen;    // scale- and label-averaged log(1 - D(xi(fake)))
  Var<Scalar> real;   // scale- and label-averaged log D(xi(real))
  Var<Scalar> value;  // gen + real
};

/// Fake half of the component adversarial loss. Fake components use the
/// generated geometry `fake_masks`; xi is applied at full resolution and
/// the result is average-pooled 2^(k-1) times for scale k.
template <typename Scalar>
Var<Scalar> component_adv_fake(const DiscList<Scalar>& discs, const Var<Scalar>& fake,
                               const std::vector<SemanticMask>& fake_masks, const ComponentSet& components,
                               Scalar eps = Scalar(1e-7), LossCounters* counters = nullptr);

template <typename Scalar>
Var<Scalar> component_adv_real(const DiscList<Scalar>& discs, const Var<Scalar>& real,
                               const std::vector<SemanticMask>& real_masks, const ComponentSet& components,
                               Scalar eps = Scalar(1e-7), LossCounters* counters = nullptr);

template <typename Scalar>
ComponentAdvTerms<Scalar> component_adv_loss(const DiscList<Scalar>& discs, const Var<Scalar>& fake,
                                             const std::vector<SemanticMask>& fake_masks, const Var<Scalar>& real,
                                             const std::vector<SemanticMask>& real_masks,
                                             const ComponentSet& components, Scalar eps = Scalar(1e-7),
                                             LossCounters* counters = nullptr);

/// Feature matching of generated components against the components of a
/// different-identity photo x~, each extracted with its own mask. Sums the
/// per-element L1 distance over the hidden layers, averages over labels,
/// batch and scales.
template <typename Scalar>
Var<Scalar> fm_loss_cross_identity(const DiscList<Scalar>& discs, const Var<Scalar>& fake,
                                   const std::vector<SemanticMask>& fake_masks, const Var<Scalar>& x_tilde,
                                   const std::vector<SemanticMask>& tilde_masks, const ComponentSet& components,
                                   LossCounters* counters = nullptr);

/// One training triple batch: photos x, their one-hot masks y and a
/// different-identity photo x~ per sample.
template <typename Scalar>
struct TripleBatch {
  Var<Scalar> x;
  Var<Scalar> y;
  std::vector<SemanticMask> y_masks;
  Var<Scalar> x_tilde;
  std::vector<SemanticMask> x_tilde_masks;
};

template <typename Scalar>
struct SynthesisTerms {
  Var<Scalar> adv;
  Var<Scalar> fm;
  Var<Scalar> vgg;
  Var<Scalar> cyc;
  Var<Scalar> total;
  Var<Scalar> x_syn;  // synthesized photo in [0, 1]
};

/// Generator-side value of the synthesis objective on y^ = softmax(G(x)):
/// component adversarial (fake term) + cross-identity feature matching +
/// margin perceptual loss + mean L1(G(Gs(y^)), y^).
template <typename Scalar>
SynthesisTerms<Scalar> synthesis_objective(nn::SpadeGenerator<Scalar>& gs, const DiscList<Scalar>& discs,
                                           const nn::FeatureNet<Scalar>& psi, nn::ResnetGenerator<Scalar>& g,
                                           const TripleBatch<Scalar>& batch, const Var<Scalar>& y_hat_soft,
                                           const LossConfig& cfg, LossCounters* counters = nullptr);

template <typename Scalar>
SynthesisTerms<Scalar> synthesis_objective(nn::SpadeGenerator<Scalar>& gs, const DiscList<Scalar>& discs,
                                           const nn::FeatureNet<Scalar>& psi, nn::ResnetGenerator<Scalar>& g,
                                           const TripleBatch<Scalar>& batch, const LossConfig& cfg,
                                           LossCounters* counters = nullptr);

template <typename Scalar>
struct SegmentationTerms {
  Var<Scalar> adv;    // log(1 - D_Y(G(x)))
  Var<Scalar> cyc;    // L1(F(G(x)), x)
  SynthesisTerms<Scalar> syn;
  Var<Scalar> dist;   // L1(G(x), y)
  Var<Scalar> total;  // adv + l_cyc cyc + l_s syn.total + l_dist dist
  Var<Scalar> y_hat;  // softmax(G(x))
};

/// Loss of the segmentation generator.
template <typename Scalar>
SegmentationTerms<Scalar> seg_generator_loss(nn::ResnetGenerator<Scalar>& g, nn::ResnetGenerator<Scalar>& f,
                                             nn::Discriminator<Scalar>& d_y, nn::SpadeGenerator<Scalar>& gs,
                                             const DiscList<Scalar>& syn_discs, const nn::FeatureNet<Scalar>& psi,
                                             const TripleBatch<Scalar>& batch, const LossConfig& cfg,
                                             LossCounters* counters = nullptr);

template <typename Scalar>
struct InverseTerms {
  Var<Scalar> adv;    // log(1 - D_X(F(y)))
  Var<Scalar> cyc;    // L1(G(F(y)), y)
  Var<Scalar> total;
  Var<Scalar> x_hat;  // F(y)
};

/// Loss of the inverse generator F.
template <typename Scalar>
InverseTerms<Scalar> inverse_generator_loss(nn::ResnetGenerator<Scalar>& g, nn::ResnetGenerator<Scalar>& f,
                                            nn::Discriminator<Scalar>& d_x, const TripleBatch<Scalar>& batch,
                                            const LossConfig& cfg, LossCounters* counters = nullptr);

/// Network output conventions shared by training and inference.
template <typename Scalar>
Var<Scalar> inverse_photo(nn::ResnetGenerator<Scalar>& f, const Var<Scalar>& semantics) {
  return affine(tanh(f.forward(semantics)), Scalar(0.5), Scalar(0.5));
}
template <typename Scalar>
Var<Scalar> synthesize_photo(nn::SpadeGenerator<Scalar>& gs, const Var<Scalar>& semantics) {
  return affine(gs.forward(semantics), Scalar(0.5), Scalar(0.5));
}
template <typename Scalar>
Var<Scalar> soft_semantics(nn::ResnetGenerator<Scalar>& g, const Var<Scalar>& photo) {
  return softmax_channels(g.forward(photo));
}

/// Per-sample argmax masks of a class-score or soft-semantics batch.
template <typename Scalar>
std::vector<SemanticMask> argmax_masks(const Tensor<Scalar>& scores) {
  std::vector<SemanticMask> out;
  for (Index n = 0; n < scores.shape().n; ++n) out.push_back(SemanticMask::argmax(scores, n));
  return out;
}

}  // namespace faceanon
