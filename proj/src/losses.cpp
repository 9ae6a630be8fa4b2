#include "faceanon/losses.hpp"

#include <stdexcept>
#include <string>

namespace faceanon {

void LossConfig::validate() const {
  if (lambda_cyc < 0 || lambda_s < 0 || lambda_dist < 0) throw std::invalid_argument("loss weights must be >= 0");
  for (double m : margins) {
    if (!(m >= 0)) throw std::invalid_argument("perceptual margins must be >= 0");
  }
  if (perceptual_layers.empty()) throw std::invalid_argument("perceptual layer set is empty");
  if (!margins.empty() && margins.size() != perceptual_layers.size()) {
    throw std::invalid_argument("got " + std::to_string(margins.size()) + " margins for " +
                                std::to_string(perceptual_layers.size()) + " perceptual layers");
  }
  if (scales < 1) throw std::invalid_argument("need at least one discriminator scale");
  if (!(log_eps > 0 && log_eps < 0.5)) throw std::invalid_argument("log epsilon must be in (0, 0.5)");
  if (!(margin_percentile >= 0 && margin_percentile <= 100)) {
    throw std::invalid_argument("margin percentile must be in [0, 100]");
  }
}

namespace {

template <typename Scalar>
Var<Scalar> one_minus(const Var<Scalar>& p) {
  return affine(p, Scalar(-1), Scalar(1));
}

template <typename Scalar>
void require_scales(const DiscList<Scalar>& discs) {
  if (discs.empty()) throw std::invalid_argument("component losses need at least one discriminator");
}

}  // namespace

template <typename Scalar>
Var<Scalar> adv_loss_generator(const Var<Scalar>& fake_probs, Scalar eps, LossCounters* counters) {
  return mean(log_clamped(one_minus(fake_probs), eps, counters ? &counters->clamped : nullptr));
}

template <typename Scalar>
Var<Scalar> adv_loss_discriminator(const Var<Scalar>& real_probs, const Var<Scalar>& fake_probs, Scalar eps,
                                   LossCounters* counters) {
  std::size_t* clamp = counters ? &counters->clamped : nullptr;
  return mean(log_clamped(real_probs, eps, clamp)) + mean(log_clamped(one_minus(fake_probs), eps, clamp));
}

template <typename Scalar>
Var<Scalar> cycle_loss(const Var<Scalar>& recon, const Var<Scalar>& original) {
  require_same_shape(recon.shape(), original.shape(), "cycle_loss");
  return l1_mean(recon, original);
}

template <typename Scalar>
Var<Scalar> vgg_margin_from_features(const std::vector<Var<Scalar>>& features_x,
                                     const std::vector<Var<Scalar>>& features_syn, const std::vector<double>& margins) {
  if (features_x.size() != features_syn.size() || features_x.size() != margins.size()) {
    throw std::invalid_argument("vgg_margin_loss: " + std::to_string(margins.size()) + " margins for " +
                                std::to_string(features_x.size()) + " feature layers");
  }
  Var<Scalar> per_sample;
  for (std::size_t i = 0; i < margins.size(); ++i) {
    require_same_shape(features_x[i].shape(), features_syn[i].shape(), "vgg_margin_loss");
    Var<Scalar> d = mean_per_sample(abs(features_syn[i] - features_x[i]));
    Var<Scalar> h = hinge(d, static_cast<Scalar>(margins[i]));
    per_sample = per_sample.defined() ? per_sample + h : h;
  }
  return mean(per_sample);
}

template <typename Scalar>
Var<Scalar> vgg_margin_loss(const nn::FeatureNet<Scalar>& psi, const Var<Scalar>& x, const Var<Scalar>& x_syn,
                            const std::vector<double>& margins) {
  require_same_shape(x.shape(), x_syn.shape(), "vgg_margin_loss");
  return vgg_margin_from_features(psi.forward(x), psi.forward(x_syn), margins);
}

template <typename Scalar>
Eigen::MatrixXd perceptual_distances(const nn::FeatureNet<Scalar>& psi, const Tensor<Scalar>& a,
                                     const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "perceptual_distances");
  NoGradGuard guard;
  auto fa = psi.forward(constant(a));
  auto fb = psi.forward(constant(b));
  Eigen::MatrixXd out(static_cast<Index>(fa.size()), a.shape().n);
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const Tensor<Scalar> d = mean_per_sample(abs(fa[i] - fb[i])).value();
    for (Index n = 0; n < a.shape().n; ++n) out(static_cast<Index>(i), n) = static_cast<double>(d.data()[n]);
  }
  return out;
}

template <typename Scalar>
Var<Scalar> component_adv_fake(const DiscList<Scalar>& discs, const Var<Scalar>& fake,
                               const std::vector<SemanticMask>& fake_masks, const ComponentSet& components, Scalar eps,
                               LossCounters* counters) {
  require_scales(discs);
  Var<Scalar> h = extract_components(fake, fake_masks, components.labels(),
                                     counters ? &counters->absent_components : nullptr);
  Var<Scalar> acc;
  for (std::size_t k = 0; k < discs.size(); ++k) {
    if (k > 0) h = avg_pool2(h);
    Var<Scalar> term = adv_loss_generator(discs[k]->forward(h).probs, eps, counters);
    acc = acc.defined() ? acc + term : term;
  }
  return affine(acc, Scalar(1) / static_cast<Scalar>(discs.size()), Scalar(0));
}

template <typename Scalar>
Var<Scalar> component_adv_real(const DiscList<Scalar>& discs, const Var<Scalar>& real,
                               const std::vector<SemanticMask>& real_masks, const ComponentSet& components, Scalar eps,
                               LossCounters* counters) {
  require_scales(discs);
  Var<Scalar> h = extract_components(real, real_masks, components.labels(),
                                     counters ? &counters->absent_components : nullptr);
  Var<Scalar> acc;
  for (std::size_t k = 0; k < discs.size(); ++k) {
    if (k > 0) h = avg_pool2(h);
    Var<Scalar> term = mean(log_clamped(discs[k]->forward(h).probs, eps, counters ? &counters->clamped : nullptr));
    acc = acc.defined() ? acc + term : term;
  }
  return affine(acc, Scalar(1) / static_cast<Scalar>(discs.size()), Scalar(0));
}

template <typename Scalar>
ComponentAdvTerms<Scalar> component_adv_loss(const DiscList<Scalar>& discs, const Var<Scalar>& fake,
                                             const std::vector<SemanticMask>& fake_masks, const Var<Scalar>& real,
                                             const std::vector<SemanticMask>& real_masks,
                                             const ComponentSet& components, Scalar eps, LossCounters* counters) {
  ComponentAdvTerms<Scalar> t;
  t.gen = component_adv_fake(discs, fake, fake_masks, components, eps, counters);
  t.real = component_adv_real(discs, real, real_masks, components, eps, counters);
  t.value = t.gen + t.real;
  return t;
}

template <typename Scalar>
Var<Scalar> fm_loss_cross_identity(const DiscList<Scalar>& discs, const Var<Scalar>& fake,
                                   const std::vector<SemanticMask>& fake_masks, const Var<Scalar>& x_tilde,
                                   const std::vector<SemanticMask>& tilde_masks, const ComponentSet& components,
                                   LossCounters* counters) {
  require_scales(discs);
  require_same_shape(fake.shape(), x_tilde.shape(), "fm_loss_cross_identity");
  std::size_t* absent = counters ? &counters->absent_components : nullptr;
  Var<Scalar> hf = extract_components(fake, fake_masks, components.labels(), absent);
  Var<Scalar> ht = extract_components(x_tilde, tilde_masks, components.labels(), absent);
  Var<Scalar> acc;
  for (std::size_t k = 0; k < discs.size(); ++k) {
    if (k > 0) {
      hf = avg_pool2(hf);
      ht = avg_pool2(ht);
    }
    const auto of = discs[k]->forward(hf);
    const auto ot = discs[k]->forward(ht);
    for (std::size_t i = 0; i < of.features.size(); ++i) {
      Var<Scalar> term = l1_mean(ot.features[i], of.features[i]);
      acc = acc.defined() ? acc + term : term;
    }
  }
  return affine(acc, Scalar(1) / static_cast<Scalar>(discs.size()), Scalar(0));
}

template <typename Scalar>
SynthesisTerms<Scalar> synthesis_objective(nn::SpadeGenerator<Scalar>& gs, const DiscList<Scalar>& discs,
                                           const nn::FeatureNet<Scalar>& psi, nn::ResnetGenerator<Scalar>& g,
                                           const TripleBatch<Scalar>& batch, const Var<Scalar>& y_hat_soft,
                                           const LossConfig& cfg, LossCounters* counters) {
  const Scalar eps = static_cast<Scalar>(cfg.log_eps);
  const std::vector<SemanticMask> masks = argmax_masks(y_hat_soft.value());
  SynthesisTerms<Scalar> t;
  t.x_syn = synthesize_photo(gs, y_hat_soft);
  t.adv = component_adv_fake(discs, t.x_syn, masks, cfg.components, eps, counters);
  t.fm = fm_loss_cross_identity(discs, t.x_syn, masks, batch.x_tilde, batch.x_tilde_masks, cfg.components, counters);
  t.vgg = vgg_margin_loss(psi, batch.x, t.x_syn, cfg.margins);
  t.cyc = cycle_loss(soft_semantics(g, t.x_syn), y_hat_soft);
  t.total = t.adv + t.fm + t.vgg + t.cyc;
  return t;
}

template <typename Scalar>
SynthesisTerms<Scalar> synthesis_objective(nn::SpadeGenerator<Scalar>& gs, const DiscList<Scalar>& discs,
                                           const nn::FeatureNet<Scalar>& psi, nn::ResnetGenerator<Scalar>& g,
                                           const TripleBatch<Scalar>& batch, const LossConfig& cfg,
                                           LossCounters* counters) {
  return synthesis_objective(gs, discs, psi, g, batch, soft_semantics(g, batch.x), cfg, counters);
}

template <typename Scalar>
SegmentationTerms<Scalar> seg_generator_loss(nn::ResnetGenerator<Scalar>& g, nn::ResnetGenerator<Scalar>& f,
                                             nn::Discriminator<Scalar>& d_y, nn::SpadeGenerator<Scalar>& gs,
                                             const DiscList<Scalar>& syn_discs, const nn::FeatureNet<Scalar>& psi,
                                             const TripleBatch<Scalar>& batch, const LossConfig& cfg,
                                             LossCounters* counters) {
  SegmentationTerms<Scalar> t;
  t.y_hat = soft_semantics(g, batch.x);
  t.adv = adv_loss_generator(d_y.forward(t.y_hat).probs, static_cast<Scalar>(cfg.log_eps), counters);
  t.cyc = cycle_loss(inverse_photo(f, t.y_hat), batch.x);
  t.syn = synthesis_objective(gs, syn_discs, psi, g, batch, t.y_hat, cfg, counters);
  t.dist = cycle_loss(t.y_hat, batch.y);
  t.total = t.adv + affine(t.cyc, static_cast<Scalar>(cfg.lambda_cyc), Scalar(0)) +
            affine(t.syn.total, static_cast<Scalar>(cfg.lambda_s), Scalar(0)) +
            affine(t.dist, static_cast<Scalar>(cfg.lambda_dist), Scalar(0));
  return t;
}

template <typename Scalar>
InverseTerms<Scalar> inverse_generator_loss(nn::ResnetGenerator<Scalar>& g, nn::ResnetGenerator<Scalar>& f,
                                            nn::Discriminator<Scalar>& d_x, const TripleBatch<Scalar>& batch,
                                            const LossConfig& cfg, LossCounters* counters) {
  InverseTerms<Scalar> t;
  t.x_hat = inverse_photo(f, batch.y);
  t.adv = adv_loss_generator(d_x.forward(t.x_hat).probs, static_cast<Scalar>(cfg.log_eps), counters);
  t.cyc = cycle_loss(soft_semantics(g, t.x_hat), batch.y);
  t.total = t.adv + affine(t.cyc, static_cast<Scalar>(cfg.lambda_cyc), Scalar(0));
  return t;
}

#define FACEANON_INSTANTIATE_LOSSES(S)                                                                            \
  template Var<S> adv_loss_generator(const Var<S>&, S, LossCounters*);                                            \
  template Var<S> adv_loss_discriminator(const Var<S>&, const Var<S>&, S, LossCounters*);                         \
  template Var<S> cycle_loss(const Var<S>&, const Var<S>&);                                                       \
  template Var<S> vgg_margin_from_features(const std::vector<Var<S>>&, const std::vector<Var<S>>&,                \
                                           const std::vector<double>&);                                           \
  template Var<S> vgg_margin_loss(const nn::FeatureNet<S>&, const Var<S>&, const Var<S>&,                         \
                                  const std::vector<double>&);                                                    \
  template Eigen::MatrixXd perceptual_distances(const nn::FeatureNet<S>&, const Tensor<S>&, const Tensor<S>&);    \
  template Var<S> component_adv_fake(const DiscList<S>&, const Var<S>&, const std::vector<SemanticMask>&,          \
                                     const ComponentSet&, S, LossCounters*);                                      \
  template Var<S> component_adv_real(const DiscList<S>&, const Var<S>&, const std::vector<SemanticMask>&,          \
                                     const ComponentSet&, S, LossCounters*);                                      \
  template ComponentAdvTerms<S> component_adv_loss(const DiscList<S>&, const Var<S>&,                              \
                                                   const std::vector<SemanticMask>&, const Var<S>&,                \
                                                   const std::vector<SemanticMask>&, const ComponentSet&, S,       \
                                                   LossCounters*);                                                \
  template Var<S> fm_loss_cross_identity(const DiscList<S>&, const Var<S>&, const std::vector<SemanticMask>&,      \
                                         const Var<S>&, const std::vector<SemanticMask>&, const ComponentSet&,     \
                                         LossCounters*);                                                          \
  template SynthesisTerms<S> synthesis_objective(nn::SpadeGenerator<S>&, const DiscList<S>&,                       \
                                                 const nn::FeatureNet<S>&, nn::ResnetGenerator<S>&,                \
                                                 const TripleBatch<S>&, const Var<S>&, const LossConfig&,          \
                                                 LossCounters*);                                                  \
  template SynthesisTerms<S> synthesis_objective(nn::SpadeGenerator<S>&, const DiscList<S>&,                       \
                                                 const nn::FeatureNet<S>&, nn::ResnetGenerator<S>&,                \
                                                 const TripleBatch<S>&, const LossConfig&, LossCounters*);         \
  template SegmentationTerms<S> seg_generator_loss(nn::ResnetGenerator<S>&, nn::ResnetGenerator<S>&,               \
                                                   nn::Discriminator<S>&, nn::SpadeGenerator<S>&,                  \
                                                   const DiscList<S>&, const nn::FeatureNet<S>&,                   \
                                                   const TripleBatch<S>&, const LossConfig&, LossCounters*);       \
  template InverseTerms<S> inverse_generator_loss(nn::ResnetGenerator<S>&, nn::ResnetGenerator<S>&,                \
                                                  nn::Discriminator<S>&, const TripleBatch<S>&, const LossConfig&, \
                                                  LossCounters*);

FACEANON_INSTANTIATE_LOSSES(float)
FACEANON_INSTANTIATE_LOSSES(double)

#undef FACEANON_INSTANTIATE_LOSSES

}  // namespace faceanon
