#include "faceanon/models.hpp"

#include "faceanon/checkpoint.hpp"

#include <stdexcept>

namespace faceanon {

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.image_size = 64;
  c.seg_base_width = 8;
  c.seg_downsamplings = 2;
  c.seg_blocks = 3;
  c.disc_base_width = 8;
  c.disc_layers = 3;
  c.syn_base_width = 4;
  c.syn_upsamplings = 4;
  c.syn_hidden = 16;
  c.syn_disc_base_width = 8;
  c.syn_disc_layers = 3;
  c.psi_width_divisor = 8;
  return c;
}

void ModelConfig::validate() const {
  if (image_size < 32) throw std::invalid_argument("image_size must be >= 32");
  if (image_size % (1 << syn_upsamplings) != 0) {
    throw std::invalid_argument("image_size must be divisible by 2^syn_upsamplings");
  }
  if (image_size % (1 << seg_downsamplings) != 0) {
    throw std::invalid_argument("image_size must be divisible by 2^seg_downsamplings");
  }
  if (seg_base_width < 1 || disc_base_width < 1 || syn_base_width < 1 || syn_hidden < 1 || syn_disc_base_width < 1) {
    throw std::invalid_argument("network widths must be positive");
  }
  if (seg_blocks < 0 || disc_layers < 1 || syn_disc_layers < 1 || psi_width_divisor < 1) {
    throw std::invalid_argument("invalid network depth");
  }
}

namespace {
std::mt19937_64 network_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedu};
  return std::mt19937_64(seq);
}
}  // namespace

template <typename Scalar>
ModelBundle<Scalar>::ModelBundle(const ModelConfig& cfg, const LossConfig& loss) : cfg_(cfg) {
  cfg.validate();
  loss.validate();
  std::mt19937_64 rng = network_rng(cfg.init_seed, 0);
  g_ = std::make_unique<nn::ResnetGenerator<Scalar>>(
      nn::ResnetGeneratorConfig{3, kNumClasses, cfg.seg_base_width, cfg.seg_downsamplings, cfg.seg_blocks}, rng);
  rng = network_rng(cfg.init_seed, 1);
  f_ = std::make_unique<nn::ResnetGenerator<Scalar>>(
      nn::ResnetGeneratorConfig{kNumClasses, 3, cfg.seg_base_width, cfg.seg_downsamplings, cfg.seg_blocks}, rng);

  nn::PatchDiscriminatorConfig dcfg;
  dcfg.base_width = cfg.disc_base_width;
  dcfg.layers = cfg.disc_layers;
  dcfg.in_channels = 3;
  rng = network_rng(cfg.init_seed, 2);
  dx_ = std::make_unique<nn::PatchDiscriminator<Scalar>>(dcfg, rng);
  dcfg.in_channels = kNumClasses;
  rng = network_rng(cfg.init_seed, 3);
  dy_ = std::make_unique<nn::PatchDiscriminator<Scalar>>(dcfg, rng);

  nn::SpadeGeneratorConfig scfg;
  scfg.label_channels = kNumClasses;
  scfg.image_size = cfg.image_size;
  scfg.upsamplings = cfg.syn_upsamplings;
  scfg.base_width = cfg.syn_base_width;
  scfg.hidden = cfg.syn_hidden;
  rng = network_rng(cfg.init_seed, 4);
  gs_ = std::make_unique<nn::SpadeGenerator<Scalar>>(scfg, rng);

  nn::PatchDiscriminatorConfig mcfg;
  mcfg.in_channels = 3;
  mcfg.base_width = cfg.syn_disc_base_width;
  mcfg.layers = cfg.syn_disc_layers;
  mcfg.padding = 2;
  mcfg.spectral = true;
  rng = network_rng(cfg.init_seed, 5);
  ds_ = std::make_unique<nn::MultiScaleDiscriminator<Scalar>>(loss.scales, mcfg, rng);

  nn::FeatureNetConfig pcfg = nn::FeatureNetConfig::vgg19(cfg.psi_width_divisor);
  pcfg.capture = loss.perceptual_layers;
  rng = network_rng(cfg.init_seed, 6);
  psi_ = std::make_unique<nn::FeatureNet<Scalar>>(pcfg, rng);
  if (!cfg.psi_weights.empty()) {
    load_module_state(*psi_, read_tensor_file<Scalar>(cfg.psi_weights), "psi weights " + cfg.psi_weights);
  }
}

template <typename Scalar>
std::vector<std::pair<std::string, nn::Module<Scalar>*>> ModelBundle<Scalar>::networks() {
  return {{"G", g_.get()},   {"F", f_.get()},   {"DX", dx_.get()}, {"DY", dy_.get()},
          {"Gs", gs_.get()}, {"Ds", ds_.get()}, {"psi", psi_.get()}};
}

template <typename Scalar>
void ModelBundle<Scalar>::set_training(bool flag) {
  for (auto& [name, net] : networks()) net->set_training(flag);
}

template <typename Scalar>
Segmentation<Scalar> segment(nn::ResnetGenerator<Scalar>& g, const Tensor<Scalar>& photos, Index image_size) {
  const Shape& s = photos.shape();
  if (s.c != 3 || s.h != image_size || s.w != image_size) {
    throw ShapeError("segment: expected (N,3," + std::to_string(image_size) + "," + std::to_string(image_size) +
                     ") photos, got " + to_string(s));
  }
  NoGradGuard guard;
  Segmentation<Scalar> out;
  out.scores = g.forward(constant(photos)).value();
  out.masks = argmax_masks(out.scores);
  return out;
}

template <typename Scalar>
Tensor<Scalar> synthesize(nn::SpadeGenerator<Scalar>& gs, const std::vector<SemanticMask>& masks) {
  NoGradGuard guard;
  return synthesize_photo(gs, constant(one_hot_batch<Scalar>(masks))).value();
}

template <typename Scalar>
DiscriminatorFeatures<Scalar> discriminator_features(nn::Discriminator<Scalar>& d, const Tensor<Scalar>& image) {
  NoGradGuard guard;
  auto out = d.forward(constant(image));
  DiscriminatorFeatures<Scalar> f;
  for (auto& m : out.features) {
    f.maps.push_back(m.value());
    f.element_counts.push_back(m.shape().sample());
  }
  f.scores = out.probs.value();
  return f;
}

template class ModelBundle<float>;
template class ModelBundle<double>;
template Segmentation<float> segment(nn::ResnetGenerator<float>&, const Tensor<float>&, Index);
template Segmentation<double> segment(nn::ResnetGenerator<double>&, const Tensor<double>&, Index);
template Tensor<float> synthesize(nn::SpadeGenerator<float>&, const std::vector<SemanticMask>&);
template Tensor<double> synthesize(nn::SpadeGenerator<double>&, const std::vector<SemanticMask>&);
template DiscriminatorFeatures<float> discriminator_features(nn::Discriminator<float>&, const Tensor<float>&);
template DiscriminatorFeatures<double> discriminator_features(nn::Discriminator<double>&, const Tensor<double>&);

}  // namespace faceanon
