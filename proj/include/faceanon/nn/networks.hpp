#pragma once

#include "faceanon/nn/module.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <vector>

namespace faceanon::nn {

/// Encoder, residual trunk and decoder image-to-image network. The decoder
/// upsamples with nearest-neighbour followed by a 3x3 convolution.
struct ResnetGeneratorConfig {
  int in_channels = 3;
  int out_channels = 11;
  int base_width = 64;
  int downsamplings = 2;
  int residual_blocks = 9;
};

template <typename Scalar>
class ResnetGenerator : public Module<Scalar> {
 public:
  ResnetGenerator(const ResnetGeneratorConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    const int w = cfg.base_width;
    stem_ = &this->add_module("stem", conv({cfg.in_channels, w, 7, 1, 3, PadMode::Reflect}, rng));
    int ch = w;
    for (int i = 0; i < cfg.downsamplings; ++i) {
      down_.push_back(&this->add_module("down" + std::to_string(i), conv({ch, ch * 2, 3, 2, 1}, rng)));
      ch *= 2;
    }
    for (int i = 0; i < cfg.residual_blocks; ++i) {
      const std::string name = "block" + std::to_string(i);
      blocks_.push_back({&this->add_module(name + ".conv0", conv({ch, ch, 3, 1, 1, PadMode::Reflect}, rng)),
                         &this->add_module(name + ".conv1", conv({ch, ch, 3, 1, 1, PadMode::Reflect}, rng))});
    }
    for (int i = 0; i < cfg.downsamplings; ++i) {
      up_.push_back(&this->add_module("up" + std::to_string(i), conv({ch, ch / 2, 3, 1, 1, PadMode::Reflect}, rng)));
      ch /= 2;
    }
    head_ = &this->add_module("head", conv({ch, cfg.out_channels, 7, 1, 3, PadMode::Reflect}, rng));
  }

  /// Raw output of the final convolution.
  Var<Scalar> forward(const Var<Scalar>& x) {
    Var<Scalar> h = relu(instance_norm(stem_->forward(x)));
    for (auto* d : down_) h = relu(instance_norm(d->forward(h)));
    for (auto& [c0, c1] : blocks_) {
      Var<Scalar> r = relu(instance_norm(c0->forward(h)));
      h = h + instance_norm(c1->forward(r));
    }
    for (auto* u : up_) h = relu(instance_norm(u->forward(upsample_nearest2(h))));
    return head_->forward(h);
  }

  const ResnetGeneratorConfig& config() const { return cfg_; }

 private:
  static std::unique_ptr<Conv2d<Scalar>> conv(ConvOptions opt, std::mt19937_64& rng) {
    return std::make_unique<Conv2d<Scalar>>(opt, rng);
  }

  ResnetGeneratorConfig cfg_;
  Conv2d<Scalar>* stem_ = nullptr;
  std::vector<Conv2d<Scalar>*> down_;
  std::vector<std::array<Conv2d<Scalar>*, 2>> blocks_;
  std::vector<Conv2d<Scalar>*> up_;
  Conv2d<Scalar>* head_ = nullptr;
};

/// Intermediate activations plus the per-patch real probability grid.
template <typename Scalar>
struct DiscOutput {
  std::vector<Var<Scalar>> features;
  Var<Scalar> probs;
};

template <typename Scalar>
class Discriminator : public Module<Scalar> {
 public:
  virtual DiscOutput<Scalar> forward(const Var<Scalar>& x) = 0;
};

/// PatchGAN classifier. With layers=3, padding=1 and a 256x256 input every
/// output patch sees a 70x70 window.
struct PatchDiscriminatorConfig {
  int in_channels = 3;
  int base_width = 64;
  int layers = 3;
  int padding = 1;
  bool spectral = false;
};

template <typename Scalar>
class PatchDiscriminator : public Discriminator<Scalar> {
 public:
  PatchDiscriminator(const PatchDiscriminatorConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    auto add = [&](const std::string& name, int in, int out, int stride) {
      ConvOptions opt{in, out, 4, stride, cfg.padding};
      opt.spectral = cfg.spectral;
      convs_.push_back(&this->add_module(name, std::make_unique<Conv2d<Scalar>>(opt, rng)));
    };
    int ch = cfg.base_width;
    add("conv0", cfg.in_channels, ch, 2);
    for (int n = 1; n < cfg.layers; ++n) {
      const int next = cfg.base_width * std::min(1 << n, 8);
      add("conv" + std::to_string(n), ch, next, 2);
      ch = next;
    }
    const int next = cfg.base_width * std::min(1 << cfg.layers, 8);
    add("conv" + std::to_string(cfg.layers), ch, next, 1);
    add("score", next, 1, 1);
  }

  DiscOutput<Scalar> forward(const Var<Scalar>& x) override {
    DiscOutput<Scalar> out;
    Var<Scalar> h = x;
    const std::size_t hidden = convs_.size() - 1;
    for (std::size_t i = 0; i < hidden; ++i) {
      h = convs_[i]->forward(h);
      if (i > 0) h = instance_norm(h);
      h = leaky_relu(h, Scalar(0.2));
      out.features.push_back(h);
    }
    out.probs = sigmoid(convs_.back()->forward(h));
    return out;
  }

  /// Number of hidden feature maps (T).
  int feature_layers() const { return cfg_.layers + 1; }
  const PatchDiscriminatorConfig& config() const { return cfg_; }

 private:
  PatchDiscriminatorConfig cfg_;
  std::vector<Conv2d<Scalar>*> convs_;
};

/// M discriminators of identical architecture; scale k sees the input
/// average-pooled by 2^(k-1).
template <typename Scalar>
class MultiScaleDiscriminator : public Module<Scalar> {
 public:
  MultiScaleDiscriminator(int scales, const PatchDiscriminatorConfig& cfg, std::mt19937_64& rng) {
    if (scales < 1) throw std::invalid_argument("MultiScaleDiscriminator: need at least one scale");
    for (int k = 0; k < scales; ++k) {
      scales_.push_back(&this->add_module("scale" + std::to_string(k + 1),
                                          std::make_unique<PatchDiscriminator<Scalar>>(cfg, rng)));
    }
  }

  int size() const { return static_cast<int>(scales_.size()); }
  std::vector<Discriminator<Scalar>*> scales() const { return {scales_.begin(), scales_.end()}; }
  PatchDiscriminator<Scalar>& operator[](int k) { return *scales_.at(static_cast<std::size_t>(k)); }

 private:
  std::vector<PatchDiscriminator<Scalar>*> scales_;
};

/// Spatially-adaptive normalisation: parameter-free instance norm modulated
/// by a per-pixel scale and shift predicted from the semantic map.
template <typename Scalar>
class SpadeNorm : public Module<Scalar> {
 public:
  SpadeNorm(int channels, int label_channels, int hidden, std::mt19937_64& rng) {
    ConvOptions shared{label_channels, hidden, 3, 1, 1};
    shared.spectral = true;
    ConvOptions head{hidden, channels, 3, 1, 1};
    head.spectral = true;
    shared_ = &this->add_module("shared", std::make_unique<Conv2d<Scalar>>(shared, rng));
    gamma_ = &this->add_module("gamma", std::make_unique<Conv2d<Scalar>>(head, rng));
    beta_ = &this->add_module("beta", std::make_unique<Conv2d<Scalar>>(head, rng));
  }

  Var<Scalar> forward(const Var<Scalar>& x, const Var<Scalar>& semantics) {
    Var<Scalar> normalized = instance_norm(x);
    Var<Scalar> seg = resize_nearest(semantics, x.shape().h, x.shape().w);
    Var<Scalar> actv = relu(shared_->forward(seg));
    return normalized + normalized * gamma_->forward(actv) + beta_->forward(actv);
  }

 private:
  Conv2d<Scalar>* shared_;
  Conv2d<Scalar>* gamma_;
  Conv2d<Scalar>* beta_;
};

template <typename Scalar>
class SpadeResBlock : public Module<Scalar> {
 public:
  SpadeResBlock(int fin, int fout, int label_channels, int hidden, std::mt19937_64& rng) {
    const int fmid = std::min(fin, fout);
    auto conv = [&](const std::string& name, int in, int out, int k, bool bias) {
      ConvOptions opt{in, out, k, 1, k / 2};
      opt.bias = bias;
      opt.spectral = true;
      return &this->add_module(name, std::make_unique<Conv2d<Scalar>>(opt, rng));
    };
    norm0_ = &this->add_module("norm0", std::make_unique<SpadeNorm<Scalar>>(fin, label_channels, hidden, rng));
    conv0_ = conv("conv0", fin, fmid, 3, true);
    norm1_ = &this->add_module("norm1", std::make_unique<SpadeNorm<Scalar>>(fmid, label_channels, hidden, rng));
    conv1_ = conv("conv1", fmid, fout, 3, true);
    if (fin != fout) {
      norm_s_ = &this->add_module("norm_s", std::make_unique<SpadeNorm<Scalar>>(fin, label_channels, hidden, rng));
      conv_s_ = conv("conv_s", fin, fout, 1, false);
    }
  }

  Var<Scalar> forward(const Var<Scalar>& x, const Var<Scalar>& semantics) {
    Var<Scalar> shortcut = conv_s_ != nullptr ? conv_s_->forward(norm_s_->forward(x, semantics)) : x;
    Var<Scalar> dx = conv0_->forward(leaky_relu(norm0_->forward(x, semantics), Scalar(0.2)));
    dx = conv1_->forward(leaky_relu(norm1_->forward(dx, semantics), Scalar(0.2)));
    return shortcut + dx;
  }

 private:
  SpadeNorm<Scalar>* norm0_ = nullptr;
  SpadeNorm<Scalar>* norm1_ = nullptr;
  SpadeNorm<Scalar>* norm_s_ = nullptr;
  Conv2d<Scalar>* conv0_ = nullptr;
  Conv2d<Scalar>* conv1_ = nullptr;
  Conv2d<Scalar>* conv_s_ = nullptr;
};

/// Semantic-map-conditioned generator; every convolution is spectrally
/// normalised. Output is tanh in [-1, 1].
struct SpadeGeneratorConfig {
  int label_channels = 11;
  int image_size = 256;
  int upsamplings = 5;
  int base_width = 64;
  int hidden = 128;
};

template <typename Scalar>
class SpadeGenerator : public Module<Scalar> {
 public:
  SpadeGenerator(const SpadeGeneratorConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    if (cfg.image_size % (1 << cfg.upsamplings) != 0) {
      throw std::invalid_argument("SpadeGenerator: image_size must be divisible by 2^upsamplings");
    }
    auto width = [&](int j) { return cfg.base_width * std::min(16, 1 << (cfg.upsamplings - j)); };
    ConvOptions fc{cfg.label_channels, width(0), 3, 1, 1};
    fc.spectral = true;
    fc_ = &this->add_module("fc", std::make_unique<Conv2d<Scalar>>(fc, rng));
    blocks_.push_back(&this->add_module(
        "head", std::make_unique<SpadeResBlock<Scalar>>(width(0), width(0), cfg.label_channels, cfg.hidden, rng)));
    for (int j = 1; j <= cfg.upsamplings; ++j) {
      blocks_.push_back(&this->add_module("up" + std::to_string(j),
                                          std::make_unique<SpadeResBlock<Scalar>>(width(j - 1), width(j),
                                                                                  cfg.label_channels, cfg.hidden, rng)));
    }
    ConvOptions out{width(cfg.upsamplings), 3, 3, 1, 1};
    out.spectral = true;
    out_ = &this->add_module("out", std::make_unique<Conv2d<Scalar>>(out, rng));
  }

  Var<Scalar> forward(const Var<Scalar>& semantics) {
    const Index base = cfg_.image_size >> cfg_.upsamplings;
    if (semantics.shape().h != cfg_.image_size || semantics.shape().w != cfg_.image_size ||
        semantics.shape().c != cfg_.label_channels) {
      throw ShapeError("SpadeGenerator: expected semantics of " + std::to_string(cfg_.label_channels) + "x" +
                       std::to_string(cfg_.image_size) + "^2, got " + to_string(semantics.shape()));
    }
    Var<Scalar> h = fc_->forward(resize_nearest(semantics, base, base));
    h = blocks_.front()->forward(h, semantics);
    for (std::size_t j = 1; j < blocks_.size(); ++j) h = blocks_[j]->forward(upsample_nearest2(h), semantics);
    return tanh(out_->forward(leaky_relu(h, Scalar(0.2))));
  }

  const SpadeGeneratorConfig& config() const { return cfg_; }

 private:
  SpadeGeneratorConfig cfg_;
  Conv2d<Scalar>* fc_ = nullptr;
  std::vector<SpadeResBlock<Scalar>*> blocks_;
  Conv2d<Scalar>* out_ = nullptr;
};

/// Frozen VGG-style feature extractor. `layers` lists conv widths with 0
/// marking a 2x2 max-pool; `capture` holds 1-based indices of the conv+ReLU
/// outputs to expose.
struct FeatureNetConfig {
  std::vector<int> layers;
  std::vector<int> capture;
  bool imagenet_normalize = true;

  /// 19-layer VGG truncated after relu5_1, capturing relu{1..5}_1.
  static FeatureNetConfig vgg19(int width_divisor = 1) {
    FeatureNetConfig cfg;
    const int d = std::max(1, width_divisor);
    cfg.layers = {64 / d, 64 / d, 0, 128 / d, 128 / d, 0, 256 / d, 256 / d, 256 / d, 256 / d, 0,
                  512 / d, 512 / d, 512 / d, 512 / d, 0, 512 / d};
    cfg.capture = {1, 3, 5, 9, 13};
    return cfg;
  }
};

template <typename Scalar>
class FeatureNet : public Module<Scalar> {
 public:
  FeatureNet(const FeatureNetConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    int ch = 3;
    int index = 0;
    for (int width : cfg.layers) {
      if (width == 0) {
        plan_.push_back(nullptr);
        continue;
      }
      ++index;
      ConvOptions opt{ch, width, 3, 1, 1};
      opt.init = Init::He;
      plan_.push_back(&this->add_module("conv" + std::to_string(index), std::make_unique<Conv2d<Scalar>>(opt, rng)));
      ch = width;
    }
    if (cfg.capture.empty()) throw std::invalid_argument("FeatureNet: empty capture set");
    this->set_requires_grad(false);
  }

  /// Activations at the capture layers, in capture order.
  std::vector<Var<Scalar>> forward(const Var<Scalar>& image) const {
    Var<Scalar> h = cfg_.imagenet_normalize ? normalize(image) : image;
    std::vector<Var<Scalar>> out;
    int index = 0;
    const int last = *std::max_element(cfg_.capture.begin(), cfg_.capture.end());
    for (auto* conv : plan_) {
      if (conv == nullptr) {
        h = max_pool2(h);
        continue;
      }
      h = relu(conv->forward(h));
      ++index;
      if (std::find(cfg_.capture.begin(), cfg_.capture.end(), index) != cfg_.capture.end()) out.push_back(h);
      if (index == last) break;
    }
    return out;
  }

  std::size_t layer_count() const { return cfg_.capture.size(); }
  const FeatureNetConfig& config() const { return cfg_; }

 private:
  static Var<Scalar> normalize(const Var<Scalar>& image) {
    static constexpr double kMean[3] = {0.485, 0.456, 0.406};
    static constexpr double kStd[3] = {0.229, 0.224, 0.225};
    const Shape s = image.shape();
    Tensor<Scalar> shift(s);
    Tensor<Scalar> scale(s);
    for (Index n = 0; n < s.n; ++n) {
      for (Index c = 0; c < s.c; ++c) {
        const Index at = (n * s.c + c) * s.plane();
        shift.array().segment(at, s.plane()).setConstant(Scalar(-kMean[c % 3]));
        scale.array().segment(at, s.plane()).setConstant(Scalar(1.0 / kStd[c % 3]));
      }
    }
    return (image + constant(std::move(shift))) * constant(std::move(scale));
  }

  FeatureNetConfig cfg_;
  std::vector<Conv2d<Scalar>*> plan_;
};

/// Residual-inception embedding backbone for the twin-branch distance model.
struct EmbeddingNetConfig {
  int base_width = 32;
  int embedding_dim = 128;
};

template <typename Scalar>
class EmbeddingNet : public Module<Scalar> {
 public:
  EmbeddingNet(const EmbeddingNetConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    auto conv = [&](const std::string& name, int in, int out, int k, int stride) {
      ConvOptions opt{in, out, k, stride, k / 2};
      opt.init = Init::He;
      return &this->add_module(name, std::make_unique<Conv2d<Scalar>>(opt, rng));
    };
    int ch = 3;
    for (int stage = 0; stage < 3; ++stage) {
      const int width = cfg.base_width << stage;
      const std::string s = "stage" + std::to_string(stage);
      Stage st;
      st.reduce = conv(s + ".reduce", ch, width, 3, 2);
      st.branch0 = conv(s + ".branch0", width, width / 2, 1, 1);
      st.branch1a = conv(s + ".branch1a", width, width / 2, 1, 1);
      st.branch1b = conv(s + ".branch1b", width / 2, width / 2, 3, 1);
      st.mix = conv(s + ".mix", width, width, 1, 1);
      stages_.push_back(st);
      ch = width;
    }
    project_ = conv("project", ch, cfg.embedding_dim, 1, 1);
  }

  /// (N, embedding_dim, 1, 1) embedding.
  Var<Scalar> forward(const Var<Scalar>& image) {
    Var<Scalar> h = image;
    for (auto& st : stages_) {
      h = relu(instance_norm(st.reduce->forward(h)));
      Var<Scalar> b0 = relu(st.branch0->forward(h));
      Var<Scalar> b1 = relu(st.branch1b->forward(relu(st.branch1a->forward(h))));
      Var<Scalar> mixed = st.mix->forward(concat_channels<Scalar>({b0, b1}));
      h = relu(h + affine(mixed, Scalar(0.2), Scalar(0)));
    }
    return project_->forward(global_avg_pool(h));
  }

  const EmbeddingNetConfig& config() const { return cfg_; }

 private:
  struct Stage {
    Conv2d<Scalar>* reduce;
    Conv2d<Scalar>* branch0;
    Conv2d<Scalar>* branch1a;
    Conv2d<Scalar>* branch1b;
    Conv2d<Scalar>* mix;
  };
  EmbeddingNetConfig cfg_;
  std::vector<Stage> stages_;
  Conv2d<Scalar>* project_ = nullptr;
};

}  // namespace faceanon::nn
