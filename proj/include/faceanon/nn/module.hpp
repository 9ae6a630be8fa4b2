#pragma once

#include "faceanon/ops.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace faceanon::nn {

/// Owns parameters, buffers and child modules at stable addresses so layers
/// can hold references into them. Non-copyable, non-movable.
template <typename Scalar>
class Module {
 public:
  using NamedParam = std::pair<std::string, Var<Scalar>*>;
  using NamedBuffer = std::pair<std::string, Tensor<Scalar>*>;

  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  std::vector<NamedParam> parameters() {
    std::vector<NamedParam> out;
    collect_parameters("", out);
    return out;
  }
  std::vector<NamedBuffer> buffers() {
    std::vector<NamedBuffer> out;
    collect_buffers("", out);
    return out;
  }

  void set_requires_grad(bool flag) {
    for (auto& [name, p] : parameters()) p->set_requires_grad(flag);
  }
  void zero_grad() {
    for (auto& [name, p] : parameters()) p->zero_grad();
  }

  /// Training mode refines spectral-norm estimates on every forward pass.
  void set_training(bool flag) {
    training_ = flag;
    for (auto& [name, child] : children_) child->set_training(flag);
  }
  bool training() const { return training_; }

  Index parameter_count() {
    Index total = 0;
    for (auto& [name, p] : parameters()) total += p->value().size();
    return total;
  }

  std::uint64_t parameter_hash() {
    std::uint64_t h = 1469598103934665603ULL;
    for (auto& [name, p] : parameters()) h = hash_tensor(p->value(), fnv1a(name.data(), name.size(), h));
    return h;
  }

 protected:
  Var<Scalar>& add_parameter(std::string name, Tensor<Scalar> init) {
    params_.emplace_back(std::move(name), std::make_unique<Var<Scalar>>(std::move(init), true));
    return *params_.back().second;
  }
  Tensor<Scalar>& add_buffer(std::string name, Tensor<Scalar> init) {
    buffers_.emplace_back(std::move(name), std::make_unique<Tensor<Scalar>>(std::move(init)));
    return *buffers_.back().second;
  }
  template <typename M>
  M& add_module(std::string name, std::unique_ptr<M> module) {
    M& ref = *module;
    children_.emplace_back(std::move(name), std::move(module));
    return ref;
  }

 private:
  void collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) {
    for (auto& [name, p] : params_) out.emplace_back(prefix + name, p.get());
    for (auto& [name, child] : children_) child->collect_parameters(prefix + name + ".", out);
  }
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
    for (auto& [name, b] : buffers_) out.emplace_back(prefix + name, b.get());
    for (auto& [name, child] : children_) child->collect_buffers(prefix + name + ".", out);
  }

  std::vector<std::pair<std::string, std::unique_ptr<Var<Scalar>>>> params_;
  std::vector<std::pair<std::string, std::unique_ptr<Tensor<Scalar>>>> buffers_;
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
  bool training_ = true;
};

enum class Init {
  Normal002,  // N(0, 0.02), the usual GAN initialisation
  He,         // N(0, 2 / fan_in)
};

enum class PadMode { Zero, Reflect };

struct ConvOptions {
  int in = 1;
  int out = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  PadMode pad_mode = PadMode::Zero;
  bool bias = true;
  bool spectral = false;
  Init init = Init::Normal002;
};

template <typename Scalar>
class Conv2d : public Module<Scalar> {
 public:
  Conv2d(const ConvOptions& opt, std::mt19937_64& rng)
      : opt_(opt),
        weight_(this->add_parameter("weight", init_weight(opt, rng))),
        bias_(opt.bias ? &this->add_parameter("bias", Tensor<Scalar>(Shape{1, opt.out, 1, 1}))
                       : nullptr),
        u_(opt.spectral ? &this->add_buffer("sn_u", init_u(opt.out, rng)) : nullptr) {}

  Var<Scalar> forward(const Var<Scalar>& x) {
    Var<Scalar> w = weight_;
    if (u_ != nullptr) w = spectral_normalize(weight_, *u_, this->training());
    Var<Scalar> in = x;
    int pad = opt_.padding;
    if (opt_.pad_mode == PadMode::Reflect && pad > 0) {
      in = reflect_pad(x, pad);
      pad = 0;
    }
    return conv2d(in, w, bias_ != nullptr ? *bias_ : Var<Scalar>(), opt_.stride, pad);
  }

  const ConvOptions& options() const { return opt_; }
  Var<Scalar>& weight() { return weight_; }
  Tensor<Scalar>* spectral_u() { return u_; }

 private:
  static Tensor<Scalar> init_weight(const ConvOptions& opt, std::mt19937_64& rng) {
    Tensor<Scalar> w(Shape{opt.out, opt.in, opt.kernel, opt.kernel});
    const double stddev =
        opt.init == Init::He ? std::sqrt(2.0 / double(opt.in * opt.kernel * opt.kernel)) : 0.02;
    std::normal_distribution<double> dist(0.0, stddev);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
    return w;
  }
  static Tensor<Scalar> init_u(int out, std::mt19937_64& rng) {
    Tensor<Scalar> u(Shape{1, out, 1, 1});
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Index i = 0; i < u.size(); ++i) u.data()[i] = static_cast<Scalar>(dist(rng));
    u.array() /= std::max<Scalar>(Scalar(1e-12), std::sqrt(u.array().square().sum()));
    return u;
  }

  ConvOptions opt_;
  Var<Scalar>& weight_;
  Var<Scalar>* bias_;
  Tensor<Scalar>* u_;
};

}  // namespace faceanon::nn
