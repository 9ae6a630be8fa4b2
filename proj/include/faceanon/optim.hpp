#pragma once

#include "faceanon/nn/module.hpp"

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace faceanon {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed, named parameter list. Parameters without a gradient
/// in a step are skipped and keep their moments.
template <typename Scalar>
class Adam {
 public:
  using Param = std::pair<std::string, Var<Scalar>*>;

  Adam(std::vector<Param> params, AdamOptions opt) : params_(std::move(params)), opt_(opt) {
    for (auto& [name, p] : params_) {
      m_.emplace(name, Tensor<Scalar>::zeros(p->shape()));
      v_.emplace(name, Tensor<Scalar>::zeros(p->shape()));
    }
  }

  void set_lr(double lr) { opt_.lr = lr; }
  double lr() const { return opt_.lr; }
  long steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }

  void zero_grad() {
    for (auto& [name, p] : params_) p->zero_grad();
  }

  bool grads_finite() const {
    for (const auto& [name, p] : params_) {
      if (!p->grad().empty() && !p->grad().array().allFinite()) return false;
    }
    return true;
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const Scalar b1 = static_cast<Scalar>(opt_.beta1);
    const Scalar b2 = static_cast<Scalar>(opt_.beta2);
    const Scalar step_size = static_cast<Scalar>(opt_.lr / c1);
    const Scalar root_c2 = static_cast<Scalar>(std::sqrt(c2));
    const Scalar eps = static_cast<Scalar>(opt_.eps);
    for (auto& [name, p] : params_) {
      const Tensor<Scalar>& g = p->grad();
      if (g.empty()) continue;
      auto& m = m_.at(name).array();
      auto& v = v_.at(name).array();
      m = b1 * m + (Scalar(1) - b1) * g.array();
      v = b2 * v + (Scalar(1) - b2) * g.array().square();
      if (opt_.lr == 0.0) continue;
      p->mutable_value().array() -= step_size * m / (v.sqrt() / root_c2 + eps);
    }
  }

  /// Moments and step counter under "<prefix>.m.<param>", "<prefix>.v.<param>"
  /// and "<prefix>.t".
  void export_state(const std::string& prefix, std::map<std::string, Tensor<Scalar>>& out) const {
    for (const auto& [name, m] : m_) out[prefix + ".m." + name] = m;
    for (const auto& [name, v] : v_) out[prefix + ".v." + name] = v;
    out[prefix + ".t"] = Tensor<Scalar>(Shape{1, 1, 1, 1}, static_cast<Scalar>(t_));
  }

  /// Inverse of export_state; throws std::runtime_error on a missing or
  /// misshapen entry.
  void import_state(const std::string& prefix, const std::map<std::string, Tensor<Scalar>>& in) {
    auto fetch = [&](const std::string& key, const Shape& shape) -> const Tensor<Scalar>& {
      auto it = in.find(key);
      if (it == in.end()) throw std::runtime_error("optimizer state lacks " + key);
      if (!(it->second.shape() == shape)) throw std::runtime_error("optimizer state " + key + " has wrong shape");
      return it->second;
    };
    for (auto& [name, p] : params_) {
      m_.at(name) = fetch(prefix + ".m." + name, p->shape());
      v_.at(name) = fetch(prefix + ".v." + name, p->shape());
    }
    t_ = static_cast<long>(fetch(prefix + ".t", Shape{1, 1, 1, 1}).data()[0]);
  }

 private:
  std::vector<Param> params_;
  AdamOptions opt_;
  std::map<std::string, Tensor<Scalar>> m_;
  std::map<std::string, Tensor<Scalar>> v_;
  long t_ = 0;
};

/// Named parameters of several modules, prefixed with their stems.
template <typename Scalar>
std::vector<std::pair<std::string, Var<Scalar>*>> named_parameters(
    const std::vector<std::pair<std::string, nn::Module<Scalar>*>>& modules) {
  std::vector<std::pair<std::string, Var<Scalar>*>> out;
  for (const auto& [stem, mod] : modules) {
    for (auto& [name, p] : mod->parameters()) out.emplace_back(stem + "." + name, p);
  }
  return out;
}

}  // namespace faceanon
