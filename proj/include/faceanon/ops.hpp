#pragma once

// Differentiable tensor operations. Definitions live in ops_impl.hpp and are
// instantiated for float and double in src/ops.cpp.

#include "faceanon/autodiff.hpp"

#include <cstddef>
#include <vector>

namespace faceanon {

// Elementwise arithmetic. `b` may have one channel, in which case it is
// broadcast across the channels of `a`.
template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
/// scale * a + shift
template <typename Scalar> Var<Scalar> affine(const Var<Scalar>& a, Scalar scale, Scalar shift);

template <typename Scalar> Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar> Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }
template <typename Scalar> Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) { return mul(a, b); }
template <typename Scalar> Var<Scalar> operator*(Scalar s, const Var<Scalar>& a) { return affine(a, s, Scalar(0)); }

// Activations.
template <typename Scalar> Var<Scalar> relu(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope);
template <typename Scalar> Var<Scalar> tanh(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> sigmoid(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> abs(const Var<Scalar>& x);
/// Softmax across channels at every pixel.
template <typename Scalar> Var<Scalar> softmax_channels(const Var<Scalar>& x);

/// log(max(x, eps)); entries at or below eps get zero gradient and bump
/// `clamp_count` when given.
template <typename Scalar>
Var<Scalar> log_clamped(const Var<Scalar>& x, Scalar eps, std::size_t* clamp_count = nullptr);

/// max(0, x - margin)
template <typename Scalar> Var<Scalar> hinge(const Var<Scalar>& x, Scalar margin);

// Reductions. Results have shape (1,1,1,1), except mean_per_sample (N,1,1,1).
template <typename Scalar> Var<Scalar> mean(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> mean_per_sample(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> global_avg_pool(const Var<Scalar>& x);

/// Mean absolute difference over every element.
template <typename Scalar> Var<Scalar> l1_mean(const Var<Scalar>& a, const Var<Scalar>& b);

// Spatial.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, int stride, int padding);
template <typename Scalar> Var<Scalar> reflect_pad(const Var<Scalar>& x, int pad);
template <typename Scalar> Var<Scalar> instance_norm(const Var<Scalar>& x, Scalar eps = Scalar(1e-5));
template <typename Scalar> Var<Scalar> avg_pool2(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> max_pool2(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> upsample_nearest2(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> resize_nearest(const Var<Scalar>& x, Index out_h, Index out_w);

// Structural.
template <typename Scalar> Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts);
template <typename Scalar> Var<Scalar> concat_batch(const std::vector<Var<Scalar>>& parts);
template <typename Scalar> Var<Scalar> slice_batch(const Var<Scalar>& x, Index first, Index count);

/// weight / sigma(weight) with sigma from power iteration on the
/// (out x in*k*k) weight matrix. `u` (length out) is the persistent left
/// singular vector estimate; it is refined `iterations` times when `update`.
template <typename Scalar>
Var<Scalar> spectral_normalize(const Var<Scalar>& weight, Tensor<Scalar>& u, bool update, int iterations = 1);

/// Contrastive pair loss over embeddings of shape (N,d,1,1):
/// mean_i [same_i ? d_i^2 : max(0, margin - d_i)^2].
template <typename Scalar>
Var<Scalar> contrastive_loss(const Var<Scalar>& a, const Var<Scalar>& b, const std::vector<bool>& same, Scalar margin);

}  // namespace faceanon
