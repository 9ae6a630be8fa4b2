#include "faceanon/ops_impl.hpp"

namespace faceanon {

#define FACEANON_INSTANTIATE_OPS(S)                                                                     \
  template Var<S> add(const Var<S>&, const Var<S>&);                                                    \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                                    \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                                    \
  template Var<S> affine(const Var<S>&, S, S);                                                          \
  template Var<S> relu(const Var<S>&);                                                                  \
  template Var<S> leaky_relu(const Var<S>&, S);                                                         \
  template Var<S> tanh(const Var<S>&);                                                                  \
  template Var<S> sigmoid(const Var<S>&);                                                               \
  template Var<S> abs(const Var<S>&);                                                                   \
  template Var<S> softmax_channels(const Var<S>&);                                                      \
  template Var<S> log_clamped(const Var<S>&, S, std::size_t*);                                          \
  template Var<S> hinge(const Var<S>&, S);                                                              \
  template Var<S> mean(const Var<S>&);                                                                  \
  template Var<S> sum(const Var<S>&);                                                                   \
  template Var<S> mean_per_sample(const Var<S>&);                                                       \
  template Var<S> global_avg_pool(const Var<S>&);                                                       \
  template Var<S> l1_mean(const Var<S>&, const Var<S>&);                                                \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, int, int);                        \
  template Var<S> reflect_pad(const Var<S>&, int);                                                      \
  template Var<S> instance_norm(const Var<S>&, S);                                                      \
  template Var<S> avg_pool2(const Var<S>&);                                                             \
  template Var<S> max_pool2(const Var<S>&);                                                             \
  template Var<S> upsample_nearest2(const Var<S>&);                                                     \
  template Var<S> resize_nearest(const Var<S>&, Index, Index);                                          \
  template Var<S> concat_channels(const std::vector<Var<S>>&);                                          \
  template Var<S> concat_batch(const std::vector<Var<S>>&);                                             \
  template Var<S> slice_batch(const Var<S>&, Index, Index);                                             \
  template Var<S> spectral_normalize(const Var<S>&, Tensor<S>&, bool, int);                             \
  template Var<S> contrastive_loss(const Var<S>&, const Var<S>&, const std::vector<bool>&, S);

FACEANON_INSTANTIATE_OPS(float)
FACEANON_INSTANTIATE_OPS(double)

#undef FACEANON_INSTANTIATE_OPS

}  // namespace faceanon
