#pragma once

#include "faceanon/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace faceanon {

namespace detail {

template <typename Scalar>
using Array = typename Tensor<Scalar>::Array;

inline bool broadcasts_channels(const Shape& a, const Shape& b) {
  return b.c == 1 && a.c != 1 && a.n == b.n && a.h == b.h && a.w == b.w;
}

inline void require_binary_compatible(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b) && !broadcasts_channels(a, b)) {
    throw ShapeError(std::string(what) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
  }
}

/// Sums a full-size gradient over channels down to a one-channel tensor.
template <typename Scalar>
Array<Scalar> reduce_channels(const Tensor<Scalar>& g, const Shape& target) {
  Array<Scalar> out = Array<Scalar>::Zero(target.size());
  const Shape& s = g.shape();
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      Eigen::Map<const Array<Scalar>> src(g.plane_ptr(n, c), s.plane());
      out.segment(n * s.plane(), s.plane()) += src;
    }
  }
  return out;
}

/// Expands a one-channel tensor across `channels`.
template <typename Scalar>
Array<Scalar> expand_channels(const Tensor<Scalar>& b, Index channels) {
  const Shape& s = b.shape();
  Array<Scalar> out(s.n * channels * s.plane());
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < channels; ++c) {
      out.segment((n * channels + c) * s.plane(), s.plane()) = b.array().segment(n * s.plane(), s.plane());
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> scalar_tensor(Scalar v) {
  return Tensor<Scalar>(Shape{1, 1, 1, 1}, v);
}

template <typename Scalar>
Scalar grad_scalar(const Node<Scalar>& self) {
  return self.grad.data()[0];
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_binary_compatible(a.shape(), b.shape(), "add");
  const bool bc = detail::broadcasts_channels(a.shape(), b.shape());
  Tensor<Scalar> out(a.shape());
  out.array() = a.value().array() + (bc ? detail::expand_channels(b.value(), a.shape().c) : b.value().array());
  return make_result<Scalar>(std::move(out), {a, b}, [bc](Node<Scalar>& self) {
    auto& ia = *self.inputs[0];
    auto& ib = *self.inputs[1];
    if (ia.requires_grad) ia.accumulate(self.grad.array());
    if (ib.requires_grad) {
      if (bc) {
        ib.accumulate(detail::reduce_channels(self.grad, ib.value.shape()));
      } else {
        ib.accumulate(self.grad.array());
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_binary_compatible(a.shape(), b.shape(), "sub");
  const bool bc = detail::broadcasts_channels(a.shape(), b.shape());
  Tensor<Scalar> out(a.shape());
  out.array() = a.value().array() - (bc ? detail::expand_channels(b.value(), a.shape().c) : b.value().array());
  return make_result<Scalar>(std::move(out), {a, b}, [bc](Node<Scalar>& self) {
    auto& ia = *self.inputs[0];
    auto& ib = *self.inputs[1];
    if (ia.requires_grad) ia.accumulate(self.grad.array());
    if (ib.requires_grad) {
      if (bc) {
        ib.accumulate(-detail::reduce_channels(self.grad, ib.value.shape()));
      } else {
        ib.accumulate(-self.grad.array());
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_binary_compatible(a.shape(), b.shape(), "mul");
  const bool bc = detail::broadcasts_channels(a.shape(), b.shape());
  Tensor<Scalar> out(a.shape());
  if (bc) {
    out.array() = a.value().array() * detail::expand_channels(b.value(), a.shape().c);
  } else {
    out.array() = a.value().array() * b.value().array();
  }
  return make_result<Scalar>(std::move(out), {a, b}, [bc](Node<Scalar>& self) {
    auto& ia = *self.inputs[0];
    auto& ib = *self.inputs[1];
    const Index channels = ia.value.shape().c;
    if (ia.requires_grad) {
      if (bc) {
        ia.accumulate(self.grad.array() * detail::expand_channels(ib.value, channels));
      } else {
        ia.accumulate(self.grad.array() * ib.value.array());
      }
    }
    if (ib.requires_grad) {
      Tensor<Scalar> prod(ia.value.shape());
      prod.array() = self.grad.array() * ia.value.array();
      if (bc) {
        ib.accumulate(detail::reduce_channels(prod, ib.value.shape()));
      } else {
        ib.accumulate(prod.array());
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& a, Scalar scale, Scalar shift) {
  Tensor<Scalar> out(a.shape());
  out.array() = scale * a.value().array() + shift;
  return make_result<Scalar>(std::move(out), {a}, [scale](Node<Scalar>& self) {
    self.inputs[0]->accumulate(scale * self.grad.array());
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.value().array().max(Scalar(0));
  return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& self) {
    auto& in = *self.inputs[0];
    in.accumulate((in.value.array() > Scalar(0)).select(self.grad.array(), Scalar(0)));
  });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
  Tensor<Scalar> out(x.shape());
  out.array() = (x.value().array() > Scalar(0)).select(x.value().array(), slope * x.value().array());
  return make_result<Scalar>(std::move(out), {x}, [slope](Node<Scalar>& self) {
    auto& in = *self.inputs[0];
    in.accumulate((in.value.array() > Scalar(0)).select(self.grad.array(), slope * self.grad.array()));
  });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.value().array().tanh();
  return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& self) {
    const auto& y = self.value.array();
    self.inputs[0]->accumulate(self.grad.array() * (Scalar(1) - y * y));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.array() = Scalar(1) / (Scalar(1) + (-x.value().array()).exp());
  return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& self) {
    const auto& y = self.value.array();
    self.inputs[0]->accumulate(self.grad.array() * y * (Scalar(1) - y));
  });
}

template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.value().array().abs();
  return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& self) {
    auto& in = *self.inputs[0];
    in.accumulate(self.grad.array() * in.value.array().sign());
  });
}

template <typename Scalar>
Var<Scalar> softmax_channels(const Var<Scalar>& x) {
  const Shape s = x.shape();
  Tensor<Scalar> out(s);
  for (Index n = 0; n < s.n; ++n) {
    auto in = x.value().sample(n);
    auto o = out.sample(n);
    // rows are pixels, columns channels
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_max = in.rowwise().maxCoeff();
    o = (in.colwise() - row_max).array().exp().matrix();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> denom = o.rowwise().sum();
    o = (o.array().colwise() / denom.array()).matrix();
  }
  return make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& self) {
    const Shape& s = self.value.shape();
    Tensor<Scalar> gx(s);
    for (Index n = 0; n < s.n; ++n) {
      auto y = self.value.sample(n);
      auto g = self.grad.sample(n);
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = (y.array() * g.array()).rowwise().sum().matrix();
      gx.sample(n) = (y.array() * (g.colwise() - dot).array()).matrix();
    }
    self.inputs[0]->accumulate(gx.array());
  });
}

template <typename Scalar>
Var<Scalar> log_clamped(const Var<Scalar>& x, Scalar eps, std::size_t* clamp_count) {
  Tensor<Scalar> out(x.shape());
  const auto& v = x.value().array();
  if (clamp_count != nullptr) *clamp_count += static_cast<std::size_t>((v <= eps).count());
  out.array() = v.max(eps).log();
  return make_result<Scalar>(std::move(out), {x}, [eps](Node<Scalar>& self) {
    auto& in = *self.inputs[0];
    const auto& xv = in.value.array();
    in.accumulate((xv > eps).select(self.grad.array() / xv, Scalar(0)));
  });
}

template <typename Scalar>
Var<Scalar> hinge(const Var<Scalar>& x, Scalar margin) {
  Tensor<Scalar> out(x.shape());
  out.array() = (x.value().array() - margin).max(Scalar(0));
  return make_result<Scalar>(std::move(out), {x}, [margin](Node<Scalar>& self) {
    auto& in = *self.inputs[0];
    in.accumulate((in.value.array() > margin).select(self.grad.array(), Scalar(0)));
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  const Index count = x.value().size();
  if (count == 0) throw ShapeError("mean of empty tensor");
  auto out = detail::scalar_tensor<Scalar>(x.value().array().sum() / Scalar(count));
  return make_result<Scalar>(std::move(out), {x}, [count](Node<Scalar>& self) {
    auto& in = *self.inputs[0];
    in.accumulate(detail::Array<Scalar>::Constant(count, detail::grad_scalar(self) / Scalar(count)));
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  const Index count = x.value().size();
  auto out = detail::scalar_tensor<Scalar>(x.value().array().sum());
  return make_result<Scalar>(std::move(out), {x}, [count](Node<Scalar>& self) {
    self.inputs[0]->accumulate(detail::Array<Scalar>::Constant(count, detail::grad_scalar(self)));
  });
}

template <typename Scalar>
Var<Scalar> mean_per_sample(const Var<Scalar>& x) {
  const Shape s = x.shape();
  Tensor<Scalar> out(Shape{s.n, 1, 1, 1});
  for (Index n = 0; n < s.n; ++n) {
    out.data()[n] = x.value().array().segment(n * s.sample(), s.sample()).sum() / Scalar(s.sample());
  }
  return make_result<Scalar>(std::move(out), {x}, [s](Node<Scalar>& self) {
    detail::Array<Scalar> g(s.size());
    for (Index n = 0; n < s.n; ++n) g.segment(n * s.sample(), s.sample()).setConstant(self.grad.data()[n] / Scalar(s.sample()));
    self.inputs[0]->accumulate(g);
  });
}

template <typename Scalar>
Var<Scalar> global_avg_pool(const Var<Scalar>& x) {
  const Shape s = x.shape();
  Tensor<Scalar> out(Shape{s.n, s.c, 1, 1});
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      out(n, c, 0, 0) = Eigen::Map<const detail::Array<Scalar>>(x.value().plane_ptr(n, c), s.plane()).mean();
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [s](Node<Scalar>& self) {
    detail::Array<Scalar> g(s.size());
    for (Index i = 0; i < s.n * s.c; ++i) g.segment(i * s.plane(), s.plane()).setConstant(self.grad.data()[i] / Scalar(s.plane()));
    self.inputs[0]->accumulate(g);
  });
}

template <typename Scalar>
Var<Scalar> l1_mean(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "l1_mean");
  return mean(abs(sub(a, b)));
}

namespace detail {

struct ConvGeometry {
  Index in_c, in_h, in_w, out_c, k, out_h, out_w;
  int stride, pad;
};

template <typename Scalar>
void im2col(const Scalar* image, const ConvGeometry& g, typename Tensor<Scalar>::Matrix& cols) {
  cols.resize(g.out_h * g.out_w, g.in_c * g.k * g.k);
  for (Index ci = 0; ci < g.in_c; ++ci) {
    const Scalar* plane = image + ci * g.in_h * g.in_w;
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        Scalar* col = cols.data() + ((ci * g.k + ky) * g.k + kx) * cols.rows();
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ky;
          Scalar* dst = col + oy * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* row = plane + iy * g.in_w;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix < 0 || ix >= g.in_w) ? Scalar(0) : row[ix];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const typename Tensor<Scalar>::Matrix& cols, const ConvGeometry& g, Scalar* image) {
  for (Index ci = 0; ci < g.in_c; ++ci) {
    Scalar* plane = image + ci * g.in_h * g.in_w;
    for (Index ky = 0; ky < g.k; ++ky) {
      for (Index kx = 0; kx < g.k; ++kx) {
        const Scalar* col = cols.data() + ((ci * g.k + ky) * g.k + kx) * cols.rows();
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const Scalar* src = col + oy * g.out_w;
          Scalar* row = plane + iy * g.in_w;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) row[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, int stride, int padding) {
  using Matrix = typename Tensor<Scalar>::Matrix;
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w) {
    throw ShapeError("conv2d: weight " + to_string(ws) + " incompatible with input " + to_string(xs));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: invalid stride/padding");
  detail::ConvGeometry g{xs.c, xs.h, xs.w, ws.n, ws.h, 0, 0, stride, padding};
  g.out_h = (xs.h + 2 * padding - g.k) / stride + 1;
  g.out_w = (xs.w + 2 * padding - g.k) / stride + 1;
  if (xs.h + 2 * padding < g.k || xs.w + 2 * padding < g.k || g.out_h <= 0 || g.out_w <= 0) {
    throw ShapeError("conv2d: input " + to_string(xs) + " too small for kernel " + std::to_string(g.k));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.value().size() != g.out_c) throw ShapeError("conv2d: bias size mismatch");
  const bool pointwise = g.k == 1 && stride == 1 && padding == 0;

  const Shape os{xs.n, g.out_c, g.out_h, g.out_w};
  Tensor<Scalar> out(os);
  Eigen::Map<const Matrix> wm(weight.value().data(), g.in_c * g.k * g.k, g.out_c);
  Matrix cols;
  for (Index n = 0; n < xs.n; ++n) {
    auto o = out.sample(n);
    if (pointwise) {
      o.noalias() = x.value().sample(n) * wm;
    } else {
      detail::im2col(x.value().plane_ptr(n, 0), g, cols);
      o.noalias() = cols * wm;
    }
    if (has_bias) {
      o.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(bias.value().data(), g.out_c);
    }
  }

  std::vector<Var<Scalar>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<Scalar>(std::move(out), std::move(inputs), [g, has_bias, pointwise](Node<Scalar>& self) {
    auto& in = *self.inputs[0];
    auto& wn = *self.inputs[1];
    const Index batch = in.value.shape().n;
    Eigen::Map<const Matrix> wm(wn.value.data(), g.in_c * g.k * g.k, g.out_c);
    Matrix cols;
    Matrix dcols;
    Matrix dw = Matrix::Zero(wm.rows(), wm.cols());
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> db = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(g.out_c);
    Tensor<Scalar>* gx = in.requires_grad ? &in.grad_buffer() : nullptr;
    for (Index n = 0; n < batch; ++n) {
      auto dout = self.grad.sample(n);
      if (wn.requires_grad) {
        if (pointwise) {
          dw.noalias() += in.value.sample(n).transpose() * dout;
        } else {
          detail::im2col(in.value.plane_ptr(n, 0), g, cols);
          dw.noalias() += cols.transpose() * dout;
        }
      }
      if (has_bias) db += dout.colwise().sum();
      if (gx != nullptr) {
        if (pointwise) {
          gx->sample(n).noalias() += dout * wm.transpose();
        } else {
          dcols.noalias() = dout * wm.transpose();
          detail::col2im<Scalar>(dcols, g, gx->plane_ptr(n, 0));
        }
      }
    }
    if (wn.requires_grad) wn.accumulate(Eigen::Map<const detail::Array<Scalar>>(dw.data(), dw.size()));
    if (has_bias && self.inputs[2]->requires_grad) {
      self.inputs[2]->accumulate(Eigen::Map<const detail::Array<Scalar>>(db.data(), db.size()));
    }
  });
}

namespace detail {
inline Index reflect_index(Index i, Index n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}
}  // namespace detail

template <typename Scalar>
Var<Scalar> reflect_pad(const Var<Scalar>& x, int pad) {
  const Shape s = x.shape();
  if (pad < 0 || pad >= s.h || pad >= s.w) throw ShapeError("reflect_pad: pad must be smaller than the spatial size");
  const Shape os{s.n, s.c, s.h + 2 * pad, s.w + 2 * pad};
  Tensor<Scalar> out(os);
  for (Index p = 0; p < s.n * s.c; ++p) {
    const Scalar* src = x.value().data() + p * s.plane();
    Scalar* dst = out.data() + p * os.plane();
    for (Index y = 0; y < os.h; ++y) {
      const Index sy = detail::reflect_index(y - pad, s.h);
      for (Index xx = 0; xx < os.w; ++xx) dst[y * os.w + xx] = src[sy * s.w + detail::reflect_index(xx - pad, s.w)];
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [s, os, pad](Node<Scalar>& self) {
    Tensor<Scalar>& gx = self.inputs[0]->grad_buffer();
    for (Index p = 0; p < s.n * s.c; ++p) {
      const Scalar* src = self.grad.data() + p * os.plane();
      Scalar* dst = gx.data() + p * s.plane();
      for (Index y = 0; y < os.h; ++y) {
        const Index sy = detail::reflect_index(y - pad, s.h);
        for (Index xx = 0; xx < os.w; ++xx) dst[sy * s.w + detail::reflect_index(xx - pad, s.w)] += src[y * os.w + xx];
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> instance_norm(const Var<Scalar>& x, Scalar eps) {
  const Shape s = x.shape();
  Tensor<Scalar> out(s);
  detail::Array<Scalar> inv_std(s.n * s.c);
  for (Index p = 0; p < s.n * s.c; ++p) {
    Eigen::Map<const detail::Array<Scalar>> in(x.value().data() + p * s.plane(), s.plane());
    Eigen::Map<detail::Array<Scalar>> o(out.data() + p * s.plane(), s.plane());
    const Scalar mu = in.mean();
    const Scalar var = (in - mu).square().mean();
    inv_std[p] = Scalar(1) / std::sqrt(var + eps);
    o = (in - mu) * inv_std[p];
  }
  return make_result<Scalar>(std::move(out), {x}, [s, inv_std](Node<Scalar>& self) {
    detail::Array<Scalar> gx(s.size());
    for (Index p = 0; p < s.n * s.c; ++p) {
      Eigen::Map<const detail::Array<Scalar>> y(self.value.data() + p * s.plane(), s.plane());
      Eigen::Map<const detail::Array<Scalar>> dy(self.grad.data() + p * s.plane(), s.plane());
      const Scalar mean_dy = dy.mean();
      const Scalar mean_dy_y = (dy * y).mean();
      gx.segment(p * s.plane(), s.plane()) = inv_std[p] * (dy - mean_dy - y * mean_dy_y);
    }
    self.inputs[0]->accumulate(gx);
  });
}

template <typename Scalar>
Var<Scalar> avg_pool2(const Var<Scalar>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  if (os.h == 0 || os.w == 0) throw ShapeError("avg_pool2: input too small " + to_string(s));
  Tensor<Scalar> out(os);
  for (Index p = 0; p < s.n * s.c; ++p) {
    const Scalar* src = x.value().data() + p * s.plane();
    Scalar* dst = out.data() + p * os.plane();
    for (Index y = 0; y < os.h; ++y) {
      for (Index xx = 0; xx < os.w; ++xx) {
        const Scalar* a = src + (2 * y) * s.w + 2 * xx;
        dst[y * os.w + xx] = Scalar(0.25) * (a[0] + a[1] + a[s.w] + a[s.w + 1]);
      }
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [s, os](Node<Scalar>& self) {
    Tensor<Scalar>& gx = self.inputs[0]->grad_buffer();
    for (Index p = 0; p < s.n * s.c; ++p) {
      const Scalar* src = self.grad.data() + p * os.plane();
      Scalar* dst = gx.data() + p * s.plane();
      for (Index y = 0; y < os.h; ++y) {
        for (Index xx = 0; xx < os.w; ++xx) {
          const Scalar g = Scalar(0.25) * src[y * os.w + xx];
          Scalar* a = dst + (2 * y) * s.w + 2 * xx;
          a[0] += g;
          a[1] += g;
          a[s.w] += g;
          a[s.w + 1] += g;
        }
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> max_pool2(const Var<Scalar>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  if (os.h == 0 || os.w == 0) throw ShapeError("max_pool2: input too small " + to_string(s));
  Tensor<Scalar> out(os);
  std::vector<Index> argmax(static_cast<std::size_t>(os.size()));
  for (Index p = 0; p < s.n * s.c; ++p) {
    const Scalar* src = x.value().data() + p * s.plane();
    for (Index y = 0; y < os.h; ++y) {
      for (Index xx = 0; xx < os.w; ++xx) {
        Index best = (2 * y) * s.w + 2 * xx;
        for (Index cand : {best + 1, best + s.w, best + s.w + 1}) {
          if (src[cand] > src[best]) best = cand;
        }
        const Index o = p * os.plane() + y * os.w + xx;
        out.data()[o] = src[best];
        argmax[static_cast<std::size_t>(o)] = p * s.plane() + best;
      }
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [argmax = std::move(argmax)](Node<Scalar>& self) {
    Tensor<Scalar>& gx = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < argmax.size(); ++o) gx.data()[argmax[o]] += self.grad.data()[o];
  });
}

template <typename Scalar>
Var<Scalar> resize_nearest(const Var<Scalar>& x, Index out_h, Index out_w) {
  const Shape s = x.shape();
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize_nearest: empty target");
  const Shape os{s.n, s.c, out_h, out_w};
  std::vector<Index> src_index(static_cast<std::size_t>(os.plane()));
  for (Index y = 0; y < out_h; ++y) {
    const Index sy = std::min<Index>(s.h - 1, (y * s.h) / out_h);
    for (Index xx = 0; xx < out_w; ++xx) {
      const Index sx = std::min<Index>(s.w - 1, (xx * s.w) / out_w);
      src_index[static_cast<std::size_t>(y * out_w + xx)] = sy * s.w + sx;
    }
  }
  Tensor<Scalar> out(os);
  for (Index p = 0; p < s.n * s.c; ++p) {
    const Scalar* src = x.value().data() + p * s.plane();
    Scalar* dst = out.data() + p * os.plane();
    for (Index i = 0; i < os.plane(); ++i) dst[i] = src[src_index[static_cast<std::size_t>(i)]];
  }
  return make_result<Scalar>(std::move(out), {x}, [s, os, src_index = std::move(src_index)](Node<Scalar>& self) {
    Tensor<Scalar>& gx = self.inputs[0]->grad_buffer();
    for (Index p = 0; p < s.n * s.c; ++p) {
      const Scalar* src = self.grad.data() + p * os.plane();
      Scalar* dst = gx.data() + p * s.plane();
      for (Index i = 0; i < os.plane(); ++i) dst[src_index[static_cast<std::size_t>(i)]] += src[i];
    }
  });
}

template <typename Scalar>
Var<Scalar> upsample_nearest2(const Var<Scalar>& x) {
  return resize_nearest(x, x.shape().h * 2, x.shape().w * 2);
}

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Shape os = parts.front().shape();
  os.c = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != os.n || s.h != os.h || s.w != os.w) throw ShapeError("concat_channels: mismatched shapes");
    os.c += s.c;
  }
  Tensor<Scalar> out(os);
  for (Index n = 0; n < os.n; ++n) {
    Index offset = 0;
    for (const auto& p : parts) {
      const Index len = p.shape().sample();
      out.array().segment(n * os.sample() + offset, len) = p.value().array().segment(n * len, len);
      offset += len;
    }
  }
  return make_result<Scalar>(std::move(out), parts, [os](Node<Scalar>& self) {
    Index offset = 0;
    for (auto& in : self.inputs) {
      const Shape& s = in->value.shape();
      if (in->requires_grad) {
        Tensor<Scalar>& gx = in->grad_buffer();
        for (Index n = 0; n < os.n; ++n) {
          gx.array().segment(n * s.sample(), s.sample()) += self.grad.array().segment(n * os.sample() + offset, s.sample());
        }
      }
      offset += s.sample();
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_batch(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no inputs");
  Shape os = parts.front().shape();
  os.n = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.c != os.c || s.h != os.h || s.w != os.w) throw ShapeError("concat_batch: mismatched shapes");
    os.n += s.n;
  }
  Tensor<Scalar> out(os);
  Index offset = 0;
  for (const auto& p : parts) {
    out.array().segment(offset, p.value().size()) = p.value().array();
    offset += p.value().size();
  }
  return make_result<Scalar>(std::move(out), parts, [](Node<Scalar>& self) {
    Index offset = 0;
    for (auto& in : self.inputs) {
      const Index len = in->value.size();
      if (in->requires_grad) in->accumulate(self.grad.array().segment(offset, len));
      offset += len;
    }
  });
}

template <typename Scalar>
Var<Scalar> slice_batch(const Var<Scalar>& x, Index first, Index count) {
  Tensor<Scalar> out = x.value().slice(first, count);
  const Index stride = x.shape().sample();
  return make_result<Scalar>(std::move(out), {x}, [first, stride](Node<Scalar>& self) {
    Tensor<Scalar>& gx = self.inputs[0]->grad_buffer();
    gx.array().segment(first * stride, self.grad.size()) += self.grad.array();
  });
}

template <typename Scalar>
Var<Scalar> spectral_normalize(const Var<Scalar>& weight, Tensor<Scalar>& u, bool update, int iterations) {
  using Matrix = typename Tensor<Scalar>::Matrix;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Shape ws = weight.shape();
  const Index rows = ws.n;
  const Index cols = ws.c * ws.h * ws.w;
  if (u.size() != rows) throw ShapeError("spectral_normalize: u has wrong length");
  // Column-major (in*k*k) x out view: the transpose of the usual weight matrix.
  Eigen::Map<const Matrix> wt(weight.value().data(), cols, rows);
  Eigen::Map<Vector> uv(u.data(), rows);
  const Scalar tiny = Scalar(1e-12);
  Vector v = wt * uv;
  v /= std::max(v.norm(), tiny);
  if (update) {
    for (int it = 0; it < iterations; ++it) {
      Vector un = wt.transpose() * v;
      uv = un / std::max(un.norm(), tiny);
      v = wt * uv;
      v /= std::max(v.norm(), tiny);
    }
  }
  const Vector uc = uv;
  const Scalar sigma = std::max(v.dot(wt * uc), tiny);
  Tensor<Scalar> out(ws);
  out.array() = weight.value().array() / sigma;
  return make_result<Scalar>(std::move(out), {weight}, [uc, v, sigma, rows, cols](Node<Scalar>& self) {
    auto& in = *self.inputs[0];
    Eigen::Map<const Matrix> wt(in.value.data(), cols, rows);
    Eigen::Map<const Matrix> g(self.grad.data(), cols, rows);
    const Scalar inner = (g.array() * wt.array()).sum();
    Matrix dw = g / sigma - (inner / (sigma * sigma)) * (v * uc.transpose());
    in.accumulate(Eigen::Map<const detail::Array<Scalar>>(dw.data(), dw.size()));
  });
}

template <typename Scalar>
Var<Scalar> contrastive_loss(const Var<Scalar>& a, const Var<Scalar>& b, const std::vector<bool>& same, Scalar margin) {
  require_same_shape(a.shape(), b.shape(), "contrastive_loss");
  const Shape s = a.shape();
  if (static_cast<Index>(same.size()) != s.n) throw ShapeError("contrastive_loss: label count != batch");
  using Matrix = typename Tensor<Scalar>::Matrix;
  // Rows are samples, columns embedding dims.
  Matrix diff = Eigen::Map<const Matrix>(a.value().data(), s.sample(), s.n).transpose() -
                Eigen::Map<const Matrix>(b.value().data(), s.sample(), s.n).transpose();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dist = diff.rowwise().norm();
  Scalar total = 0;
  for (Index i = 0; i < s.n; ++i) {
    const Scalar d = dist[i];
    total += same[static_cast<std::size_t>(i)] ? d * d : std::pow(std::max(Scalar(0), margin - d), Scalar(2));
  }
  auto out = detail::scalar_tensor<Scalar>(total / Scalar(s.n));
  return make_result<Scalar>(std::move(out), {a, b}, [diff, dist, same, margin, s](Node<Scalar>& self) {
    const Scalar scale = detail::grad_scalar(self) / Scalar(s.n);
    Matrix g(s.n, s.sample());
    for (Index i = 0; i < s.n; ++i) {
      const Scalar d = dist[i];
      if (same[static_cast<std::size_t>(i)]) {
        g.row(i) = Scalar(2) * diff.row(i);
      } else if (d < margin && d > Scalar(1e-12)) {
        g.row(i) = -Scalar(2) * (margin - d) / d * diff.row(i);
      } else {
        g.row(i).setZero();
      }
    }
    g *= scale;
    Matrix gt = g.transpose();
    Eigen::Map<const detail::Array<Scalar>> flat(gt.data(), gt.size());
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(flat);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(-flat);
  });
}

}  // namespace faceanon
