#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace faceanon {

using Index = Eigen::Index;

/// NCHW extent of a dense tensor. Weights reuse it as (out, in, kh, kw).
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  constexpr Index plane() const { return h * w; }
  constexpr Index sample() const { return c * h * w; }
  constexpr Index size() const { return n * c * h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

/// Dense NCHW tensor backed by a contiguous Eigen array.
///
/// A single sample maps onto a column-major (H*W) x C matrix, which is the
/// layout the im2col convolution works in.
template <typename Scalar>
class Tensor {
  static_assert(std::is_floating_point_v<Scalar>, "Tensor scalar must be floating point");

 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(Array::Zero(shape.size())) {}
  Tensor(const Shape& shape, Scalar fill) : shape_(shape), data_(Array::Constant(shape.size(), fill)) {}
  Tensor(const Shape& shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) throw ShapeError("Tensor: data size does not match shape " + to_string(shape_));
  }

  static Tensor zeros(const Shape& s) { return Tensor(s); }
  static Tensor ones(const Shape& s) { return Tensor(s, Scalar(1)); }

  const Shape& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator()(Index n, Index c, Index y, Index x) {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar operator()(Index n, Index c, Index y, Index x) const {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  /// (H*W) x C view of sample n.
  MatrixMap sample(Index n) { return MatrixMap(data() + n * shape_.sample(), shape_.plane(), shape_.c); }
  ConstMatrixMap sample(Index n) const {
    return ConstMatrixMap(data() + n * shape_.sample(), shape_.plane(), shape_.c);
  }

  Scalar* plane_ptr(Index n, Index c) { return data() + (n * shape_.c + c) * shape_.plane(); }
  const Scalar* plane_ptr(Index n, Index c) const { return data() + (n * shape_.c + c) * shape_.plane(); }

  /// Copy of samples [first, first + count).
  Tensor slice(Index first, Index count) const {
    if (first < 0 || count < 0 || first + count > shape_.n) throw ShapeError("Tensor::slice out of range");
    Shape s = shape_;
    s.n = count;
    return Tensor(s, data_.segment(first * shape_.sample(), count * shape_.sample()));
  }

  void reshape(const Shape& s) {
    if (s.size() != shape_.size()) throw ShapeError("Tensor::reshape changes element count");
    shape_ = s;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool bitwise_equal(const Tensor& other) const {
    if (!(shape_ == other.shape_)) return false;
    for (Index i = 0; i < data_.size(); ++i) {
      if (data_[i] != other.data_[i]) return false;
    }
    return true;
  }

 private:
  Shape shape_;
  Array data_;
};

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* bytes, std::size_t len, std::uint64_t seed = 1469598103934665603ULL);

template <typename Scalar>
std::uint64_t hash_tensor(const Tensor<Scalar>& t, std::uint64_t seed = 1469598103934665603ULL) {
  const Shape& s = t.shape();
  const std::int64_t dims[4] = {s.n, s.c, s.h, s.w};
  seed = fnv1a(dims, sizeof(dims), seed);
  return fnv1a(t.data(), static_cast<std::size_t>(t.size()) * sizeof(Scalar), seed);
}

}  // namespace faceanon
