#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace tgnn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Shape = std::vector<std::size_t>;

// Largest number of entries any dense materialization may allocate.
inline constexpr std::size_t kMaterializeLimit = 10'000'000;

// Number of entries of a tensor with the given shape. Throws CapacityError if
// the product exceeds `limit`.
std::size_t checked_volume(const Shape& shape, std::size_t limit = kMaterializeLimit);

// Arbitrary-order dense array of doubles, row-major (last index fastest).
//
// Modes are 0-based throughout the C++ API: a tensor of order k has modes
// 0..k-1. Every dimension is at least 1 and the order is at least 1.
class DenseTensor {
 public:
  explicit DenseTensor(Shape shape);
  DenseTensor(Shape shape, std::vector<double> data);

  static DenseTensor zeros(Shape shape) { return DenseTensor(std::move(shape)); }
  static DenseTensor constant(Shape shape, double value);

  std::size_t order() const noexcept { return shape_.size(); }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t mode) const { return shape_.at(mode); }
  std::size_t size() const noexcept { return data_.size(); }
  const std::vector<std::size_t>& strides() const noexcept { return strides_; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double& operator()(std::span<const std::size_t> index);
  double operator()(std::span<const std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  std::size_t offset(std::span<const std::size_t> index) const;
  // Inverse of offset(); writes the multi-index of a flat position.
  void unravel(std::size_t flat, std::span<std::size_t> index) const;

  double max_abs() const noexcept;
  double frobenius_norm() const noexcept;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape shape_;
  std::vector<std::size_t> strides_;
  std::vector<double> data_;
};

// Mode-`mode` unfolding: rows are indexed by the chosen mode, columns by the
// remaining indices with the FIRST remaining index varying fastest. This is
// the ordering under which
//   t x_0 v_0 x_1 ... x_{k-2} v_{k-2} == matricize(t, k-1) * kron(v_{k-2}, ..., v_0).
Matrix matricize(const DenseTensor& t, std::size_t mode);

// Inverse of matricize() for a known target shape.
DenseTensor dematricize(const Matrix& m, const Shape& shape, std::size_t mode);

// Contracts `mode` with v. The result has order k-1; the input must have
// order at least 2.
DenseTensor mode_vec_product(const DenseTensor& t, std::size_t mode, const Vector& v);

// Contracts the leading modes with the given vectors (vs[i] against mode i).
// With k-1 vectors the result is the length-N_{k-1} trailing fiber; with k
// vectors it is a length-1 vector holding the scalar.
Vector multi_mode_product(const DenseTensor& t, std::span<const Vector> vs);

// Same contraction computed as matricize(t, k-1) * kron(v_{k-2}, ..., v_0).
// Requires exactly k-1 vectors.
Vector multi_mode_product_kron(const DenseTensor& t, std::span<const Vector> vs);

Vector kron(const Vector& a, const Vector& b);
// kron(vs[0], vs[1], ..., vs[n-1]) folded left to right.
Vector kron_chain(std::span<const Vector> vs);
Vector hadamard(const Vector& a, const Vector& b);
DenseTensor outer(std::span<const Vector> vs);

}  // namespace tgnn
