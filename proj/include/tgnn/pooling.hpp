#pragma once

#include <span>
#include <string_view>

#include "tgnn/rng.hpp"
#include "tgnn/tensor.hpp"

namespace tgnn {

enum class Activation { Identity, Tanh, Relu };
enum class PoolKind { Sum, Mean, Max };

std::string_view to_string(Activation a) noexcept;
std::string_view to_string(PoolKind p) noexcept;
Activation activation_from_string(std::string_view s);
PoolKind pool_kind_from_string(std::string_view s);

double activate(Activation a, double x) noexcept;
// Derivative expressed through the pre-activation x and the output y.
double activate_derivative(Activation a, double x, double y) noexcept;

// Rank-R CP pooling layer
//   f(x_1..x_k) = sigma'(M sigma(W^T[x_1;1] * ... * W^T[x_k;1]))
// where * is the elementwise product. The homogeneous coordinate is the last
// row of W.
struct CPLayer {
  Matrix w;  // (F+1) x R
  Matrix m;  // d x R
  Activation sigma = Activation::Tanh;
  Activation sigma_prime = Activation::Relu;
  // Opt-in: squash each projected factor with tanh before the product so that
  // large arities cannot overflow. Off by default.
  bool clamp_factors = false;

  Eigen::Index in_dim() const { return w.rows() - 1; }
  Eigen::Index out_dim() const { return m.rows(); }
  Eigen::Index rank() const { return w.cols(); }

  // Glorot-uniform W and M.
  static CPLayer random(Eigen::Index in_dim, Eigen::Index rank, Eigen::Index out_dim, Rng& rng);
};

// Intermediates of one cp_forward evaluation.
struct CPCache {
  Matrix inputs;      // (F+1) x k, homogeneous inputs
  Matrix raw_factors; // R x k, W^T [x_i;1]
  Matrix factors;     // R x k, after the optional clamp
  Vector product;     // R
  Vector activated;   // R, sigma(product)
  Vector pre_output;  // d, M * activated
  Vector output;      // d
};

struct PoolGrads {
  Matrix d_w;
  Matrix d_m;
  Matrix d_w2;      // empty for a bare CP layer
  Matrix d_inputs;  // F x k, one column per input vector
};

// xs holds one input vector per column (F x k, k >= 1).
Vector cp_forward(const CPLayer& layer, const Matrix& xs, CPCache* cache = nullptr);
// Gradient of <upstream, f(xs)> with respect to W, M and every input.
PoolGrads cp_backward(const CPLayer& layer, const CPCache& cache, const Vector& upstream);

// CP branch plus a linear low-order branch:
//   f(xs) = cp(xs) + sigma''(W2^T pool(xs)),  pool = sum by default.
// Either branch can be switched off for ablations; a disabled branch
// contributes zero output and zero gradient.
struct CombinedLayer {
  CPLayer cp;
  Matrix w2;  // F x d
  Activation sigma_dprime = Activation::Relu;
  PoolKind linear_pool = PoolKind::Sum;
  bool use_cp = true;
  bool use_linear = true;

  Eigen::Index in_dim() const { return w2.size() ? w2.rows() : cp.in_dim(); }
  Eigen::Index out_dim() const { return w2.size() ? w2.cols() : cp.out_dim(); }

  static CombinedLayer random(Eigen::Index in_dim, Eigen::Index rank, Eigen::Index out_dim, Rng& rng);
};

struct CombinedCache {
  CPCache cp;
  Matrix inputs;      // F x k
  Vector pooled;      // F
  Vector linear_pre;  // d
  Vector output;      // d
};

Vector combined_forward(const CombinedLayer& layer, const Matrix& xs, CombinedCache* cache = nullptr);
PoolGrads combined_backward(const CombinedLayer& layer, const CombinedCache& cache, const Vector& upstream);

// Elementwise sum / mean / max over the columns of xs. Max ties resolve to
// the lowest column index.
Vector baseline_pool(PoolKind kind, const Matrix& xs);
Matrix baseline_pool_backward(PoolKind kind, const Matrix& xs, const Vector& upstream);

// Building blocks shared with the batched model code.
namespace detail {

// out = elementwise product of factors.col(c) for c in cols. The result is
// bit-identical under any reordering of cols.
void column_product(const Matrix& factors, std::span<const Eigen::Index> cols, Eigen::Ref<Vector> out);

// Accumulates d_factors.col(c) += d_out * prod_{c' != c} factors.col(c') for
// every listed column, via prefix/suffix products (no division). Repeated
// column indices each receive their own leave-one-out term.
void column_product_backward(const Matrix& factors, std::span<const Eigen::Index> cols, const Vector& d_out,
                             Matrix& d_factors, Matrix& scratch);

// out = sum_j x[j] * a.col(j) accumulated in ascending j, skipping zero
// entries of x. Each output entry depends only on x, never on where x sits in
// memory, which keeps batched and single-vector evaluation bit-identical.
void ordered_gemv(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> out);

// Sum in ascending value order; reorders `values`. Bit-identical under any
// permutation of the input.
double ordered_sum(std::span<double> values);

}  // namespace detail

}  // namespace tgnn
