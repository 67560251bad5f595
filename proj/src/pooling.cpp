#include "tgnn/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tgnn/error.hpp"

namespace tgnn {

std::string_view to_string(Activation a) noexcept {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
  }
  return "?";
}

std::string_view to_string(PoolKind p) noexcept {
  switch (p) {
    case PoolKind::Sum: return "sum";
    case PoolKind::Mean: return "mean";
    case PoolKind::Max: return "max";
  }
  return "?";
}

Activation activation_from_string(std::string_view s) {
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw InvalidArgument("unknown activation '" + std::string(s) + "'");
}

PoolKind pool_kind_from_string(std::string_view s) {
  if (s == "sum") return PoolKind::Sum;
  if (s == "mean") return PoolKind::Mean;
  if (s == "max") return PoolKind::Max;
  throw InvalidArgument("unknown pooling '" + std::string(s) + "'");
}

double activate(Activation a, double x) noexcept {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
  }
  return x;
}

double activate_derivative(Activation a, double x, double y) noexcept {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

namespace {

Vector apply(Activation a, const Vector& x) {
  return x.unaryExpr([a](double v) { return activate(a, v); });
}

// upstream * f'(x), elementwise.
Vector chain(Activation a, const Vector& x, const Vector& y, const Vector& upstream) {
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = upstream[i] * activate_derivative(a, x[i], y[i]);
  return out;
}

Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  return Matrix::NullaryExpr(rows, cols, [&] { return dist(rng); });
}

void require_inputs(const Matrix& xs, Eigen::Index in_dim, const char* who) {
  if (xs.cols() == 0) throw InvalidArgument(std::string(who) + ": empty input set");
  if (xs.rows() != in_dim)
    throw InvalidArgument(std::string(who) + ": input dimension " + std::to_string(xs.rows()) + ", expected " +
                          std::to_string(in_dim));
}

void require_finite(const Vector& v, const char* stage, Eigen::Index k) {
  if (!v.allFinite())
    throw NumericalError(std::string("non-finite value at CP layer stage '") + stage + "' (k=" + std::to_string(k) +
                         "); enable the factor clamp for large input sets");
}

}  // namespace

CPLayer CPLayer::random(Eigen::Index in_dim, Eigen::Index rank, Eigen::Index out_dim, Rng& rng) {
  if (in_dim < 1 || rank < 1 || out_dim < 1) throw InvalidArgument("CP layer dimensions must be positive");
  CPLayer layer;
  layer.w = glorot(in_dim + 1, rank, rng);
  layer.m = glorot(out_dim, rank, rng);
  return layer;
}

CombinedLayer CombinedLayer::random(Eigen::Index in_dim, Eigen::Index rank, Eigen::Index out_dim, Rng& rng) {
  CombinedLayer layer;
  layer.cp = CPLayer::random(in_dim, rank, out_dim, rng);
  layer.w2 = glorot(in_dim, out_dim, rng);
  return layer;
}

namespace detail {

void column_product(const Matrix& factors, std::span<const Eigen::Index> cols, Eigen::Ref<Vector> out) {
  // Each row is multiplied in ascending value order, so the rounded result
  // does not depend on the order of `cols`.
  std::vector<double> buf(cols.size());
  for (Eigen::Index r = 0; r < factors.rows(); ++r) {
    bool finite = true;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      buf[j] = factors(r, cols[j]);
      finite = finite && std::isfinite(buf[j]);
    }
    if (finite) std::sort(buf.begin(), buf.end());
    double p = 1.0;
    for (double v : buf) p *= v;
    out[r] = p;
  }
}

void ordered_gemv(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> out) {
  out.setZero();
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    if (x[j] != 0.0) out.noalias() += x[j] * a.col(j);
}

double ordered_sum(std::span<double> values) {
  bool finite = true;
  for (double v : values) finite = finite && std::isfinite(v);
  if (finite) std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

void column_product_backward(const Matrix& factors, std::span<const Eigen::Index> cols, const Vector& d_out,
                             Matrix& d_factors, Matrix& scratch) {
  const auto n = static_cast<Eigen::Index>(cols.size());
  const auto rank = factors.rows();
  scratch.resize(rank, n + 1);
  scratch.col(n).setOnes();
  for (Eigen::Index j = n; j-- > 0;)
    scratch.col(j) = scratch.col(j + 1).cwiseProduct(factors.col(cols[static_cast<std::size_t>(j)]));
  Vector prefix = d_out;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto c = cols[static_cast<std::size_t>(j)];
    d_factors.col(c).array() += prefix.array() * scratch.col(j + 1).array();
    prefix.array() *= factors.col(c).array();
  }
}

}  // namespace detail

Vector cp_forward(const CPLayer& layer, const Matrix& xs, CPCache* cache) {
  if (layer.m.cols() != layer.w.cols()) throw InvalidArgument("CP layer: W and M rank mismatch");
  require_inputs(xs, layer.in_dim(), "cp_forward");
  const Eigen::Index k = xs.cols();

  CPCache local;
  CPCache& c = cache ? *cache : local;
  c.inputs.resize(xs.rows() + 1, k);
  c.inputs.topRows(xs.rows()) = xs;
  c.inputs.bottomRows(1).setOnes();
  const Matrix wt = layer.w.transpose();
  c.raw_factors.resize(layer.rank(), k);
  for (Eigen::Index i = 0; i < k; ++i) detail::ordered_gemv(wt, c.inputs.col(i), c.raw_factors.col(i));
  c.factors = layer.clamp_factors ? Matrix(c.raw_factors.array().tanh()) : c.raw_factors;

  std::vector<Eigen::Index> all(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) all[static_cast<std::size_t>(i)] = i;
  c.product.resize(layer.rank());
  detail::column_product(c.factors, all, c.product);
  require_finite(c.product, "hadamard product", k);

  c.activated = apply(layer.sigma, c.product);
  c.pre_output.resize(layer.out_dim());
  detail::ordered_gemv(layer.m, c.activated, c.pre_output);
  require_finite(c.pre_output, "output projection", k);
  c.output = apply(layer.sigma_prime, c.pre_output);
  return c.output;
}

PoolGrads cp_backward(const CPLayer& layer, const CPCache& cache, const Vector& upstream) {
  if (upstream.size() != layer.out_dim()) throw InvalidArgument("cp_backward: upstream has the wrong length");
  const Eigen::Index k = cache.factors.cols();

  const Vector d_pre = chain(layer.sigma_prime, cache.pre_output, cache.output, upstream);
  PoolGrads g;
  g.d_m.noalias() = d_pre * cache.activated.transpose();
  const Vector d_act = layer.m.transpose() * d_pre;
  const Vector d_prod = chain(layer.sigma, cache.product, cache.activated, d_act);

  std::vector<Eigen::Index> all(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) all[static_cast<std::size_t>(i)] = i;
  Matrix d_factors = Matrix::Zero(layer.rank(), k);
  Matrix scratch;
  detail::column_product_backward(cache.factors, all, d_prod, d_factors, scratch);
  if (layer.clamp_factors) d_factors.array() *= 1.0 - cache.factors.array().square();

  g.d_w.noalias() = cache.inputs * d_factors.transpose();
  g.d_inputs.noalias() = layer.w.topRows(layer.in_dim()) * d_factors;
  return g;
}

Vector baseline_pool(PoolKind kind, const Matrix& xs) {
  if (xs.cols() == 0) throw InvalidArgument("baseline_pool: empty input set");
  switch (kind) {
    case PoolKind::Sum:
    case PoolKind::Mean: {
      Vector out(xs.rows());
      std::vector<double> buf(static_cast<std::size_t>(xs.cols()));
      for (Eigen::Index r = 0; r < xs.rows(); ++r) {
        for (Eigen::Index c = 0; c < xs.cols(); ++c) buf[static_cast<std::size_t>(c)] = xs(r, c);
        out[r] = detail::ordered_sum(buf);
      }
      if (kind == PoolKind::Mean) out /= static_cast<double>(xs.cols());
      return out;
    }
    case PoolKind::Max: {
      Vector out(xs.rows());
      for (Eigen::Index r = 0; r < xs.rows(); ++r) out[r] = xs.row(r).maxCoeff();
      return out;
    }
  }
  return {};
}

Matrix baseline_pool_backward(PoolKind kind, const Matrix& xs, const Vector& upstream) {
  if (xs.cols() == 0) throw InvalidArgument("baseline_pool_backward: empty input set");
  if (upstream.size() != xs.rows()) throw InvalidArgument("baseline_pool_backward: upstream has the wrong length");
  switch (kind) {
    case PoolKind::Sum: return upstream.replicate(1, xs.cols());
    case PoolKind::Mean: return upstream.replicate(1, xs.cols()) / static_cast<double>(xs.cols());
    case PoolKind::Max: {
      Matrix d = Matrix::Zero(xs.rows(), xs.cols());
      for (Eigen::Index r = 0; r < xs.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < xs.cols(); ++c)
          if (xs(r, c) > xs(r, best)) best = c;
        d(r, best) = upstream[r];
      }
      return d;
    }
  }
  return {};
}

Vector combined_forward(const CombinedLayer& layer, const Matrix& xs, CombinedCache* cache) {
  if (!layer.use_cp && !layer.use_linear) throw InvalidArgument("combined layer has both branches disabled");
  require_inputs(xs, layer.in_dim(), "combined_forward");
  CombinedCache local;
  CombinedCache& c = cache ? *cache : local;
  c.inputs = xs;
  c.output = Vector::Zero(layer.out_dim());
  if (layer.use_cp) c.output += cp_forward(layer.cp, xs, &c.cp);
  if (layer.use_linear) {
    c.pooled = baseline_pool(layer.linear_pool, xs);
    c.linear_pre.resize(layer.out_dim());
    detail::ordered_gemv(layer.w2.transpose(), c.pooled, c.linear_pre);
    c.output += apply(layer.sigma_dprime, c.linear_pre);
  }
  return c.output;
}

PoolGrads combined_backward(const CombinedLayer& layer, const CombinedCache& cache, const Vector& upstream) {
  if (upstream.size() != layer.out_dim()) throw InvalidArgument("combined_backward: upstream has the wrong length");
  PoolGrads g;
  if (layer.use_cp) {
    g = cp_backward(layer.cp, cache.cp, upstream);
  } else {
    g.d_w = Matrix::Zero(layer.cp.w.rows(), layer.cp.w.cols());
    g.d_m = Matrix::Zero(layer.cp.m.rows(), layer.cp.m.cols());
    g.d_inputs = Matrix::Zero(cache.inputs.rows(), cache.inputs.cols());
  }
  if (layer.use_linear) {
    const Vector linear_out = apply(layer.sigma_dprime, cache.linear_pre);
    const Vector d_pre = chain(layer.sigma_dprime, cache.linear_pre, linear_out, upstream);
    g.d_w2.noalias() = cache.pooled * d_pre.transpose();
    g.d_inputs += baseline_pool_backward(layer.linear_pool, cache.inputs, layer.w2 * d_pre);
  } else {
    g.d_w2 = Matrix::Zero(layer.w2.rows(), layer.w2.cols());
  }
  return g;
}

}  // namespace tgnn
