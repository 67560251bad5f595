#include "tgnn/cp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tgnn/error.hpp"
#include "tgnn/rng.hpp"

namespace tgnn {

DenseTensor reconstruct(const CPDecomp& d) {
  if (d.factors.empty()) throw InvalidArgument("CP decomposition has no factors");
  const auto rank = d.rank();
  Shape shape;
  for (const auto& f : d.factors) {
    if (f.cols() != rank) throw InvalidArgument("CP factor matrices must share the same column count");
    shape.push_back(static_cast<std::size_t>(f.rows()));
  }
  checked_volume(shape);
  DenseTensor t(shape);
  std::vector<std::size_t> idx(shape.size());
  auto data = t.data();
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    t.unravel(flat, idx);
    double s = 0.0;
    for (Eigen::Index r = 0; r < rank; ++r) {
      double p = 1.0;
      for (std::size_t j = 0; j < idx.size(); ++j) p *= d.factors[j](static_cast<Eigen::Index>(idx[j]), r);
      s += p;
    }
    data[flat] = s;
  }
  return t;
}

DenseTensor reconstruct(const PartialSymCP& d) {
  if (d.k_sym == 0) throw InvalidArgument("partially symmetric CP needs at least one symmetric mode");
  if (d.w.cols() != d.m.cols()) throw InvalidArgument("W and M must have the same number of columns");
  CPDecomp full;
  full.factors.assign(d.k_sym, d.w);
  full.factors.push_back(d.m);
  return reconstruct(full);
}

DenseTensor reconstruct(const WeightedSymCP& d) {
  if (d.weights.size() != d.v.cols()) throw InvalidArgument("weight count must equal the number of factor columns");
  Matrix s = d.v * d.weights.asDiagonal() * d.v.transpose();
  const auto n = static_cast<std::size_t>(s.rows());
  DenseTensor t({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) t.at({i, j}) = s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return t;
}

WeightedSymCP symmetric_cp_of_matrix(const Matrix& s, double rank_tol) {
  if (s.rows() != s.cols() || s.rows() == 0) throw InvalidArgument("symmetric CP needs a non-empty square matrix");
  const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9)
    throw InvalidArgument("matrix is not symmetric (max |s - s^T| = " + std::to_string(asym) + ")");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");

  const Vector& lambda = eig.eigenvalues();
  const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (std::abs(lambda[i]) > rank_tol * scale) keep.push_back(i);

  WeightedSymCP out;
  out.v.resize(s.rows(), static_cast<Eigen::Index>(keep.size()));
  out.weights.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    out.v.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(keep[c]);
    out.weights[static_cast<Eigen::Index>(c)] = lambda[keep[c]];
  }
  return out;
}

SliceDecomposition partial_sym_from_slices(const DenseTensor& t, double symmetry_tol) {
  if (t.order() != 3) throw InvalidArgument("slice decomposition needs a 3rd-order tensor");
  const auto m = static_cast<Eigen::Index>(t.dim(0));
  const auto n = static_cast<Eigen::Index>(t.dim(2));
  if (t.dim(1) != t.dim(0)) throw InvalidArgument("the first two modes must have equal size");

  std::vector<WeightedSymCP> parts;
  SliceDecomposition out;
  Eigen::Index total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix slice(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < m; ++b)
        slice(a, b) = t.at({static_cast<std::size_t>(a), static_cast<std::size_t>(b), static_cast<std::size_t>(i)});
    const double asym = (slice - slice.transpose()).cwiseAbs().maxCoeff();
    if (asym > symmetry_tol)
      throw InvalidArgument("frontal slice " + std::to_string(i) + " is not symmetric (max |s - s^T| = " +
                            std::to_string(asym) + ")");
    parts.push_back(symmetric_cp_of_matrix(slice));
    out.slice_ranks.push_back(parts.back().rank());
    total += parts.back().rank();
  }

  out.cp.k_sym = 2;
  out.cp.w = Matrix::Zero(m, total);
  out.cp.m = Matrix::Zero(n, total);
  Eigen::Index col = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& part = parts[static_cast<std::size_t>(i)];
    for (Eigen::Index r = 0; r < part.rank(); ++r, ++col) {
      const double w = part.weights[r];
      out.cp.w.col(col) = std::sqrt(std::abs(w)) * part.v.col(r);
      out.cp.m(i, col) = w < 0 ? -1.0 : 1.0;
    }
  }
  return out;
}

DenseTensor build_sum_tensor(std::size_t features, std::size_t arity, std::size_t out_dim, double alpha) {
  if (features == 0 || arity == 0 || out_dim == 0)
    throw InvalidArgument("sum tensor needs positive feature dim, arity and output dim");
  Shape shape(arity, features + 1);
  shape.push_back(out_dim);
  DenseTensor t(shape);  // capacity-checked

  const std::size_t hom = features;  // index of the homogeneous coordinate
  std::vector<std::size_t> idx(arity + 1);
  for (std::size_t j = 0; j < std::min(features, out_dim); ++j)
    for (std::size_t l = 0; l < arity; ++l) {
      std::fill(idx.begin(), idx.end(), hom);
      idx[l] = j;
      idx[arity] = j;
      t(idx) += alpha;
    }
  return t;
}

namespace {

// Loss and gradient of 0.5 * ||[[W,...,W,M]] - T||^2 by a single pass over
// the tensor entries. Leave-one-out products avoid dividing by W entries.
struct FitWorkspace {
  std::size_t k = 0;
  Eigen::Index n = 0, mr = 0, rank = 0;
  std::vector<std::size_t> idx;
  std::vector<double> prefix, suffix;
};

double loss_and_grad(const DenseTensor& target, const Matrix& w, const Matrix& m, Matrix& dw, Matrix& dm,
                     FitWorkspace& ws) {
  dw.setZero();
  dm.setZero();
  const std::size_t k = ws.k;
  auto data = target.data();
  double loss = 0.0;
  for (std::size_t flat = 0; flat < target.size(); ++flat) {
    target.unravel(flat, ws.idx);
    const auto out = static_cast<Eigen::Index>(ws.idx[k]);
    // Residual at this entry.
    double value = 0.0;
    for (Eigen::Index r = 0; r < ws.rank; ++r) {
      double p = m(out, r);
      for (std::size_t j = 0; j < k; ++j) p *= w(static_cast<Eigen::Index>(ws.idx[j]), r);
      value += p;
    }
    const double e = value - data[flat];
    loss += 0.5 * e * e;
    if (e == 0.0) continue;
    for (Eigen::Index r = 0; r < ws.rank; ++r) {
      ws.prefix[0] = 1.0;
      for (std::size_t j = 0; j < k; ++j) ws.prefix[j + 1] = ws.prefix[j] * w(static_cast<Eigen::Index>(ws.idx[j]), r);
      ws.suffix[k] = 1.0;
      for (std::size_t j = k; j-- > 0;) ws.suffix[j] = ws.suffix[j + 1] * w(static_cast<Eigen::Index>(ws.idx[j]), r);
      dm(out, r) += e * ws.prefix[k];
      const double em = e * m(out, r);
      for (std::size_t j = 0; j < k; ++j)
        dw(static_cast<Eigen::Index>(ws.idx[j]), r) += em * ws.prefix[j] * ws.suffix[j + 1];
    }
  }
  return loss;
}

}  // namespace

constexpr double kFitNorm = 2.0;

FitResult fit_partial_sym_cp(const DenseTensor& target, const FitOptions& options) {
  if (options.rank < 1) throw InvalidArgument("fit rank must be at least 1");
  if (options.k_sym < 1 || target.order() != options.k_sym + 1)
    throw InvalidArgument("target order must equal k_sym + 1");
  for (std::size_t j = 1; j < options.k_sym; ++j)
    if (target.dim(j) != target.dim(0)) throw InvalidArgument("symmetric modes must have equal size");
  if (options.restarts < 1) throw InvalidArgument("at least one start is required");
  if (!(options.lr > 0.0)) throw InvalidArgument("learning rate must be positive");

  FitWorkspace ws;
  ws.k = options.k_sym;
  ws.n = static_cast<Eigen::Index>(target.dim(0));
  ws.mr = static_cast<Eigen::Index>(target.dim(options.k_sym));
  ws.rank = options.rank;
  ws.idx.resize(ws.k + 1);
  ws.prefix.resize(ws.k + 1);
  ws.suffix.resize(ws.k + 1);

  // Descent runs on the target rescaled to Frobenius norm kFitNorm, so one
  // step size suits targets of any magnitude. M absorbs the scale at the end.
  const double target_norm = target.frobenius_norm();
  const double scale = target_norm > 0.0 ? kFitNorm / target_norm : 1.0;
  DenseTensor scaled = target;
  for (auto& x : scaled.data()) x *= scale;
  auto rel = [&](double loss) {
    const double err = std::sqrt(2.0 * loss);
    return target_norm > 0.0 ? err / kFitNorm : err;
  };

  const double rank_scale = 1.0 / std::sqrt(static_cast<double>(ws.rank));
  const double w_limit = std::sqrt(6.0 / static_cast<double>(ws.n + ws.rank)) * rank_scale;
  const double m_limit = std::sqrt(6.0 / static_cast<double>(ws.mr + ws.rank)) * rank_scale;

  FitResult best;
  bool have_best = false;
  Matrix dw(ws.n, ws.rank), dm(ws.mr, ws.rank);
  for (std::size_t start = 0; start < options.restarts; ++start) {
    Rng rng(stream_key({options.seed, start}));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Matrix w = Matrix::NullaryExpr(ws.n, ws.rank, [&] { return w_limit * unit(rng); });
    Matrix m = Matrix::NullaryExpr(ws.mr, ws.rank, [&] { return m_limit * unit(rng); });

    // Best iterate of this start.
    double start_loss = std::numeric_limits<double>::infinity();
    Matrix start_w, start_m;
    bool diverged = false;
    for (std::size_t it = 0; it <= options.iters; ++it) {
      const double loss = loss_and_grad(scaled, w, m, dw, dm, ws);
      if (!std::isfinite(loss)) {
        diverged = true;
        break;
      }
      if (loss < start_loss) {
        start_loss = loss;
        start_w = w;
        start_m = m;
      }
      if (it == options.iters || rel(loss) < options.stop_rel_error) break;
      w -= options.lr * dw;
      m -= options.lr * dm;
      ++best.iterations;
    }
    if (diverged) continue;
    if (!have_best || start_loss < best.loss) {
      best.cp = PartialSymCP{std::move(start_w), std::move(start_m), options.k_sym};
      best.loss = start_loss;
      have_best = true;
    }
    if (rel(best.loss) < options.stop_rel_error) break;
  }
  if (!have_best)
    throw NumericalError("partially symmetric CP fit diverged from every start; lower the learning rate");
  best.relative_error = rel(best.loss);
  best.cp.m /= scale;
  best.loss /= scale * scale;
  return best;
}

}  // namespace tgnn
