#pragma once

#include <cstdint>
#include <vector>

#include "tgnn/tensor.hpp"

namespace tgnn {

// General CP decomposition: sum over r of factors[0].col(r) o ... o factors[k-1].col(r).
struct CPDecomp {
  std::vector<Matrix> factors;

  Eigen::Index rank() const { return factors.empty() ? 0 : factors.front().cols(); }
};

// Partially symmetric CP [[W, ..., W, M]] with W repeated over the first
// `k_sym` modes. Shape of the materialized tensor: N x ... x N x M_rows.
struct PartialSymCP {
  Matrix w;  // N x R
  Matrix m;  // M_rows x R
  std::size_t k_sym = 2;

  Eigen::Index rank() const { return w.cols(); }
};

// Symmetric matrix as sum_r weights[r] * v.col(r) o v.col(r). Weights carry
// sign so indefinite matrices have a real factorization.
struct WeightedSymCP {
  Matrix v;        // N x R
  Vector weights;  // R

  Eigen::Index rank() const { return v.cols(); }
};

DenseTensor reconstruct(const CPDecomp& d);
DenseTensor reconstruct(const PartialSymCP& d);
DenseTensor reconstruct(const WeightedSymCP& d);

// Spectral factorization of a symmetric matrix. Eigenpairs with
// |lambda| <= rank_tol * max(1, max|lambda|) are dropped.
WeightedSymCP symmetric_cp_of_matrix(const Matrix& s, double rank_tol = 1e-9);

// Result of splitting a tensor with symmetric frontal slices into one shared
// factor and a slice selector.
struct SliceDecomposition {
  PartialSymCP cp;                        // w = A (m x R), m = Delta (n x R), k_sym = 2
  std::vector<Eigen::Index> slice_ranks;  // R_i per frontal slice, sum = R
};

// Decomposes t (m x m x n, every t[:,:,i] symmetric) as [[A, A, Delta]].
// Columns of A are sqrt(|lambda|) * eigenvector for each slice; Delta holds
// the eigenvalue sign in the rows of the owning slice and zero elsewhere.
SliceDecomposition partial_sym_from_slices(const DenseTensor& t, double symmetry_tol = 1e-9);

// Tensor of shape (F+1)^k x d whose contraction with homogeneous vectors
// [x_1;1], ..., [x_k;1] over the first k modes equals alpha * sum_i x_i
// restricted to the first min(F, d) coordinates (remaining outputs are zero).
DenseTensor build_sum_tensor(std::size_t features, std::size_t arity, std::size_t out_dim, double alpha);

struct FitOptions {
  std::size_t k_sym = 2;
  Eigen::Index rank = 1;
  std::size_t iters = 20000;
  double lr = 0.05;  // step size on the target rescaled to Frobenius norm 2
  std::uint64_t seed = 0;
  // Independent random starts; the best final iterate over all of them wins.
  std::size_t restarts = 1;
  // Fitting stops once a start's relative error drops below this; later
  // starts are skipped.
  double stop_rel_error = 0.0;
};

struct FitResult {
  PartialSymCP cp;
  double loss = 0.0;            // 0.5 * ||T - T_hat||_F^2 at the returned iterate
  double relative_error = 0.0;  // ||T - T_hat||_F / ||T||_F (absolute error if T == 0)
  std::size_t iterations = 0;   // total gradient steps over all starts
};

// Plain gradient descent on 0.5 * ||T - [[W,...,W,M]]||_F^2 from
// Glorot-uniform starts scaled by 1/sqrt(R). T is rescaled to norm 2 for the
// descent and the returned M undoes the scaling. Starts whose loss becomes
// non-finite are abandoned; if every start does, NumericalError is thrown.
FitResult fit_partial_sym_cp(const DenseTensor& target, const FitOptions& options);

}  // namespace tgnn
