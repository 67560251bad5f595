#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tgnn/model.hpp"

namespace tgnn {

struct BenchPoint {
  Eigen::Index x = 0;    // rank or node count
  double time_ns = 0.0;  // median time of one layer forward
  std::size_t params = 0;
};

struct BenchResult {
  std::string variable;  // "rank" or "nodes"
  Pooling pooling = Pooling::Cp;
  std::vector<BenchPoint> points;  // sorted by x
  // Least-squares slope of log(time) against log(x); absent with fewer than
  // two grid points.
  std::optional<double> loglog_slope;
  // Least-squares line time_ns = intercept + slope * x.
  std::optional<double> linear_slope, linear_intercept;
};

struct BenchOptions {
  Eigen::Index in_dim = 64;
  Eigen::Index out_dim = 32;
  Eigen::Index nodes = 1024;
  Eigen::Index rank = 64;    // fixed rank for size scaling
  std::size_t arity = 6;     // inputs per node: the node plus five neighbors
  int reps = 5;              // timed repetitions after one discarded warmup
  double min_rep_seconds = 2e-3;
  Pooling pooling = Pooling::Cp;  // Cp, Sum, Mean, Max or CpSum
  std::uint64_t seed = 0;
};

// Times one batched node-layer forward over `nodes` random neighborhoods for
// each rank in `ranks`. Requires reps >= 5.
BenchResult bench_rank_scaling(const BenchOptions& options, std::span<const Eigen::Index> ranks);
// Same at fixed rank over the node counts in `sizes`.
BenchResult bench_size_scaling(const BenchOptions& options, std::span<const Eigen::Index> sizes);

std::optional<double> loglog_slope(std::span<const double> x, std::span<const double> y);

// CSV with header "<variable>,time_ns,params".
void write_bench_csv(const BenchResult& result, const std::string& path);

}  // namespace tgnn
