#include "tgnn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "tgnn/error.hpp"

namespace tgnn {
namespace {

using Clock = std::chrono::steady_clock;

CombinedLayer make_layer(const BenchOptions& o, Eigen::Index rank, Rng& rng) {
  CombinedLayer layer = CombinedLayer::random(o.in_dim, rank, o.out_dim, rng);
  layer.use_cp = o.pooling == Pooling::Cp || o.pooling == Pooling::CpSum;
  layer.use_linear = o.pooling != Pooling::Cp;
  layer.linear_pool = o.pooling == Pooling::Mean ? PoolKind::Mean
                      : o.pooling == Pooling::Max ? PoolKind::Max
                                                  : PoolKind::Sum;
  return layer;
}

LayerTrace make_inputs(const BenchOptions& o, Eigen::Index nodes, Rng& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<Eigen::Index> pick(0, nodes - 1);
  LayerTrace lt;
  lt.input = Matrix::NullaryExpr(o.in_dim, nodes, [&] { return unit(rng) / std::sqrt(static_cast<double>(o.in_dim)); });
  lt.members.resize(static_cast<std::size_t>(nodes));
  for (Eigen::Index v = 0; v < nodes; ++v) {
    auto& mem = lt.members[static_cast<std::size_t>(v)];
    mem.push_back(v);
    while (mem.size() < o.arity) mem.push_back(pick(rng));
  }
  return lt;
}

double time_forward(const BenchOptions& o, const CombinedLayer& layer, LayerTrace& lt) {
  // Calibrate an inner loop long enough for the clock, then take the median
  // of the timed repetitions.
  std::size_t inner = 1;
  while (true) {
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < inner; ++i) layer_forward(layer, lt);
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    if (s >= o.min_rep_seconds || inner >= (std::size_t{1} << 20)) break;
    inner *= 2;
  }
  std::vector<double> times;
  for (int r = 0; r < o.reps; ++r) {
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < inner; ++i) layer_forward(layer, lt);
    times.push_back(std::chrono::duration<double, std::nano>(Clock::now() - t0).count() / static_cast<double>(inner));
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  return n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

void check_options(const BenchOptions& o) {
  if (o.reps < 5) throw InvalidArgument("benchmarks need at least 5 repetitions");
  if (o.in_dim < 1 || o.out_dim < 1 || o.nodes < 1 || o.rank < 1 || o.arity < 1)
    throw InvalidArgument("benchmark dimensions must be positive");
}

void fit(BenchResult& r) {
  std::vector<double> x, y;
  for (const auto& p : r.points) {
    x.push_back(static_cast<double>(p.x));
    y.push_back(p.time_ns);
  }
  r.loglog_slope = loglog_slope(x, y);
  if (x.size() < 2 || x.front() == x.back()) return;
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  r.linear_slope = sxy / sxx;
  r.linear_intercept = my - *r.linear_slope * mx;
}

std::vector<Eigen::Index> sorted_grid(std::span<const Eigen::Index> grid) {
  if (grid.empty()) throw InvalidArgument("benchmark grid is empty");
  std::vector<Eigen::Index> out(grid.begin(), grid.end());
  std::sort(out.begin(), out.end());
  if (out.front() < 1) throw InvalidArgument("benchmark grid values must be positive");
  return out;
}

}  // namespace

std::optional<double> loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("loglog_slope: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw InvalidArgument("loglog_slope: values must be positive");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

BenchResult bench_rank_scaling(const BenchOptions& options, std::span<const Eigen::Index> ranks) {
  check_options(options);
  BenchResult r;
  r.variable = "rank";
  r.pooling = options.pooling;
  Rng rng(stream_key({options.seed, 0xbe4c}));
  LayerTrace lt = make_inputs(options, options.nodes, rng);
  for (Eigen::Index rank : sorted_grid(ranks)) {
    const CombinedLayer layer = make_layer(options, rank, rng);
    r.points.push_back({rank, time_forward(options, layer, lt), param_count(layer)});
  }
  fit(r);
  return r;
}

BenchResult bench_size_scaling(const BenchOptions& options, std::span<const Eigen::Index> sizes) {
  check_options(options);
  BenchResult r;
  r.variable = "nodes";
  r.pooling = options.pooling;
  Rng rng(stream_key({options.seed, 0x517e}));
  const CombinedLayer layer = make_layer(options, options.rank, rng);
  for (Eigen::Index n : sorted_grid(sizes)) {
    LayerTrace lt = make_inputs(options, n, rng);
    r.points.push_back({n, time_forward(options, layer, lt), param_count(layer)});
  }
  fit(r);
  return r;
}

void write_bench_csv(const BenchResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << result.variable << ",time_ns,params\n";
  out.precision(12);
  for (const auto& p : result.points) out << p.x << ',' << p.time_ns << ',' << p.params << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace tgnn
