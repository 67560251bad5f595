#include "tgnn/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "tgnn/cp.hpp"
#include "tgnn/error.hpp"
#include "tgnn/graph.hpp"
#include "tgnn/model.hpp"
#include "tgnn/pooling.hpp"
#include "tgnn/train.hpp"

namespace tgnn {

bool SuiteReport::passed() const noexcept {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const SuiteCheck& c) { return c.passed; });
}

namespace {

struct Draw {
  Rng rng;

  double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  std::size_t between(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  }
  Matrix matrix(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    return Matrix::NullaryExpr(r, c, [&] { return uniform(-scale, scale); });
  }
  Eigen::Index idx(std::size_t lo, std::size_t hi) { return static_cast<Eigen::Index>(between(lo, hi)); }
  Activation activation() {
    static constexpr Activation all[] = {Activation::Identity, Activation::Tanh, Activation::Relu};
    return all[between(0, 2)];
  }
};

SuiteCheck upper(std::string measure, double value, double bound, std::size_t cases) {
  return {std::move(measure), value, bound, false, cases, std::isfinite(value) && value <= bound};
}

SuiteCheck lower(std::string measure, double value, double bound, std::size_t cases) {
  return {std::move(measure), value, bound, true, cases, std::isfinite(value) && value > bound};
}

double rel_error(const Vector& a, const Vector& b) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

Vector homogeneous(const Vector& x) {
  Vector h(x.size() + 1);
  h << x, 1.0;
  return h;
}

Matrix permuted_columns(const Matrix& xs, Rng& rng) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(xs.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix out(xs.rows(), xs.cols());
  for (Eigen::Index i = 0; i < xs.cols(); ++i) out.col(i) = xs.col(perm[static_cast<std::size_t>(i)]);
  return out;
}

void unfolding(Draw& d, SuiteReport& r) {
  constexpr std::size_t cases = 100;
  double worst = 0.0;
  for (std::size_t c = 0; c < cases; ++c) {
    Shape shape(d.between(3, 4));
    for (auto& n : shape) n = d.between(1, 5);
    DenseTensor t(shape);
    for (auto& x : t.data()) x = d.uniform();
    std::vector<Vector> vs;
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) vs.push_back(d.matrix(static_cast<Eigen::Index>(shape[i]), 1));
    worst = std::max(worst, rel_error(multi_mode_product(t, vs), multi_mode_product_kron(t, vs)));
  }
  r.checks.push_back(upper("max relative error", worst, 1e-10, cases));
}

void permutation(Draw& d, SuiteReport& r) {
  constexpr std::size_t cases = 100;
  double worst = 0.0;
  for (std::size_t c = 0; c < cases; ++c) {
    const Eigen::Index f = d.idx(1, 4), rank = d.idx(1, 8), out = d.idx(1, 3), k = d.idx(1, 6);
    CombinedLayer layer = CombinedLayer::random(f, rank, out, d.rng);
    layer.cp.sigma = d.activation();
    layer.cp.sigma_prime = d.activation();
    layer.cp.clamp_factors = d.between(0, 1) == 1;
    layer.sigma_dprime = d.activation();
    layer.linear_pool = static_cast<PoolKind>(d.between(0, 2));
    // Inputs spanning several magnitudes so reassociation would show.
    Matrix xs = d.matrix(f, k);
    for (Eigen::Index j = 0; j < k; ++j) xs.col(j) *= std::pow(10.0, d.uniform(-3.0, 3.0));
    const Matrix shuffled = permuted_columns(xs, d.rng);
    const double cp_diff = (cp_forward(layer.cp, xs) - cp_forward(layer.cp, shuffled)).cwiseAbs().maxCoeff();
    const double comb_diff =
        (combined_forward(layer, xs) - combined_forward(layer, shuffled)).cwiseAbs().maxCoeff();
    worst = std::max({worst, cp_diff, comb_diff});
  }
  r.checks.push_back(upper("max abs difference", worst, 0.0, cases));
}

void multilinear(Draw& d, SuiteReport& r) {
  constexpr std::size_t cases = 100;
  double worst = 0.0;
  for (std::size_t c = 0; c < cases; ++c) {
    const Eigen::Index f = d.idx(1, 3), rank = d.idx(1, 6), out = d.idx(1, 3);
    const std::size_t k = d.between(1, 4);
    CPLayer layer;
    layer.w = d.matrix(f + 1, rank);
    layer.m = d.matrix(out, rank);
    layer.sigma = layer.sigma_prime = Activation::Identity;
    const DenseTensor dense = reconstruct(PartialSymCP{layer.w, layer.m, k});
    const Matrix xs = d.matrix(f, static_cast<Eigen::Index>(k));
    std::vector<Vector> hs;
    for (Eigen::Index j = 0; j < xs.cols(); ++j) hs.push_back(homogeneous(xs.col(j)));
    worst = std::max(worst, rel_error(multi_mode_product(dense, hs), cp_forward(layer, xs)));
  }
  r.checks.push_back(upper("max relative error", worst, 1e-10, cases));
}

void sum_tensor(Draw& d, SuiteReport& r, std::uint64_t seed) {
  constexpr std::size_t draws = 100;
  double worst = 0.0;
  for (std::size_t c = 0; c < draws; ++c) {
    const std::size_t f = d.between(1, 4), k = d.between(1, 4), out = d.between(1, 4);
    const double alpha = d.between(0, 1) ? 1.0 : 1.0 / static_cast<double>(k);
    const DenseTensor t = build_sum_tensor(f, k, out, alpha);
    const Matrix xs = d.matrix(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k));
    std::vector<Vector> hs;
    for (Eigen::Index j = 0; j < xs.cols(); ++j) hs.push_back(homogeneous(xs.col(j)));
    Vector expected = Vector::Zero(static_cast<Eigen::Index>(out));
    const Eigen::Index shared = static_cast<Eigen::Index>(std::min(f, out));
    expected.head(shared) = alpha * xs.rowwise().sum().head(shared);
    worst = std::max(worst, (multi_mode_product(t, hs) - expected).cwiseAbs().maxCoeff());
  }
  r.checks.push_back(upper("contraction max abs error", worst, 1e-12, draws));

  struct Case {
    std::size_t f, k, out;
  };
  static constexpr Case fits[] = {{2, 2, 2}, {2, 3, 2}, {3, 2, 2}};
  double worst_fit = 0.0, worst_layer = 0.0;
  std::size_t layer_cases = 0;
  for (const Case& fc : fits) {
    for (const double alpha : {1.0, 1.0 / static_cast<double>(fc.k)}) {
      const DenseTensor target = build_sum_tensor(fc.f, fc.k, fc.out, alpha);
      FitOptions opt;
      opt.k_sym = fc.k;
      opt.rank = static_cast<Eigen::Index>(fc.f * fc.k);
      opt.iters = 100000;
      opt.lr = 0.1;
      opt.restarts = 32;
      opt.stop_rel_error = 1e-6;
      opt.seed = stream_key({seed, fc.f, fc.k, fc.out});
      const FitResult fit = fit_partial_sym_cp(target, opt);
      worst_fit = std::max(worst_fit, fit.relative_error);

      // The fitted factors used as a CP layer reproduce alpha * sum x.
      CPLayer layer;
      layer.w = fit.cp.w;
      layer.m = fit.cp.m;
      layer.sigma = layer.sigma_prime = Activation::Identity;
      for (int trial = 0; trial < 10; ++trial, ++layer_cases) {
        const Matrix xs = d.matrix(static_cast<Eigen::Index>(fc.f), static_cast<Eigen::Index>(fc.k));
        const Vector expected = alpha * xs.rowwise().sum().head(static_cast<Eigen::Index>(fc.out));
        worst_layer = std::max(worst_layer, (cp_forward(layer, xs) - expected).cwiseAbs().maxCoeff());
      }
    }
  }
  r.checks.push_back(upper("rank F*k fit relative error", worst_fit, 1e-4, std::size(fits) * 2));
  r.checks.push_back(upper("fitted layer max abs error", worst_layer, 1e-3, layer_cases));
}

void slices(Draw& d, SuiteReport& r) {
  constexpr std::size_t cases = 50;
  double worst = 0.0;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t m = d.between(1, 4), n = d.between(1, 3);
    DenseTensor t({m, m, n});
    for (std::size_t s = 0; s < n; ++s) {
      const Matrix a = d.matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
      const Matrix sym = 0.5 * (a + a.transpose());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
          t.at({i, j, s}) = sym(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    const SliceDecomposition dec = partial_sym_from_slices(t);
    const DenseTensor back = reconstruct(dec.cp);
    for (std::size_t i = 0; i < t.size(); ++i) worst = std::max(worst, std::abs(back.data()[i] - t.data()[i]));
  }
  r.checks.push_back(upper("max abs reconstruction error", worst, 1e-7, cases));
}

// f(a,b) - f(a,0) - f(0,b) + f(0,0) for a two-input layer map.
template <class F>
double mixed_difference(F&& f, const Vector& a, const Vector& b) {
  const Vector zero = Vector::Zero(a.size());
  auto pair = [](const Vector& x, const Vector& y) {
    Matrix xs(x.size(), 2);
    xs << x, y;
    return xs;
  };
  return (f(pair(a, b)) - f(pair(a, zero)) - f(pair(zero, b)) + f(pair(zero, zero)))[0];
}

void strictness(Draw& d, SuiteReport& r) {
  constexpr std::size_t cases = 100;
  double smallest = std::numeric_limits<double>::infinity();
  double additive = 0.0;
  for (std::size_t c = 0; c < cases; ++c) {
    CPLayer layer;
    layer.w = d.matrix(2, 1);
    layer.m = d.matrix(1, 1);
    layer.sigma = layer.sigma_prime = Activation::Identity;
    // Unit-magnitude inputs so the witness does not vanish with a tiny draw.
    Vector a(1), b(1);
    a[0] = d.uniform() < 0.0 ? -1.0 : 1.0;
    b[0] = d.uniform() < 0.0 ? -1.0 : 1.0;
    smallest = std::min(smallest, std::abs(mixed_difference([&](const Matrix& xs) { return cp_forward(layer, xs); },
                                                            a, b)));

    // Contrast: sum aggregation followed by a linear map is additive.
    CombinedLayer sum_only;
    sum_only.w2 = d.matrix(1, 1);
    sum_only.sigma_dprime = Activation::Identity;
    sum_only.use_cp = false;
    additive = std::max(additive, std::abs(mixed_difference(
                                      [&](const Matrix& xs) { return combined_forward(sum_only, xs); }, a, b)));
  }
  r.checks.push_back(lower("min |mixed difference| of CP layers", smallest, 1e-8, cases));
  r.checks.push_back(upper("max |mixed difference| of sum aggregation", additive, 1e-12, cases));
}

// Inputs away from relu kinks and tanh saturation, where central differences
// lose their significant digits.
bool well_conditioned(const CPCache& c, bool check_product_kink) {
  if (c.pre_output.size() && c.pre_output.cwiseAbs().minCoeff() <= 1e-3) return false;
  if (c.product.size() && c.product.cwiseAbs().maxCoeff() >= 3.0) return false;
  if (check_product_kink && c.product.cwiseAbs().minCoeff() <= 1e-3) return false;
  return true;
}

bool well_conditioned(const ForwardTrace& t) {
  for (const auto& lt : t.layers) {
    if (lt.pre_output.size() && lt.pre_output.cwiseAbs().minCoeff() <= 1e-3) return false;
    if (lt.linear_pre.size() && lt.linear_pre.cwiseAbs().minCoeff() <= 1e-3) return false;
    if (lt.product.size() && lt.product.cwiseAbs().maxCoeff() >= 3.0) return false;
  }
  // Model layers use tanh for sigma, so small products are not a kink.
  return well_conditioned(t.readout, false);
}

constexpr double kStep = 1e-5;
constexpr int kResampleLimit = 500;

void gradient(Draw& d, SuiteReport& r, std::uint64_t seed) {
  double worst = 0.0;
  std::size_t cases = 0;
  auto record = [&](double e) {
    worst = std::max(worst, e);
    ++cases;
  };
  auto exhausted = [] { throw NumericalError("gradient suite: no well-conditioned draw found"); };

  static constexpr Activation acts[] = {Activation::Identity, Activation::Tanh, Activation::Relu};
  for (int clamp = 0; clamp < 2; ++clamp)
    for (auto s : acts)
      for (auto sp : acts) {
        CPLayer layer = CPLayer::random(3, 5, 2, d.rng);
        layer.sigma = s;
        layer.sigma_prime = sp;
        layer.clamp_factors = clamp == 1;
        Matrix xs;
        CPCache cache;
        for (int tries = 0;; ++tries) {
          if (tries == kResampleLimit) exhausted();
          xs = d.matrix(3, 4);
          cp_forward(layer, xs, &cache);
          if (well_conditioned(cache, s == Activation::Relu)) break;
        }
        const Vector up = d.matrix(2, 1);
        const PoolGrads g = cp_backward(layer, cache, up);
        auto f = [&] { return up.dot(cp_forward(layer, xs)); };
        record(finite_diff_check(f, {&layer.w, &layer.m, &xs}, {g.d_w, g.d_m, g.d_inputs}, kStep));
      }

  for (auto pool : {PoolKind::Sum, PoolKind::Mean, PoolKind::Max}) {
    CombinedLayer layer = CombinedLayer::random(3, 5, 2, d.rng);
    layer.linear_pool = pool;
    Matrix xs;
    CombinedCache cache;
    for (int tries = 0;; ++tries) {
      if (tries == kResampleLimit) exhausted();
      xs = d.matrix(3, 4);
      combined_forward(layer, xs, &cache);
      if (well_conditioned(cache.cp, true) && cache.linear_pre.cwiseAbs().minCoeff() > 1e-3) break;
    }
    const Vector up = d.matrix(2, 1);
    const PoolGrads g = combined_backward(layer, cache, up);
    auto f = [&] { return up.dot(combined_forward(layer, xs)); };
    record(finite_diff_check(f, {&layer.cp.w, &layer.cp.m, &layer.w2, &xs}, {g.d_w, g.d_m, g.d_w2, g.d_inputs},
                             kStep));
  }

  {
    Matrix logits = d.matrix(3, 6, 2.0);
    const std::vector<int> labels = {0, 2, 1, 1, 0, 2};
    const LossResult lr = cross_entropy(logits, labels);
    auto f = [&] { return cross_entropy(logits, labels).loss; };
    record(finite_diff_check(f, {&logits}, {lr.grad}, kStep));
  }

  // Whole models: every pooling on a small node task, then the graph task
  // with and without the readout clamp. Dropout is on so masks are covered.
  SbmParams p;
  p.classes = 2;
  p.per_class = 3;
  p.p_in = 0.7;
  p.p_out = 0.2;
  p.feature_dim = 2;
  p.seed = seed;
  Graph g = generate_sbm(p);
  // Unit-scale features would put most products of four inputs in saturation.
  g.features *= 0.3;
  const Eigen::Index n = static_cast<Eigen::Index>(g.num_nodes());
  for (auto pooling : {Pooling::CpSum, Pooling::Cp, Pooling::Sum, Pooling::Mean, Pooling::Max}) {
    ModelConfig c;
    c.in_dim = 2;
    c.hidden = 3;
    c.out_dim = 2;
    c.rank = 4;
    c.pooling = pooling;
    c.dropout = 0.25;
    c.sample_k = 3;
    const ForwardMode mode{5, true};
    TgnnModel model;
    ForwardTrace trace;
    for (int tries = 0;; ++tries) {
      if (tries == kResampleLimit) exhausted();
      c.seed = stream_key({seed, static_cast<std::uint64_t>(tries)});
      model = TgnnModel::create(c);
      node_forward(model, g, mode, &trace);
      if (well_conditioned(trace)) break;
    }
    const Matrix up = d.matrix(2, n);
    const ModelGrads grads = node_backward(model, trace, up);
    auto f = [&] { return node_forward(model, g, mode).cwiseProduct(up).sum(); };
    record(finite_diff_check(f, model.parameters(), grads, kStep));
  }

  const auto data = generate_graph_regression(1, 5, 5, 2, 0.5, seed);
  for (bool clamp : {false, true}) {
    ModelConfig c;
    c.task = Task::Graph;
    c.in_dim = 2;
    c.hidden = 3;
    c.out_dim = 2;
    c.rank = 4;
    c.readout_rank = 5;
    c.dropout = 0.2;
    c.stabilize_readout = clamp;
    const ForwardMode mode{2, true, 0};
    TgnnModel model;
    ForwardTrace trace;
    for (int tries = 0;; ++tries) {
      if (tries == kResampleLimit) exhausted();
      c.seed = stream_key({seed, 0x9a, static_cast<std::uint64_t>(tries)});
      model = TgnnModel::create(c);
      graph_forward(model, data[0].graph, mode, &trace);
      if (well_conditioned(trace)) break;
    }
    const Vector up = d.matrix(2, 1);
    const ModelGrads grads = graph_backward(model, trace, up);
    auto f = [&] { return graph_forward(model, data[0].graph, mode).dot(up); };
    record(finite_diff_check(f, model.parameters(), grads, kStep));
  }

  r.checks.push_back(upper("max relative error", worst, 1e-4, cases));
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"unfolding", "permutation", "multilinear", "sum-tensor", "slices", "strictness", "gradient"};
}

SuiteReport run_suite(std::string_view name, std::uint64_t seed) {
  const auto names = suite_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw InvalidArgument("unknown suite '" + std::string(name) + "'");
  const auto tag = static_cast<std::uint64_t>(it - names.begin());

  SuiteReport r;
  r.name = std::string(name);
  Draw d{Rng(stream_key({seed, 0x7e51f, tag}))};
  const auto start = std::chrono::steady_clock::now();
  switch (tag) {
    case 0: unfolding(d, r); break;
    case 1: permutation(d, r); break;
    case 2: multilinear(d, r); break;
    case 3: sum_tensor(d, r, seed); break;
    case 4: slices(d, r); break;
    case 5: strictness(d, r); break;
    default: gradient(d, r, seed); break;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace tgnn
