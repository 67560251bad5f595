#include "tgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "tgnn/error.hpp"

namespace tgnn {

Graph Graph::from_edges(std::size_t n, std::span<const Edge> edges, bool undirected) {
  if (n == 0) throw InvalidArgument("graph must have at least one node");
  std::vector<std::vector<NodeId>> adj(n);
  std::unordered_set<std::uint64_t> seen;
  auto insert = [&](NodeId s, NodeId d) {
    const auto key = static_cast<std::uint64_t>(s) * n + static_cast<std::uint64_t>(d);
    if (seen.insert(key).second) adj[static_cast<std::size_t>(s)].push_back(d);
  };
  for (const auto& [s, d] : edges) {
    if (s < 0 || d < 0 || static_cast<std::size_t>(s) >= n || static_cast<std::size_t>(d) >= n)
      throw InvalidArgument("edge (" + std::to_string(s) + ", " + std::to_string(d) + ") out of range for " +
                            std::to_string(n) + " nodes");
    insert(s, d);
    if (undirected) insert(d, s);
  }
  for (std::size_t v = 0; v < n; ++v) insert(static_cast<NodeId>(v), static_cast<NodeId>(v));

  Graph g;
  g.offsets_.resize(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) g.offsets_[v + 1] = g.offsets_[v] + adj[v].size();
  g.targets_.reserve(g.offsets_[n]);
  for (auto& list : adj) g.targets_.insert(g.targets_.end(), list.begin(), list.end());
  g.node_keys.resize(n);
  std::iota(g.node_keys.begin(), g.node_keys.end(), std::uint64_t{0});
  return g;
}

std::span<const NodeId> Graph::neighbors(NodeId v) const {
  if (v < 0 || static_cast<std::size_t>(v) >= num_nodes())
    throw InvalidArgument("node " + std::to_string(v) + " out of range");
  const auto b = offsets_[static_cast<std::size_t>(v)];
  const auto e = offsets_[static_cast<std::size_t>(v) + 1];
  return std::span<const NodeId>(targets_).subspan(b, e - b);
}

int Graph::num_classes() const noexcept {
  int c = -1;
  for (int l : labels) c = std::max(c, l);
  return c + 1;
}

void Graph::validate() const {
  const std::size_t n = num_nodes();
  if (n == 0) throw InvalidArgument("graph has no nodes");
  for (std::size_t v = 0; v < n; ++v) {
    if (offsets_[v + 1] < offsets_[v]) throw InvalidArgument("CSR offsets are not monotone");
    auto nb = neighbors(static_cast<NodeId>(v));
    if (std::find(nb.begin(), nb.end(), static_cast<NodeId>(v)) == nb.end())
      throw InvalidArgument("node " + std::to_string(v) + " has no self-loop");
  }
  for (auto t : targets_)
    if (t < 0 || static_cast<std::size_t>(t) >= n) throw InvalidArgument("CSR target out of range");
  if (features.size() && static_cast<std::size_t>(features.rows()) != n)
    throw InvalidArgument("feature matrix has " + std::to_string(features.rows()) + " rows for " + std::to_string(n) +
                          " nodes");
  if (!labels.empty() && labels.size() != n) throw InvalidArgument("label count does not match node count");
  for (int l : labels)
    if (l < 0) throw InvalidArgument("labels must be non-negative");
  if (node_keys.size() != n) throw InvalidArgument("node key count does not match node count");

  std::vector<char> owner(n, 0);
  auto mark = [&](const std::vector<NodeId>& ids, const char* name) {
    for (auto id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= n)
        throw InvalidArgument(std::string(name) + " split contains out-of-range node " + std::to_string(id));
      if (owner[static_cast<std::size_t>(id)]++)
        throw InvalidArgument("node " + std::to_string(id) + " appears in more than one split entry");
    }
  };
  mark(split.train, "train");
  mark(split.val, "val");
  mark(split.test, "test");
}

std::vector<NodeId> sample_neighborhood(const Graph& g, NodeId v, const SampleSpec& spec, StreamRng& rng) {
  const auto nb = g.neighbors(v);
  if (spec.full) return {nb.begin(), nb.end()};
  if (spec.k < 1) throw InvalidArgument("sample size must be at least 1");

  std::vector<NodeId> out;
  out.reserve(spec.k);
  if (nb.size() >= spec.k) {
    // Partial Fisher-Yates over positions.
    std::vector<std::size_t> pos(nb.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    for (std::size_t i = 0; i < spec.k; ++i) {
      const std::size_t j = i + rng.below(pos.size() - i);
      std::swap(pos[i], pos[j]);
      out.push_back(nb[pos[i]]);
    }
    return out;
  }
  out.assign(nb.begin(), nb.end());
  if (!spec.with_replacement_on_deficit) return out;
  while (out.size() < spec.k) out.push_back(nb[rng.below(nb.size())]);
  return out;
}

Split random_split(std::size_t n, double train_frac, double val_frac, std::uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0) throw InvalidArgument("invalid split fractions");
  std::vector<NodeId> ids(n);
  std::iota(ids.begin(), ids.end(), NodeId{0});
  StreamRng rng({seed, 0x5b117ULL});
  for (std::size_t i = n; i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
  Split s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
               ids.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)), ids.end());
  return s;
}

Graph generate_sbm(const SbmParams& p) {
  if (p.classes < 1 || p.per_class < 1) throw InvalidArgument("SBM needs at least one class and one node per class");
  if (p.p_in < 0 || p.p_in > 1 || p.p_out < 0 || p.p_out > 1)
    throw InvalidArgument("SBM edge probabilities must lie in [0, 1]");
  if (p.feature_dim < 1) throw InvalidArgument("SBM feature dimension must be positive");
  if (p.means.size() && (static_cast<std::size_t>(p.means.rows()) != p.classes || p.means.cols() != p.feature_dim))
    throw InvalidArgument("SBM means must be classes x feature_dim");
  if (p.noise < 0) throw InvalidArgument("SBM noise must be non-negative");

  const std::size_t n = p.classes * p.per_class;
  Rng rng(stream_key({p.seed, 0x5b3ULL}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = static_cast<int>(v / p.per_class);

  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) {
      const double prob = labels[u] == labels[v] ? p.p_in : p.p_out;
      if (unit(rng) < prob) edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }

  Matrix means = p.means;
  if (!means.size())
    means = Matrix::NullaryExpr(static_cast<Eigen::Index>(p.classes), p.feature_dim,
                                [&] { return p.mean_scale * gauss(rng); });

  Graph g = Graph::from_edges(n, edges, true);
  g.features.resize(static_cast<Eigen::Index>(n), p.feature_dim);
  for (std::size_t v = 0; v < n; ++v)
    for (Eigen::Index f = 0; f < p.feature_dim; ++f)
      g.features(static_cast<Eigen::Index>(v), f) = means(labels[v], f) + p.noise * gauss(rng);
  g.labels = std::move(labels);
  g.split = random_split(n, 0.6, 0.2, p.seed);
  return g;
}

std::vector<GraphSample> generate_graph_regression(std::size_t count, std::size_t min_nodes, std::size_t max_nodes,
                                                   Eigen::Index feature_dim, double edge_prob, std::uint64_t seed) {
  if (count == 0 || min_nodes < 1 || max_nodes < min_nodes || feature_dim < 2)
    throw InvalidArgument("invalid graph regression parameters");
  if (edge_prob < 0 || edge_prob > 1) throw InvalidArgument("edge probability must lie in [0, 1]");
  Rng rng(stream_key({seed, 0x9a4ULL}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> size(min_nodes, max_nodes);

  std::vector<GraphSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = size(rng);
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v)
        if (unit(rng) < edge_prob) edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    GraphSample s{Graph::from_edges(n, edges, true), Vector::Zero(1)};
    s.graph.features = Matrix::NullaryExpr(static_cast<Eigen::Index>(n), feature_dim,
                                           [&] { return 2.0 * unit(rng) - 1.0; });
    double t = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      double acc = 0.0;
      for (auto u : s.graph.neighbors(static_cast<NodeId>(v))) acc += s.graph.features(u, 1);
      t += s.graph.features(static_cast<Eigen::Index>(v), 0) * acc;
    }
    s.target[0] = t / static_cast<double>(n);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace tgnn
