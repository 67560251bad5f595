#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tgnn/rng.hpp"
#include "tgnn/tensor.hpp"

namespace tgnn {

using NodeId = Eigen::Index;
using Edge = std::pair<NodeId, NodeId>;

struct Split {
  std::vector<NodeId> train, val, test;
};

// Adjacency in CSR form. Every node's neighbor list contains the node itself;
// lists keep the order in which edges were first seen, with the self-loop
// appended last when the input did not contain one.
class Graph {
 public:
  Graph() = default;

  // Builds the adjacency from an edge list over nodes [0, n). With
  // `undirected`, each edge is inserted in both directions. Duplicate edges
  // are dropped.
  static Graph from_edges(std::size_t n, std::span<const Edge> edges, bool undirected = true);

  std::size_t num_nodes() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_edges() const noexcept { return targets_.size(); }
  std::span<const NodeId> neighbors(NodeId v) const;
  std::size_t degree(NodeId v) const { return neighbors(v).size(); }
  std::span<const std::size_t> offsets() const noexcept { return offsets_; }
  std::span<const NodeId> targets() const noexcept { return targets_; }

  Eigen::Index feature_dim() const noexcept { return features.cols(); }
  // 1 + max label, or 0 when unlabeled.
  int num_classes() const noexcept;

  // Throws InvalidArgument describing the first violated invariant.
  void validate() const;

  Matrix features;               // N x F, one row per node
  std::vector<int> labels;       // per-node class id (may be empty)
  Split split;
  std::vector<std::uint64_t> node_keys;  // seeds per-node random streams; defaults to the node index

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> targets_;
};

struct SampleSpec {
  std::size_t k = 5;
  bool with_replacement_on_deficit = true;
  // Use the whole neighborhood instead of sampling (graph-level tasks).
  bool full = false;
  std::uint64_t seed = 0;
};

// Draws spec.k members of N(v) (which includes v). With at least k
// neighbors the draw is without replacement; otherwise every neighbor is
// taken once and the remainder is drawn uniformly with replacement. With
// spec.full the whole list is returned.
std::vector<NodeId> sample_neighborhood(const Graph& g, NodeId v, const SampleSpec& spec, StreamRng& rng);

// Random 60/20/20 style split of [0, n).
Split random_split(std::size_t n, double train_frac, double val_frac, std::uint64_t seed);

struct SbmParams {
  std::size_t classes = 2;
  std::size_t per_class = 200;
  double p_in = 0.05;
  double p_out = 0.005;
  Eigen::Index feature_dim = 8;
  // Class means; when empty each class gets a Gaussian mean with standard
  // deviation `mean_scale` per coordinate.
  Matrix means;
  double mean_scale = 1.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
};

Graph generate_sbm(const SbmParams& params);

// File formats (see README):
//   edges:    "src<TAB>dst" per line, 0-indexed
//   features: CSV, one row per node
//   labels:   CSV "node,label"
//   splits:   three lines of space-separated node ids (train, val, test)
// Blank lines and lines starting with '#' are ignored.
std::vector<Edge> read_edge_list(const std::string& path);
Matrix read_features_csv(const std::string& path);
std::vector<int> read_labels_csv(const std::string& path, std::size_t n);
Split read_splits(const std::string& path);

// Loads a node-classification dataset. An empty splits path leaves the split
// empty.
Graph load_graph(const std::string& edges, const std::string& features, const std::string& labels,
                 const std::string& splits);

// Writes edges.tsv, features.csv, labels.csv and splits.txt into `dir`.
void save_graph(const Graph& g, const std::string& dir);

// Graph-level regression sample.
struct GraphSample {
  Graph graph;
  Vector target;
};

// JSON lines, one graph per line:
//   {"edges": [[s, d], ...], "features": [[...], ...], "target": [...]}
std::vector<GraphSample> read_graph_dataset(const std::string& path);
void write_graph_dataset(const std::vector<GraphSample>& graphs, const std::string& path);

// Small random graphs whose target mixes features multiplicatively:
// target = mean over v of x_v[0] * sum_{u in N(v)} x_u[1].
std::vector<GraphSample> generate_graph_regression(std::size_t count, std::size_t min_nodes, std::size_t max_nodes,
                                                   Eigen::Index feature_dim, double edge_prob, std::uint64_t seed);

}  // namespace tgnn
