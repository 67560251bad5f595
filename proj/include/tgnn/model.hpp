#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tgnn/graph.hpp"
#include "tgnn/pooling.hpp"

namespace tgnn {

enum class Task { Node, Graph };

// Which branches each node layer uses. Cp and CpSum use the CP branch; Sum,
// Mean, Max and CpSum use the linear branch with that pooling.
enum class Pooling { Cp, Sum, Mean, Max, CpSum };

std::string_view to_string(Task t) noexcept;
std::string_view to_string(Pooling p) noexcept;
Task task_from_string(std::string_view s);
Pooling pooling_from_string(std::string_view s);

struct ModelConfig {
  Task task = Task::Node;
  Eigen::Index in_dim = 0;
  Eigen::Index hidden = 32;
  Eigen::Index out_dim = 0;  // classes (node task) or target size (graph task)
  int layers = 2;            // node layers; the graph task adds a readout on top
  Eigen::Index rank = 64;
  Eigen::Index readout_rank = 64;
  Pooling pooling = Pooling::CpSum;
  Activation sigma = Activation::Tanh;
  Activation sigma_prime = Activation::Relu;
  Activation sigma_dprime = Activation::Relu;
  double dropout = 0.0;
  std::size_t sample_k = 5;
  bool stabilize_readout = false;
  std::uint64_t seed = 0;

  // Throws InvalidArgument on the first bad field.
  void validate() const;
};

// Stacked combined layers. For the node task the last layer maps to the
// class logits with identity output activations. For the graph task every
// node layer keeps its activations and a CP readout (identity output) pools
// all node embeddings of a graph.
struct TgnnModel {
  ModelConfig config;
  std::vector<CombinedLayer> layers;
  CPLayer readout;  // empty matrices for the node task

  static TgnnModel create(const ModelConfig& config);

  bool has_readout() const noexcept { return readout.w.size() != 0; }
  // Matrices of the active branches, in a fixed order.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
};

// Gradients aligned with TgnnModel::parameters().
using ModelGrads = std::vector<Matrix>;

// Batched intermediates of one node layer; column v belongs to node v.
struct LayerTrace {
  std::vector<std::vector<NodeId>> members;  // inputs to node v's layer
  Matrix input;        // F x N, after dropout
  Matrix mask;         // F x N dropout scale, empty when dropout is off
  Matrix factors;      // R x N, W^T [h_v; 1]
  Matrix product;      // R x N
  Matrix activated;    // R x N
  Matrix pre_output;   // d x N
  Matrix pooled;       // F x N
  Matrix linear_pre;   // d x N
  Matrix output;       // d x N
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  CPCache readout;
};

// Evaluates one node layer on lt.input and lt.members and fills the other
// fields. Errors name `layer_index` and the offending node.
void layer_forward(const CombinedLayer& layer, LayerTrace& lt, std::size_t layer_index = 0);

// Which random streams a forward pass uses. Training passes use the epoch
// number; evaluation uses kEvalEpoch and disables dropout.
struct ForwardMode {
  static constexpr std::uint64_t kEvalEpoch = ~std::uint64_t{0};
  std::uint64_t epoch = kEvalEpoch;
  bool training = false;
  // Distinguishes graphs within one epoch of the graph task.
  std::uint64_t batch_tag = 0;
};

// Per-node logits (C x N). Node v's layer inputs are h_v followed by
// config.sample_k members of N(v) drawn from the stream
// (seed, epoch, batch_tag, layer, node_keys[v]).
Matrix node_forward(const TgnnModel& model, const Graph& g, ForwardMode mode, ForwardTrace* trace = nullptr);

// Prediction for one graph. Node layers use full neighborhoods and the
// readout consumes every node embedding.
Vector graph_forward(const TgnnModel& model, const Graph& g, ForwardMode mode, ForwardTrace* trace = nullptr);

// Gradient of <upstream, output> for the pass recorded in `trace`.
// `upstream` is C x N for the node task and a vector for the graph task.
ModelGrads node_backward(const TgnnModel& model, const ForwardTrace& trace, const Matrix& upstream);
ModelGrads graph_backward(const TgnnModel& model, const ForwardTrace& trace, const Vector& upstream);

// Parameter count of an active layer configuration: (F+1)R + dR for the CP
// branch plus F d for the linear branch.
std::size_t param_count(const CombinedLayer& layer);
std::size_t param_count(const CPLayer& layer);

// Canonical JSON text of a config and its FNV-1a hash.
std::string config_json(const ModelConfig& config);
std::uint64_t config_hash(const ModelConfig& config);

// JSON checkpoint holding the config, a hash of it and every matrix.
void save_model(const TgnnModel& model, const std::string& path);
TgnnModel load_model(const std::string& path);

}  // namespace tgnn
