#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "tgnn/graph.hpp"
#include "tgnn/model.hpp"

namespace tgnn {

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // same shape as the prediction
};

// Mean softmax cross-entropy over the columns of `logits` (C x B).
LossResult cross_entropy(const Matrix& logits, std::span<const int> labels);
// Mean absolute error over every entry.
LossResult mae(const Matrix& pred, const Matrix& target);
// Fraction of columns whose argmax (lowest index on ties) equals the label.
double accuracy(const Matrix& logits, std::span<const int> labels);

struct AdamOptions {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m, v;
  long step = 0;
};

// One Adam update with decoupled weight decay:
//   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
// Throws NumericalError on a non-finite gradient.
void adam_step(const std::vector<Matrix*>& params, const ModelGrads& grads, AdamState& state, const AdamOptions& opt);

struct TrainConfig {
  double lr = 0.005;
  double weight_decay = 5e-5;
  double dropout = 0.0;
  Eigen::Index rank = 64;
  Eigen::Index hidden = 32;
  int layers = 2;
  int epochs = 200;
  int patience = 100;
  std::uint64_t seed = 0;
  std::size_t sample_k = 5;
  Pooling pooling = Pooling::CpSum;
  Eigen::Index readout_rank = 64;
  bool stabilize_readout = false;
  std::size_t batch_size = 32;  // graphs per optimizer step (graph task)

  void validate() const;
  ModelConfig model_config(Task task, Eigen::Index in_dim, Eigen::Index out_dim) const;
};

// JSON object with the TrainConfig field names ("pooling" by name). Keys that
// are present override `base`; unknown keys and wrong types are
// InvalidArgument, malformed text is a ParseError against `source`.
TrainConfig train_config_from_json(const std::string& text, const TrainConfig& base,
                                   const std::string& source = "<config>");
std::string train_config_json(const TrainConfig& config);

// Learning rate, weight decay, dropout and rank of a reference dataset row
// ("cora", "citeseer", "pubmed", "products", "arxiv", "proteins", "zinc",
// "cifar10", "mnist", "molhiv"). Other fields keep their defaults.
TrainConfig preset(std::string_view name);
std::vector<std::string> preset_names();

struct EpochMetrics {
  int epoch = 0;
  double objective = 0.0;     // stochastic training loss that was optimized
  double train_loss = 0.0;    // evaluation-mode loss on the training split
  double val_loss = 0.0;
  double train_metric = 0.0;  // accuracy (node task) or MAE (graph task)
  double val_metric = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  TgnnModel model;  // parameters of the best validation epoch
  std::vector<EpochMetrics> history;
  std::string metric;  // "acc" or "mae"
  int best_epoch = 0;
  double best_val_metric = 0.0;
  double test_metric = 0.0;
  double test_loss = 0.0;
  bool stopped_early = false;
  double seconds = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double metric = 0.0;
};

// Evaluation-mode loss and accuracy over `nodes`.
EvalResult evaluate_node(const TgnnModel& model, const Graph& g, std::span<const NodeId> nodes);
// Evaluation-mode MAE over the listed graphs.
EvalResult evaluate_graph(const TgnnModel& model, const std::vector<GraphSample>& data,
                          std::span<const NodeId> indices);

// Full-batch node classification with early stopping on validation accuracy
// (ties broken by lower validation loss).
TrainResult train_node(const Graph& g, const TrainConfig& config);
// Mini-batch graph regression with early stopping on validation MAE.
TrainResult train_graph(const std::vector<GraphSample>& data, const Split& split, const TrainConfig& config);

// Metrics as JSON lines, one epoch per line, and a summary object.
void write_metrics_jsonl(const TrainResult& result, const std::string& path);
std::string summary_json(const TrainResult& result, const TrainConfig& config);

// Central differences of f over every parameter entry, compared with
// `analytic`. Returns the largest |a - b| / max(|a|, |b|, 1e-8).
double finite_diff_check(const std::function<double()>& f, const std::vector<Matrix*>& params,
                         const ModelGrads& analytic, double h = 1e-5);

}  // namespace tgnn
