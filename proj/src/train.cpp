#include "tgnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "tgnn/error.hpp"

namespace tgnn {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix gather_columns(const Matrix& m, std::span<const NodeId> cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

std::vector<int> gather_labels(const Graph& g, std::span<const NodeId> nodes) {
  std::vector<int> out;
  out.reserve(nodes.size());
  for (auto v : nodes) out.push_back(g.labels.at(static_cast<std::size_t>(v)));
  return out;
}

struct Snapshot {
  std::vector<Matrix> params;
  static Snapshot of(const TgnnModel& m) {
    Snapshot s;
    for (const Matrix* p : m.parameters()) s.params.push_back(*p);
    return s;
  }
  void restore(TgnnModel& m) const {
    auto ps = m.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) *ps[i] = params[i];
  }
};

ModelGrads zero_grads(const TgnnModel& model) {
  ModelGrads g;
  for (const Matrix* p : model.parameters()) g.push_back(Matrix::Zero(p->rows(), p->cols()));
  return g;
}

[[noreturn]] void rethrow_with_epoch(int epoch, const NumericalError& e) {
  throw NumericalError("epoch " + std::to_string(epoch) + ": " + e.what());
}

json config_to_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"dropout", c.dropout},
              {"rank", c.rank},
              {"hidden", c.hidden},
              {"layers", c.layers},
              {"epochs", c.epochs},
              {"patience", c.patience},
              {"seed", c.seed},
              {"sample_k", c.sample_k},
              {"pooling", to_string(c.pooling)},
              {"readout_rank", c.readout_rank},
              {"stabilize_readout", c.stabilize_readout},
              {"batch_size", c.batch_size}};
}

}  // namespace

LossResult cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (logits.cols() == 0) throw InvalidArgument("cross_entropy: empty batch");
  if (static_cast<std::size_t>(logits.cols()) != labels.size())
    throw InvalidArgument("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(logits.cols()) + " columns");
  const auto b = static_cast<double>(logits.cols());
  LossResult r;
  r.grad.resize(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    if (y < 0 || y >= logits.rows())
      throw InvalidArgument("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(logits.rows()) + ")");
    const double mx = logits.col(j).maxCoeff();
    const Vector e = (logits.col(j).array() - mx).exp();
    const double z = e.sum();
    r.loss += std::log(z) - (logits(y, j) - mx);
    r.grad.col(j) = e / z;
    r.grad(y, j) -= 1.0;
  }
  r.loss /= b;
  r.grad /= b;
  return r;
}

LossResult mae(const Matrix& pred, const Matrix& target) {
  if (pred.size() == 0) throw InvalidArgument("mae: empty batch");
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw InvalidArgument("mae: prediction and target shapes differ");
  const auto n = static_cast<double>(pred.size());
  LossResult r;
  const Matrix diff = pred - target;
  r.loss = diff.cwiseAbs().sum() / n;
  r.grad = diff.unaryExpr([n](double d) { return (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) / n; });
  return r;
}

double accuracy(const Matrix& logits, std::span<const int> labels) {
  if (logits.cols() == 0) throw InvalidArgument("accuracy: empty batch");
  if (static_cast<std::size_t>(logits.cols()) != labels.size()) throw InvalidArgument("accuracy: label count mismatch");
  std::size_t correct = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Eigen::Index best = 0;
    logits.col(j).maxCoeff(&best);
    correct += best == labels[static_cast<std::size_t>(j)];
  }
  return static_cast<double>(correct) / static_cast<double>(logits.cols());
}

void adam_step(const std::vector<Matrix*>& params, const ModelGrads& grads, AdamState& state, const AdamOptions& opt) {
  if (params.size() != grads.size()) throw InvalidArgument("adam_step: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) throw InvalidArgument("adam_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i]->rows() || grads[i].cols() != params[i]->cols())
      throw InvalidArgument("adam_step: gradient " + std::to_string(i) + " has the wrong shape");
    if (!grads[i].allFinite()) throw NumericalError("adam_step: non-finite gradient for parameter " + std::to_string(i));
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = opt.beta1 * m + (1.0 - opt.beta1) * grads[i];
    v = opt.beta2 * v + (1.0 - opt.beta2) * grads[i].cwiseProduct(grads[i]);
    Matrix& p = *params[i];
    p.array() -= opt.lr * ((m.array() / c1) / ((v.array() / c2).sqrt() + opt.eps) + opt.weight_decay * p.array());
  }
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("learning rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight decay must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must lie in [0, 1)");
  if (rank < 1 || readout_rank < 1) throw InvalidArgument("rank must be at least 1");
  if (hidden < 1) throw InvalidArgument("hidden dimension must be positive");
  if (layers < 1) throw InvalidArgument("at least one layer is required");
  if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
  if (patience < 1) throw InvalidArgument("patience must be at least 1");
  if (sample_k < 1) throw InvalidArgument("sample size must be at least 1");
  if (batch_size < 1) throw InvalidArgument("batch size must be at least 1");
}

ModelConfig TrainConfig::model_config(Task task, Eigen::Index in_dim, Eigen::Index out_dim) const {
  ModelConfig m;
  m.task = task;
  m.in_dim = in_dim;
  m.out_dim = out_dim;
  m.hidden = hidden;
  m.layers = layers;
  m.rank = rank;
  m.readout_rank = readout_rank;
  m.pooling = pooling;
  m.dropout = dropout;
  m.sample_k = sample_k;
  m.stabilize_readout = stabilize_readout;
  m.seed = seed;
  return m;
}

namespace {

struct PresetRow {
  const char* name;
  double lr, wd, dropout;
  Eigen::Index rank;
};

constexpr PresetRow kPresets[] = {
    {"cora", 0.001, 5e-5, 0.9, 512},     {"citeseer", 0.001, 1e-4, 0.0, 512}, {"pubmed", 0.005, 5e-4, 0.1, 512},
    {"products", 0.001, 5e-5, 0.3, 128}, {"arxiv", 0.003, 5e-5, 0.0, 512},    {"proteins", 0.0005, 5e-4, 0.9, 50},
    {"zinc", 0.005, 5e-4, 0.0, 100},     {"cifar10", 0.005, 1e-4, 0.0, 100},  {"mnist", 0.005, 5e-5, 0.0, 75},
    {"molhiv", 0.001, 5e-5, 0.8, 100},
};

}  // namespace

TrainConfig train_config_from_json(const std::string& text, const TrainConfig& base, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = text.substr(0, std::min(text.size(), e.byte));
    throw ParseError(source, static_cast<std::size_t>(std::count(upto.begin(), upto.end(), '\n')) + 1,
                     "invalid JSON");
  }
  if (!j.is_object()) throw InvalidArgument(source + ": config must be a JSON object");
  TrainConfig c = base;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr") c.lr = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "rank") c.rank = value.get<Eigen::Index>();
      else if (key == "hidden") c.hidden = value.get<Eigen::Index>();
      else if (key == "layers") c.layers = value.get<int>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "patience") c.patience = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "sample_k") c.sample_k = value.get<std::size_t>();
      else if (key == "pooling") c.pooling = pooling_from_string(value.get<std::string>());
      else if (key == "readout_rank") c.readout_rank = value.get<Eigen::Index>();
      else if (key == "stabilize_readout") c.stabilize_readout = value.get<bool>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else throw InvalidArgument(source + ": unknown config key '" + key + "'");
    } catch (const json::type_error&) {
      throw InvalidArgument(source + ": config key '" + key + "' has the wrong type");
    }
  }
  return c;
}

std::string train_config_json(const TrainConfig& config) { return config_to_json(config).dump(); }

TrainConfig preset(std::string_view name) {
  for (const auto& row : kPresets) {
    if (name != row.name) continue;
    TrainConfig c;
    c.lr = row.lr;
    c.weight_decay = row.wd;
    c.dropout = row.dropout;
    c.rank = row.rank;
    c.readout_rank = row.rank;
    return c;
  }
  throw InvalidArgument("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& row : kPresets) out.emplace_back(row.name);
  return out;
}

EvalResult evaluate_node(const TgnnModel& model, const Graph& g, std::span<const NodeId> nodes) {
  const Matrix logits = gather_columns(node_forward(model, g, ForwardMode{}), nodes);
  const auto labels = gather_labels(g, nodes);
  return {cross_entropy(logits, labels).loss, accuracy(logits, labels)};
}

EvalResult evaluate_graph(const TgnnModel& model, const std::vector<GraphSample>& data,
                          std::span<const NodeId> indices) {
  if (indices.empty()) throw InvalidArgument("evaluate_graph: no graphs selected");
  const Eigen::Index d = model.config.out_dim;
  Matrix pred(d, static_cast<Eigen::Index>(indices.size()));
  Matrix target(d, pred.cols());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const auto& s = data.at(static_cast<std::size_t>(indices[j]));
    ForwardMode mode;
    mode.batch_tag = static_cast<std::uint64_t>(indices[j]);
    pred.col(static_cast<Eigen::Index>(j)) = graph_forward(model, s.graph, mode);
    target.col(static_cast<Eigen::Index>(j)) = s.target;
  }
  const double loss = mae(pred, target).loss;
  return {loss, loss};
}

TrainResult train_node(const Graph& g, const TrainConfig& config) {
  config.validate();
  g.validate();
  if (g.split.train.empty() || g.split.val.empty() || g.split.test.empty())
    throw InvalidArgument("node training needs non-empty train, val and test splits");
  if (g.labels.size() != g.num_nodes()) throw InvalidArgument("node training needs a label per node");

  const auto t_start = Clock::now();
  TrainResult result;
  result.metric = "acc";
  result.model = TgnnModel::create(config.model_config(Task::Node, g.feature_dim(), g.num_classes()));
  TgnnModel& model = result.model;
  const auto train_labels = gather_labels(g, g.split.train);
  const auto val_labels = gather_labels(g, g.split.val);

  AdamState adam;
  const AdamOptions opt{config.lr, config.weight_decay};
  Snapshot best = Snapshot::of(model);
  double best_val_loss = 0.0;
  bool have_best = false;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    EpochMetrics em;
    em.epoch = epoch;
    try {
      ForwardTrace trace;
      const Matrix logits = node_forward(model, g, ForwardMode{static_cast<std::uint64_t>(epoch), true}, &trace);
      const LossResult lr = cross_entropy(gather_columns(logits, g.split.train), train_labels);
      if (!std::isfinite(lr.loss)) throw NumericalError("non-finite training loss");
      em.objective = lr.loss;
      Matrix upstream = Matrix::Zero(logits.rows(), logits.cols());
      for (std::size_t j = 0; j < g.split.train.size(); ++j)
        upstream.col(g.split.train[j]) += lr.grad.col(static_cast<Eigen::Index>(j));
      adam_step(model.parameters(), node_backward(model, trace, upstream), adam, opt);

      const Matrix eval_logits = node_forward(model, g, ForwardMode{});
      const Matrix train_logits = gather_columns(eval_logits, g.split.train);
      const Matrix val_logits = gather_columns(eval_logits, g.split.val);
      em.train_loss = cross_entropy(train_logits, train_labels).loss;
      em.train_metric = accuracy(train_logits, train_labels);
      em.val_loss = cross_entropy(val_logits, val_labels).loss;
      em.val_metric = accuracy(val_logits, val_labels);
    } catch (const NumericalError& e) {
      rethrow_with_epoch(epoch, e);
    }
    em.seconds = seconds_since(t0);
    result.history.push_back(em);

    if (!have_best || em.val_metric > result.best_val_metric ||
        (em.val_metric == result.best_val_metric && em.val_loss < best_val_loss)) {
      have_best = true;
      result.best_epoch = epoch;
      result.best_val_metric = em.val_metric;
      best_val_loss = em.val_loss;
      best = Snapshot::of(model);
    } else if (epoch - result.best_epoch >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }

  best.restore(model);
  if (!have_best) result.best_val_metric = evaluate_node(model, g, g.split.val).metric;
  const EvalResult test = evaluate_node(model, g, g.split.test);
  result.test_metric = test.metric;
  result.test_loss = test.loss;
  result.seconds = seconds_since(t_start);
  return result;
}

TrainResult train_graph(const std::vector<GraphSample>& data, const Split& split, const TrainConfig& config) {
  config.validate();
  if (data.empty()) throw InvalidArgument("graph training needs at least one graph");
  if (split.train.empty() || split.val.empty() || split.test.empty())
    throw InvalidArgument("graph training needs non-empty train, val and test splits");
  for (const auto* part : {&split.train, &split.val, &split.test})
    for (auto i : *part)
      if (i < 0 || static_cast<std::size_t>(i) >= data.size())
        throw InvalidArgument("graph split index " + std::to_string(i) + " out of range");
  const Eigen::Index in_dim = data.front().graph.feature_dim();
  const Eigen::Index out_dim = data.front().target.size();

  const auto t_start = Clock::now();
  TrainResult result;
  result.metric = "mae";
  result.model = TgnnModel::create(config.model_config(Task::Graph, in_dim, out_dim));
  TgnnModel& model = result.model;

  AdamState adam;
  const AdamOptions opt{config.lr, config.weight_decay};
  Snapshot best = Snapshot::of(model);
  bool have_best = false;
  std::vector<NodeId> order(split.train);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    EpochMetrics em;
    em.epoch = epoch;
    try {
      Rng shuffle_rng(stream_key({config.seed, static_cast<std::uint64_t>(epoch), 0x5f0ffULL}));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      double objective = 0.0;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        const double batch = static_cast<double>(stop - start);
        ModelGrads total = zero_grads(model);
        for (std::size_t j = start; j < stop; ++j) {
          const auto idx = static_cast<std::size_t>(order[j]);
          ForwardTrace trace;
          ForwardMode mode{static_cast<std::uint64_t>(epoch), true, idx};
          const Vector pred = graph_forward(model, data[idx].graph, mode, &trace);
          const LossResult lr = mae(pred, data[idx].target);
          if (!std::isfinite(lr.loss)) throw NumericalError("non-finite training loss on graph " + std::to_string(idx));
          objective += lr.loss;
          const ModelGrads g = graph_backward(model, trace, lr.grad.col(0) / batch);
          for (std::size_t p = 0; p < g.size(); ++p) total[p] += g[p];
        }
        adam_step(model.parameters(), total, adam, opt);
      }
      em.objective = objective / static_cast<double>(order.size());
      const EvalResult tr = evaluate_graph(model, data, split.train);
      const EvalResult va = evaluate_graph(model, data, split.val);
      em.train_loss = tr.loss;
      em.train_metric = tr.metric;
      em.val_loss = va.loss;
      em.val_metric = va.metric;
    } catch (const NumericalError& e) {
      rethrow_with_epoch(epoch, e);
    }
    em.seconds = seconds_since(t0);
    result.history.push_back(em);

    if (!have_best || em.val_metric < result.best_val_metric) {
      have_best = true;
      result.best_epoch = epoch;
      result.best_val_metric = em.val_metric;
      best = Snapshot::of(model);
    } else if (epoch - result.best_epoch >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }

  best.restore(model);
  if (!have_best) result.best_val_metric = evaluate_graph(model, data, split.val).metric;
  const EvalResult test = evaluate_graph(model, data, split.test);
  result.test_metric = test.metric;
  result.test_loss = test.loss;
  result.seconds = seconds_since(t_start);
  return result;
}

void write_metrics_jsonl(const TrainResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::string m = result.metric;
  for (const auto& e : result.history) {
    const json j{{"epoch", e.epoch},         {"objective", e.objective},   {"train_loss", e.train_loss},
                 {"val_loss", e.val_loss},   {"train_" + m, e.train_metric}, {"val_" + m, e.val_metric},
                 {"seconds", e.seconds}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::string summary_json(const TrainResult& result, const TrainConfig& config) {
  const std::string m = result.metric;
  const bool node = result.model.config.task == Task::Node;
  json j{{"task", to_string(result.model.config.task)},
         {"metric", m},
         {"best_epoch", result.best_epoch},
         {"epochs_run", result.history.size()},
         {"stopped_early", result.stopped_early},
         {"val_" + m, result.best_val_metric},
         {"test_" + m, result.test_metric},
         {"test_loss", result.test_loss},
         {"param_count", result.model.parameter_count()},
         {"seconds", result.seconds},
         {"config", config_to_json(config)},
         {"model_config", json::parse(config_json(result.model.config))},
         {"optimizer",
          {{"name", "adam"}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}, {"weight_decay", "decoupled"}}},
         {"early_stopping",
          {{"monitor", "val_" + m},
           {"mode", node ? "max" : "min"},
           {"tie_break", node ? "lower val_loss" : "earlier epoch"},
           {"patience", config.patience},
           {"restore_best", true}}}};
  return j.dump(2);
}

double finite_diff_check(const std::function<double()>& f, const std::vector<Matrix*>& params,
                         const ModelGrads& analytic, double h) {
  if (params.size() != analytic.size()) throw InvalidArgument("finite_diff_check: gradient count mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    if (analytic[i].rows() != p.rows() || analytic[i].cols() != p.cols())
      throw InvalidArgument("finite_diff_check: gradient " + std::to_string(i) + " has the wrong shape");
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double saved = p.data()[k];
      p.data()[k] = saved + h;
      const double up = f();
      p.data()[k] = saved - h;
      const double down = f();
      p.data()[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i].data()[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace tgnn
