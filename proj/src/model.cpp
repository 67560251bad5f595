#include "tgnn/model.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "tgnn/error.hpp"

namespace tgnn {
namespace {

using nlohmann::json;

constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kReadoutTag = 0x2ead;

bool uses_cp(Pooling p) { return p == Pooling::Cp || p == Pooling::CpSum; }
bool uses_linear(Pooling p) { return p != Pooling::Cp; }

PoolKind linear_kind(Pooling p) {
  if (p == Pooling::Mean) return PoolKind::Mean;
  if (p == Pooling::Max) return PoolKind::Max;
  return PoolKind::Sum;
}

Matrix apply(Activation a, const Matrix& x) {
  return x.unaryExpr([a](double v) { return activate(a, v); });
}

Matrix chain(Activation a, const Matrix& x, const Matrix& y, const Matrix& upstream) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, j) = upstream(i, j) * activate_derivative(a, x(i, j), y(i, j));
  return out;
}

void check_column(const Matrix& m, Eigen::Index v, std::size_t layer, const char* stage) {
  if (!m.col(v).allFinite())
    throw NumericalError("non-finite " + std::string(stage) + " at layer " + std::to_string(layer) + ", node " +
                         std::to_string(v));
}

}  // namespace

void layer_forward(const CombinedLayer& layer, LayerTrace& lt, std::size_t index) {
  if (lt.members.size() != static_cast<std::size_t>(lt.input.cols()))
    throw InvalidArgument("layer_forward: one member list per input column is required");
  const Eigen::Index n = lt.input.cols();
  const Eigen::Index f = lt.input.rows();
  if (f != layer.in_dim())
    throw InvalidArgument("layer " + std::to_string(index) + ": input dimension " + std::to_string(f) +
                          ", expected " + std::to_string(layer.in_dim()));
  for (const auto& mem : lt.members) {
    if (mem.empty()) throw InvalidArgument("layer " + std::to_string(index) + ": empty member list");
    for (auto u : mem)
      if (u < 0 || u >= n) throw InvalidArgument("layer " + std::to_string(index) + ": member index out of range");
  }
  lt.output = Matrix::Zero(layer.out_dim(), n);

  if (layer.use_cp) {
    const CPLayer& cp = layer.cp;
    const Matrix wt = cp.w.transpose();
    lt.factors.resize(cp.rank(), n);
    for (Eigen::Index v = 0; v < n; ++v) {
      detail::ordered_gemv(wt.leftCols(f), lt.input.col(v), lt.factors.col(v));
      lt.factors.col(v) += wt.col(f);
    }
    if (cp.clamp_factors) lt.factors = lt.factors.array().tanh().matrix();
    lt.product.resize(cp.rank(), n);
    for (Eigen::Index v = 0; v < n; ++v) {
      detail::column_product(lt.factors, lt.members[static_cast<std::size_t>(v)], lt.product.col(v));
      check_column(lt.product, v, index, "CP product");
    }
    lt.activated = apply(cp.sigma, lt.product);
    lt.pre_output.resize(cp.out_dim(), n);
    for (Eigen::Index v = 0; v < n; ++v) {
      detail::ordered_gemv(cp.m, lt.activated.col(v), lt.pre_output.col(v));
      check_column(lt.pre_output, v, index, "CP output projection");
    }
    lt.output += apply(cp.sigma_prime, lt.pre_output);
  }

  if (layer.use_linear) {
    const Matrix w2t = layer.w2.transpose();
    lt.pooled.resize(f, n);
    lt.linear_pre.resize(layer.out_dim(), n);
    Matrix gathered;
    for (Eigen::Index v = 0; v < n; ++v) {
      const auto& mem = lt.members[static_cast<std::size_t>(v)];
      gathered.resize(f, static_cast<Eigen::Index>(mem.size()));
      for (std::size_t j = 0; j < mem.size(); ++j) gathered.col(static_cast<Eigen::Index>(j)) = lt.input.col(mem[j]);
      lt.pooled.col(v) = baseline_pool(layer.linear_pool, gathered);
      detail::ordered_gemv(w2t, lt.pooled.col(v), lt.linear_pre.col(v));
    }
    lt.output += apply(layer.sigma_dprime, lt.linear_pre);
  }
  for (Eigen::Index v = 0; v < n; ++v) check_column(lt.output, v, index, "layer output");
}

namespace {

struct LayerGrads {
  Matrix d_w, d_m, d_w2;
};

// Returns the gradient with respect to the layer input before dropout.
Matrix layer_backward(const CombinedLayer& layer, const LayerTrace& lt, const Matrix& d_out, bool need_input,
                      LayerGrads& g) {
  const Eigen::Index n = lt.input.cols();
  const Eigen::Index f = lt.input.rows();
  Matrix d_in = need_input ? Matrix::Zero(f, n) : Matrix();

  if (layer.use_cp) {
    const CPLayer& cp = layer.cp;
    const Matrix cp_out = apply(cp.sigma_prime, lt.pre_output);
    const Matrix d_pre = chain(cp.sigma_prime, lt.pre_output, cp_out, d_out);
    g.d_m.noalias() = d_pre * lt.activated.transpose();
    const Matrix d_act = cp.m.transpose() * d_pre;
    const Matrix d_prod = chain(cp.sigma, lt.product, lt.activated, d_act);
    Matrix d_factors = Matrix::Zero(cp.rank(), n);
    Matrix scratch;
    Vector col;
    for (Eigen::Index v = 0; v < n; ++v) {
      col = d_prod.col(v);
      detail::column_product_backward(lt.factors, lt.members[static_cast<std::size_t>(v)], col, d_factors, scratch);
    }
    if (cp.clamp_factors) d_factors.array() *= 1.0 - lt.factors.array().square();
    g.d_w.resize(f + 1, cp.rank());
    g.d_w.topRows(f).noalias() = lt.input * d_factors.transpose();
    g.d_w.row(f) = d_factors.rowwise().sum().transpose();
    if (need_input) d_in.noalias() += cp.w.topRows(f) * d_factors;
  }

  if (layer.use_linear) {
    const Matrix lin_out = apply(layer.sigma_dprime, lt.linear_pre);
    const Matrix d_lin = chain(layer.sigma_dprime, lt.linear_pre, lin_out, d_out);
    g.d_w2.noalias() = lt.pooled * d_lin.transpose();
    if (need_input) {
      const Matrix d_pooled = layer.w2 * d_lin;
      for (Eigen::Index v = 0; v < n; ++v) {
        const auto& mem = lt.members[static_cast<std::size_t>(v)];
        switch (layer.linear_pool) {
          case PoolKind::Sum:
            for (auto u : mem) d_in.col(u) += d_pooled.col(v);
            break;
          case PoolKind::Mean: {
            const double scale = 1.0 / static_cast<double>(mem.size());
            for (auto u : mem) d_in.col(u) += scale * d_pooled.col(v);
            break;
          }
          case PoolKind::Max:
            for (Eigen::Index r = 0; r < f; ++r) {
              NodeId best = mem.front();
              for (auto u : mem)
                if (lt.input(r, u) > lt.input(r, best)) best = u;
              d_in(r, best) += d_pooled(r, v);
            }
            break;
        }
      }
    }
  }
  if (need_input && lt.mask.size()) d_in.array() *= lt.mask.array();
  return d_in;
}

void append_grads(const CombinedLayer& layer, LayerGrads& g, ModelGrads& out) {
  if (layer.use_cp) {
    out.push_back(std::move(g.d_w));
    out.push_back(std::move(g.d_m));
  }
  if (layer.use_linear) out.push_back(std::move(g.d_w2));
}

// Runs every node layer on `h` (F x N), with `members_of(layer, v, rng)`
// supplying node v's inputs.
template <class Members>
Matrix run_layers(const TgnnModel& model, const Graph& g, ForwardMode mode, ForwardTrace& trace,
                  Members&& members_of) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  if (n == 0) throw InvalidArgument("graph has no nodes");
  if (g.feature_dim() != model.config.in_dim)
    throw InvalidArgument("feature matrix is " + std::to_string(n) + " x " + std::to_string(g.feature_dim()) +
                          " but layer0.w expects " + std::to_string(model.config.in_dim) + " features");
  if (g.features.rows() != n)
    throw InvalidArgument("feature matrix has " + std::to_string(g.features.rows()) + " rows for " +
                          std::to_string(n) + " nodes");
  if (g.node_keys.size() != g.num_nodes()) throw InvalidArgument("node key count does not match node count");

  const double p = model.config.dropout;
  const bool drop = mode.training && p > 0.0;
  trace.layers.assign(model.layers.size(), LayerTrace{});
  Matrix h = g.features.transpose();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    LayerTrace& lt = trace.layers[l];
    lt.members.resize(static_cast<std::size_t>(n));
    if (drop) lt.mask.resize(h.rows(), n);
    for (Eigen::Index v = 0; v < n; ++v) {
      StreamRng rng({model.config.seed, mode.epoch, mode.batch_tag, l, g.node_keys[static_cast<std::size_t>(v)]});
      lt.members[static_cast<std::size_t>(v)] = members_of(l, v, rng);
      if (drop)
        for (Eigen::Index r = 0; r < h.rows(); ++r) lt.mask(r, v) = rng.uniform() < p ? 0.0 : 1.0 / (1.0 - p);
    }
    lt.input = drop ? Matrix(h.cwiseProduct(lt.mask)) : h;
    layer_forward(model.layers[l], lt, l);
    h = lt.output;
  }
  return h;
}

ModelGrads backward_layers(const TgnnModel& model, const ForwardTrace& trace, Matrix d_out, ModelGrads tail) {
  if (trace.layers.size() != model.layers.size()) throw InvalidArgument("trace does not match the model");
  std::vector<LayerGrads> per_layer(model.layers.size());
  for (std::size_t l = model.layers.size(); l-- > 0;)
    d_out = layer_backward(model.layers[l], trace.layers[l], d_out, l > 0, per_layer[l]);
  ModelGrads out;
  for (std::size_t l = 0; l < model.layers.size(); ++l) append_grads(model.layers[l], per_layer[l], out);
  for (auto& m : tail) out.push_back(std::move(m));
  return out;
}

json matrix_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j, const std::string& name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
    throw InvalidArgument("checkpoint matrix '" + name + "' has inconsistent size");
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

json to_json_value(const ModelConfig& c) {
  return json{{"task", to_string(c.task)},
              {"in_dim", c.in_dim},
              {"hidden", c.hidden},
              {"out_dim", c.out_dim},
              {"layers", c.layers},
              {"rank", c.rank},
              {"readout_rank", c.readout_rank},
              {"pooling", to_string(c.pooling)},
              {"sigma", to_string(c.sigma)},
              {"sigma_prime", to_string(c.sigma_prime)},
              {"sigma_dprime", to_string(c.sigma_dprime)},
              {"dropout", c.dropout},
              {"sample_k", c.sample_k},
              {"stabilize_readout", c.stabilize_readout},
              {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.task = task_from_string(j.at("task").get<std::string>());
  c.in_dim = j.at("in_dim").get<Eigen::Index>();
  c.hidden = j.at("hidden").get<Eigen::Index>();
  c.out_dim = j.at("out_dim").get<Eigen::Index>();
  c.layers = j.at("layers").get<int>();
  c.rank = j.at("rank").get<Eigen::Index>();
  c.readout_rank = j.at("readout_rank").get<Eigen::Index>();
  c.pooling = pooling_from_string(j.at("pooling").get<std::string>());
  c.sigma = activation_from_string(j.at("sigma").get<std::string>());
  c.sigma_prime = activation_from_string(j.at("sigma_prime").get<std::string>());
  c.sigma_dprime = activation_from_string(j.at("sigma_dprime").get<std::string>());
  c.dropout = j.at("dropout").get<double>();
  c.sample_k = j.at("sample_k").get<std::size_t>();
  c.stabilize_readout = j.at("stabilize_readout").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::string_view to_string(Task t) noexcept { return t == Task::Node ? "node" : "graph"; }

std::string_view to_string(Pooling p) noexcept {
  switch (p) {
    case Pooling::Cp: return "cp";
    case Pooling::Sum: return "sum";
    case Pooling::Mean: return "mean";
    case Pooling::Max: return "max";
    case Pooling::CpSum: return "cp+sum";
  }
  return "?";
}

Task task_from_string(std::string_view s) {
  if (s == "node") return Task::Node;
  if (s == "graph") return Task::Graph;
  throw InvalidArgument("unknown task '" + std::string(s) + "'");
}

Pooling pooling_from_string(std::string_view s) {
  if (s == "cp") return Pooling::Cp;
  if (s == "sum") return Pooling::Sum;
  if (s == "mean") return Pooling::Mean;
  if (s == "max") return Pooling::Max;
  if (s == "cp+sum") return Pooling::CpSum;
  throw InvalidArgument("unknown pooling '" + std::string(s) + "' (expected cp, sum, mean, max or cp+sum)");
}

void ModelConfig::validate() const {
  if (in_dim < 1) throw InvalidArgument("input dimension must be positive");
  if (hidden < 1) throw InvalidArgument("hidden dimension must be positive");
  if (out_dim < 1) throw InvalidArgument("output dimension must be positive");
  if (layers < 1) throw InvalidArgument("at least one layer is required");
  if (rank < 1) throw InvalidArgument("rank must be at least 1");
  if (task == Task::Graph && readout_rank < 1) throw InvalidArgument("readout rank must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must lie in [0, 1)");
  if (task == Task::Node && sample_k < 1) throw InvalidArgument("sample size must be at least 1");
}

TgnnModel TgnnModel::create(const ModelConfig& config) {
  config.validate();
  TgnnModel model;
  model.config = config;
  const bool node = config.task == Task::Node;
  for (int l = 0; l < config.layers; ++l) {
    const bool last = l + 1 == config.layers;
    const Eigen::Index in = l == 0 ? config.in_dim : config.hidden;
    const Eigen::Index out = node && last ? config.out_dim : config.hidden;
    Rng rng(stream_key({config.seed, kInitTag, static_cast<std::uint64_t>(l)}));
    CombinedLayer layer = CombinedLayer::random(in, config.rank, out, rng);
    // Factors start near 1, so the product starts near 1 + sum of the inputs'
    // projections instead of vanishing with the number of inputs. The input
    // rows shrink with the arity to keep that sum in tanh's responsive range.
    layer.cp.w.topRows(in) /= std::sqrt(static_cast<double>(config.sample_k + 1));
    layer.cp.w.row(in).setOnes();
    layer.cp.sigma = config.sigma;
    layer.cp.sigma_prime = node && last ? Activation::Identity : config.sigma_prime;
    layer.sigma_dprime = node && last ? Activation::Identity : config.sigma_dprime;
    layer.linear_pool = linear_kind(config.pooling);
    layer.use_cp = uses_cp(config.pooling);
    layer.use_linear = uses_linear(config.pooling);
    model.layers.push_back(std::move(layer));
  }
  if (!node) {
    Rng rng(stream_key({config.seed, kReadoutTag}));
    model.readout = CPLayer::random(config.hidden, config.readout_rank, config.out_dim, rng);
    model.readout.w.row(config.hidden).setOnes();
    model.readout.sigma = config.sigma;
    model.readout.sigma_prime = Activation::Identity;
    model.readout.clamp_factors = config.stabilize_readout;
  }
  return model;
}

std::vector<const Matrix*> TgnnModel::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto& layer : layers) {
    if (layer.use_cp) {
      out.push_back(&layer.cp.w);
      out.push_back(&layer.cp.m);
    }
    if (layer.use_linear) out.push_back(&layer.w2);
  }
  if (has_readout()) {
    out.push_back(&readout.w);
    out.push_back(&readout.m);
  }
  return out;
}

std::vector<Matrix*> TgnnModel::parameters() {
  std::vector<Matrix*> out;
  for (const Matrix* p : std::as_const(*this).parameters()) out.push_back(const_cast<Matrix*>(p));
  return out;
}

std::vector<std::string> TgnnModel::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    if (layers[l].use_cp) {
      out.push_back(prefix + "w");
      out.push_back(prefix + "m");
    }
    if (layers[l].use_linear) out.push_back(prefix + "w2");
  }
  if (has_readout()) {
    out.push_back("readout.w");
    out.push_back("readout.m");
  }
  return out;
}

std::size_t TgnnModel::parameter_count() const {
  std::size_t total = 0;
  for (const Matrix* p : parameters()) total += static_cast<std::size_t>(p->size());
  return total;
}

std::size_t param_count(const CPLayer& layer) { return static_cast<std::size_t>(layer.w.size() + layer.m.size()); }

std::size_t param_count(const CombinedLayer& layer) {
  std::size_t total = 0;
  if (layer.use_cp) total += param_count(layer.cp);
  if (layer.use_linear) total += static_cast<std::size_t>(layer.w2.size());
  return total;
}

Matrix node_forward(const TgnnModel& model, const Graph& g, ForwardMode mode, ForwardTrace* trace) {
  if (model.config.task != Task::Node) throw InvalidArgument("node_forward needs a node-task model");
  ForwardTrace local;
  SampleSpec spec;
  spec.k = model.config.sample_k;
  return run_layers(model, g, mode, trace ? *trace : local, [&](std::size_t, Eigen::Index v, StreamRng& rng) {
    std::vector<NodeId> members{v};
    const auto drawn = sample_neighborhood(g, v, spec, rng);
    members.insert(members.end(), drawn.begin(), drawn.end());
    return members;
  });
}

Vector graph_forward(const TgnnModel& model, const Graph& g, ForwardMode mode, ForwardTrace* trace) {
  if (model.config.task != Task::Graph || !model.has_readout())
    throw InvalidArgument("graph_forward needs a graph-task model");
  ForwardTrace local;
  ForwardTrace& t = trace ? *trace : local;
  const Matrix h = run_layers(model, g, mode, t, [&](std::size_t, Eigen::Index v, StreamRng&) {
    const auto nb = g.neighbors(v);
    return std::vector<NodeId>(nb.begin(), nb.end());
  });
  try {
    return cp_forward(model.readout, h, &t.readout);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("graph readout over ") + std::to_string(h.cols()) + " nodes: " + e.what() +
                         " (stabilize_readout squashes the factors)");
  }
}

ModelGrads node_backward(const TgnnModel& model, const ForwardTrace& trace, const Matrix& upstream) {
  if (trace.layers.empty() || upstream.rows() != model.config.out_dim ||
      upstream.cols() != trace.layers.back().output.cols())
    throw InvalidArgument("node_backward: upstream shape does not match the forward pass");
  return backward_layers(model, trace, upstream, {});
}

ModelGrads graph_backward(const TgnnModel& model, const ForwardTrace& trace, const Vector& upstream) {
  if (!model.has_readout()) throw InvalidArgument("graph_backward needs a graph-task model");
  PoolGrads r = cp_backward(model.readout, trace.readout, upstream);
  ModelGrads tail;
  tail.push_back(std::move(r.d_w));
  tail.push_back(std::move(r.d_m));
  return backward_layers(model, trace, std::move(r.d_inputs), std::move(tail));
}

std::string config_json(const ModelConfig& config) { return to_json_value(config).dump(); }

std::uint64_t config_hash(const ModelConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config_json(config)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_model(const TgnnModel& model, const std::string& path) {
  json params = json::object();
  const auto names = model.parameter_names();
  const auto mats = model.parameters();
  for (std::size_t i = 0; i < names.size(); ++i) params[names[i]] = matrix_json(*mats[i]);
  const json j{{"format", "tgnn-model"},
               {"version", 1},
               {"config", to_json_value(model.config)},
               {"config_hash", config_hash(model.config)},
               {"params", params}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump() << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

TgnnModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path, 1, e.what());
  }
  try {
    if (j.at("format") != "tgnn-model") throw InvalidArgument("'" + path + "' is not a model checkpoint");
    if (j.at("version") != 1) throw InvalidArgument("unsupported checkpoint version in '" + path + "'");
    const ModelConfig config = config_from_json(j.at("config"));
    if (j.at("config_hash").get<std::uint64_t>() != config_hash(config))
      throw InvalidArgument("checkpoint '" + path + "' config hash mismatch");
    TgnnModel model = TgnnModel::create(config);
    const auto names = model.parameter_names();
    const auto mats = model.parameters();
    const auto& params = j.at("params");
    if (params.size() != names.size()) throw InvalidArgument("checkpoint '" + path + "' has the wrong parameter set");
    for (std::size_t i = 0; i < names.size(); ++i) {
      Matrix m = matrix_from_json(params.at(names[i]), names[i]);
      if (m.rows() != mats[i]->rows() || m.cols() != mats[i]->cols())
        throw InvalidArgument("checkpoint matrix '" + names[i] + "' has the wrong shape");
      *mats[i] = std::move(m);
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError(path, 1, e.what());
  }
}

}  // namespace tgnn
