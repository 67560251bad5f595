#include "tgnn/tgnn.h"

#include <algorithm>
#include <fstream>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "tgnn/bench.hpp"
#include "tgnn/error.hpp"
#include "tgnn/graph.hpp"
#include "tgnn/model.hpp"
#include "tgnn/train.hpp"
#include "tgnn/verify.hpp"

struct tgnn_graph {
  tgnn::Graph g;
};

struct tgnn_dataset {
  std::vector<tgnn::GraphSample> graphs;
};

struct tgnn_model {
  tgnn::TgnnModel m;
};

namespace {

thread_local std::string last_error;

tgnn_status fail(tgnn_status s, const char* what) {
  last_error = what;
  return s;
}

// Runs fn and maps library exceptions onto status codes.
template <class F>
tgnn_status guarded(F&& fn) {
  try {
    fn();
    return TGNN_OK;
  } catch (const tgnn::ParseError& e) {
    return fail(TGNN_ERR_PARSE, e.what());
  } catch (const tgnn::InvalidArgument& e) {
    return fail(TGNN_ERR_INVALID_ARGUMENT, e.what());
  } catch (const tgnn::CapacityError& e) {
    return fail(TGNN_ERR_CAPACITY, e.what());
  } catch (const tgnn::NumericalError& e) {
    return fail(TGNN_ERR_NUMERICAL, e.what());
  } catch (const tgnn::IoError& e) {
    return fail(TGNN_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(TGNN_ERR_CAPACITY, "out of memory");
  } catch (const std::exception& e) {
    return fail(TGNN_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(TGNN_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* name) {
  if (!p) throw tgnn::InvalidArgument(std::string(name) + " must not be NULL");
}

tgnn::Pooling to_pooling(tgnn_pooling p) {
  switch (p) {
    case TGNN_POOL_CP: return tgnn::Pooling::Cp;
    case TGNN_POOL_SUM: return tgnn::Pooling::Sum;
    case TGNN_POOL_MEAN: return tgnn::Pooling::Mean;
    case TGNN_POOL_MAX: return tgnn::Pooling::Max;
    case TGNN_POOL_CP_SUM: return tgnn::Pooling::CpSum;
  }
  throw tgnn::InvalidArgument("unknown pooling code " + std::to_string(static_cast<int>(p)));
}

tgnn_pooling from_pooling(tgnn::Pooling p) {
  switch (p) {
    case tgnn::Pooling::Cp: return TGNN_POOL_CP;
    case tgnn::Pooling::Sum: return TGNN_POOL_SUM;
    case tgnn::Pooling::Mean: return TGNN_POOL_MEAN;
    case tgnn::Pooling::Max: return TGNN_POOL_MAX;
    case tgnn::Pooling::CpSum: break;
  }
  return TGNN_POOL_CP_SUM;
}

tgnn::TrainConfig to_config(const tgnn_train_config& c) {
  tgnn::TrainConfig t;
  t.lr = c.lr;
  t.weight_decay = c.weight_decay;
  t.dropout = c.dropout;
  t.rank = c.rank;
  t.hidden = c.hidden;
  t.readout_rank = c.readout_rank;
  t.layers = c.layers;
  t.epochs = c.epochs;
  t.patience = c.patience;
  t.seed = c.seed;
  t.sample_k = c.sample_k;
  t.batch_size = c.batch_size;
  t.pooling = to_pooling(c.pooling);
  t.stabilize_readout = c.stabilize_readout != 0;
  return t;
}

void from_config(const tgnn::TrainConfig& t, tgnn_train_config& c) {
  c.lr = t.lr;
  c.weight_decay = t.weight_decay;
  c.dropout = t.dropout;
  c.rank = t.rank;
  c.hidden = t.hidden;
  c.readout_rank = t.readout_rank;
  c.layers = t.layers;
  c.epochs = t.epochs;
  c.patience = t.patience;
  c.seed = t.seed;
  c.sample_k = t.sample_k;
  c.batch_size = t.batch_size;
  c.pooling = from_pooling(t.pooling);
  c.stabilize_readout = t.stabilize_readout ? 1 : 0;
}

std::span<const tgnn::NodeId> split_nodes(const tgnn::Split& s, const std::string& name,
                                          std::vector<tgnn::NodeId>& all, std::size_t n) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  if (name == "all") {
    all.resize(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<tgnn::NodeId>(i);
    return all;
  }
  throw tgnn::InvalidArgument("unknown split '" + name + "' (train, val, test or all)");
}

tgnn::Split dataset_split(std::size_t n, std::uint64_t seed) { return tgnn::random_split(n, 0.6, 0.2, seed); }

void finish_training(const tgnn::TrainResult& r, const tgnn::TrainConfig& config, const char* metrics_path,
                     const char* summary_path, tgnn_model** model_out, tgnn_train_summary* summary) {
  if (metrics_path && *metrics_path) tgnn::write_metrics_jsonl(r, metrics_path);
  if (summary_path && *summary_path) {
    std::ofstream out(summary_path);
    if (!out) throw tgnn::IoError(std::string("cannot open '") + summary_path + "' for writing");
    out << tgnn::summary_json(r, config) << '\n';
    if (!out) throw tgnn::IoError(std::string("failed writing '") + summary_path + "'");
  }
  if (summary) {
    summary->best_epoch = r.best_epoch;
    summary->epochs_run = static_cast<int>(r.history.size());
    summary->stopped_early = r.stopped_early ? 1 : 0;
    summary->best_val_metric = r.best_val_metric;
    summary->test_metric = r.test_metric;
    summary->test_loss = r.test_loss;
    summary->param_count = r.model.parameter_count();
    summary->seconds = r.seconds;
  }
  if (model_out) *model_out = new tgnn_model{r.model};
}

}  // namespace

extern "C" {

const char* tgnn_version(void) { return "0.1.0"; }

const char* tgnn_last_error(void) { return last_error.c_str(); }

const char* tgnn_status_string(tgnn_status status) {
  switch (status) {
    case TGNN_OK: return "ok";
    case TGNN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case TGNN_ERR_CAPACITY: return "capacity exceeded";
    case TGNN_ERR_NUMERICAL: return "numerical error";
    case TGNN_ERR_IO: return "I/O error";
    case TGNN_ERR_PARSE: return "parse error";
    case TGNN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

tgnn_status tgnn_pooling_parse(const char* name, tgnn_pooling* out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    *out = from_pooling(tgnn::pooling_from_string(name));
  });
}

const char* tgnn_pooling_name(tgnn_pooling pooling) {
  switch (pooling) {
    case TGNN_POOL_CP: return "cp";
    case TGNN_POOL_SUM: return "sum";
    case TGNN_POOL_MEAN: return "mean";
    case TGNN_POOL_MAX: return "max";
    case TGNN_POOL_CP_SUM: return "cp+sum";
  }
  return "unknown";
}

void tgnn_sbm_params_default(tgnn_sbm_params* params) {
  if (!params) return;
  const tgnn::SbmParams p;
  params->classes = p.classes;
  params->per_class = p.per_class;
  params->p_in = p.p_in;
  params->p_out = p.p_out;
  params->feature_dim = p.feature_dim;
  params->mean_scale = p.mean_scale;
  params->noise = p.noise;
  params->seed = p.seed;
}

tgnn_status tgnn_graph_load(const char* edges, const char* features, const char* labels, const char* splits,
                            tgnn_graph** out) {
  return guarded([&] {
    require(edges, "edges");
    require(features, "features");
    require(labels, "labels");
    require(out, "out");
    *out = new tgnn_graph{tgnn::load_graph(edges, features, labels, splits ? splits : "")};
  });
}

tgnn_status tgnn_graph_generate_sbm(const tgnn_sbm_params* params, tgnn_graph** out) {
  return guarded([&] {
    require(params, "params");
    require(out, "out");
    tgnn::SbmParams p;
    p.classes = params->classes;
    p.per_class = params->per_class;
    p.p_in = params->p_in;
    p.p_out = params->p_out;
    p.feature_dim = params->feature_dim;
    p.mean_scale = params->mean_scale;
    p.noise = params->noise;
    p.seed = params->seed;
    *out = new tgnn_graph{tgnn::generate_sbm(p)};
  });
}

tgnn_status tgnn_graph_save(const tgnn_graph* graph, const char* dir) {
  return guarded([&] {
    require(graph, "graph");
    require(dir, "dir");
    tgnn::save_graph(graph->g, dir);
  });
}

tgnn_status tgnn_graph_random_split(tgnn_graph* graph, double train_frac, double val_frac, uint64_t seed) {
  return guarded([&] {
    require(graph, "graph");
    graph->g.split = tgnn::random_split(graph->g.num_nodes(), train_frac, val_frac, seed);
  });
}

tgnn_status tgnn_graph_info(const tgnn_graph* graph, size_t* nodes, size_t* edges, int64_t* features, int* classes,
                            size_t* train, size_t* val, size_t* test) {
  return guarded([&] {
    require(graph, "graph");
    const tgnn::Graph& g = graph->g;
    if (nodes) *nodes = g.num_nodes();
    if (edges) *edges = g.num_edges();
    if (features) *features = g.feature_dim();
    if (classes) *classes = g.num_classes();
    if (train) *train = g.split.train.size();
    if (val) *val = g.split.val.size();
    if (test) *test = g.split.test.size();
  });
}

void tgnn_graph_free(tgnn_graph* graph) { delete graph; }

tgnn_status tgnn_dataset_load(const char* path, tgnn_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new tgnn_dataset{tgnn::read_graph_dataset(path)};
  });
}

tgnn_status tgnn_dataset_generate(size_t count, size_t min_nodes, size_t max_nodes, int64_t feature_dim,
                                  double edge_prob, uint64_t seed, tgnn_dataset** out) {
  return guarded([&] {
    require(out, "out");
    *out = new tgnn_dataset{tgnn::generate_graph_regression(count, min_nodes, max_nodes, feature_dim, edge_prob, seed)};
  });
}

tgnn_status tgnn_dataset_save(const tgnn_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "data");
    require(path, "path");
    tgnn::write_graph_dataset(data->graphs, path);
  });
}

tgnn_status tgnn_dataset_info(const tgnn_dataset* data, size_t* graphs, int64_t* features, int64_t* target_dim) {
  return guarded([&] {
    require(data, "data");
    if (graphs) *graphs = data->graphs.size();
    const bool empty = data->graphs.empty();
    if (features) *features = empty ? 0 : data->graphs.front().graph.feature_dim();
    if (target_dim) *target_dim = empty ? 0 : data->graphs.front().target.size();
  });
}

void tgnn_dataset_free(tgnn_dataset* data) { delete data; }

void tgnn_train_config_default(tgnn_train_config* config) {
  if (config) from_config(tgnn::TrainConfig{}, *config);
}

tgnn_status tgnn_train_config_preset(const char* name, tgnn_train_config* config) {
  return guarded([&] {
    require(name, "name");
    require(config, "config");
    from_config(tgnn::preset(name), *config);
  });
}

size_t tgnn_preset_count(void) { return tgnn::preset_names().size(); }

const char* tgnn_preset_name(size_t index) {
  static const std::vector<std::string> names = tgnn::preset_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

tgnn_status tgnn_train_config_from_json(const char* json_text, tgnn_train_config* config) {
  return guarded([&] {
    require(json_text, "json_text");
    require(config, "config");
    from_config(tgnn::train_config_from_json(json_text, to_config(*config)), *config);
  });
}

tgnn_status tgnn_train_config_from_file(const char* path, tgnn_train_config* config) {
  return guarded([&] {
    require(path, "path");
    require(config, "config");
    std::ifstream in(path);
    if (!in) throw tgnn::IoError(std::string("cannot open '") + path + "'");
    std::stringstream text;
    text << in.rdbuf();
    from_config(tgnn::train_config_from_json(text.str(), to_config(*config), path), *config);
  });
}

tgnn_status tgnn_train_node(const tgnn_graph* graph, const tgnn_train_config* config, const char* metrics_path,
                            const char* summary_path, tgnn_model** model_out, tgnn_train_summary* summary) {
  return guarded([&] {
    require(graph, "graph");
    require(config, "config");
    const tgnn::TrainConfig c = to_config(*config);
    finish_training(tgnn::train_node(graph->g, c), c, metrics_path, summary_path, model_out, summary);
  });
}

tgnn_status tgnn_train_graph(const tgnn_dataset* data, const tgnn_train_config* config, const char* metrics_path,
                             const char* summary_path, tgnn_model** model_out, tgnn_train_summary* summary) {
  return guarded([&] {
    require(data, "data");
    require(config, "config");
    const tgnn::TrainConfig c = to_config(*config);
    const tgnn::Split split = dataset_split(data->graphs.size(), c.seed);
    finish_training(tgnn::train_graph(data->graphs, split, c), c, metrics_path, summary_path, model_out, summary);
  });
}

tgnn_status tgnn_model_save(const tgnn_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    tgnn::save_model(model->m, path);
  });
}

tgnn_status tgnn_model_load(const char* path, tgnn_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new tgnn_model{tgnn::load_model(path)};
  });
}

tgnn_status tgnn_model_info(const tgnn_model* model, tgnn_task* task, size_t* param_count, uint64_t* seed) {
  return guarded([&] {
    require(model, "model");
    if (task) *task = model->m.config.task == tgnn::Task::Node ? TGNN_TASK_NODE : TGNN_TASK_GRAPH;
    if (param_count) *param_count = model->m.parameter_count();
    if (seed) *seed = model->m.config.seed;
  });
}

void tgnn_model_free(tgnn_model* model) { delete model; }

tgnn_status tgnn_eval_node(const tgnn_model* model, const tgnn_graph* graph, const char* split, double* loss,
                           double* accuracy) {
  return guarded([&] {
    require(model, "model");
    require(graph, "graph");
    require(split, "split");
    if (model->m.config.task != tgnn::Task::Node) throw tgnn::InvalidArgument("model was trained for the graph task");
    std::vector<tgnn::NodeId> all;
    const auto nodes = split_nodes(graph->g.split, split, all, graph->g.num_nodes());
    if (nodes.empty()) throw tgnn::InvalidArgument(std::string("split '") + split + "' is empty");
    const tgnn::EvalResult r = tgnn::evaluate_node(model->m, graph->g, nodes);
    if (loss) *loss = r.loss;
    if (accuracy) *accuracy = r.metric;
  });
}

tgnn_status tgnn_eval_graph(const tgnn_model* model, const tgnn_dataset* data, const char* split, uint64_t split_seed,
                            double* mae) {
  return guarded([&] {
    require(model, "model");
    require(data, "data");
    require(split, "split");
    if (model->m.config.task != tgnn::Task::Graph) throw tgnn::InvalidArgument("model was trained for the node task");
    std::vector<tgnn::NodeId> all;
    const tgnn::Split s = dataset_split(data->graphs.size(), split_seed);
    const auto idx = split_nodes(s, split, all, data->graphs.size());
    if (idx.empty()) throw tgnn::InvalidArgument(std::string("split '") + split + "' is empty");
    const tgnn::EvalResult r = tgnn::evaluate_graph(model->m, data->graphs, idx);
    if (mae) *mae = r.metric;
  });
}

size_t tgnn_suite_count(void) { return tgnn::suite_names().size(); }

const char* tgnn_suite_name(size_t index) {
  static const std::vector<std::string> names = tgnn::suite_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

tgnn_status tgnn_verify(const char* suite, uint64_t seed, tgnn_suite_callback callback, void* user, int* all_passed) {
  return guarded([&] {
    std::vector<std::string> names = tgnn::suite_names();
    if (suite) {
      if (std::find(names.begin(), names.end(), suite) == names.end())
        throw tgnn::InvalidArgument(std::string("unknown suite '") + suite + "'");
      names = {suite};
    }
    bool ok = true;
    for (const auto& name : names) {
      const tgnn::SuiteReport r = tgnn::run_suite(name, seed);
      ok = ok && r.passed();
      if (!callback) continue;
      std::vector<tgnn_suite_check> checks;
      for (const auto& c : r.checks)
        checks.push_back({c.measure.c_str(), c.value, c.bound, c.lower_bound ? 1 : 0, c.cases, c.passed ? 1 : 0});
      const tgnn_suite_report report{r.name.c_str(), r.passed() ? 1 : 0, r.seconds, checks.data(), checks.size()};
      callback(&report, user);
    }
    if (all_passed) *all_passed = ok ? 1 : 0;
  });
}

void tgnn_bench_options_default(tgnn_bench_options* options) {
  if (!options) return;
  const tgnn::BenchOptions o;
  options->in_dim = o.in_dim;
  options->out_dim = o.out_dim;
  options->nodes = o.nodes;
  options->rank = o.rank;
  options->arity = o.arity;
  options->reps = o.reps;
  options->min_rep_seconds = o.min_rep_seconds;
  options->pooling = from_pooling(o.pooling);
  options->seed = o.seed;
}

tgnn_status tgnn_bench(const tgnn_bench_options* options, const char* variable, const int64_t* grid, size_t grid_size,
                       const char* csv_path, tgnn_bench_point* points_out, double* loglog_slope, int* has_slope) {
  return guarded([&] {
    require(options, "options");
    require(variable, "variable");
    if (grid_size > 0) require(grid, "grid");
    tgnn::BenchOptions o;
    o.in_dim = options->in_dim;
    o.out_dim = options->out_dim;
    o.nodes = options->nodes;
    o.rank = options->rank;
    o.arity = options->arity;
    o.reps = options->reps;
    o.min_rep_seconds = options->min_rep_seconds;
    o.pooling = to_pooling(options->pooling);
    o.seed = options->seed;
    const std::vector<Eigen::Index> values(grid, grid + grid_size);
    const std::string var = variable;
    tgnn::BenchResult r;
    if (var == "rank") r = tgnn::bench_rank_scaling(o, values);
    else if (var == "nodes") r = tgnn::bench_size_scaling(o, values);
    else throw tgnn::InvalidArgument("bench variable must be 'rank' or 'nodes', got '" + var + "'");
    if (csv_path && *csv_path) tgnn::write_bench_csv(r, csv_path);
    if (points_out)
      for (std::size_t i = 0; i < r.points.size(); ++i)
        points_out[i] = {r.points[i].x, r.points[i].time_ns, r.points[i].params};
    if (has_slope) *has_slope = r.loglog_slope ? 1 : 0;
    if (loglog_slope) *loglog_slope = r.loglog_slope.value_or(0.0);
  });
}

}  // extern "C"
