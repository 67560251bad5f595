// Command-line front end. Talks to the library only through tgnn/tgnn.h.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tgnn/tgnn.h"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct RuntimeFailure {
  tgnn_status status;
};

// Throws on a failed library call after printing its message.
void check(tgnn_status s) {
  if (s == TGNN_OK) return;
  std::fprintf(stderr, "error: %s: %s\n", tgnn_status_string(s), tgnn_last_error());
  throw RuntimeFailure{s};
}

struct UsageError {
  std::string message;
};

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using GraphPtr = std::unique_ptr<tgnn_graph, Deleter<tgnn_graph, tgnn_graph_free>>;
using DatasetPtr = std::unique_ptr<tgnn_dataset, Deleter<tgnn_dataset, tgnn_dataset_free>>;
using ModelPtr = std::unique_ptr<tgnn_model, Deleter<tgnn_model, tgnn_model_free>>;

struct GraphArgs {
  std::string edges, features, labels, splits, dataset;
};

void add_graph_args(CLI::App* cmd, GraphArgs& g) {
  cmd->add_option("--edges", g.edges, "Edge list, one 'src dst' pair per line")->check(CLI::ExistingFile);
  cmd->add_option("--features", g.features, "Node features CSV, one row per node")->check(CLI::ExistingFile);
  cmd->add_option("--labels", g.labels, "Labels CSV 'node,label'")->check(CLI::ExistingFile);
  cmd->add_option("--splits", g.splits, "Three lines of node ids: train, val, test")->check(CLI::ExistingFile);
  cmd->add_option("--dataset", g.dataset, "Graph-regression dataset (JSON lines)")->check(CLI::ExistingFile);
}

// Loads the node-task graph. Without a splits file the nodes get a random
// 60/20/20 split keyed by `split_seed`.
GraphPtr load_graph(const GraphArgs& a, std::uint64_t split_seed) {
  if (a.edges.empty() || a.features.empty() || a.labels.empty())
    throw UsageError{"the node task needs --edges, --features and --labels"};
  tgnn_graph* g = nullptr;
  check(tgnn_graph_load(a.edges.c_str(), a.features.c_str(), a.labels.c_str(), a.splits.c_str(), &g));
  GraphPtr graph(g);
  if (a.splits.empty()) check(tgnn_graph_random_split(graph.get(), 0.6, 0.2, split_seed));
  return graph;
}

DatasetPtr load_dataset(const GraphArgs& a) {
  if (a.dataset.empty()) throw UsageError{"the graph task needs --dataset"};
  tgnn_dataset* d = nullptr;
  check(tgnn_dataset_load(a.dataset.c_str(), &d));
  return DatasetPtr(d);
}

// ---- verify ----

struct VerifyArgs {
  std::string suite;
  std::uint64_t seed = 0;
};

void print_report(const tgnn_suite_report* r, void*) {
  std::printf("%s  %-12s %7.2fs\n", r->passed ? "PASS" : "FAIL", r->name, r->seconds);
  for (size_t i = 0; i < r->check_count; ++i) {
    const tgnn_suite_check& c = r->checks[i];
    std::printf("      %-4s %s = %.3g (%s %.3g, %zu cases)\n", c.passed ? "ok" : "FAIL", c.measure, c.value,
                c.lower_bound ? ">" : "<=", c.bound, c.cases);
  }
  std::fflush(stdout);
}

int cmd_verify(const VerifyArgs& a) {
  if (!a.suite.empty()) {
    bool known = false;
    for (size_t i = 0; i < tgnn_suite_count(); ++i) known = known || a.suite == tgnn_suite_name(i);
    if (!known) {
      std::string names;
      for (size_t i = 0; i < tgnn_suite_count(); ++i) names += std::string(i ? ", " : "") + tgnn_suite_name(i);
      throw UsageError{"unknown suite '" + a.suite + "' (choose from " + names + ")"};
    }
  }
  int ok = 0;
  check(tgnn_verify(a.suite.empty() ? nullptr : a.suite.c_str(), a.seed, print_report, nullptr, &ok));
  std::printf("%s\n", ok ? "all suites passed" : "some suites FAILED");
  return ok ? kExitOk : kExitFailure;
}

// ---- train ----

struct TrainArgs {
  GraphArgs graph;
  std::string task = "node", out, config, preset;
  bool quiet = false;
  tgnn_train_config cfg{};
  std::string pooling;
  bool stabilize = false;
};

struct TrainOptions {
  CLI::Option *lr, *wd, *dropout, *rank, *hidden, *layers, *epochs, *patience, *seed, *sample_k, *readout_rank,
      *batch_size, *pooling, *stabilize;
};

// Defaults, then the preset, then the config file, then explicit flags.
tgnn_train_config resolve_config(const TrainArgs& a, const TrainOptions& o) {
  tgnn_train_config c;
  tgnn_train_config_default(&c);
  if (!a.preset.empty()) {
    if (tgnn_train_config_preset(a.preset.c_str(), &c) != TGNN_OK) throw UsageError{tgnn_last_error()};
  }
  if (!a.config.empty()) check(tgnn_train_config_from_file(a.config.c_str(), &c));
  const tgnn_train_config& f = a.cfg;
  if (o.lr->count()) c.lr = f.lr;
  if (o.wd->count()) c.weight_decay = f.weight_decay;
  if (o.dropout->count()) c.dropout = f.dropout;
  if (o.rank->count()) c.rank = f.rank;
  if (o.hidden->count()) c.hidden = f.hidden;
  if (o.layers->count()) c.layers = f.layers;
  if (o.epochs->count()) c.epochs = f.epochs;
  if (o.patience->count()) c.patience = f.patience;
  if (o.seed->count()) c.seed = f.seed;
  if (o.sample_k->count()) c.sample_k = f.sample_k;
  if (o.readout_rank->count()) c.readout_rank = f.readout_rank;
  if (o.batch_size->count()) c.batch_size = f.batch_size;
  if (o.pooling->count()) {
    if (tgnn_pooling_parse(a.pooling.c_str(), &c.pooling) != TGNN_OK) throw UsageError{tgnn_last_error()};
  }
  if (o.stabilize->count()) c.stabilize_readout = 1;
  return c;
}

int cmd_train(const TrainArgs& a, const TrainOptions& o) {
  const tgnn_train_config c = resolve_config(a, o);
  if (a.task != "node" && a.task != "graph") throw UsageError{"--task must be node or graph"};
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) {
    std::fprintf(stderr, "error: cannot create '%s': %s\n", a.out.c_str(), ec.message().c_str());
    return kExitFailure;
  }
  const std::string metrics = (fs::path(a.out) / "metrics.jsonl").string();
  const std::string summary = (fs::path(a.out) / "summary.json").string();
  const std::string ckpt = (fs::path(a.out) / "model.json").string();

  tgnn_model* m = nullptr;
  tgnn_train_summary s{};
  const char* metric = "acc";
  if (a.task == "node") {
    GraphPtr g = load_graph(a.graph, c.seed);
    if (!a.quiet) {
      size_t n = 0, tr = 0, va = 0, te = 0;
      int classes = 0;
      int64_t f = 0;
      check(tgnn_graph_info(g.get(), &n, nullptr, &f, &classes, &tr, &va, &te));
      std::printf("graph: %zu nodes, %" PRId64 " features, %d classes, split %zu/%zu/%zu\n", n, f, classes, tr, va, te);
    }
    check(tgnn_train_node(g.get(), &c, metrics.c_str(), summary.c_str(), &m, &s));
  } else {
    DatasetPtr d = load_dataset(a.graph);
    metric = "mae";
    check(tgnn_train_graph(d.get(), &c, metrics.c_str(), summary.c_str(), &m, &s));
  }
  ModelPtr model(m);
  check(tgnn_model_save(model.get(), ckpt.c_str()));
  if (!a.quiet)
    std::printf("pooling %s, rank %" PRId64 ", %zu parameters, %d epochs (best %d) in %.1fs\n",
                tgnn_pooling_name(c.pooling), c.rank, s.param_count, s.epochs_run, s.best_epoch, s.seconds);
  std::printf("val_%s %.17g\ntest_%s %.17g\n", metric, s.best_val_metric, metric, s.test_metric);
  if (!a.quiet) std::printf("wrote %s, %s, %s\n", metrics.c_str(), summary.c_str(), ckpt.c_str());
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  GraphArgs graph;
  std::string checkpoint, split = "test";
  std::optional<std::uint64_t> seed;
};

int cmd_eval(const EvalArgs& a) {
  tgnn_model* m = nullptr;
  check(tgnn_model_load(a.checkpoint.c_str(), &m));
  ModelPtr model(m);
  tgnn_task task;
  std::uint64_t model_seed = 0;
  check(tgnn_model_info(model.get(), &task, nullptr, &model_seed));
  // Random splits default to the seed the model was trained with.
  const std::uint64_t split_seed = a.seed.value_or(model_seed);
  if (task == TGNN_TASK_NODE) {
    GraphPtr g = load_graph(a.graph, split_seed);
    double loss = 0, acc = 0;
    check(tgnn_eval_node(model.get(), g.get(), a.split.c_str(), &loss, &acc));
    std::printf("{\"split\": \"%s\", \"acc\": %.17g, \"loss\": %.17g}\n", a.split.c_str(), acc, loss);
  } else {
    DatasetPtr d = load_dataset(a.graph);
    double mae = 0;
    check(tgnn_eval_graph(model.get(), d.get(), a.split.c_str(), split_seed, &mae));
    std::printf("{\"split\": \"%s\", \"mae\": %.17g}\n", a.split.c_str(), mae);
  }
  return kExitOk;
}

// ---- bench ----

struct BenchArgs {
  std::string variable = "rank", out, pooling = "cp";
  std::vector<std::int64_t> grid;
  tgnn_bench_options opt{};
};

int cmd_bench(BenchArgs a) {
  if (a.variable != "rank" && a.variable != "nodes") throw UsageError{"--variable must be rank or nodes"};
  if (tgnn_pooling_parse(a.pooling.c_str(), &a.opt.pooling) != TGNN_OK) throw UsageError{tgnn_last_error()};
  if (a.grid.empty()) {
    if (a.variable == "rank") a.grid = {8, 16, 32, 64, 128, 256, 512, 1024};
    else a.grid = {256, 512, 1024, 2048, 4096, 8192};
  }
  std::vector<tgnn_bench_point> pts(a.grid.size());
  double slope = 0;
  int has_slope = 0;
  check(tgnn_bench(&a.opt, a.variable.c_str(), a.grid.data(), a.grid.size(), a.out.empty() ? nullptr : a.out.c_str(),
                   pts.data(), &slope, &has_slope));
  std::printf("%-8s %14s %10s\n", a.variable.c_str(), "time_ns", "params");
  for (const auto& p : pts) std::printf("%-8" PRId64 " %14.1f %10zu\n", p.x, p.time_ns, p.params);
  if (has_slope) std::printf("log-log slope %.3f\n", slope);
  else std::printf("log-log slope undefined (needs two distinct grid values)\n");
  return kExitOk;
}

// ---- generate ----

struct GenerateArgs {
  std::string kind = "sbm", out;
  tgnn_sbm_params sbm{};
  size_t count = 200, min_nodes = 4, max_nodes = 12;
  std::int64_t graph_features = 2;
  double edge_prob = 0.4;
};

int cmd_generate(GenerateArgs a) {
  if (a.kind == "sbm") {
    tgnn_graph* g = nullptr;
    check(tgnn_graph_generate_sbm(&a.sbm, &g));
    GraphPtr graph(g);
    std::error_code ec;
    fs::create_directories(a.out, ec);
    check(tgnn_graph_save(graph.get(), a.out.c_str()));
    size_t n = 0, e = 0;
    check(tgnn_graph_info(graph.get(), &n, &e, nullptr, nullptr, nullptr, nullptr, nullptr));
    std::printf("wrote SBM graph with %zu nodes and %zu adjacency entries to %s\n", n, e, a.out.c_str());
  } else if (a.kind == "graphs") {
    tgnn_dataset* d = nullptr;
    check(tgnn_dataset_generate(a.count, a.min_nodes, a.max_nodes, a.graph_features, a.edge_prob, a.sbm.seed, &d));
    DatasetPtr data(d);
    const fs::path parent = fs::path(a.out).parent_path();
    std::error_code ec;
    if (!parent.empty()) fs::create_directories(parent, ec);
    check(tgnn_dataset_save(data.get(), a.out.c_str()));
    std::printf("wrote %zu graphs to %s\n", a.count, a.out.c_str());
  } else {
    throw UsageError{"--kind must be sbm or graphs"};
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensorized graph neural networks: verification, training and benchmarks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("tgnn ") + tgnn_version());

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run the numerical verification suites");
  verify->add_option("--suite", va.suite, "Run only this suite");
  verify->add_option("--seed", va.seed, "Seed for the random cases");

  TrainArgs ta;
  tgnn_train_config_default(&ta.cfg);
  TrainOptions to{};
  auto* train = app.add_subcommand("train", "Train a model and write metrics, summary and checkpoint");
  add_graph_args(train, ta.graph);
  train->add_option("--task", ta.task, "node or graph")->check(CLI::IsMember({"node", "graph"}));
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--config", ta.config, "JSON file of training options")->check(CLI::ExistingFile);
  train->add_option("--preset", ta.preset, "Reference hyperparameters of a dataset (e.g. cora)");
  to.lr = train->add_option("--lr", ta.cfg.lr, "Learning rate");
  to.wd = train->add_option("--wd", ta.cfg.weight_decay, "Decoupled weight decay");
  to.dropout = train->add_option("--dropout", ta.cfg.dropout, "Input dropout of each node layer");
  to.rank = train->add_option("--rank", ta.cfg.rank, "CP rank of the node layers");
  to.hidden = train->add_option("--hidden", ta.cfg.hidden, "Hidden width");
  to.layers = train->add_option("--layers", ta.cfg.layers, "Number of node layers");
  to.epochs = train->add_option("--epochs", ta.cfg.epochs, "Maximum epochs");
  to.patience = train->add_option("--patience", ta.cfg.patience, "Early-stopping patience in epochs");
  to.seed = train->add_option("--seed", ta.cfg.seed, "Seed for initialization, sampling, dropout and splits");
  to.sample_k = train->add_option("--sample-k", ta.cfg.sample_k, "Sampled neighbors per node (node task)");
  to.readout_rank = train->add_option("--readout-rank", ta.cfg.readout_rank, "CP rank of the graph readout");
  to.batch_size = train->add_option("--batch-size", ta.cfg.batch_size, "Graphs per optimizer step (graph task)");
  to.pooling = train->add_option("--pooling", ta.pooling, "cp, sum, mean, max or cp+sum");
  to.stabilize = train->add_flag("--stabilize-readout", ta.stabilize, "Squash readout factors with tanh");
  train->add_flag("-q,--quiet", ta.quiet, "Print only the final metrics");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_graph_args(eval, ea.graph);
  eval->add_option("--checkpoint", ea.checkpoint, "Model file written by train")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", ea.split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval->add_option("--seed", ea.seed, "Seed of the random split (default: the model's seed)");

  BenchArgs ba;
  tgnn_bench_options_default(&ba.opt);
  auto* bench = app.add_subcommand("bench", "Time one node-layer forward pass over a grid");
  bench->add_option("--variable", ba.variable, "rank or nodes")->check(CLI::IsMember({"rank", "nodes"}));
  bench->add_option("--grid", ba.grid, "Comma-separated grid values")->delimiter(',');
  bench->add_option("--pooling", ba.pooling, "cp, sum, mean, max or cp+sum");
  bench->add_option("--in-dim", ba.opt.in_dim, "Input features");
  bench->add_option("--out-dim", ba.opt.out_dim, "Output features");
  bench->add_option("--nodes", ba.opt.nodes, "Nodes when scaling rank");
  bench->add_option("--rank", ba.opt.rank, "Rank when scaling nodes");
  bench->add_option("--arity", ba.opt.arity, "Inputs per node");
  bench->add_option("--reps", ba.opt.reps, "Timed repetitions (at least 5)");
  bench->add_option("--seed", ba.opt.seed, "Seed for weights and inputs");
  bench->add_option("--out", ba.out, "CSV output path");

  GenerateArgs ga;
  tgnn_sbm_params_default(&ga.sbm);
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  generate->add_option("--kind", ga.kind, "sbm (node task) or graphs (graph task)")
      ->check(CLI::IsMember({"sbm", "graphs"}));
  generate->add_option("--out", ga.out, "Directory (sbm) or JSON-lines file (graphs)")->required();
  generate->add_option("--classes", ga.sbm.classes, "SBM communities");
  generate->add_option("--per-class", ga.sbm.per_class, "SBM nodes per community");
  generate->add_option("--p-in", ga.sbm.p_in, "SBM edge probability inside a community");
  generate->add_option("--p-out", ga.sbm.p_out, "SBM edge probability across communities");
  generate->add_option("--feature-dim", ga.sbm.feature_dim, "SBM feature dimension");
  generate->add_option("--mean-scale", ga.sbm.mean_scale, "Std of the SBM class means");
  generate->add_option("--noise", ga.sbm.noise, "Std of the SBM feature noise");
  generate->add_option("--count", ga.count, "Number of graphs");
  generate->add_option("--min-nodes", ga.min_nodes, "Smallest graph");
  generate->add_option("--max-nodes", ga.max_nodes, "Largest graph");
  generate->add_option("--graph-features", ga.graph_features, "Feature dimension of generated graphs");
  generate->add_option("--edge-prob", ga.edge_prob, "Edge probability of generated graphs");
  generate->add_option("--seed", ga.sbm.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*verify) return cmd_verify(va);
    if (*train) return cmd_train(ta, to);
    if (*eval) return cmd_eval(ea);
    if (*bench) return cmd_bench(ba);
    if (*generate) return cmd_generate(ga);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\nRun with --help for more information.\n", e.message.c_str());
    return kExitUsage;
  } catch (const RuntimeFailure&) {
    return kExitFailure;
  }
  return kExitUsage;
}
