#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tgnn/tgnn.h"

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tgnn_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

tgnn_graph* small_sbm(std::uint64_t seed) {
  tgnn_sbm_params p;
  tgnn_sbm_params_default(&p);
  p.per_class = 40;
  p.p_in = 0.15;
  p.p_out = 0.01;
  p.seed = seed;
  tgnn_graph* g = nullptr;
  EXPECT_EQ(tgnn_graph_generate_sbm(&p, &g), TGNN_OK);
  return g;
}

TEST(CApi, VersionAndStatusStrings) {
  EXPECT_STREQ(tgnn_version(), "0.1.0");
  EXPECT_STREQ(tgnn_status_string(TGNN_ERR_PARSE), "parse error");
  EXPECT_STREQ(tgnn_pooling_name(TGNN_POOL_CP_SUM), "cp+sum");
  tgnn_pooling p;
  EXPECT_EQ(tgnn_pooling_parse("mean", &p), TGNN_OK);
  EXPECT_EQ(p, TGNN_POOL_MEAN);
  EXPECT_EQ(tgnn_pooling_parse("median", &p), TGNN_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(tgnn_last_error()).find("median"), std::string::npos);
}

TEST(CApi, ErrorCodes) {
  tgnn_graph* g = nullptr;
  EXPECT_EQ(tgnn_graph_load("/nonexistent/e", "/nonexistent/f", "/nonexistent/l", nullptr, &g), TGNN_ERR_IO);
  EXPECT_EQ(g, nullptr);
  EXPECT_EQ(tgnn_graph_load(nullptr, "f", "l", nullptr, &g), TGNN_ERR_INVALID_ARGUMENT);

  const fs::path dir = scratch("parse");
  std::ofstream(dir / "bad.jsonl") << "{\"edges\": [}\n";
  tgnn_dataset* d = nullptr;
  EXPECT_EQ(tgnn_dataset_load((dir / "bad.jsonl").c_str(), &d), TGNN_ERR_PARSE);
  EXPECT_NE(std::string(tgnn_last_error()).find("bad.jsonl:1"), std::string::npos);

  tgnn_model* m = nullptr;
  EXPECT_EQ(tgnn_model_load((dir / "missing.json").c_str(), &m), TGNN_ERR_IO);
  tgnn_graph_free(nullptr);
  tgnn_model_free(nullptr);
  tgnn_dataset_free(nullptr);
}

TEST(CApi, GraphRoundTrip) {
  tgnn_graph* g = small_sbm(1);
  ASSERT_NE(g, nullptr);
  size_t nodes = 0, edges = 0, train = 0, val = 0, test = 0;
  int64_t features = 0;
  int classes = 0;
  ASSERT_EQ(tgnn_graph_info(g, &nodes, &edges, &features, &classes, &train, &val, &test), TGNN_OK);
  EXPECT_EQ(nodes, 80u);
  EXPECT_EQ(features, 8);
  EXPECT_EQ(classes, 2);
  EXPECT_EQ(train + val + test, 80u);

  const fs::path dir = scratch("graph");
  ASSERT_EQ(tgnn_graph_save(g, dir.c_str()), TGNN_OK);
  tgnn_graph* back = nullptr;
  ASSERT_EQ(tgnn_graph_load((dir / "edges.tsv").c_str(), (dir / "features.csv").c_str(),
                            (dir / "labels.csv").c_str(), (dir / "splits.txt").c_str(), &back),
            TGNN_OK);
  size_t nodes2 = 0, edges2 = 0, train2 = 0;
  ASSERT_EQ(tgnn_graph_info(back, &nodes2, &edges2, nullptr, nullptr, &train2, nullptr, nullptr), TGNN_OK);
  EXPECT_EQ(nodes2, nodes);
  EXPECT_EQ(edges2, edges);
  EXPECT_EQ(train2, train);

  ASSERT_EQ(tgnn_graph_random_split(back, 0.5, 0.25, 3), TGNN_OK);
  ASSERT_EQ(tgnn_graph_info(back, nullptr, nullptr, nullptr, nullptr, &train2, nullptr, nullptr), TGNN_OK);
  EXPECT_EQ(train2, 40u);
  tgnn_graph_free(g);
  tgnn_graph_free(back);
}

TEST(CApi, ConfigPresetAndJson) {
  tgnn_train_config c;
  tgnn_train_config_default(&c);
  EXPECT_EQ(c.pooling, TGNN_POOL_CP_SUM);
  ASSERT_EQ(tgnn_train_config_preset("cora", &c), TGNN_OK);
  EXPECT_DOUBLE_EQ(c.lr, 0.001);
  EXPECT_DOUBLE_EQ(c.dropout, 0.9);
  EXPECT_EQ(c.rank, 512);
  EXPECT_EQ(tgnn_train_config_preset("nosuch", &c), TGNN_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(tgnn_preset_count(), 10u);
  EXPECT_EQ(tgnn_preset_name(100), nullptr);

  ASSERT_EQ(tgnn_train_config_from_json(R"({"rank": 7, "pooling": "max", "stabilize_readout": true})", &c), TGNN_OK);
  EXPECT_EQ(c.rank, 7);
  EXPECT_EQ(c.pooling, TGNN_POOL_MAX);
  EXPECT_EQ(c.stabilize_readout, 1);
  EXPECT_DOUBLE_EQ(c.lr, 0.001);
  EXPECT_EQ(tgnn_train_config_from_json(R"({"rnak": 7})", &c), TGNN_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(tgnn_train_config_from_json(R"({"rank": "x"})", &c), TGNN_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(tgnn_train_config_from_json("{\n\"rank\": }", &c), TGNN_ERR_PARSE);
  EXPECT_NE(std::string(tgnn_last_error()).find(":2:"), std::string::npos);

  const fs::path dir = scratch("config");
  std::ofstream(dir / "c.json") << "{\"epochs\": 12}";
  ASSERT_EQ(tgnn_train_config_from_file((dir / "c.json").c_str(), &c), TGNN_OK);
  EXPECT_EQ(c.epochs, 12);
  std::ofstream(dir / "bad.json") << "{\n\n  \"epochs\" 12}";
  EXPECT_EQ(tgnn_train_config_from_file((dir / "bad.json").c_str(), &c), TGNN_ERR_PARSE);
  EXPECT_NE(std::string(tgnn_last_error()).find("bad.json:3"), std::string::npos) << tgnn_last_error();
  EXPECT_EQ(tgnn_train_config_from_file((dir / "none.json").c_str(), &c), TGNN_ERR_IO);
}

TEST(CApi, TrainSaveLoadEvalNode) {
  tgnn_graph* g = small_sbm(2);
  tgnn_train_config c;
  tgnn_train_config_default(&c);
  c.epochs = 40;
  c.rank = 8;
  c.hidden = 8;
  const fs::path dir = scratch("train");
  const std::string metrics = (dir / "metrics.jsonl").string(), summary = (dir / "summary.json").string();
  tgnn_model* model = nullptr;
  tgnn_train_summary s;
  ASSERT_EQ(tgnn_train_node(g, &c, metrics.c_str(), summary.c_str(), &model, &s), TGNN_OK) << tgnn_last_error();
  EXPECT_EQ(s.epochs_run, 40);
  EXPECT_GT(s.test_metric, 0.5);
  EXPECT_NE(slurp(summary).find("\"test_acc\""), std::string::npos);
  std::ifstream lines(metrics);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) ++count;
  EXPECT_EQ(count, 40);

  const std::string ckpt = (dir / "model.json").string();
  ASSERT_EQ(tgnn_model_save(model, ckpt.c_str()), TGNN_OK);
  tgnn_model* loaded = nullptr;
  ASSERT_EQ(tgnn_model_load(ckpt.c_str(), &loaded), TGNN_OK);
  tgnn_task task;
  size_t params = 0;
  uint64_t seed = 1;
  ASSERT_EQ(tgnn_model_info(loaded, &task, &params, &seed), TGNN_OK);
  EXPECT_EQ(task, TGNN_TASK_NODE);
  EXPECT_EQ(params, s.param_count);
  EXPECT_EQ(seed, 0u);

  double loss = 0, acc = 0;
  ASSERT_EQ(tgnn_eval_node(loaded, g, "test", &loss, &acc), TGNN_OK);
  EXPECT_EQ(acc, s.test_metric);
  EXPECT_EQ(loss, s.test_loss);
  EXPECT_EQ(tgnn_eval_node(loaded, g, "holdout", &loss, &acc), TGNN_ERR_INVALID_ARGUMENT);
  tgnn_dataset* d = nullptr;
  ASSERT_EQ(tgnn_dataset_generate(4, 3, 5, 8, 0.5, 1, &d), TGNN_OK);
  double mae = 0;
  EXPECT_EQ(tgnn_eval_graph(loaded, d, "test", 0, &mae), TGNN_ERR_INVALID_ARGUMENT);
  tgnn_dataset_free(d);

  c.lr = -1.0;
  EXPECT_EQ(tgnn_train_node(g, &c, nullptr, nullptr, nullptr, nullptr), TGNN_ERR_INVALID_ARGUMENT);
  tgnn_model_free(model);
  tgnn_model_free(loaded);
  tgnn_graph_free(g);
}

TEST(CApi, TrainEvalGraph) {
  tgnn_dataset* d = nullptr;
  ASSERT_EQ(tgnn_dataset_generate(30, 3, 6, 2, 0.5, 4, &d), TGNN_OK);
  const fs::path dir = scratch("dataset");
  const std::string path = (dir / "graphs.jsonl").string();
  ASSERT_EQ(tgnn_dataset_save(d, path.c_str()), TGNN_OK);
  tgnn_dataset* back = nullptr;
  ASSERT_EQ(tgnn_dataset_load(path.c_str(), &back), TGNN_OK);
  size_t graphs = 0;
  int64_t f = 0, t = 0;
  ASSERT_EQ(tgnn_dataset_info(back, &graphs, &f, &t), TGNN_OK);
  EXPECT_EQ(graphs, 30u);
  EXPECT_EQ(f, 2);
  EXPECT_EQ(t, 1);

  tgnn_train_config c;
  tgnn_train_config_default(&c);
  c.epochs = 5;
  c.rank = 4;
  c.readout_rank = 4;
  c.hidden = 4;
  c.batch_size = 8;
  c.stabilize_readout = 1;
  c.seed = 9;
  tgnn_model* model = nullptr;
  tgnn_train_summary s;
  ASSERT_EQ(tgnn_train_graph(back, &c, nullptr, nullptr, &model, &s), TGNN_OK) << tgnn_last_error();
  double mae = 0;
  ASSERT_EQ(tgnn_eval_graph(model, back, "test", 9, &mae), TGNN_OK);
  EXPECT_EQ(mae, s.test_metric);
  tgnn_model_free(model);
  tgnn_dataset_free(d);
  tgnn_dataset_free(back);
}

struct Collected {
  std::vector<std::string> names;
  std::vector<double> values;
};

void collect(const tgnn_suite_report* r, void* user) {
  auto* c = static_cast<Collected*>(user);
  c->names.emplace_back(r->name);
  for (size_t i = 0; i < r->check_count; ++i) c->values.push_back(r->checks[i].value);
}

TEST(CApi, Verify) {
  EXPECT_EQ(tgnn_suite_count(), 7u);
  EXPECT_STREQ(tgnn_suite_name(1), "permutation");
  EXPECT_EQ(tgnn_suite_name(7), nullptr);
  Collected c;
  int ok = 0;
  ASSERT_EQ(tgnn_verify("permutation", 0, collect, &c, &ok), TGNN_OK);
  EXPECT_EQ(ok, 1);
  ASSERT_EQ(c.names.size(), 1u);
  EXPECT_EQ(c.names[0], "permutation");
  EXPECT_EQ(c.values.at(0), 0.0);
  EXPECT_EQ(tgnn_verify("nosuch", 0, collect, &c, &ok), TGNN_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(tgnn_last_error()).find("nosuch"), std::string::npos);
}

TEST(CApi, Bench) {
  tgnn_bench_options o;
  tgnn_bench_options_default(&o);
  o.in_dim = 4;
  o.out_dim = 2;
  o.nodes = 16;
  o.min_rep_seconds = 1e-4;
  const int64_t grid[] = {8, 4};
  tgnn_bench_point pts[2];
  double slope = 0;
  int has = 0;
  const fs::path dir = scratch("bench");
  const std::string csv = (dir / "b.csv").string();
  ASSERT_EQ(tgnn_bench(&o, "rank", grid, 2, csv.c_str(), pts, &slope, &has), TGNN_OK);
  EXPECT_EQ(has, 1);
  EXPECT_EQ(pts[0].x, 4);
  EXPECT_EQ(pts[0].params, 5u * 4u + 2u * 4u);
  EXPECT_EQ(slurp(csv).rfind("rank,time_ns,params\n4,", 0), 0u);
  EXPECT_EQ(tgnn_bench(&o, "rank", grid, 1, nullptr, nullptr, &slope, &has), TGNN_OK);
  EXPECT_EQ(has, 0);
  EXPECT_EQ(tgnn_bench(&o, "depth", grid, 2, nullptr, nullptr, nullptr, nullptr), TGNN_ERR_INVALID_ARGUMENT);
  o.reps = 3;
  EXPECT_EQ(tgnn_bench(&o, "rank", grid, 2, nullptr, nullptr, nullptr, nullptr), TGNN_ERR_INVALID_ARGUMENT);
}

}  // namespace
