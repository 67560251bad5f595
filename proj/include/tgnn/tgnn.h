#ifndef TGNN_H
#define TGNN_H

/* C interface of the tgnn shared library.
 *
 * Every fallible call returns a tgnn_status. On failure tgnn_last_error()
 * describes the problem; the text stays valid until the next failing call on
 * the same thread. Handles are opaque and released with the matching _free
 * function, which accepts NULL. Output pointers are written only on success. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TGNN_API __declspec(dllexport)
#else
#define TGNN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tgnn_status {
  TGNN_OK = 0,
  TGNN_ERR_INVALID_ARGUMENT = 1,
  TGNN_ERR_CAPACITY = 2,
  TGNN_ERR_NUMERICAL = 3,
  TGNN_ERR_IO = 4,
  TGNN_ERR_PARSE = 5,
  TGNN_ERR_INTERNAL = 6
} tgnn_status;

typedef enum tgnn_pooling {
  TGNN_POOL_CP = 0,
  TGNN_POOL_SUM = 1,
  TGNN_POOL_MEAN = 2,
  TGNN_POOL_MAX = 3,
  TGNN_POOL_CP_SUM = 4
} tgnn_pooling;

typedef enum tgnn_task { TGNN_TASK_NODE = 0, TGNN_TASK_GRAPH = 1 } tgnn_task;

typedef struct tgnn_graph tgnn_graph;     /* node-classification dataset */
typedef struct tgnn_dataset tgnn_dataset; /* graph-regression dataset */
typedef struct tgnn_model tgnn_model;

TGNN_API const char* tgnn_version(void);
TGNN_API const char* tgnn_last_error(void);
TGNN_API const char* tgnn_status_string(tgnn_status status);

/* "cp", "sum", "mean", "max" or "cp+sum". */
TGNN_API tgnn_status tgnn_pooling_parse(const char* name, tgnn_pooling* out);
TGNN_API const char* tgnn_pooling_name(tgnn_pooling pooling);

/* ---- node-classification graphs ---- */

typedef struct tgnn_sbm_params {
  size_t classes;
  size_t per_class;
  double p_in;
  double p_out;
  int64_t feature_dim;
  double mean_scale;
  double noise;
  uint64_t seed;
} tgnn_sbm_params;

TGNN_API void tgnn_sbm_params_default(tgnn_sbm_params* params);

/* `splits` may be NULL or empty, leaving the graph without a split. */
TGNN_API tgnn_status tgnn_graph_load(const char* edges, const char* features, const char* labels, const char* splits,
                                     tgnn_graph** out);
TGNN_API tgnn_status tgnn_graph_generate_sbm(const tgnn_sbm_params* params, tgnn_graph** out);
/* Writes edges.tsv, features.csv, labels.csv and splits.txt into `dir`. */
TGNN_API tgnn_status tgnn_graph_save(const tgnn_graph* graph, const char* dir);
/* Replaces the split with a random train/val/rest split. */
TGNN_API tgnn_status tgnn_graph_random_split(tgnn_graph* graph, double train_frac, double val_frac, uint64_t seed);
/* Any output pointer may be NULL. `edges` counts directed adjacency entries
 * including self-loops. */
TGNN_API tgnn_status tgnn_graph_info(const tgnn_graph* graph, size_t* nodes, size_t* edges, int64_t* features,
                                     int* classes, size_t* train, size_t* val, size_t* test);
TGNN_API void tgnn_graph_free(tgnn_graph* graph);

/* ---- graph-regression datasets (JSON lines) ---- */

TGNN_API tgnn_status tgnn_dataset_load(const char* path, tgnn_dataset** out);
TGNN_API tgnn_status tgnn_dataset_generate(size_t count, size_t min_nodes, size_t max_nodes, int64_t feature_dim,
                                           double edge_prob, uint64_t seed, tgnn_dataset** out);
TGNN_API tgnn_status tgnn_dataset_save(const tgnn_dataset* data, const char* path);
TGNN_API tgnn_status tgnn_dataset_info(const tgnn_dataset* data, size_t* graphs, int64_t* features,
                                       int64_t* target_dim);
TGNN_API void tgnn_dataset_free(tgnn_dataset* data);

/* ---- training ---- */

typedef struct tgnn_train_config {
  double lr;
  double weight_decay;
  double dropout;
  int64_t rank;
  int64_t hidden;
  int64_t readout_rank;
  int layers;
  int epochs;
  int patience;
  uint64_t seed;
  size_t sample_k;
  size_t batch_size;
  tgnn_pooling pooling;
  int stabilize_readout;
} tgnn_train_config;

TGNN_API void tgnn_train_config_default(tgnn_train_config* config);
/* Reference per-dataset hyperparameters: "cora", "citeseer", "pubmed",
 * "products", "arxiv", "proteins", "zinc", "cifar10", "mnist", "molhiv". */
TGNN_API tgnn_status tgnn_train_config_preset(const char* name, tgnn_train_config* config);
TGNN_API size_t tgnn_preset_count(void);
TGNN_API const char* tgnn_preset_name(size_t index);
/* Fields that are present in the JSON object override `config`. Keys match
 * the struct fields; "pooling" is a name, "stabilize_readout" a boolean. */
TGNN_API tgnn_status tgnn_train_config_from_json(const char* json_text, tgnn_train_config* config);
/* Same for a JSON file; parse errors name the file and line. */
TGNN_API tgnn_status tgnn_train_config_from_file(const char* path, tgnn_train_config* config);

typedef struct tgnn_train_summary {
  int best_epoch;
  int epochs_run;
  int stopped_early;
  double best_val_metric;
  double test_metric; /* accuracy (node task) or MAE (graph task) */
  double test_loss;
  size_t param_count;
  double seconds;
} tgnn_train_summary;

/* Trains on the graph's split (node task) or on a random 60/20/20 split of
 * the dataset keyed by config->seed (graph task). metrics_path and
 * summary_path may be NULL; model_out may be NULL. */
TGNN_API tgnn_status tgnn_train_node(const tgnn_graph* graph, const tgnn_train_config* config,
                                     const char* metrics_path, const char* summary_path, tgnn_model** model_out,
                                     tgnn_train_summary* summary);
TGNN_API tgnn_status tgnn_train_graph(const tgnn_dataset* data, const tgnn_train_config* config,
                                      const char* metrics_path, const char* summary_path, tgnn_model** model_out,
                                      tgnn_train_summary* summary);

/* ---- models ---- */

TGNN_API tgnn_status tgnn_model_save(const tgnn_model* model, const char* path);
TGNN_API tgnn_status tgnn_model_load(const char* path, tgnn_model** out);
TGNN_API tgnn_status tgnn_model_info(const tgnn_model* model, tgnn_task* task, size_t* param_count, uint64_t* seed);
TGNN_API void tgnn_model_free(tgnn_model* model);

/* `split` is "train", "val", "test" or "all". */
TGNN_API tgnn_status tgnn_eval_node(const tgnn_model* model, const tgnn_graph* graph, const char* split, double* loss,
                                    double* accuracy);
/* Uses the random 60/20/20 split keyed by split_seed, as in training. */
TGNN_API tgnn_status tgnn_eval_graph(const tgnn_model* model, const tgnn_dataset* data, const char* split,
                                     uint64_t split_seed, double* mae);

/* ---- verification suites ---- */

typedef struct tgnn_suite_check {
  const char* measure;
  double value;
  double bound;
  int lower_bound; /* passes when value > bound instead of value <= bound */
  size_t cases;
  int passed;
} tgnn_suite_check;

typedef struct tgnn_suite_report {
  const char* name;
  int passed;
  double seconds;
  const tgnn_suite_check* checks;
  size_t check_count;
} tgnn_suite_report;

/* Called once per finished suite; the report is valid during the call. */
typedef void (*tgnn_suite_callback)(const tgnn_suite_report* report, void* user);

TGNN_API size_t tgnn_suite_count(void);
TGNN_API const char* tgnn_suite_name(size_t index);
/* Runs one suite, or all of them when `suite` is NULL. `all_passed` may be
 * NULL. An unknown suite name is TGNN_ERR_INVALID_ARGUMENT. */
TGNN_API tgnn_status tgnn_verify(const char* suite, uint64_t seed, tgnn_suite_callback callback, void* user,
                                 int* all_passed);

/* ---- benchmarks ---- */

typedef struct tgnn_bench_options {
  int64_t in_dim;
  int64_t out_dim;
  int64_t nodes;
  int64_t rank;
  size_t arity;
  int reps;
  double min_rep_seconds;
  tgnn_pooling pooling;
  uint64_t seed;
} tgnn_bench_options;

typedef struct tgnn_bench_point {
  int64_t x;
  double time_ns;
  size_t params;
} tgnn_bench_point;

TGNN_API void tgnn_bench_options_default(tgnn_bench_options* options);
/* `variable` is "rank" or "nodes". points_out (may be NULL) receives
 * grid_size entries sorted by x. *has_slope is 0 when the log-log slope is
 * undefined. csv_path may be NULL. */
TGNN_API tgnn_status tgnn_bench(const tgnn_bench_options* options, const char* variable, const int64_t* grid,
                                size_t grid_size, const char* csv_path, tgnn_bench_point* points_out,
                                double* loglog_slope, int* has_slope);

#ifdef __cplusplus
}
#endif

#endif
