/*
 * C interface to the structural anchor pruning toolkit.
 *
 * Objects are opaque handles created by sap_*_create / sap_*_read and released
 * with the matching sap_*_free. Every fallible call returns a sap_status; on
 * failure a description is available from sap_last_error() on the same thread
 * until the next failing call.
 *
 * Token indices are 0-based; layer indices are 1-based.
 */
#ifndef SAP_SAP_H_
#define SAP_SAP_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(SAP_BUILDING_LIBRARY)
#define SAP_API __declspec(dllexport)
#else
#define SAP_API __declspec(dllimport)
#endif
#else
#define SAP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sap_status {
    SAP_OK = 0,
    SAP_ERR_INVALID_ARGUMENT = 1,
    SAP_ERR_IO = 2,
    SAP_ERR_FORMAT = 3,
    SAP_ERR_VALIDATION = 4,
    SAP_ERR_MISSING_CALIBRATION = 5,
    SAP_ERR_NUMERIC = 6,
    SAP_ERR_INTERNAL = 7
} sap_status;

SAP_API const char* sap_version(void);
SAP_API const char* sap_status_name(sap_status status);
/* Message of the last failing call on this thread ("" if none). */
SAP_API const char* sap_last_error(void);
/* Enables or silences advisory warnings on stderr. Returns the old setting. */
SAP_API int sap_set_warnings(int enabled);
/* Frees strings returned through char** out-parameters. */
SAP_API void sap_string_free(char* s);

/* ---------------------------------------------------------------- tensors */

typedef struct sap_tensor sap_tensor;

SAP_API sap_status sap_tensor_create(const uint64_t* shape, size_t rank, const float* data, size_t count,
                                     sap_tensor** out);
SAP_API sap_status sap_tensor_read(const char* path, sap_tensor** out);
SAP_API sap_status sap_tensor_write(const sap_tensor* tensor, const char* path);
SAP_API size_t sap_tensor_rank(const sap_tensor* tensor);
SAP_API const uint64_t* sap_tensor_shape(const sap_tensor* tensor);
SAP_API size_t sap_tensor_size(const sap_tensor* tensor);
SAP_API const float* sap_tensor_data(const sap_tensor* tensor);
SAP_API void sap_tensor_free(sap_tensor* tensor);

/* ---------------------------------------------------------------- bundles */

typedef struct sap_bundle sap_bundle;

typedef struct sap_bundle_info {
    uint32_t num_layers;
    uint32_t num_heads;
    uint32_t seq_len;
    uint64_t patch_count;
    uint64_t embed_dim;
    int64_t eos_index; /* -1 when absent */
} sap_bundle_info;

/* strict_rowsum != 0 turns attention row-sum deviations above 1e-3 into errors. */
SAP_API sap_status sap_bundle_read(const char* manifest_path, int strict_rowsum, sap_bundle** out);
SAP_API const char* sap_bundle_doc_id(const sap_bundle* bundle);
SAP_API sap_status sap_bundle_get_info(const sap_bundle* bundle, sap_bundle_info* info);
SAP_API int sap_bundle_has_layer(const sap_bundle* bundle, uint32_t layer);
SAP_API void sap_bundle_free(sap_bundle* bundle);

/* ---------------------------------------------------------------- pruning */

typedef enum sap_method {
    SAP_METHOD_SAP_MEAN = 0,
    SAP_METHOD_SAP_MAX = 1,
    SAP_METHOD_RANDOM = 2,
    SAP_METHOD_EOS = 3,
    SAP_METHOD_ADAPTIVE_EOS = 4,
    SAP_METHOD_CLUSTER = 5
} sap_method;

typedef struct sap_prune_config {
    sap_method method;
    double gamma;
    double alpha;
    double beta;
    uint64_t seed;
    int32_t kmeans_max_iters;
    double kmeans_tol;
    int32_t kmeans_restarts;
    int32_t has_adaptive_k;
    double adaptive_k;
} sap_prune_config;

/* Defaults: sap_mean, gamma 0.1, window 0.4..0.6, seed 0, 50 iterations, tol 1e-6, 10 restarts. */
SAP_API void sap_prune_config_init(sap_prune_config* config);
SAP_API sap_status sap_method_from_name(const char* name, sap_method* out);
SAP_API const char* sap_method_to_name(sap_method method);

typedef struct sap_prune_result sap_prune_result;

SAP_API sap_status sap_prune_bundle(const sap_bundle* bundle, const sap_prune_config* config,
                                    sap_prune_result** out);
SAP_API size_t sap_prune_result_count(const sap_prune_result* result);
SAP_API int sap_prune_result_is_merged(const sap_prune_result* result);
/* Ascending kept indices, or NULL for merged results. Length is the count. */
SAP_API const uint32_t* sap_prune_result_indices(const sap_prune_result* result);
SAP_API sap_status sap_prune_result_embeddings(const sap_prune_result* result, const sap_bundle* bundle,
                                               sap_tensor** out);
SAP_API void sap_prune_result_free(sap_prune_result* result);

/* Importance scores (length patch_count) for sap_mean, sap_max or eos. */
SAP_API sap_status sap_scores(const sap_bundle* bundle, const sap_prune_config* config, double* out,
                              size_t out_len);

SAP_API sap_status sap_layer_window(uint32_t total_layers, double alpha, double beta, uint32_t* first,
                                    uint32_t* last);
SAP_API sap_status sap_keep_count(double gamma, uint64_t n, uint64_t* out);

/* ------------------------------------------------------ scoring & metrics */

SAP_API sap_status sap_maxsim(const sap_tensor* query, const sap_tensor* doc, double* out);
SAP_API sap_status sap_osr(const sap_tensor* query, const sap_tensor* pruned, const sap_tensor* full, double* out);
SAP_API sap_status sap_ndcg_at_k(const uint32_t* ranked_relevances, size_t n, size_t k, double* out);
SAP_API sap_status sap_retention_pct(double pruned_ndcg, double full_ndcg, double* out);
SAP_API sap_status sap_pearson(const double* x, const double* y, size_t n, double* out);

/* --------------------------------------------------------------- commands */

typedef struct sap_run_options {
    int32_t threads;
    int32_t strict_rowsum;
} sap_run_options;

SAP_API void sap_run_options_init(sap_run_options* options);

typedef struct sap_synth_config {
    uint32_t num_docs;
    uint32_t num_queries;
    uint32_t patches;
    uint32_t embed_dim;
    uint32_t layers;
    uint32_t heads;
    uint32_t seq_len;
    uint32_t anchors_per_doc;
    double anchor_mass;
    int32_t final_layer_diffusion;
    double noise_scale;
    uint64_t seed;
} sap_synth_config;

SAP_API void sap_synth_config_init(sap_synth_config* config);

/* Writes a planted-anchor corpus (corpus.json, docs/, queries/, qrels.tsv, synth.json). */
SAP_API sap_status sap_cmd_synth(const sap_synth_config* config, const char* out_dir);

/* calibration_path may be NULL unless the method is adaptive_eos without adaptive_k.
   mean_keep_ratio may be NULL. */
SAP_API sap_status sap_cmd_prune(const char* corpus_manifest, const sap_prune_config* config,
                                 const char* calibration_path, const sap_run_options* options, const char* out_dir,
                                 double* mean_keep_ratio);

SAP_API sap_status sap_cmd_calibrate(const char* corpus_manifest, double gamma, uint64_t seed, size_t calib_size,
                                     const sap_run_options* options, const char* out_path, double* k_factor);

/* qrels_path may be NULL (use the manifest's). report_json may be NULL; otherwise
   receives the report text, released with sap_string_free. */
SAP_API sap_status sap_cmd_eval(const char* corpus_manifest, const char* const* pruned_dirs, size_t num_pruned,
                                const char* qrels_path, uint32_t k, const sap_run_options* options,
                                const char* out_dir, char** report_json);

/* curve_out (may be NULL) receives up to curve_cap per-layer values; num_layers gets L. */
SAP_API sap_status sap_cmd_sweep(const char* corpus_manifest, sap_method method, double gamma,
                                 const sap_run_options* options, const char* out_dir, double* curve_out,
                                 size_t curve_cap, uint32_t* num_layers);

typedef struct sap_bench_config {
    uint32_t patches;
    uint32_t heads;
    uint32_t window_layers;
    uint32_t embed_dim;
    double gamma;
    int32_t reps;
    uint64_t seed;
    int32_t kmeans_restarts;
} sap_bench_config;

SAP_API void sap_bench_config_init(sap_bench_config* config);

/* out_path may be NULL. report_json receives the JSON report (sap_string_free). */
SAP_API sap_status sap_cmd_bench(const sap_bench_config* config, const char* out_path, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* SAP_SAP_H_ */
