#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sap/metrics.hpp"
#include "sap/pruning.hpp"
#include "sap/tensor_store.hpp"

// Corpus-level commands behind the CLI. Every command is deterministic given
// its inputs and seed; output bytes do not depend on the thread count.

namespace sap::pipeline {

struct RunOptions {
    int threads = 1;
    RowSumPolicy row_sum = RowSumPolicy::kStrict;
};

/// Prunes every document. Failing documents are listed on stderr and the call
/// then throws with the first failure's error code.
std::vector<PruneResult> prune_corpus(const Corpus& corpus, const PruneConfig& config, int threads = 1);

struct PruneSummary {
    std::string corpus_id;
    PruneConfig config;
    std::size_t num_docs = 0;
    double mean_keep_ratio = 0.0;
};

/// Writes <out>/summary.json, <out>/results/<doc>.json, <out>/embeddings/<doc>.sapt.
PruneSummary run_prune(const fs::path& corpus_path, const PruneConfig& config,
                       const std::optional<fs::path>& calibration_path, const RunOptions& options,
                       const fs::path& out_dir);

/// Loads pruned embeddings aligned with corpus.documents.
std::vector<Tensor> read_pruned_index(const Corpus& corpus, const fs::path& pruned_dir, std::string* config_json);

struct CalibrateOptions {
    double gamma = 0.1;
    std::uint64_t seed = 0;
    std::size_t calib_size = 128;
};

/// Samples calib_size documents (all of them if fewer) and calibrates k.
AdaptiveCalibration calibrate_corpus(const Corpus& corpus, const CalibrateOptions& options);

AdaptiveCalibration run_calibrate(const fs::path& corpus_path, const CalibrateOptions& calib,
                                  const RunOptions& options, const fs::path& out_path);

void write_calibration(const AdaptiveCalibration& calibration, std::uint64_t seed, const fs::path& path);
AdaptiveCalibration read_calibration(const fs::path& path);

/// Writes <out>/report.json, <out>/report.csv and one TREC run per index.
/// Returns the report JSON text.
std::string run_eval(const fs::path& corpus_path, const std::vector<fs::path>& pruned_dirs,
                     const std::optional<fs::path>& qrels_path, std::size_t k, const RunOptions& options,
                     const fs::path& out_dir);

/// Writes <out>/layer_curve.json and <out>/layer_curve.csv.
LayerCurve run_sweep(const fs::path& corpus_path, Method method, double gamma, const RunOptions& options,
                     const fs::path& out_dir);

struct BenchConfig {
    std::uint32_t patches = 1024;
    std::uint32_t heads = 8;
    std::uint32_t window_layers = 4;
    std::uint32_t embed_dim = 128;
    double gamma = 0.1;
    int reps = 10;
    std::uint64_t seed = 0;
    int kmeans_restarts = PruneConfig{}.kmeans_restarts;
};

struct BenchRow {
    Method method;
    double mean_ms = 0.0;
    double min_ms = 0.0;
};

/// Times score + selection per method on one synthetic page.
std::vector<BenchRow> bench_methods(const BenchConfig& config);

/// JSON report for bench_methods, overhead relative to SAP-Mean.
std::string bench_report_json(const BenchConfig& config, const std::vector<BenchRow>& rows);

}  // namespace sap::pipeline
