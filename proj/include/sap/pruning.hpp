#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sap/tensor.hpp"
#include "sap/tensor_store.hpp"

namespace sap {

enum class Method { kSapMean, kSapMax, kRandom, kEos, kAdaptiveEos, kCluster };

std::string_view method_name(Method m) noexcept;
Method parse_method(std::string_view name);

/// Methods whose output size is exactly keep_count(gamma, N).
bool is_fixed_ratio(Method m) noexcept;

struct PruneConfig {
    Method method = Method::kSapMean;
    double gamma = 0.1;  ///< keep ratio over visual patches
    double alpha = 0.4;  ///< relative depth of the window start
    double beta = 0.6;   ///< relative depth of the window end
    std::uint64_t seed = 0;
    int kmeans_max_iters = 50;
    double kmeans_tol = 1e-6;
    int kmeans_restarts = 10;  ///< k-means++ restarts; the lowest WCSS run wins
    std::optional<double> adaptive_k;

    void validate() const;
};

/// Inclusive, 1-based layer range.
struct LayerWindow {
    std::uint32_t first = 1;
    std::uint32_t last = 1;

    std::uint32_t size() const noexcept { return last - first + 1; }
    bool contains(std::uint32_t layer) const noexcept { return layer >= first && layer <= last; }
    bool operator==(const LayerWindow&) const = default;
};

/// Layers l with max(1, floor(alpha*L)) <= l <= min(L, floor(beta*L)).
LayerWindow layer_window(std::uint32_t total_layers, double alpha, double beta);

/// Column sums of `slice` ([T, T] row-major) over rows in `visual`, one value
/// per visual column, in `visual` order.
std::vector<double> in_degree_centrality(std::span<const float> slice, std::size_t seq_len,
                                         std::span<const std::uint32_t> visual);

std::vector<double> aggregate_mean(std::span<const std::vector<double>> per_head);
std::vector<double> aggregate_max(std::span<const std::vector<double>> per_head);

struct ImportanceScores {
    std::string doc_id;
    std::vector<double> scores;  ///< aligned with visual patch order
};

ImportanceScores sap_scores(const DocumentBundle& bundle, Method method, LayerWindow window);
ImportanceScores sap_scores(const DocumentBundle& bundle, const PruneConfig& config);

/// Last-layer attention row of the EOS token, averaged over heads.
ImportanceScores eos_scores(const DocumentBundle& bundle);

/// max(1, round-half-up(gamma * n)).
std::size_t keep_count(double gamma, std::size_t n);

struct PruneResult {
    enum class Kind { kSelected, kMerged };

    std::string doc_id;
    Kind kind = Kind::kSelected;
    std::vector<std::uint32_t> selected;  ///< ascending, kind == kSelected
    Tensor merged;                        ///< [K, d], kind == kMerged
    std::size_t count = 0;                ///< K
    PruneConfig config;

    /// Kept rows of `full` or the merged centroids.
    Tensor pruned_embeddings(const Tensor& full) const;
};

/// K largest scores, ties to the smaller index, output ascending.
PruneResult top_k_select(const ImportanceScores& scores, std::size_t k);

/// K distinct indices from the (seed, doc_id) stream, partial Fisher-Yates.
PruneResult random_select(const std::string& doc_id, std::size_t n, std::size_t k, std::uint64_t seed);

struct DocScoreStats {
    std::string doc_id;
    double mean = 0.0;
    double stddev = 0.0;  ///< population
};

struct AdaptiveCalibration {
    double k_factor = 0.0;
    double gamma = 0.0;
    std::vector<DocScoreStats> per_doc;
    std::size_t calib_size = 0;
};

/// Empirical quantile with linear interpolation, h = (n - 1) p.
double quantile_linear(std::vector<double> values, double p);

DocScoreStats score_stats(const ImportanceScores& scores);

AdaptiveCalibration adaptive_calibrate(std::span<const ImportanceScores> eos, double gamma);

/// Keeps j iff s_j > mean + k * stddev; falls back to the single best patch.
PruneResult adaptive_select(const ImportanceScores& scores, double k_factor);

struct KMeansOptions {
    std::size_t k = 1;
    int max_iters = 50;
    double tol = 1e-6;
    int restarts = 10;  ///< independent k-means++ starts; the lowest WCSS wins
    std::uint64_t seed = 0;
    std::string stream_key;
};

struct KMeansResult {
    Tensor centroids;                       ///< [K, d]
    std::vector<std::uint32_t> assignment;  ///< cluster per point
    std::vector<double> wcss_history;       ///< after each Lloyd iteration of the winning start
    double wcss = 0.0;
    int iterations = 0;
};

double wcss(const Tensor& points, const Tensor& centroids, std::span<const std::uint32_t> assignment);

/// Lloyd's algorithm with k-means++ seeding, repeated from `restarts`
/// independent seedings; the lowest final WCSS wins (ties to the earlier start).
/// Empty clusters are re-seeded at the point farthest from its centroid.
KMeansResult kmeans(const Tensor& points, const KMeansOptions& options);

PruneResult kmeans_merge(const std::string& doc_id, const Tensor& embeddings, std::size_t k, int max_iters,
                         double tol, std::uint64_t seed, int restarts = 10);

/// Dispatches on config.method. adaptive_eos needs config.adaptive_k.
PruneResult prune(const DocumentBundle& bundle, const PruneConfig& config);

}  // namespace sap
