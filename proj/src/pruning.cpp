#include "sap/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sap/error.hpp"
#include "sap/rng.hpp"

namespace sap {

std::string_view method_name(Method m) noexcept {
    switch (m) {
        case Method::kSapMean: return "sap_mean";
        case Method::kSapMax: return "sap_max";
        case Method::kRandom: return "random";
        case Method::kEos: return "eos";
        case Method::kAdaptiveEos: return "adaptive_eos";
        case Method::kCluster: return "cluster";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    for (Method m : {Method::kSapMean, Method::kSapMax, Method::kRandom, Method::kEos, Method::kAdaptiveEos,
                     Method::kCluster}) {
        if (method_name(m) == name) return m;
    }
    fail(ErrorCode::kInvalidArgument, "unknown method '" + std::string(name) +
                                          "' (expected sap_mean, sap_max, random, eos, adaptive_eos, cluster)");
}

bool is_fixed_ratio(Method m) noexcept { return m != Method::kAdaptiveEos; }

void PruneConfig::validate() const {
    require(gamma > 0.0 && gamma <= 1.0, ErrorCode::kInvalidArgument, "gamma must lie in (0, 1]");
    require(alpha >= 0.0 && beta <= 1.0 && alpha < beta, ErrorCode::kInvalidArgument,
            "window bounds need 0 <= alpha < beta <= 1");
    require(kmeans_max_iters >= 1, ErrorCode::kInvalidArgument, "kmeans_max_iters must be >= 1");
    require(kmeans_restarts >= 1, ErrorCode::kInvalidArgument, "kmeans_restarts must be >= 1");
    require(kmeans_tol >= 0.0 && std::isfinite(kmeans_tol), ErrorCode::kInvalidArgument, "kmeans_tol must be >= 0");
    if (adaptive_k) require(std::isfinite(*adaptive_k), ErrorCode::kInvalidArgument, "adaptive_k must be finite");
}

LayerWindow layer_window(std::uint32_t total_layers, double alpha, double beta) {
    require(total_layers >= 1, ErrorCode::kInvalidArgument, "total layer count must be >= 1");
    require(alpha >= 0.0 && beta <= 1.0 && alpha < beta, ErrorCode::kInvalidArgument,
            "window bounds need 0 <= alpha < beta <= 1");
    // The epsilon keeps products such as 0.29 * 100 = 28.999... on the intended integer.
    constexpr double kEps = 1e-9;
    const auto lo = static_cast<std::int64_t>(std::floor(alpha * total_layers + kEps));
    const auto hi = static_cast<std::int64_t>(std::floor(beta * total_layers + kEps));
    LayerWindow w;
    w.first = static_cast<std::uint32_t>(std::max<std::int64_t>(1, lo));
    w.last = static_cast<std::uint32_t>(std::min<std::int64_t>(total_layers, hi));
    // floor(beta * L) can be 0 for tiny beta; the window still keeps layer 1.
    if (w.last < w.first) w.last = w.first;
    return w;
}

namespace {

// Adds the column sums of the visual-by-visual block of one [T, T] slice to acc.
void accumulate_in_degree(const float* slice, std::size_t seq_len, std::span<const std::uint32_t> visual,
                          double* acc) {
    const std::size_t n = visual.size();
    if (n == 0) return;
    const bool contiguous = visual.back() - visual.front() + 1 == n;
    for (std::uint32_t i : visual) {
        const float* row = slice + static_cast<std::size_t>(i) * seq_len;
        if (contiguous) {
            const float* r = row + visual.front();
            for (std::size_t k = 0; k < n; ++k) acc[k] += r[k];
        } else {
            for (std::size_t k = 0; k < n; ++k) acc[k] += row[visual[k]];
        }
    }
}

void check_visual(std::span<const std::uint32_t> visual, std::size_t seq_len) {
    for (std::uint32_t v : visual) {
        require(v < seq_len, ErrorCode::kInvalidArgument, "visual index out of range");
    }
}

}  // namespace

std::vector<double> in_degree_centrality(std::span<const float> slice, std::size_t seq_len,
                                         std::span<const std::uint32_t> visual) {
    require(seq_len >= 1 && slice.size() == seq_len * seq_len, ErrorCode::kInvalidArgument,
            "attention slice must be square [T, T]");
    check_visual(visual, seq_len);
    std::vector<double> acc(visual.size(), 0.0);
    accumulate_in_degree(slice.data(), seq_len, visual, acc.data());
    return acc;
}

namespace {

void check_heads(std::span<const std::vector<double>> per_head) {
    require(!per_head.empty(), ErrorCode::kInvalidArgument, "head aggregation needs at least one head");
    const std::size_t n = per_head.front().size();
    for (const auto& h : per_head) {
        require(h.size() == n, ErrorCode::kInvalidArgument, "ragged per-head centralities");
    }
}

}  // namespace

std::vector<double> aggregate_mean(std::span<const std::vector<double>> per_head) {
    check_heads(per_head);
    std::vector<double> out(per_head.front().size(), 0.0);
    for (const auto& h : per_head) {
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += h[j];
    }
    const double inv = 1.0 / static_cast<double>(per_head.size());
    for (double& v : out) v *= inv;
    return out;
}

std::vector<double> aggregate_max(std::span<const std::vector<double>> per_head) {
    check_heads(per_head);
    std::vector<double> out = per_head.front();
    for (std::size_t h = 1; h < per_head.size(); ++h) {
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::max(out[j], per_head[h][j]);
    }
    return out;
}

ImportanceScores sap_scores(const DocumentBundle& bundle, Method method, LayerWindow window) {
    require(method == Method::kSapMean || method == Method::kSapMax, ErrorCode::kInvalidArgument,
            "sap_scores needs method sap_mean or sap_max");
    require(window.first >= 1 && window.first <= window.last && window.last <= bundle.num_layers(),
            ErrorCode::kInvalidArgument,
            bundle.doc_id + ": layer window " + std::to_string(window.first) + ".." + std::to_string(window.last) +
                " outside 1.." + std::to_string(bundle.num_layers()));
    const std::size_t n = bundle.patch_count();
    const std::size_t T = bundle.seq_len;
    check_visual(bundle.visual_indices, T);
    // The head mean of column sums equals the column sum over all heads divided by H,
    // so SAP-Mean streams every head into one accumulator; SAP-Max needs one per head.
    std::vector<double> total(n, 0.0);
    std::vector<double> acc(n);
    const double inv_heads = 1.0 / static_cast<double>(bundle.num_heads);
    for (std::uint32_t l = window.first; l <= window.last; ++l) {
        if (method == Method::kSapMean) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::uint32_t h = 0; h < bundle.num_heads; ++h) {
                accumulate_in_degree(bundle.attention(l, h).data(), T, bundle.visual_indices, acc.data());
            }
            for (std::size_t j = 0; j < n; ++j) total[j] += acc[j] * inv_heads;
        } else {
            std::vector<double> best(n, 0.0);
            for (std::uint32_t h = 0; h < bundle.num_heads; ++h) {
                std::fill(acc.begin(), acc.end(), 0.0);
                accumulate_in_degree(bundle.attention(l, h).data(), T, bundle.visual_indices, acc.data());
                for (std::size_t j = 0; j < n; ++j) best[j] = h == 0 ? acc[j] : std::max(best[j], acc[j]);
            }
            for (std::size_t j = 0; j < n; ++j) total[j] += best[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(window.size());
    for (double& v : total) v *= inv;
    return {bundle.doc_id, std::move(total)};
}

ImportanceScores sap_scores(const DocumentBundle& bundle, const PruneConfig& config) {
    return sap_scores(bundle, config.method, layer_window(bundle.num_layers(), config.alpha, config.beta));
}

ImportanceScores eos_scores(const DocumentBundle& bundle) {
    require(bundle.eos_index.has_value(), ErrorCode::kInvalidArgument,
            bundle.doc_id + ": eos scoring needs an eos_index");
    const std::uint32_t last = bundle.num_layers();
    const std::uint32_t eos = *bundle.eos_index;
    std::vector<double> scores(bundle.patch_count(), 0.0);
    for (std::uint32_t h = 0; h < bundle.num_heads; ++h) {
        const float* row = bundle.attention(last, h).data() + static_cast<std::size_t>(eos) * bundle.seq_len;
        for (std::size_t j = 0; j < scores.size(); ++j) scores[j] += row[bundle.visual_indices[j]];
    }
    const double inv = 1.0 / static_cast<double>(bundle.num_heads);
    for (double& v : scores) v *= inv;
    return {bundle.doc_id, std::move(scores)};
}

std::size_t keep_count(double gamma, std::size_t n) {
    require(gamma > 0.0 && gamma <= 1.0, ErrorCode::kInvalidArgument, "gamma must lie in (0, 1]");
    require(n >= 1, ErrorCode::kInvalidArgument, "patch count must be >= 1");
    // Round half up; the epsilon keeps products such as 0.15 * 10 = 1.4999... rounding up.
    const double k = std::floor(gamma * static_cast<double>(n) + 0.5 + 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, n);
}

Tensor PruneResult::pruned_embeddings(const Tensor& full) const {
    if (kind == Kind::kMerged) return merged;
    return full.gather_rows(selected);
}

PruneResult top_k_select(const ImportanceScores& scores, std::size_t k) {
    const std::size_t n = scores.scores.size();
    require(k >= 1 && k <= n, ErrorCode::kInvalidArgument,
            "top-k size " + std::to_string(k) + " outside 1.." + std::to_string(n));
    for (double s : scores.scores) require(std::isfinite(s), ErrorCode::kNumeric, scores.doc_id + ": non-finite score");
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    const auto& s = scores.scores;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::uint32_t a, std::uint32_t b) { return s[a] > s[b] || (s[a] == s[b] && a < b); });
    order.resize(k);
    std::sort(order.begin(), order.end());
    PruneResult r;
    r.doc_id = scores.doc_id;
    r.kind = PruneResult::Kind::kSelected;
    r.selected = std::move(order);
    r.count = k;
    return r;
}

PruneResult random_select(const std::string& doc_id, std::size_t n, std::size_t k, std::uint64_t seed) {
    require(k >= 1 && k <= n, ErrorCode::kInvalidArgument,
            "random selection size " + std::to_string(k) + " outside 1.." + std::to_string(n));
    Rng rng = Rng::stream(seed, doc_id);
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_below(n - i);
        std::swap(perm[i], perm[j]);
    }
    perm.resize(k);
    std::sort(perm.begin(), perm.end());
    PruneResult r;
    r.doc_id = doc_id;
    r.selected = std::move(perm);
    r.count = k;
    return r;
}

double quantile_linear(std::vector<double> values, double p) {
    require(!values.empty(), ErrorCode::kNumeric, "quantile of an empty set");
    require(p >= 0.0 && p <= 1.0, ErrorCode::kInvalidArgument, "quantile level must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = static_cast<double>(values.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

DocScoreStats score_stats(const ImportanceScores& scores) {
    const auto& s = scores.scores;
    require(!s.empty(), ErrorCode::kNumeric, scores.doc_id + ": no scores");
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    var /= static_cast<double>(s.size());
    return {scores.doc_id, mean, std::sqrt(var)};
}

AdaptiveCalibration adaptive_calibrate(std::span<const ImportanceScores> eos, double gamma) {
    require(gamma > 0.0 && gamma <= 1.0, ErrorCode::kInvalidArgument, "gamma must lie in (0, 1]");
    require(!eos.empty(), ErrorCode::kNumeric, "calibration needs at least one document");
    AdaptiveCalibration cal;
    cal.gamma = gamma;
    cal.calib_size = eos.size();
    std::vector<double> pool;
    for (const auto& doc : eos) {
        require(doc.scores.size() >= 2, ErrorCode::kInvalidArgument,
                doc.doc_id + ": calibration documents need at least two patches");
        const DocScoreStats st = score_stats(doc);
        cal.per_doc.push_back(st);
        for (double v : doc.scores) pool.push_back(st.stddev > 0.0 ? (v - st.mean) / st.stddev : 0.0);
    }
    cal.k_factor = quantile_linear(std::move(pool), 1.0 - gamma);
    return cal;
}

PruneResult adaptive_select(const ImportanceScores& scores, double k_factor) {
    const DocScoreStats st = score_stats(scores);
    const double threshold = st.mean + k_factor * st.stddev;
    PruneResult r;
    r.doc_id = scores.doc_id;
    for (std::size_t j = 0; j < scores.scores.size(); ++j) {
        if (scores.scores[j] > threshold) r.selected.push_back(static_cast<std::uint32_t>(j));
    }
    if (r.selected.empty()) {
        const auto best = std::max_element(scores.scores.begin(), scores.scores.end());
        r.selected.push_back(static_cast<std::uint32_t>(best - scores.scores.begin()));
    }
    r.count = r.selected.size();
    return r;
}

PruneResult kmeans_merge(const std::string& doc_id, const Tensor& embeddings, std::size_t k, int max_iters,
                         double tol, std::uint64_t seed, int restarts) {
    KMeansOptions opt;
    opt.k = k;
    opt.max_iters = max_iters;
    opt.tol = tol;
    opt.restarts = restarts;
    opt.seed = seed;
    opt.stream_key = doc_id + "/kmeans";
    KMeansResult km = kmeans(embeddings, opt);
    PruneResult r;
    r.doc_id = doc_id;
    r.kind = PruneResult::Kind::kMerged;
    r.merged = std::move(km.centroids);
    r.count = k;
    return r;
}

PruneResult prune(const DocumentBundle& bundle, const PruneConfig& config) {
    config.validate();
    const std::size_t n = bundle.patch_count();
    const std::size_t k = keep_count(config.gamma, n);
    PruneResult r;
    switch (config.method) {
        case Method::kSapMean:
        case Method::kSapMax:
            r = top_k_select(sap_scores(bundle, config), k);
            break;
        case Method::kRandom:
            r = random_select(bundle.doc_id, n, k, config.seed);
            break;
        case Method::kEos:
            r = top_k_select(eos_scores(bundle), k);
            break;
        case Method::kAdaptiveEos:
            if (!config.adaptive_k) {
                fail(ErrorCode::kMissingCalibration,
                     "adaptive_eos needs a calibrated k factor (run calibrate and pass --calibration)");
            }
            r = adaptive_select(eos_scores(bundle), *config.adaptive_k);
            break;
        case Method::kCluster:
            r = kmeans_merge(bundle.doc_id, bundle.embeddings, k, config.kmeans_max_iters, config.kmeans_tol,
                             config.seed, config.kmeans_restarts);
            break;
    }
    r.config = config;
    return r;
}

}  // namespace sap
