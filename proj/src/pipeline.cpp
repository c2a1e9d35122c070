#include "sap/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "sap/error.hpp"
#include "sap/parallel.hpp"
#include "sap/rng.hpp"

namespace sap::pipeline {

using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
    out << text;
    out.flush();
    if (!out) fail(ErrorCode::kIo, "write failure on " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::kFormat, path.string() + ": invalid JSON: " + e.what());
    }
}

json config_json(const PruneConfig& c) {
    return {{"method", std::string(method_name(c.method))},
            {"gamma", c.gamma},
            {"alpha", c.alpha},
            {"beta", c.beta},
            {"seed", c.seed},
            {"kmeans_max_iters", c.kmeans_max_iters},
            {"kmeans_tol", c.kmeans_tol},
            {"kmeans_restarts", c.kmeans_restarts},
            {"adaptive_k", c.adaptive_k ? json(*c.adaptive_k) : json(nullptr)}};
}

bool safe_stem(const std::string& id) {
    if (id.empty() || id.size() > 128 || id[0] == '.') return false;
    return std::all_of(id.begin(), id.end(), [](char ch) {
        return (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '_' ||
               ch == '-' || ch == '.';
    });
}

// Fallback stems start with '~', which safe ids never contain, so they cannot
// collide with another document's id.
std::string stem_for(const std::string& doc_id, std::size_t index) {
    if (safe_stem(doc_id)) return doc_id;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "~doc_%05zu", index);
    return buf;
}

Corpus load(const fs::path& corpus_path, const RunOptions& options, const std::optional<fs::path>& qrels = {}) {
    if (!fs::exists(corpus_path)) fail(ErrorCode::kInvalidArgument, "corpus manifest not found: " + corpus_path.string());
    CorpusLoadOptions lo;
    lo.row_sum = options.row_sum;
    lo.threads = options.threads;
    lo.qrels_override = qrels;
    return read_corpus(corpus_path, lo);
}

}  // namespace

std::vector<PruneResult> prune_corpus(const Corpus& corpus, const PruneConfig& config, int threads) {
    config.validate();
    if (config.method == Method::kAdaptiveEos && !config.adaptive_k) {
        fail(ErrorCode::kMissingCalibration,
             "adaptive_eos needs a calibrated k factor (run calibrate and pass --calibration)");
    }
    const std::size_t n = corpus.documents.size();
    std::vector<PruneResult> results(n);
    std::vector<std::optional<Error>> errors(n);
    parallel_for(n, threads, [&](std::size_t i) {
        try {
            results[i] = prune(corpus.documents[i], config);
        } catch (const Error& e) {
            errors[i] = e;
        } catch (const std::exception& e) {
            errors[i] = Error(ErrorCode::kInternal, e.what());
        }
    });
    std::size_t failed = 0;
    std::optional<Error> first;
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i]) continue;
        ++failed;
        std::fprintf(stderr, "error: %s: %s\n", corpus.documents[i].doc_id.c_str(), errors[i]->what());
        if (!first) first = errors[i];
    }
    if (first) {
        fail(first->code(), std::to_string(failed) + " of " + std::to_string(n) +
                                " documents failed to prune (first: " + first->what() + ")");
    }
    return results;
}

PruneSummary run_prune(const fs::path& corpus_path, const PruneConfig& config_in,
                       const std::optional<fs::path>& calibration_path, const RunOptions& options,
                       const fs::path& out_dir) {
    PruneConfig config = config_in;
    config.validate();
    if (config.method == Method::kAdaptiveEos && !config.adaptive_k) {
        if (!calibration_path) {
            fail(ErrorCode::kMissingCalibration,
                 "adaptive_eos needs a calibration file (run calibrate and pass --calibration)");
        }
        const AdaptiveCalibration cal = read_calibration(*calibration_path);
        config.adaptive_k = cal.k_factor;
    }
    const Corpus corpus = load(corpus_path, options);
    const auto results = prune_corpus(corpus, config, options.threads);

    fs::create_directories(out_dir / "results");
    fs::create_directories(out_dir / "embeddings");
    std::vector<json> entries(results.size());
    parallel_for(results.size(), options.threads, [&](std::size_t i) {
        const PruneResult& r = results[i];
        const DocumentBundle& doc = corpus.documents[i];
        const std::string stem = stem_for(doc.doc_id, i);
        const std::string emb_rel = "embeddings/" + stem + ".sapt";
        const std::string res_rel = "results/" + stem + ".json";
        write_tensor(r.pruned_embeddings(doc.embeddings), out_dir / emb_rel);
        json rj = {{"doc_id", r.doc_id},
                   {"method", std::string(method_name(config.method))},
                   {"gamma", config.gamma},
                   {"K", r.count},
                   {"N", doc.patch_count()}};
        if (r.kind == PruneResult::Kind::kMerged) {
            rj["kind"] = "merged";
            rj["merged"] = "../" + emb_rel;
        } else {
            rj["kind"] = "selected";
            rj["selected_indices"] = r.selected;
        }
        write_text(out_dir / res_rel, rj.dump(2) + "\n");
        entries[i] = {{"doc_id", doc.doc_id},
                      {"N", doc.patch_count()},
                      {"K", r.count},
                      {"result", res_rel},
                      {"embeddings", emb_rel}};
    });
    std::sort(entries.begin(), entries.end(),
              [](const json& a, const json& b) { return a["doc_id"].get<std::string>() < b["doc_id"].get<std::string>(); });

    PruneSummary s;
    s.corpus_id = corpus.corpus_id;
    s.config = config;
    s.num_docs = results.size();
    double ratio = 0.0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        ratio += static_cast<double>(results[i].count) / static_cast<double>(corpus.documents[i].patch_count());
    }
    s.mean_keep_ratio = results.empty() ? 0.0 : ratio / static_cast<double>(results.size());

    const json summary = {{"corpus_id", s.corpus_id},
                          {"config", config_json(config)},
                          {"num_docs", s.num_docs},
                          {"mean_keep_ratio", s.mean_keep_ratio},
                          {"documents", entries}};
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    return s;
}

std::vector<Tensor> read_pruned_index(const Corpus& corpus, const fs::path& pruned_dir, std::string* config_out) {
    const fs::path summary_path = pruned_dir / "summary.json";
    if (!fs::exists(summary_path)) {
        fail(ErrorCode::kInvalidArgument, "pruned index not found (missing " + summary_path.string() + ")");
    }
    const json s = read_json(summary_path);
    if (!s.contains("documents") || !s["documents"].is_array()) {
        fail(ErrorCode::kFormat, summary_path.string() + ": missing documents list");
    }
    std::map<std::string, std::string> paths;
    for (const auto& e : s["documents"]) {
        if (!e.contains("doc_id") || !e.contains("embeddings")) fail(ErrorCode::kFormat, summary_path.string() + ": malformed entry");
        paths[e["doc_id"].get<std::string>()] = e["embeddings"].get<std::string>();
    }
    std::vector<Tensor> out;
    out.reserve(corpus.documents.size());
    for (const auto& d : corpus.documents) {
        auto it = paths.find(d.doc_id);
        if (it == paths.end()) fail(ErrorCode::kValidation, "pruned index has no entry for document " + d.doc_id);
        Tensor t = read_tensor(pruned_dir / it->second);
        require(t.rank() == 2 && t.rows() >= 1 && t.cols() == corpus.embed_dim, ErrorCode::kValidation,
                "pruned embeddings for " + d.doc_id + " do not match the corpus dimension");
        out.push_back(std::move(t));
        paths.erase(it);
    }
    if (!paths.empty()) fail(ErrorCode::kValidation, "pruned index lists unknown document " + paths.begin()->first);
    if (config_out) *config_out = s.contains("config") ? s["config"].dump() : "null";
    return out;
}

AdaptiveCalibration calibrate_corpus(const Corpus& corpus, const CalibrateOptions& options) {
    require(options.calib_size >= 1, ErrorCode::kInvalidArgument, "calibration size must be >= 1");
    const std::size_t n = corpus.documents.size();
    std::vector<std::size_t> pick(n);
    std::iota(pick.begin(), pick.end(), 0);
    if (n > options.calib_size) {
        Rng rng = Rng::stream(options.seed, "calibration");
        for (std::size_t i = 0; i < options.calib_size; ++i) std::swap(pick[i], pick[i + rng.uniform_below(n - i)]);
        pick.resize(options.calib_size);
        std::sort(pick.begin(), pick.end());
    }
    std::vector<ImportanceScores> eos;
    eos.reserve(pick.size());
    for (std::size_t i : pick) eos.push_back(eos_scores(corpus.documents[i]));
    return adaptive_calibrate(eos, options.gamma);
}

void write_calibration(const AdaptiveCalibration& cal, std::uint64_t seed, const fs::path& path) {
    json per_doc = json::array();
    for (const auto& s : cal.per_doc) per_doc.push_back({{"doc_id", s.doc_id}, {"mean", s.mean}, {"stddev", s.stddev}});
    const json j = {{"gamma", cal.gamma},
                    {"k_factor", cal.k_factor},
                    {"calib_size", cal.calib_size},
                    {"seed", seed},
                    {"per_doc", per_doc}};
    write_text(path, j.dump(2) + "\n");
}

AdaptiveCalibration read_calibration(const fs::path& path) {
    if (!fs::exists(path)) fail(ErrorCode::kMissingCalibration, "calibration file not found: " + path.string());
    const json j = read_json(path);
    AdaptiveCalibration cal;
    try {
        cal.k_factor = j.at("k_factor").get<double>();
        cal.gamma = j.at("gamma").get<double>();
        cal.calib_size = j.at("calib_size").get<std::size_t>();
        for (const auto& e : j.at("per_doc")) {
            cal.per_doc.push_back({e.at("doc_id").get<std::string>(), e.at("mean").get<double>(), e.at("stddev").get<double>()});
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::kFormat, path.string() + ": malformed calibration: " + e.what());
    }
    require(std::isfinite(cal.k_factor), ErrorCode::kFormat, path.string() + ": k_factor is not finite");
    return cal;
}

AdaptiveCalibration run_calibrate(const fs::path& corpus_path, const CalibrateOptions& calib,
                                  const RunOptions& options, const fs::path& out_path) {
    const Corpus corpus = load(corpus_path, options);
    AdaptiveCalibration cal = calibrate_corpus(corpus, calib);
    write_calibration(cal, calib.seed, out_path);
    return cal;
}

std::string run_eval(const fs::path& corpus_path, const std::vector<fs::path>& pruned_dirs,
                     const std::optional<fs::path>& qrels_path, std::size_t k, const RunOptions& options,
                     const fs::path& out_dir) {
    require(!pruned_dirs.empty(), ErrorCode::kInvalidArgument, "eval needs at least one pruned index");
    require(k >= 1, ErrorCode::kInvalidArgument, "ndcg cutoff k must be >= 1");
    if (qrels_path && !fs::exists(*qrels_path)) {
        fail(ErrorCode::kInvalidArgument, "qrels file not found: " + qrels_path->string());
    }
    if (!qrels_path && fs::exists(corpus_path)) {
        const CorpusManifest m = read_corpus_manifest(corpus_path);
        const fs::path q = m.qrels.is_absolute() ? m.qrels : corpus_path.parent_path() / m.qrels;
        if (m.qrels.empty() || !fs::exists(q)) fail(ErrorCode::kInvalidArgument, "qrels file not found: " + q.string());
    }
    const Corpus corpus = load(corpus_path, options, qrels_path);

    fs::create_directories(out_dir);
    json configs = json::array();
    std::string csv = "config,query_id,ndcg,full_ndcg,mean_osr\n";
    std::vector<double> osr_by_config, ndcg_by_config;
    double full_mean = 0.0;
    char buf[128];
    for (std::size_t c = 0; c < pruned_dirs.size(); ++c) {
        std::string cfg_text;
        const auto pruned = read_pruned_index(corpus, pruned_dirs[c], &cfg_text);
        const EvalReport rep = evaluate(corpus, pruned, k, options.threads);
        full_mean = rep.full_mean_ndcg;
        json per_query = json::array();
        for (const auto& q : rep.per_query) {
            per_query.push_back({{"query_id", q.query_id},
                                 {"ndcg", q.ndcg},
                                 {"full_ndcg", q.full_ndcg},
                                 {"mean_osr", q.mean_osr ? json(*q.mean_osr) : json(nullptr)}});
            std::snprintf(buf, sizeof(buf), "%zu,", c);
            csv += buf + q.query_id;
            std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,", q.ndcg, q.full_ndcg);
            csv += buf;
            if (q.mean_osr) {
                std::snprintf(buf, sizeof(buf), "%.17g", *q.mean_osr);
                csv += buf;
            }
            csv += "\n";
        }
        configs.push_back({{"config", json::parse(cfg_text)},
                           {"aggregate",
                            {{"mean_ndcg", rep.mean_ndcg},
                             {"mean_osr", rep.mean_osr},
                             {"retention_pct", rep.retention_pct ? json(*rep.retention_pct) : json(nullptr)},
                             {"num_pairs", rep.num_pairs}}},
                           {"per_query", per_query}});
        osr_by_config.push_back(rep.mean_osr);
        ndcg_by_config.push_back(rep.mean_ndcg);

        std::ostringstream run;
        write_run(run, rep.rankings);
        write_text(out_dir / ("run_" + std::to_string(c) + ".tsv"), run.str());
        if (c == 0) {
            std::ostringstream full_run;
            write_run(full_run, rep.full_rankings);
            write_text(out_dir / "run_full.tsv", full_run.str());
        }
    }
    json r_value = nullptr;
    if (osr_by_config.size() >= 2) {
        try {
            r_value = pearson(osr_by_config, ndcg_by_config);
        } catch (const Error&) {
            r_value = nullptr;
        }
    }
    const json report = {{"corpus_id", corpus.corpus_id},
                         {"k", k},
                         {"num_queries", corpus.queries.size()},
                         {"full", {{"mean_ndcg", full_mean}}},
                         {"configs", configs},
                         {"pearson_r", r_value}};
    const std::string text = report.dump(2) + "\n";
    write_text(out_dir / "report.json", text);
    write_text(out_dir / "report.csv", csv);
    return text;
}

LayerCurve run_sweep(const fs::path& corpus_path, Method method, double gamma, const RunOptions& options,
                     const fs::path& out_dir) {
    require(gamma > 0.0 && gamma <= 1.0, ErrorCode::kInvalidArgument, "gamma must lie in (0, 1]");
    const Corpus corpus = load(corpus_path, options);
    const LayerCurve curve = layer_sweep(corpus, method, gamma, options.threads);
    const auto L = static_cast<std::uint32_t>(curve.mean_osr.size());
    json rows = json::array();
    std::string csv = "layer,relative_depth,mean_osr\n";
    char buf[96];
    for (std::uint32_t l = 1; l <= L; ++l) {
        const double depth = static_cast<double>(l) / L;
        rows.push_back({{"layer", l}, {"relative_depth", depth}, {"mean_osr", curve.mean_osr[l - 1]}});
        std::snprintf(buf, sizeof(buf), "%u,%.17g,%.17g\n", l, depth, curve.mean_osr[l - 1]);
        csv += buf;
    }
    const LayerWindow w = layer_window(L, 0.4, 0.6);
    const json j = {{"corpus_id", corpus.corpus_id},
                    {"method", std::string(method_name(method))},
                    {"gamma", gamma},
                    {"num_layers", L},
                    {"central_window", {{"first", w.first}, {"last", w.last}}},
                    {"curve", rows}};
    fs::create_directories(out_dir);
    write_text(out_dir / "layer_curve.json", j.dump(2) + "\n");
    write_text(out_dir / "layer_curve.csv", csv);
    return curve;
}

// ---------------------------------------------------------------------------
// Latency benchmark

namespace {

DocumentBundle bench_page(const BenchConfig& c) {
    Rng rng(c.seed);
    DocumentBundle b;
    b.doc_id = "bench";
    b.num_heads = c.heads;
    b.seq_len = c.patches + 4;
    b.visual_indices.resize(c.patches);
    std::iota(b.visual_indices.begin(), b.visual_indices.end(), 0u);
    b.eos_index = b.seq_len - 1;
    const std::size_t T = b.seq_len;
    std::vector<float> emb(static_cast<std::size_t>(c.patches) * c.embed_dim);
    for (std::size_t i = 0; i < c.patches; ++i) {
        double norm = 0.0;
        float* r = emb.data() + i * c.embed_dim;
        for (std::size_t t = 0; t < c.embed_dim; ++t) {
            r[t] = static_cast<float>(rng.normal());
            norm += static_cast<double>(r[t]) * r[t];
        }
        const double inv = 1.0 / std::sqrt(norm);
        for (std::size_t t = 0; t < c.embed_dim; ++t) r[t] = static_cast<float>(r[t] * inv);
    }
    b.embeddings = Tensor({c.patches, c.embed_dim}, std::move(emb));
    b.layers.resize(c.window_layers);
    std::vector<double> row(T);
    for (auto& layer : b.layers) {
        std::vector<float> a(c.heads * T * T);
        for (std::size_t r = 0; r < c.heads * T; ++r) {
            double s = 0.0;
            for (double& v : row) {
                v = rng.uniform01() + 1e-3;
                s += v;
            }
            float* dst = a.data() + r * T;
            for (std::size_t j = 0; j < T; ++j) dst[j] = static_cast<float>(row[j] / s);
        }
        layer = Tensor({c.heads, static_cast<std::size_t>(T), static_cast<std::size_t>(T)}, std::move(a));
    }
    return b;
}

}  // namespace

std::vector<BenchRow> bench_methods(const BenchConfig& config) {
    require(config.patches >= 2 && config.heads >= 1 && config.window_layers >= 1 && config.embed_dim >= 1,
            ErrorCode::kInvalidArgument, "bench: sizes must be positive");
    require(config.reps >= 1, ErrorCode::kInvalidArgument, "bench: reps must be >= 1");
    const DocumentBundle page = bench_page(config);
    const ImportanceScores eos = eos_scores(page);
    const double k_factor = adaptive_calibrate(std::span<const ImportanceScores>(&eos, 1), config.gamma).k_factor;

    std::vector<BenchRow> rows;
    for (Method m : {Method::kRandom, Method::kEos, Method::kAdaptiveEos, Method::kSapMax, Method::kSapMean,
                     Method::kCluster}) {
        PruneConfig pc;
        pc.method = m;
        pc.gamma = config.gamma;
        pc.alpha = 0.0;  // the page holds exactly the window layers
        pc.beta = 1.0;
        pc.seed = config.seed;
        pc.kmeans_restarts = config.kmeans_restarts;
        if (m == Method::kAdaptiveEos) pc.adaptive_k = k_factor;
        std::size_t sink = prune(page, pc).count;  // warm-up
        double total = 0.0;
        double best = 0.0;
        for (int r = 0; r < config.reps; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            sink += prune(page, pc).count;
            const auto t1 = std::chrono::steady_clock::now();
            const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            total += ms;
            best = r == 0 ? ms : std::min(best, ms);
        }
        require(sink > 0, ErrorCode::kInternal, "bench: empty selection");
        rows.push_back({m, total / config.reps, best});
    }
    return rows;
}

std::string bench_report_json(const BenchConfig& config, const std::vector<BenchRow>& rows) {
    double base = 0.0;
    for (const auto& r : rows) {
        if (r.method == Method::kSapMean) base = r.mean_ms;
    }
    json out = json::array();
    for (const auto& r : rows) {
        out.push_back({{"method", std::string(method_name(r.method))},
                       {"mean_ms", r.mean_ms},
                       {"min_ms", r.min_ms},
                       {"relative_to_sap_mean", base > 0.0 ? json(r.mean_ms / base) : json(nullptr)}});
    }
    const json j = {{"workload",
                     {{"N", config.patches},
                      {"H", config.heads},
                      {"window_layers", config.window_layers},
                      {"d", config.embed_dim},
                      {"T", config.patches + 4},
                      {"gamma", config.gamma},
                      {"K", keep_count(config.gamma, config.patches)},
                      {"reps", config.reps},
                      {"kmeans_restarts", config.kmeans_restarts},
                      {"seed", config.seed}}},
                    {"rows", out}};
    return j.dump(2) + "\n";
}

}  // namespace sap::pipeline
