// Command-line front end over the C API. Every subcommand writes machine-readable
// JSON to its output location and prints a human table rendered from that JSON.
//
// Exit codes: 0 success, 1 computation error, 2 usage error.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sap/sap.h"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitComputation = 1;
constexpr int kExitUsage = 2;

int report_status(sap_status s) {
    if (s == SAP_OK) return kExitOk;
    std::fprintf(stderr, "error [%s]: %s\n", sap_status_name(s), sap_last_error());
    return (s == SAP_ERR_INVALID_ARGUMENT || s == SAP_ERR_MISSING_CALIBRATION) ? kExitUsage : kExitComputation;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt(const json& v, const char* spec = "%.4f") {
    if (v.is_null()) return "-";
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v.get<double>());
    return buf;
}

struct Common {
    std::string corpus;
    std::string out;
    int threads = 1;
    bool strict_rowsum = true;

    sap_run_options options() const {
        sap_run_options o;
        sap_run_options_init(&o);
        o.threads = threads;
        o.strict_rowsum = strict_rowsum ? 1 : 0;
        return o;
    }
};

void add_common(CLI::App* cmd, Common& c, bool needs_corpus = true) {
    if (needs_corpus) cmd->add_option("--corpus", c.corpus, "Corpus manifest (corpus.json)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--threads", c.threads, "Worker threads for per-document fan-out")
        ->default_val(1)
        ->check(CLI::Range(1, 256));
    cmd->add_option("--strict-rowsum", c.strict_rowsum,
                    "Reject attention rows whose sum deviates from 1 by more than 1e-3 (false: warn only)")
        ->default_val(true);
}

struct PruneFlags {
    std::string method = "sap_mean";
    double gamma = 0.1;
    double alpha = 0.4;
    double beta = 0.6;
    std::uint64_t seed = 0;
    int kmeans_iters = 50;
    double kmeans_tol = 1e-6;
    int kmeans_restarts = 10;
};

void add_prune_flags(CLI::App* cmd, PruneFlags& p) {
    cmd->add_option("--method", p.method, "sap_mean | sap_max | random | eos | adaptive_eos | cluster")
        ->default_val("sap_mean");
    cmd->add_option("--gamma", p.gamma, "Retention ratio in (0, 1]")->default_val(0.1);
    cmd->add_option("--alpha", p.alpha, "Window start as a fraction of depth")->default_val(0.4);
    cmd->add_option("--beta", p.beta, "Window end as a fraction of depth")->default_val(0.6);
    cmd->add_option("--seed", p.seed, "Seed for random selection and k-means")->default_val(0);
    cmd->add_option("--kmeans-iters", p.kmeans_iters, "Maximum Lloyd iterations")->default_val(50);
    cmd->add_option("--kmeans-tol", p.kmeans_tol, "WCSS improvement tolerance")->default_val(1e-6);
    cmd->add_option("--kmeans-restarts", p.kmeans_restarts, "k-means++ restarts; the lowest WCSS wins")
        ->default_val(10);
}

int to_config(const PruneFlags& p, sap_prune_config& c) {
    sap_prune_config_init(&c);
    const sap_status s = sap_method_from_name(p.method.c_str(), &c.method);
    if (s != SAP_OK) return report_status(s);
    c.gamma = p.gamma;
    c.alpha = p.alpha;
    c.beta = p.beta;
    c.seed = p.seed;
    c.kmeans_max_iters = p.kmeans_iters;
    c.kmeans_tol = p.kmeans_tol;
    c.kmeans_restarts = p.kmeans_restarts;
    return kExitOk;
}

void print_eval(const json& r) {
    std::printf("corpus %s   queries %zu   NDCG@%d\n", r["corpus_id"].get<std::string>().c_str(),
                r["num_queries"].get<std::size_t>(), r["k"].get<int>());
    std::printf("%-14s %7s %10s %10s %10s %12s\n", "method", "gamma", "NDCG", "OSR", "retain%", "pairs");
    std::printf("%-14s %7s %10s %10s %10s %12s\n", "full", "1.00", fmt(r["full"]["mean_ndcg"]).c_str(), "1.0000",
                "100.00", "-");
    for (const auto& c : r["configs"]) {
        const auto& a = c["aggregate"];
        std::printf("%-14s %7s %10s %10s %10s %12zu\n", c["config"]["method"].get<std::string>().c_str(),
                    fmt(c["config"]["gamma"], "%.2f").c_str(), fmt(a["mean_ndcg"]).c_str(),
                    fmt(a["mean_osr"]).c_str(), fmt(a["retention_pct"], "%.2f").c_str(),
                    a["num_pairs"].get<std::size_t>());
    }
    if (!r["pearson_r"].is_null()) std::printf("pearson r (OSR vs NDCG across configs): %s\n", fmt(r["pearson_r"]).c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structural anchor pruning for multi-vector visual retrieval indexes"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(sap_version()));
    bool quiet = false;
    app.add_flag("--quiet", quiet, "Silence advisory warnings");

    // synth
    Common synth_c;
    sap_synth_config synth;
    sap_synth_config_init(&synth);
    bool no_diffusion = false;
    auto* cmd_synth = app.add_subcommand("synth", "Generate a planted-anchor synthetic corpus");
    cmd_synth->add_option("--out", synth_c.out, "Output directory")->required();
    cmd_synth->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
    cmd_synth->add_option("--docs", synth.num_docs, "Number of documents")->capture_default_str();
    cmd_synth->add_option("--queries", synth.num_queries, "Number of queries")->capture_default_str();
    cmd_synth->add_option("--patches", synth.patches, "Visual patches per document (N)")->capture_default_str();
    cmd_synth->add_option("--dim", synth.embed_dim, "Embedding dimension (d)")->capture_default_str();
    cmd_synth->add_option("--layers", synth.layers, "Transformer layers (L)")->capture_default_str();
    cmd_synth->add_option("--heads", synth.heads, "Attention heads (H)")->capture_default_str();
    cmd_synth->add_option("--seq-len", synth.seq_len, "Sequence length (T)")->capture_default_str();
    cmd_synth->add_option("--anchors", synth.anchors_per_doc, "Planted anchors per document")->capture_default_str();
    cmd_synth->add_option("--anchor-mass", synth.anchor_mass, "Attention mass on anchors inside the window")
        ->capture_default_str();
    cmd_synth->add_option("--noise", synth.noise_scale, "Query token noise scale")->capture_default_str();
    cmd_synth->add_flag("--no-diffusion", no_diffusion, "Keep anchor structure in the final layer");

    // prune
    Common prune_c;
    PruneFlags prune_f;
    std::string calibration;
    auto* cmd_prune = app.add_subcommand("prune", "Prune every document of a corpus");
    add_common(cmd_prune, prune_c);
    add_prune_flags(cmd_prune, prune_f);
    cmd_prune->add_option("--calibration", calibration, "Calibration JSON from `calibrate` (adaptive_eos)")
        ->check(CLI::ExistingFile);
    cmd_prune->add_option("--out", prune_c.out, "Pruned index directory")->required();

    // calibrate
    Common cal_c;
    double cal_gamma = 0.1;
    std::uint64_t cal_seed = 0;
    std::size_t cal_size = 128;
    auto* cmd_cal = app.add_subcommand("calibrate", "Fit the adaptive EOS threshold factor");
    add_common(cmd_cal, cal_c);
    cmd_cal->add_option("--gamma", cal_gamma, "Target retention ratio")->default_val(0.1);
    cmd_cal->add_option("--seed", cal_seed, "Seed for the calibration sample")->default_val(0);
    cmd_cal->add_option("--calib-size", cal_size, "Number of calibration documents")->default_val(128);
    cmd_cal->add_option("--out", cal_c.out, "Calibration JSON path")->required();

    // eval
    Common eval_c;
    std::vector<std::string> pruned;
    std::string qrels;
    std::uint32_t k = 5;
    auto* cmd_eval = app.add_subcommand("eval", "Score pruned indexes against the unpruned baseline");
    add_common(cmd_eval, eval_c);
    cmd_eval->add_option("--pruned", pruned, "Pruned index directory (repeatable)");
    cmd_eval->add_option("--qrels", qrels, "Qrels TSV overriding the manifest's");
    cmd_eval->add_option("--k", k, "NDCG cutoff")->default_val(5)->check(CLI::PositiveNumber);
    cmd_eval->add_option("--out", eval_c.out, "Report directory")->required();

    // sweep
    Common sweep_c;
    std::string sweep_method = "sap_mean";
    double sweep_gamma = 0.1;
    auto* cmd_sweep = app.add_subcommand("sweep", "Mean OSR of single-layer pruning at every depth");
    add_common(cmd_sweep, sweep_c);
    cmd_sweep->add_option("--method", sweep_method, "sap_mean | sap_max")->default_val("sap_mean");
    cmd_sweep->add_option("--gamma", sweep_gamma, "Retention ratio")->default_val(0.1);
    cmd_sweep->add_option("--out", sweep_c.out, "Output directory")->required();

    // bench
    sap_bench_config bench;
    sap_bench_config_init(&bench);
    std::string bench_out;
    auto* cmd_bench = app.add_subcommand("bench", "Time mask computation per method on one synthetic page");
    cmd_bench->add_option("--patches", bench.patches, "Visual patches (N)")->capture_default_str();
    cmd_bench->add_option("--heads", bench.heads, "Attention heads (H)")->capture_default_str();
    cmd_bench->add_option("--window-layers", bench.window_layers, "Layers in the window")->capture_default_str();
    cmd_bench->add_option("--dim", bench.embed_dim, "Embedding dimension (d)")->capture_default_str();
    cmd_bench->add_option("--gamma", bench.gamma, "Retention ratio")->capture_default_str();
    cmd_bench->add_option("--reps", bench.reps, "Timed repetitions")->capture_default_str();
    cmd_bench->add_option("--seed", bench.seed, "Workload seed")->capture_default_str();
    cmd_bench->add_option("--kmeans-restarts", bench.kmeans_restarts, "k-means++ restarts for the cluster method")
        ->capture_default_str();
    cmd_bench->add_option("--out", bench_out, "Write the JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }
    sap_set_warnings(quiet ? 0 : 1);

    if (*cmd_synth) {
        synth.final_layer_diffusion = no_diffusion ? 0 : 1;
        const int rc = report_status(sap_cmd_synth(&synth, synth_c.out.c_str()));
        if (rc == kExitOk) {
            std::printf("wrote %u documents and %u queries to %s\n", synth.num_docs, synth.num_queries,
                        synth_c.out.c_str());
        }
        return rc;
    }

    if (*cmd_prune) {
        sap_prune_config cfg;
        if (const int rc = to_config(prune_f, cfg); rc != kExitOk) return rc;
        const sap_run_options opts = prune_c.options();
        double ratio = 0.0;
        const int rc = report_status(sap_cmd_prune(prune_c.corpus.c_str(), &cfg,
                                                   calibration.empty() ? nullptr : calibration.c_str(), &opts,
                                                   prune_c.out.c_str(), &ratio));
        if (rc == kExitOk) {
            const json s = json::parse(read_text(prune_c.out + "/summary.json"));
            std::printf("%-14s %7s %6s %12s\n", "method", "gamma", "docs", "keep ratio");
            std::printf("%-14s %7.2f %6zu %12.4f\n", prune_f.method.c_str(), prune_f.gamma,
                        s["num_docs"].get<std::size_t>(), ratio);
        }
        return rc;
    }

    if (*cmd_cal) {
        const sap_run_options opts = cal_c.options();
        double k_factor = 0.0;
        const int rc = report_status(
            sap_cmd_calibrate(cal_c.corpus.c_str(), cal_gamma, cal_seed, cal_size, &opts, cal_c.out.c_str(), &k_factor));
        if (rc == kExitOk) std::printf("gamma %.4f   k_factor %.6f   -> %s\n", cal_gamma, k_factor, cal_c.out.c_str());
        return rc;
    }

    if (*cmd_eval) {
        std::vector<const char*> dirs;
        for (const auto& p : pruned) dirs.push_back(p.c_str());
        const sap_run_options opts = eval_c.options();
        char* text = nullptr;
        const int rc = report_status(sap_cmd_eval(eval_c.corpus.c_str(), dirs.data(), dirs.size(),
                                                  qrels.empty() ? nullptr : qrels.c_str(), k, &opts,
                                                  eval_c.out.c_str(), &text));
        if (rc == kExitOk) {
            print_eval(json::parse(text));
            sap_string_free(text);
        }
        return rc;
    }

    if (*cmd_sweep) {
        sap_method m;
        if (const sap_status s = sap_method_from_name(sweep_method.c_str(), &m); s != SAP_OK) return report_status(s);
        const sap_run_options opts = sweep_c.options();
        const int rc =
            report_status(sap_cmd_sweep(sweep_c.corpus.c_str(), m, sweep_gamma, &opts, sweep_c.out.c_str(), nullptr, 0, nullptr));
        if (rc == kExitOk) {
            const json j = json::parse(read_text(sweep_c.out + "/layer_curve.json"));
            const auto first = j["central_window"]["first"].get<unsigned>();
            const auto last = j["central_window"]["last"].get<unsigned>();
            std::printf("%6s %8s %10s\n", "layer", "depth", "mean OSR");
            for (const auto& row : j["curve"]) {
                const auto l = row["layer"].get<unsigned>();
                std::printf("%6u %8.3f %10.4f%s\n", l, row["relative_depth"].get<double>(),
                            row["mean_osr"].get<double>(), (l >= first && l <= last) ? "  *" : "");
            }
            std::printf("* central window %u..%u\n", first, last);
        }
        return rc;
    }

    if (*cmd_bench) {
        char* text = nullptr;
        const int rc = report_status(sap_cmd_bench(&bench, bench_out.empty() ? nullptr : bench_out.c_str(), &text));
        if (rc == kExitOk) {
            const json j = json::parse(text);
            sap_string_free(text);
            const auto& w = j["workload"];
            std::printf("N=%u H=%u layers=%u d=%u gamma=%.2f K=%u reps=%d\n", w["N"].get<unsigned>(),
                        w["H"].get<unsigned>(), w["window_layers"].get<unsigned>(), w["d"].get<unsigned>(),
                        w["gamma"].get<double>(), w["K"].get<unsigned>(), w["reps"].get<int>());
            std::printf("%-14s %12s %12s %12s\n", "method", "mean ms", "min ms", "vs sap_mean");
            for (const auto& r : j["rows"]) {
                std::printf("%-14s %12.4f %12.4f %12s\n", r["method"].get<std::string>().c_str(),
                            r["mean_ms"].get<double>(), r["min_ms"].get<double>(),
                            (fmt(r["relative_to_sap_mean"], "%.2f") + "x").c_str());
            }
        }
        return rc;
    }
    return kExitUsage;
}
