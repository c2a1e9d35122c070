#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "sap/pipeline.hpp"
#include "sap/synth.hpp"

using namespace sap;
using sap::test::TempDir;
using sap::test::error_code_of;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path make_corpus(const TempDir& dir, std::uint32_t docs = 24, std::uint32_t queries = 8) {
    synth::SynthConfig cfg;
    cfg.num_docs = docs;
    cfg.num_queries = queries;
    return synth::write_synth_corpus(synth::generate(cfg), dir / "corpus");
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("prune writes results, embeddings and a summary with exact budgets") {
    TempDir dir;
    const auto corpus = make_corpus(dir);
    PruneConfig c;
    c.gamma = 0.1;
    const auto s = pipeline::run_prune(corpus, c, std::nullopt, {}, dir / "p");
    CHECK(s.num_docs == 24);
    CHECK(s.mean_keep_ratio == doctest::Approx(6.0 / 64));
    const json summary = json::parse(slurp(dir / "p" / "summary.json"));
    CHECK(summary["config"]["method"] == "sap_mean");
    REQUIRE(summary["documents"].size() == 24);
    for (const auto& d : summary["documents"]) {
        CHECK(d["K"] == keep_count(0.1, 64));
        const json r = json::parse(slurp(dir / "p" / d["result"].get<std::string>()));
        CHECK(r["selected_indices"].size() == 6);
        CHECK(r["K"] == 6);
        CHECK(read_tensor(dir / "p" / d["embeddings"].get<std::string>()).rows() == 6);
    }
    const Corpus loaded = read_corpus(corpus);
    std::string cfg_json;
    const auto index = pipeline::read_pruned_index(loaded, dir / "p", &cfg_json);
    CHECK(index.size() == 24);
    CHECK(json::parse(cfg_json)["gamma"] == 0.1);
}

TEST_CASE("cluster pruning stores merged tensors of exactly K rows") {
    TempDir dir;
    const auto corpus = make_corpus(dir, 8, 4);
    PruneConfig c;
    c.method = Method::kCluster;
    c.gamma = 0.2;
    pipeline::run_prune(corpus, c, std::nullopt, {}, dir / "p");
    const json summary = json::parse(slurp(dir / "p" / "summary.json"));
    for (const auto& d : summary["documents"]) {
        const json r = json::parse(slurp(dir / "p" / d["result"].get<std::string>()));
        CHECK(r["kind"] == "merged");
        // The merged path is relative to the result file.
        const fs::path merged = (dir / "p" / d["result"].get<std::string>()).parent_path() / r["merged"].get<std::string>();
        CHECK(read_tensor(merged).rows() == keep_count(0.2, 64));
    }
}

TEST_CASE("document ids that are unsafe as file names get fallback stems") {
    TempDir dir;
    synth::SynthConfig cfg;
    cfg.num_docs = 6;
    cfg.num_queries = 2;
    auto s = synth::generate(cfg);
    for (const auto& [key, rel] : s.corpus.qrels.entries()) REQUIRE(key.second != s.corpus.documents[5].doc_id);
    s.corpus.documents[5].doc_id = "../escape";
    s.corpus.documents[4].doc_id = "~doc_00005";
    const auto corpus = write_corpus(s.corpus, dir / "corpus");
    pipeline::run_prune(corpus, PruneConfig{}, std::nullopt, {}, dir / "p");
    const json summary = json::parse(slurp(dir / "p" / "summary.json"));
    std::map<std::string, std::string> result_of;
    for (const auto& d : summary["documents"]) result_of[d["doc_id"]] = d["result"];
    CHECK(result_of.at("../escape") == "results/~doc_00005.json");
    CHECK(result_of.at("~doc_00005") == "results/~doc_00004.json");  // '~' is not safe either
    CHECK(fs::exists(dir / "p" / "results" / "~doc_00005.json"));
    CHECK_FALSE(fs::exists(dir / "escape.json"));
    const auto index = pipeline::read_pruned_index(read_corpus(corpus), dir / "p", nullptr);
    CHECK(index.size() == 6);
}

TEST_CASE("adaptive pruning without calibration fails with a missing-calibration error") {
    TempDir dir;
    const auto corpus = make_corpus(dir, 6, 2);
    PruneConfig c;
    c.method = Method::kAdaptiveEos;
    CHECK(error_code_of([&] { pipeline::run_prune(corpus, c, std::nullopt, {}, dir / "p"); }) ==
          ErrorCode::kMissingCalibration);
    CHECK_FALSE(fs::exists(dir / "p" / "summary.json"));
}

TEST_CASE("calibration is reproducible and drives adaptive pruning") {
    TempDir dir;
    const auto corpus = make_corpus(dir, 40, 4);
    pipeline::CalibrateOptions opt;
    opt.gamma = 0.1;
    opt.seed = 3;
    const auto a = pipeline::run_calibrate(corpus, opt, {}, dir / "a.json");
    const auto b = pipeline::run_calibrate(corpus, opt, {}, dir / "b.json");
    CHECK(std::isfinite(a.k_factor));
    CHECK(a.k_factor == b.k_factor);
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
    CHECK(a.calib_size == 40);  // fewer documents than requested: all are used
    CHECK(pipeline::read_calibration(dir / "a.json").k_factor == a.k_factor);

    PruneConfig c;
    c.method = Method::kAdaptiveEos;
    const auto s = pipeline::run_prune(corpus, c, dir / "a.json", {}, dir / "p");
    CHECK(std::abs(s.mean_keep_ratio - 0.1) < 0.03);
}

TEST_CASE("eval: full-budget pruning reproduces the baseline") {
    TempDir dir;
    const auto corpus = make_corpus(dir);
    PruneConfig c;
    c.gamma = 1.0;
    pipeline::run_prune(corpus, c, std::nullopt, {}, dir / "p");
    const json r = json::parse(pipeline::run_eval(corpus, {dir / "p"}, std::nullopt, 5, {}, dir / "e"));
    const auto& agg = r["configs"][0]["aggregate"];
    CHECK(agg["mean_osr"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(agg["retention_pct"].get<double>() == doctest::Approx(100.0));
    CHECK(r["k"] == 5);
    CHECK(r["pearson_r"].is_null());
    CHECK(fs::exists(dir / "e" / "report.json"));
    CHECK(fs::exists(dir / "e" / "report.csv"));
    CHECK(fs::exists(dir / "e" / "run_full.tsv"));
}

TEST_CASE("eval: SAP-Mean dominates Random on both metrics") {
    TempDir dir;
    const auto corpus = make_corpus(dir, 60, 20);
    PruneConfig sap;
    PruneConfig rnd;
    rnd.method = Method::kRandom;
    pipeline::run_prune(corpus, sap, std::nullopt, {}, dir / "sap");
    pipeline::run_prune(corpus, rnd, std::nullopt, {}, dir / "rnd");
    const json r = json::parse(pipeline::run_eval(corpus, {dir / "sap", dir / "rnd"}, std::nullopt, 5, {}, dir / "e"));
    const auto& a = r["configs"][0]["aggregate"];
    const auto& b = r["configs"][1]["aggregate"];
    CHECK(a["mean_ndcg"].get<double>() > b["mean_ndcg"].get<double>());
    CHECK(a["mean_osr"].get<double>() > b["mean_osr"].get<double>());
    CHECK(r["pearson_r"].is_number());
}

TEST_CASE("eval error paths") {
    TempDir dir;
    const auto corpus = make_corpus(dir, 6, 2);
    PruneConfig c;
    pipeline::run_prune(corpus, c, std::nullopt, {}, dir / "p");
    CHECK(error_code_of([&] {
              pipeline::run_eval(corpus, {dir / "p"}, dir / "missing.tsv", 5, {}, dir / "e");
          }) == ErrorCode::kInvalidArgument);
    CHECK(error_code_of([&] { pipeline::run_eval(corpus, {}, std::nullopt, 5, {}, dir / "e"); }) ==
          ErrorCode::kInvalidArgument);

    // A pruned index built from a different corpus does not line up.
    const auto other = make_corpus(dir, 5, 2);  // overwrites corpus/ with 5 docs
    CHECK(error_code_of([&] { pipeline::run_eval(other, {dir / "p"}, std::nullopt, 5, {}, dir / "e"); }) ==
          ErrorCode::kValidation);
}

TEST_CASE("outputs are byte-identical across thread counts") {
    TempDir dir;
    const auto corpus = make_corpus(dir, 30, 10);
    for (Method m : {Method::kSapMax, Method::kRandom, Method::kCluster}) {
        PruneConfig c;
        c.method = m;
        pipeline::RunOptions one, many;
        many.threads = 8;
        pipeline::run_prune(corpus, c, std::nullopt, one, dir / "p1");
        pipeline::run_prune(corpus, c, std::nullopt, many, dir / "p8");
        CHECK(slurp(dir / "p1" / "summary.json") == slurp(dir / "p8" / "summary.json"));
        const auto r1 = pipeline::run_eval(corpus, {dir / "p1"}, std::nullopt, 5, one, dir / "e1");
        const auto r8 = pipeline::run_eval(corpus, {dir / "p8"}, std::nullopt, 5, many, dir / "e8");
        CHECK(r1 == r8);
        CHECK(slurp(dir / "e1" / "report.json") == slurp(dir / "e8" / "report.json"));
    }
}

TEST_CASE("sweep writes one CSV row per layer") {
    TempDir dir;
    const auto corpus = make_corpus(dir, 10, 5);
    const auto curve = pipeline::run_sweep(corpus, Method::kSapMean, 0.1, {}, dir / "s");
    CHECK(curve.mean_osr.size() == 12);
    const std::string csv = slurp(dir / "s" / "layer_curve.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
    const json j = json::parse(slurp(dir / "s" / "layer_curve.json"));
    CHECK(j["central_window"]["first"] == 4);
    CHECK(j["central_window"]["last"] == 7);
}

TEST_CASE("bench reports every method on the requested workload") {
    pipeline::BenchConfig b;
    b.patches = 64;
    b.heads = 2;
    b.window_layers = 2;
    b.embed_dim = 16;
    b.reps = 2;
    const auto rows = pipeline::bench_methods(b);
    CHECK(rows.size() == 6);
    const json j = json::parse(pipeline::bench_report_json(b, rows));
    CHECK(j["rows"].size() == 6);
    CHECK(j["workload"]["K"] == keep_count(0.1, 64));
    for (const auto& r : j["rows"]) CHECK(r["mean_ms"].get<double>() >= 0.0);
}

}  // TEST_SUITE
