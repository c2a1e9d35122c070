#include <algorithm>
#include <sstream>

#include "helpers.hpp"
#include "sap/late_interaction.hpp"
#include "sap/metrics.hpp"
#include "sap/oracles.hpp"
#include "sap/synth.hpp"

using namespace sap;
using sap::test::error_code_of;
using sap::test::matrix;
namespace oracle = sap::synth::oracle;

namespace {

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    std::vector<float> x(rows * cols);
    for (auto& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return Tensor({rows, cols}, std::move(x));
}

oracle::Matrix to_matrix(const Tensor& t) {
    oracle::Matrix m(t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i) m[i].assign(t.row(i).begin(), t.row(i).end());
    return m;
}

}  // namespace

TEST_SUITE("late_interaction") {

TEST_CASE("maxsim hand examples") {
    const Tensor q = matrix(2, 2, {1, 0, 0, 1});
    const Tensor d = matrix(2, 2, {1, 0, 0.5f, 0.5f});
    CHECK(maxsim(q, d) == doctest::Approx(1.5));
    CHECK(oracle::oracle_maxsim(to_matrix(q), to_matrix(d)) == doctest::Approx(1.5));
    const Tensor u = matrix(1, 3, {0.6f, 0.0f, 0.8f});
    CHECK(maxsim(u, u) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("maxsim uses signed dot products") {
    const Tensor q = matrix(1, 2, {1, 0});
    const Tensor d = matrix(2, 2, {-2, 0, -1, 0});
    CHECK(maxsim(q, d) == -1.0);
}

TEST_CASE("maxsim matches the oracle on random instances") {
    Rng rng = Rng::stream(1, "maxsim");
    for (int t = 0; t < 200; ++t) {
        const std::size_t dim = 1 + rng.uniform_below(8);
        const Tensor q = random_matrix(rng, 1 + rng.uniform_below(8), dim);
        const Tensor d = random_matrix(rng, 1 + rng.uniform_below(16), dim);
        const double ref = oracle::oracle_maxsim(to_matrix(q), to_matrix(d));
        CHECK(std::abs(maxsim(q, d) - ref) <= 1e-6 * std::max(1.0, std::abs(ref)));
    }
}

TEST_CASE("maxsim argument checks") {
    const Tensor q = matrix(1, 2, {1, 0});
    CHECK(error_code_of([&] { maxsim(q, matrix(1, 3, {1, 0, 0})); }) == ErrorCode::kInvalidArgument);
    CHECK(error_code_of([&] { maxsim(q, Tensor({0, 2}, {})); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("oracle score retention") {
    const Tensor q = matrix(2, 2, {1, 0, 0, 1});
    const Tensor full = matrix(2, 2, {1, 0, 0.5f, 0.5f});
    CHECK(osr(q, full, full) == 1.0);
    CHECK(osr(q, matrix(1, 2, {0.5f, 0.5f}), full) == doctest::Approx(2.0 / 3.0));
    CHECK(error_code_of([&] { osr(matrix(1, 2, {0, 0}), full, full); }) == ErrorCode::kNumeric);
}

TEST_CASE("subset maxsim never exceeds full maxsim") {
    Rng rng = Rng::stream(2, "subset");
    for (int t = 0; t < 100; ++t) {
        const Tensor q = random_matrix(rng, 4, 6);
        const Tensor d = random_matrix(rng, 12, 6);
        std::vector<std::uint32_t> keep;
        for (std::uint32_t i = 0; i < 12; ++i) {
            if (rng.uniform01() < 0.4) keep.push_back(i);
        }
        if (keep.empty()) keep.push_back(0);
        CHECK(maxsim(q, d.gather_rows(keep)) <= maxsim(q, d));
    }
}

TEST_CASE("ranking") {
    const Tensor q = matrix(1, 2, {1, 0});
    const Tensor a = matrix(1, 2, {0.9f, 0});
    const Tensor b = matrix(1, 2, {0.5f, 0});
    const std::string ia = "a", ib = "b", ic = "c", iz = "z";

    SUBCASE("single document") {
        const DocRef one[] = {{&ia, &a}};
        const auto r = rank_corpus("q", q, one);
        REQUIRE(r.docs.size() == 1);
        CHECK(r.docs[0].doc_id == "a");
    }
    SUBCASE("duplicated embeddings rank adjacently by id") {
        const DocRef docs[] = {{&iz, &a}, {&ib, &b}, {&ia, &a}};
        const auto r = rank_corpus("q", q, docs);
        CHECK(r.docs[0].doc_id == "a");
        CHECK(r.docs[1].doc_id == "z");
        CHECK(r.docs[2].doc_id == "b");
    }
    SUBCASE("input order does not matter") {
        const DocRef x[] = {{&ia, &a}, {&ib, &b}, {&ic, &a}};
        const DocRef y[] = {{&ic, &a}, {&ib, &b}, {&ia, &a}};
        const auto rx = rank_corpus("q", q, x), ry = rank_corpus("q", q, y);
        for (std::size_t i = 0; i < 3; ++i) CHECK(rx.docs[i].doc_id == ry.docs[i].doc_id);
    }
    SUBCASE("duplicate ids are rejected") {
        const DocRef docs[] = {{&ia, &a}, {&ia, &b}};
        CHECK(error_code_of([&] { rank_corpus("q", q, docs); }) == ErrorCode::kInvalidArgument);
    }
    SUBCASE("run file") {
        const DocRef docs[] = {{&ib, &b}, {&ia, &a}};
        const Ranking r[] = {rank_corpus("q", q, docs)};
        std::ostringstream out;
        write_run(out, r);
        CHECK(out.str().rfind("q\ta\t1\t", 0) == 0);
        CHECK(out.str().find("q\tb\t2\t") != std::string::npos);
    }
}

TEST_CASE("norm warning helper") {
    double worst = 0;
    CHECK_FALSE(has_unnormalized_rows(matrix(2, 2, {1, 0, 0, 1.05f}), 0.1, &worst));
    CHECK(has_unnormalized_rows(matrix(2, 2, {1, 0, 0, 2}), 0.1, &worst));
    CHECK(worst == doctest::Approx(1.0));
}

}  // TEST_SUITE

TEST_SUITE("metrics") {

TEST_CASE("ndcg hand examples") {
    const std::uint32_t ideal[] = {1, 0, 0};
    const std::uint32_t split[] = {1, 0, 1};
    const std::uint32_t none[] = {0, 0, 0};
    CHECK(ndcg_at_k(ideal, 3) == 1.0);
    CHECK(ndcg_at_k(split, 3) == doctest::Approx(1.5 / (1 + 1 / std::log2(3.0))));
    CHECK(ndcg_at_k(split, 3) == doctest::Approx(0.9197).epsilon(1e-4));
    CHECK(ndcg_at_k(none, 3) == 0.0);
    CHECK(ndcg_at_k(split, 1) == 1.0);
    CHECK(error_code_of([&] { ndcg_at_k(split, 0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("ndcg matches the exhaustive oracle for every ranking of up to 4 graded docs") {
    for (std::size_t n = 1; n <= 4; ++n) {
        std::size_t combos = 1;
        for (std::size_t i = 0; i < n; ++i) combos *= 4;
        for (std::size_t code = 0; code < combos; ++code) {
            std::vector<std::uint32_t> rel(n);
            std::size_t c = code;
            for (auto& r : rel) {
                r = static_cast<std::uint32_t>(c % 4);
                c /= 4;
            }
            for (std::size_t k = 1; k <= n + 1; ++k) {
                CHECK(std::abs(ndcg_at_k(rel, k) - oracle::oracle_ndcg(rel, k)) <= 1e-9);
            }
        }
    }
}

TEST_CASE("retention") {
    CHECK(retention_pct(0.83, 0.85) == doctest::Approx(97.647).epsilon(1e-4));
    CHECK(retention_pct(0.4, 0.4) == 100.0);
    CHECK(retention_pct(0.0, 0.7) == 0.0);
    CHECK(error_code_of([] { retention_pct(0.5, 0.0); }) == ErrorCode::kNumeric);
}

TEST_CASE("mean osr") {
    const double one[] = {1.0};
    const double two[] = {0.5, 1.5};
    CHECK(mean_osr(one) == 1.0);
    CHECK(mean_osr(two) == 1.0);
    CHECK(error_code_of([] { mean_osr(std::span<const double>{}); }) == ErrorCode::kNumeric);
}

TEST_CASE("pearson") {
    const std::vector<double> x = {1, 2, 3, 4, 7};
    std::vector<double> affine, neg;
    for (double v : x) {
        affine.push_back(2 * v + 1);
        neg.push_back(-v);
    }
    CHECK(pearson(x, affine) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson(x, neg) == doctest::Approx(-1.0).epsilon(1e-12));

    Rng rng = Rng::stream(11, "pearson");
    std::vector<double> a(1000), b(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        a[i] = rng.uniform01();
        b[i] = rng.uniform01();
    }
    const double r = pearson(a, b);
    CHECK(std::abs(r) < 0.1);
    std::vector<double> a2, b2;
    for (double v : a) a2.push_back(3.5 * v - 2);
    for (double v : b) b2.push_back(0.25 * v + 9);
    CHECK(std::abs(pearson(a2, b2) - r) <= 1e-9);

    const std::vector<double> flat = {1, 1, 1};
    CHECK(error_code_of([&] { pearson(flat, std::vector<double>{1, 2, 3}); }) == ErrorCode::kNumeric);
    CHECK(error_code_of([&] { pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}); }) ==
          ErrorCode::kInvalidArgument);
}

TEST_CASE("evaluation of the unpruned index against itself") {
    synth::SynthConfig cfg;
    cfg.num_docs = 20;
    cfg.num_queries = 8;
    const auto s = synth::generate(cfg);
    std::vector<Tensor> full;
    for (const auto& d : s.corpus.documents) full.push_back(d.embeddings);
    const auto rep = evaluate(s.corpus, full, 5);
    CHECK(rep.mean_osr == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(rep.retention_pct.has_value());
    CHECK(*rep.retention_pct == doctest::Approx(100.0));
    CHECK(rep.num_pairs == 8);
    CHECK(rep.per_query.size() == 8);
    CHECK(std::is_sorted(rep.per_query.begin(), rep.per_query.end(),
                         [](const auto& a, const auto& b) { return a.query_id < b.query_id; }));
    CHECK(corpus_mean_osr(s.corpus, full) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(error_code_of([&] { evaluate(s.corpus, std::span<const Tensor>(full).first(3), 5); }) ==
          ErrorCode::kInvalidArgument);
}

TEST_CASE("layer sweep") {
    synth::SynthConfig cfg;
    cfg.num_docs = 12;
    cfg.num_queries = 6;
    auto s = synth::generate(cfg);

    SUBCASE("each point equals single-layer SAP pruning") {
        const auto curve = layer_sweep(s.corpus, Method::kSapMean, 0.1);
        REQUIRE(curve.mean_osr.size() == cfg.layers);
        for (std::uint32_t l = 1; l <= cfg.layers; ++l) {
            std::vector<Tensor> pruned;
            for (const auto& d : s.corpus.documents) {
                const auto r = top_k_select(sap_scores(d, Method::kSapMean, {l, l}), keep_count(0.1, d.patch_count()));
                pruned.push_back(r.pruned_embeddings(d.embeddings));
            }
            CHECK(curve.mean_osr[l - 1] == corpus_mean_osr(s.corpus, pruned));
        }
    }
    SUBCASE("identical layers give a flat curve") {
        for (auto& d : s.corpus.documents) {
            for (auto& l : d.layers) l = d.layers[5];
        }
        const auto curve = layer_sweep(s.corpus, Method::kSapMax, 0.1);
        for (double v : curve.mean_osr) CHECK(v == curve.mean_osr.front());
    }
    SUBCASE("a single-layer corpus gives one point equal to standard SAP") {
        for (auto& d : s.corpus.documents) d.layers.resize(1);
        const auto curve = layer_sweep(s.corpus, Method::kSapMean, 0.1);
        REQUIRE(curve.mean_osr.size() == 1);
        std::vector<Tensor> pruned;
        PruneConfig c;
        for (const auto& d : s.corpus.documents) pruned.push_back(prune(d, c).pruned_embeddings(d.embeddings));
        CHECK(curve.mean_osr[0] == corpus_mean_osr(s.corpus, pruned));
    }
}

}  // TEST_SUITE
