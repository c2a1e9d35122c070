#include "sap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "sap/error.hpp"
#include "sap/parallel.hpp"

namespace sap {

namespace {

double dcg(std::span<const std::uint32_t> rels, std::size_t k) {
    double s = 0.0;
    const std::size_t n = std::min(k, rels.size());
    for (std::size_t i = 0; i < n; ++i) {
        s += (std::ldexp(1.0, static_cast<int>(rels[i])) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    return s;
}

std::map<std::string, std::size_t> doc_positions(const Corpus& corpus) {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) pos.emplace(corpus.documents[i].doc_id, i);
    return pos;
}

}  // namespace

double ndcg_at_k(std::span<const std::uint32_t> ranked_relevances, std::size_t k) {
    require(k >= 1, ErrorCode::kInvalidArgument, "ndcg cutoff k must be >= 1");
    std::vector<std::uint32_t> ideal(ranked_relevances.begin(), ranked_relevances.end());
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    const double idcg = dcg(ideal, k);
    if (idcg == 0.0) return 0.0;
    return dcg(ranked_relevances, k) / idcg;
}

double retention_pct(double pruned_ndcg, double full_ndcg) {
    require(full_ndcg > 0.0, ErrorCode::kNumeric, "retention undefined: full-index NDCG is zero");
    return pruned_ndcg / full_ndcg * 100.0;
}

double mean_osr(std::span<const double> values) {
    require(!values.empty(), ErrorCode::kNumeric, "mean OSR of an empty set");
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), ErrorCode::kInvalidArgument, "pearson: length mismatch");
    require(x.size() >= 2, ErrorCode::kInvalidArgument, "pearson: need at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    require(sxx > 0.0 && syy > 0.0, ErrorCode::kNumeric, "pearson: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double corpus_mean_osr(const Corpus& corpus, std::span<const Tensor> pruned) {
    require(pruned.size() == corpus.documents.size(), ErrorCode::kInvalidArgument,
            "pruned index does not align with the corpus");
    const auto pos = doc_positions(corpus);
    std::vector<double> values;
    for (const auto& [qid, did] : corpus.qrels.positive_pairs()) {
        const QueryBundle* q = corpus.find_query(qid);
        const std::size_t i = pos.at(did);
        values.push_back(osr(q->embeddings, pruned[i], corpus.documents[i].embeddings));
    }
    return mean_osr(values);
}

LayerCurve layer_sweep(const Corpus& corpus, Method method, double gamma, int threads) {
    require(method == Method::kSapMean || method == Method::kSapMax, ErrorCode::kInvalidArgument,
            "layer sweep needs method sap_mean or sap_max");
    require(!corpus.documents.empty(), ErrorCode::kInvalidArgument, "layer sweep on an empty corpus");
    const std::uint32_t L = corpus.documents.front().num_layers();
    for (const auto& d : corpus.documents) {
        require(d.num_layers() == L, ErrorCode::kValidation, "layer sweep needs a uniform layer count");
    }
    LayerCurve curve;
    curve.method = method;
    curve.gamma = gamma;
    std::vector<Tensor> pruned(corpus.documents.size());
    for (std::uint32_t l = 1; l <= L; ++l) {
        parallel_for(corpus.documents.size(), threads, [&](std::size_t i) {
            const DocumentBundle& b = corpus.documents[i];
            const auto scores = sap_scores(b, method, LayerWindow{l, l});
            pruned[i] = top_k_select(scores, keep_count(gamma, b.patch_count())).pruned_embeddings(b.embeddings);
        });
        curve.mean_osr.push_back(corpus_mean_osr(corpus, pruned));
    }
    return curve;
}

EvalReport evaluate(const Corpus& corpus, std::span<const Tensor> pruned, std::size_t k, int threads) {
    require(k >= 1, ErrorCode::kInvalidArgument, "ndcg cutoff k must be >= 1");
    require(pruned.size() == corpus.documents.size(), ErrorCode::kInvalidArgument,
            "pruned index does not align with the corpus");
    require(!corpus.queries.empty(), ErrorCode::kInvalidArgument, "corpus has no queries");
    std::vector<DocRef> full_refs, pruned_refs;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
        full_refs.push_back({&corpus.documents[i].doc_id, &corpus.documents[i].embeddings});
        pruned_refs.push_back({&corpus.documents[i].doc_id, &pruned[i]});
    }
    const auto pos = doc_positions(corpus);

    std::vector<const QueryBundle*> queries;
    for (const auto& q : corpus.queries) queries.push_back(&q);
    std::sort(queries.begin(), queries.end(),
              [](const QueryBundle* a, const QueryBundle* b) { return a->query_id < b->query_id; });

    EvalReport rep;
    rep.k = k;
    rep.per_query.resize(queries.size());
    rep.rankings.resize(queries.size());
    rep.full_rankings.resize(queries.size());
    std::vector<std::vector<double>> pair_osr(queries.size());

    parallel_for(queries.size(), threads, [&](std::size_t qi) {
        const QueryBundle& q = *queries[qi];
        rep.rankings[qi] = rank_corpus(q.query_id, q.embeddings, pruned_refs);
        rep.full_rankings[qi] = rank_corpus(q.query_id, q.embeddings, full_refs);
        auto rels_of = [&](const Ranking& r) {
            std::vector<std::uint32_t> rels;
            rels.reserve(r.docs.size());
            for (const auto& sd : r.docs) rels.push_back(corpus.qrels.relevance(q.query_id, sd.doc_id));
            return rels;
        };
        QueryEval& e = rep.per_query[qi];
        e.query_id = q.query_id;
        e.ndcg = ndcg_at_k(rels_of(rep.rankings[qi]), k);
        e.full_ndcg = ndcg_at_k(rels_of(rep.full_rankings[qi]), k);
        for (const auto& d : corpus.documents) {
            if (corpus.qrels.relevance(q.query_id, d.doc_id) == 0) continue;
            const std::size_t i = pos.at(d.doc_id);
            pair_osr[qi].push_back(osr(q.embeddings, pruned[i], d.embeddings));
        }
        if (!pair_osr[qi].empty()) e.mean_osr = mean_osr(pair_osr[qi]);
    });

    double sum_ndcg = 0.0, sum_full = 0.0;
    std::vector<double> all_osr;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        sum_ndcg += rep.per_query[qi].ndcg;
        sum_full += rep.per_query[qi].full_ndcg;
        all_osr.insert(all_osr.end(), pair_osr[qi].begin(), pair_osr[qi].end());
    }
    const double nq = static_cast<double>(queries.size());
    rep.mean_ndcg = sum_ndcg / nq;
    rep.full_mean_ndcg = sum_full / nq;
    rep.num_pairs = all_osr.size();
    require(!all_osr.empty(), ErrorCode::kValidation, "qrels contain no positive (query, document) pairs");
    rep.mean_osr = mean_osr(all_osr);
    if (rep.full_mean_ndcg > 0.0) rep.retention_pct = retention_pct(rep.mean_ndcg, rep.full_mean_ndcg);
    return rep;
}

}  // namespace sap
