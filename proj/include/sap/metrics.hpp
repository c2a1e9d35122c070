#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sap/late_interaction.hpp"
#include "sap/pruning.hpp"
#include "sap/tensor_store.hpp"

namespace sap {

/// NDCG@k with gain 2^rel - 1 and discount log2(i + 1). Zero when IDCG is zero.
double ndcg_at_k(std::span<const std::uint32_t> ranked_relevances, std::size_t k);

/// pruned / full * 100; zero baseline is an error.
double retention_pct(double pruned_ndcg, double full_ndcg);

double mean_osr(std::span<const double> values);

/// Sample Pearson correlation.
double pearson(std::span<const double> x, std::span<const double> y);

struct LayerCurve {
    Method method = Method::kSapMean;
    double gamma = 0.0;
    std::vector<double> mean_osr;  ///< index l - 1 holds layer l
};

/// Mean OSR over qrels-positive pairs when pruning with a one-layer window, for
/// every layer 1..L.
LayerCurve layer_sweep(const Corpus& corpus, Method method, double gamma, int threads = 1);

struct QueryEval {
    std::string query_id;
    double ndcg = 0.0;       ///< pruned index
    double full_ndcg = 0.0;  ///< unpruned index
    std::optional<double> mean_osr;  ///< over this query's relevant docs
};

struct EvalReport {
    std::size_t k = 5;
    std::vector<QueryEval> per_query;  ///< query_id ascending
    double mean_ndcg = 0.0;
    double full_mean_ndcg = 0.0;
    double mean_osr = 0.0;  ///< over all qrels-positive pairs
    std::optional<double> retention_pct;  ///< absent when the baseline is zero
    std::size_t num_pairs = 0;
    std::vector<Ranking> rankings;       ///< pruned index, per query
    std::vector<Ranking> full_rankings;  ///< unpruned index, per query
};

/// Ranks the corpus for every query with both the pruned and the full
/// embeddings. `pruned[i]` belongs to corpus.documents[i].
EvalReport evaluate(const Corpus& corpus, std::span<const Tensor> pruned, std::size_t k, int threads = 1);

/// Mean OSR over qrels-positive pairs for an arbitrary per-document pruning.
/// `pruned[i]` must hold the pruned embeddings of corpus.documents[i].
double corpus_mean_osr(const Corpus& corpus, std::span<const Tensor> pruned);

}  // namespace sap
