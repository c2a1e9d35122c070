#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sap/tensor.hpp"

namespace sap {

/// Sum over query tokens of the best raw dot product against the document.
/// Accumulates in double; no normalization is applied.
double maxsim(const Tensor& query, const Tensor& doc);

/// maxsim(query, pruned) / maxsim(query, full). Throws kNumeric when the full
/// score is zero.
double osr(const Tensor& query, const Tensor& pruned, const Tensor& full);

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;
};

struct Ranking {
    std::string query_id;
    std::vector<ScoredDoc> docs;  ///< score descending, ties by doc_id ascending
};

struct DocRef {
    const std::string* doc_id;
    const Tensor* embeddings;
};

Ranking rank_corpus(const std::string& query_id, const Tensor& query, std::span<const DocRef> corpus);

/// TREC-style run lines: query_id \t doc_id \t rank \t score (rank is 1-based).
void write_run(std::ostream& out, std::span<const Ranking> rankings);

/// Returns true and fills `worst` when some row's L2 norm deviates from 1 by
/// more than `tolerance` (relative).
bool has_unnormalized_rows(const Tensor& embeddings, double tolerance, double* worst = nullptr);

}  // namespace sap
