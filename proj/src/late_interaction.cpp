#include "sap/late_interaction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "sap/error.hpp"

namespace sap {

double maxsim(const Tensor& query, const Tensor& doc) {
    require(query.rank() == 2 && query.rows() >= 1, ErrorCode::kInvalidArgument, "maxsim: query must be [M, d], M >= 1");
    require(doc.rank() == 2 && doc.rows() >= 1, ErrorCode::kInvalidArgument, "maxsim: empty document");
    require(query.cols() == doc.cols(), ErrorCode::kInvalidArgument,
            "maxsim: dimension mismatch (query d=" + std::to_string(query.cols()) +
                ", document d=" + std::to_string(doc.cols()) + ")");
    const std::size_t d = query.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < query.rows(); ++i) {
        const float* q = query.data().data() + i * d;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < doc.rows(); ++j) {
            const float* v = doc.data().data() + j * d;
            double dot = 0.0;
            for (std::size_t t = 0; t < d; ++t) dot += static_cast<double>(q[t]) * static_cast<double>(v[t]);
            best = std::max(best, dot);
        }
        total += best;
    }
    return total;
}

double osr(const Tensor& query, const Tensor& pruned, const Tensor& full) {
    const double denom = maxsim(query, full);
    if (denom == 0.0) fail(ErrorCode::kNumeric, "oracle score retention undefined: full MaxSim is zero");
    return maxsim(query, pruned) / denom;
}

Ranking rank_corpus(const std::string& query_id, const Tensor& query, std::span<const DocRef> corpus) {
    require(!corpus.empty(), ErrorCode::kInvalidArgument, "rank_corpus: empty corpus");
    Ranking r;
    r.query_id = query_id;
    r.docs.reserve(corpus.size());
    std::set<std::string> seen;
    for (const DocRef& d : corpus) {
        require(seen.insert(*d.doc_id).second, ErrorCode::kInvalidArgument, "rank_corpus: duplicate doc_id " + *d.doc_id);
        r.docs.push_back({*d.doc_id, maxsim(query, *d.embeddings)});
    }
    std::sort(r.docs.begin(), r.docs.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        return a.score > b.score || (a.score == b.score && a.doc_id < b.doc_id);
    });
    return r;
}

void write_run(std::ostream& out, std::span<const Ranking> rankings) {
    char buf[64];
    for (const Ranking& r : rankings) {
        for (std::size_t i = 0; i < r.docs.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", r.docs[i].score);
            out << r.query_id << '\t' << r.docs[i].doc_id << '\t' << (i + 1) << '\t' << buf << '\n';
        }
    }
}

bool has_unnormalized_rows(const Tensor& embeddings, double tolerance, double* worst) {
    if (embeddings.rank() != 2) return false;
    double w = 0.0;
    for (std::size_t i = 0; i < embeddings.rows(); ++i) {
        double s = 0.0;
        for (float v : embeddings.row(i)) s += static_cast<double>(v) * v;
        w = std::max(w, std::abs(std::sqrt(s) - 1.0));
    }
    if (worst) *worst = w;
    return w > tolerance;
}

}  // namespace sap
