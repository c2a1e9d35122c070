#include "sap/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sap::synth::oracle {

double oracle_maxsim(const Matrix& query, const Matrix& doc) {
    if (query.empty() || doc.empty()) throw std::invalid_argument("oracle_maxsim: empty input");
    long double total = 0.0L;
    for (const auto& q : query) {
        long double best = 0.0L;
        bool first = true;
        for (const auto& v : doc) {
            if (v.size() != q.size()) throw std::invalid_argument("oracle_maxsim: dimension mismatch");
            long double dot = 0.0L;
            for (std::size_t t = 0; t < q.size(); ++t) dot += static_cast<long double>(q[t]) * v[t];
            if (first || dot > best) best = dot;
            first = false;
        }
        total += best;
    }
    return static_cast<double>(total);
}

namespace {

double plain_dcg(const std::vector<std::uint32_t>& r, std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i < r.size() && i < k; ++i) {
        s += (std::pow(2.0, static_cast<double>(r[i])) - 1.0) / std::log2(static_cast<double>(i + 2));
    }
    return s;
}

}  // namespace

double oracle_ndcg(const std::vector<std::uint32_t>& ranked, std::size_t k) {
    if (ranked.size() > 8) throw std::invalid_argument("oracle_ndcg: at most 8 items");
    std::vector<std::uint32_t> perm = ranked;
    std::sort(perm.begin(), perm.end());
    double best = 0.0;
    do {
        best = std::max(best, plain_dcg(perm, k));
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (best == 0.0) return 0.0;
    return plain_dcg(ranked, k) / best;
}

KMeansOptimum oracle_kmeans_small(const Matrix& points, std::size_t k) {
    const std::size_t n = points.size();
    if (n == 0 || n > 8) throw std::invalid_argument("oracle_kmeans_small: need 1..8 points");
    if (k == 0 || k > n) throw std::invalid_argument("oracle_kmeans_small: need 1 <= k <= n");
    const std::size_t d = points.front().size();
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= k;

    KMeansOptimum best;
    best.wcss = std::numeric_limits<double>::infinity();
    std::vector<std::uint32_t> a(n);
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = static_cast<std::uint32_t>(c % k);
            c /= k;
        }
        double w = 0.0;
        for (std::size_t cl = 0; cl < k; ++cl) {
            std::vector<double> mean(d, 0.0);
            std::size_t cnt = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (a[i] != cl) continue;
                ++cnt;
                for (std::size_t t = 0; t < d; ++t) mean[t] += points[i][t];
            }
            if (cnt == 0) continue;
            for (double& m : mean) m /= static_cast<double>(cnt);
            for (std::size_t i = 0; i < n; ++i) {
                if (a[i] != cl) continue;
                for (std::size_t t = 0; t < d; ++t) w += (points[i][t] - mean[t]) * (points[i][t] - mean[t]);
            }
        }
        if (w < best.wcss) {
            best.wcss = w;
            best.assignment = a;
        }
    }
    return best;
}

}  // namespace sap::synth::oracle
