#pragma once

#include <cstdint>
#include <vector>

// Reference implementations used by the test and acceptance suites. They work
// on plain nested vectors and share no code with the library routines they
// check. Not part of the shipped library.

namespace sap::synth::oracle {

using Matrix = std::vector<std::vector<double>>;

/// Naive double loop, long double accumulation.
double oracle_maxsim(const Matrix& query, const Matrix& doc);

/// DCG@k of `ranked` divided by the best DCG@k over every permutation of it.
/// Limited to 8 items.
double oracle_ndcg(const std::vector<std::uint32_t>& ranked, std::size_t k);

struct KMeansOptimum {
    double wcss = 0.0;
    std::vector<std::uint32_t> assignment;
};

/// Global WCSS optimum by enumerating all k^n assignments. n <= 8.
KMeansOptimum oracle_kmeans_small(const Matrix& points, std::size_t k);

}  // namespace sap::synth::oracle
