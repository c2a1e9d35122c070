#include <algorithm>
#include <cmath>
#include <limits>

#include "sap/error.hpp"
#include "sap/pruning.hpp"
#include "sap/rng.hpp"

namespace sap {

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

// k-means++: first center uniform, then D^2-weighted draws.
std::vector<double> seed_centers(const std::vector<double>& x, std::size_t n, std::size_t d, std::size_t k, Rng& rng) {
    std::vector<double> c(k * d);
    std::vector<bool> chosen(n, false);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::size_t pick = rng.uniform_below(n);
    for (std::size_t c_idx = 0; c_idx < k; ++c_idx) {
        if (c_idx > 0) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) total += best[i];
            if (total > 0.0) {
                const double u = rng.uniform01() * total;
                double run = 0.0;
                pick = n;
                for (std::size_t i = 0; i < n; ++i) {
                    run += best[i];
                    if (best[i] > 0.0 && u < run) {
                        pick = i;
                        break;
                    }
                }
                // Rounding can leave u at the very end of the cumulative sum.
                if (pick == n) {
                    for (std::size_t i = n; i-- > 0;) {
                        if (best[i] > 0.0) {
                            pick = i;
                            break;
                        }
                    }
                }
            } else {
                // Every point coincides with a center already; take the first unused one.
                pick = 0;
                while (chosen[pick]) ++pick;
            }
        }
        chosen[pick] = true;
        std::copy_n(x.data() + pick * d, d, c.data() + c_idx * d);
        for (std::size_t i = 0; i < n; ++i) {
            best[i] = std::min(best[i], sq_dist(x.data() + i * d, c.data() + c_idx * d, d));
        }
    }
    return c;
}

}  // namespace

double wcss(const Tensor& points, const Tensor& centroids, std::span<const std::uint32_t> assignment) {
    require(points.rank() == 2 && centroids.rank() == 2 && points.cols() == centroids.cols(),
            ErrorCode::kInvalidArgument, "wcss: dimension mismatch");
    require(assignment.size() == points.rows(), ErrorCode::kInvalidArgument, "wcss: assignment size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        require(assignment[i] < centroids.rows(), ErrorCode::kInvalidArgument, "wcss: cluster index out of range");
        const auto p = points.row(i);
        const auto c = centroids.row(assignment[i]);
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double t = static_cast<double>(p[j]) - static_cast<double>(c[j]);
            total += t * t;
        }
    }
    return total;
}

namespace {

// One k-means++ seeding followed by Lloyd iterations.
KMeansResult lloyd(const std::vector<double>& x, std::size_t n, std::size_t d, const KMeansOptions& options,
                   Rng& rng) {
    const std::size_t k = options.k;
    std::vector<double> c = seed_centers(x, n, d, k, rng);

    constexpr std::uint32_t kUnassigned = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> assign(n, kUnassigned);
    std::vector<double> dist(n, 0.0);
    std::vector<std::size_t> counts(k);
    std::vector<double> sums(k * d);

    KMeansResult out;
    double prev = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < options.max_iters; ++iter) {
        // Assignment: move a point only when another centroid is strictly closer.
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = x.data() + i * d;
            std::uint32_t best = assign[i];
            double best_d = best == kUnassigned ? std::numeric_limits<double>::infinity()
                                                : sq_dist(p, c.data() + best * d, d);
            for (std::size_t j = 0; j < k; ++j) {
                if (j == best) continue;
                const double dj = sq_dist(p, c.data() + j * d, d);
                if (dj < best_d) {
                    best_d = dj;
                    best = static_cast<std::uint32_t>(j);
                }
            }
            assign[i] = best;
            dist[i] = best_d;
        }

        std::fill(counts.begin(), counts.end(), 0);
        for (std::uint32_t a : assign) ++counts[a];
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] > 0) continue;
            // Re-seed at the point farthest from its centroid, taken from a cluster
            // that can spare it.
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[assign[i]] < 2) continue;
                if (far == n || dist[i] > dist[far]) far = i;
            }
            --counts[assign[far]];
            assign[far] = static_cast<std::uint32_t>(j);
            counts[j] = 1;
            dist[far] = 0.0;
            std::copy_n(x.data() + far * d, d, c.data() + j * d);
        }

        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* s = sums.data() + assign[i] * d;
            const double* p = x.data() + i * d;
            for (std::size_t t = 0; t < d; ++t) s[t] += p[t];
        }
        for (std::size_t j = 0; j < k; ++j) {
            const double inv = 1.0 / static_cast<double>(counts[j]);
            for (std::size_t t = 0; t < d; ++t) c[j * d + t] = sums[j * d + t] * inv;
        }

        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i) w += sq_dist(x.data() + i * d, c.data() + assign[i] * d, d);
        out.wcss_history.push_back(w);
        out.iterations = iter + 1;
        const double improvement = prev - w;
        prev = w;
        if (improvement < options.tol) break;
    }

    std::vector<float> cf(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) cf[i] = static_cast<float>(c[i]);
    out.centroids = Tensor({k, d}, std::move(cf));
    out.assignment = std::move(assign);
    out.wcss = out.wcss_history.back();
    return out;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, const KMeansOptions& options) {
    require(points.rank() == 2 && points.rows() >= 1 && points.cols() >= 1, ErrorCode::kInvalidArgument,
            "kmeans needs a non-empty [N, d] tensor");
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    const std::size_t k = options.k;
    require(k >= 1 && k <= n, ErrorCode::kInvalidArgument,
            "cluster count " + std::to_string(k) + " outside 1.." + std::to_string(n));
    require(options.max_iters >= 1, ErrorCode::kInvalidArgument, "kmeans max_iters must be >= 1");
    require(options.restarts >= 1, ErrorCode::kInvalidArgument, "kmeans restarts must be >= 1");

    const std::vector<double> x(points.data().begin(), points.data().end());
    KMeansResult best;
    for (int r = 0; r < options.restarts; ++r) {
        // The first start keeps the bare stream key; later ones get a suffix.
        const std::string key = r == 0 ? options.stream_key : options.stream_key + "#" + std::to_string(r);
        Rng rng = Rng::stream(options.seed, key);
        KMeansResult run = lloyd(x, n, d, options, rng);
        if (r == 0 || run.wcss < best.wcss) best = std::move(run);
    }
    return best;
}

}  // namespace sap
