#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "persona/errors.hpp"

namespace persona {

/// Assignment of historical samples to groups plus the centroids.
struct PartitionMap {
    std::vector<std::size_t> assignments;            // sample index -> group
    std::vector<std::vector<double>> centroids;      // group -> centroid
    std::size_t group_count = 0;
    double inertia = 0.0;

    std::vector<std::vector<std::size_t>> groups() const {
        std::vector<std::vector<std::size_t>> g(group_count);
        for (std::size_t i = 0; i < assignments.size(); ++i) g[assignments[i]].push_back(i);
        return g;
    }
};

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline std::vector<std::vector<double>> kmeanspp_seed(const std::vector<std::vector<double>>& pts,
                                                      std::size_t k, std::mt19937_64& rng) {
    std::vector<std::vector<double>> centers;
    std::uniform_int_distribution<std::size_t> first(0, pts.size() - 1);
    centers.push_back(pts[first(rng)]);
    std::vector<double> d2(pts.size());
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : centers) best = std::min(best, sq_dist(pts[i], c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng), acc = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                acc += d2[i];
                if (acc >= r) { pick = i; break; }
            }
        } else {
            pick = first(rng);  // all points coincide
        }
        centers.push_back(pts[pick]);
    }
    return centers;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding, Euclidean metric. Empty clusters
/// are repaired by stealing the farthest point from the largest cluster.
inline PartitionMap kmeans(const std::vector<std::vector<double>>& vectors, std::size_t k,
                           std::uint64_t seed, std::size_t max_iters = 100) {
    if (k < 1) throw invalid_input_error("kmeans: k must be >= 1");
    if (k > vectors.size()) throw invalid_input_error("kmeans: k > point count");
    std::mt19937_64 rng(seed);
    auto centers = detail::kmeanspp_seed(vectors, k, rng);
    std::vector<std::size_t> assign(vectors.size(), 0);

    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            std::size_t best = 0;
            double bd = detail::sq_dist(vectors[i], centers[0]);
            for (std::size_t j = 1; j < k; ++j) {
                const double d = detail::sq_dist(vectors[i], centers[j]);
                if (d < bd) { bd = d; best = j; }
            }
            if (assign[i] != best) { assign[i] = best; changed = true; }
        }
        std::vector<std::size_t> counts(k, 0);
        for (auto a : assign) ++counts[a];
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] > 0) continue;
            // steal the farthest point from the largest cluster
            std::size_t big = 0;
            for (std::size_t m = 1; m < k; ++m)
                if (counts[m] > counts[big]) big = m;
            std::size_t far = 0;
            double fd = -1.0;
            for (std::size_t i = 0; i < vectors.size(); ++i) {
                if (assign[i] != big) continue;
                const double d = detail::sq_dist(vectors[i], centers[big]);
                if (d > fd) { fd = d; far = i; }
            }
            assign[far] = j;
            --counts[big];
            ++counts[j];
            changed = true;
        }
        for (std::size_t j = 0; j < k; ++j) {
            std::vector<double> mean(vectors[0].size(), 0.0);
            for (std::size_t i = 0; i < vectors.size(); ++i) {
                if (assign[i] != j) continue;
                for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += vectors[i][d];
            }
            for (double& v : mean) v /= static_cast<double>(counts[j]);
            centers[j] = std::move(mean);
        }
        if (!changed && iter > 0) break;
    }

    PartitionMap out;
    out.assignments = std::move(assign);
    out.centroids = std::move(centers);
    out.group_count = k;
    for (std::size_t i = 0; i < vectors.size(); ++i)
        out.inertia += detail::sq_dist(vectors[i], out.centroids[out.assignments[i]]);
    return out;
}

/// Adjusted Rand index between two labelings of the same samples.
inline double adjusted_rand_index(const std::vector<std::size_t>& a,
                                  const std::vector<std::size_t>& b) {
    if (a.size() != b.size() || a.empty())
        throw invalid_input_error("adjusted_rand_index: size mismatch or empty");
    const std::size_t n = a.size();
    std::size_t ka = 0, kb = 0;
    for (auto v : a) ka = std::max(ka, v + 1);
    for (auto v : b) kb = std::max(kb, v + 1);
    std::vector<std::vector<std::size_t>> ct(ka, std::vector<std::size_t>(kb, 0));
    for (std::size_t i = 0; i < n; ++i) ++ct[a[i]][b[i]];
    auto choose2 = [](std::size_t x) { return static_cast<double>(x) * (x - 1) / 2.0; };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (std::size_t i = 0; i < ka; ++i) {
        std::size_t row = 0;
        for (std::size_t j = 0; j < kb; ++j) { sum_ij += choose2(ct[i][j]); row += ct[i][j]; }
        sum_a += choose2(row);
    }
    for (std::size_t j = 0; j < kb; ++j) {
        std::size_t col = 0;
        for (std::size_t i = 0; i < ka; ++i) col += ct[i][j];
        sum_b += choose2(col);
    }
    const double total = choose2(n);
    const double expected = sum_a * sum_b / total;
    const double max_idx = 0.5 * (sum_a + sum_b);
    if (max_idx == expected) return 1.0;  // single cluster both sides
    return (sum_ij - expected) / (max_idx - expected);
}

}  // namespace persona
