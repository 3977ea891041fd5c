#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bitext {

enum class KMeansMetric {
    L2,        // argmin squared distance, centroid = mean
    Spherical, // argmax dot, centroid = normalized mean
};

struct KMeansOptions {
    std::uint32_t k = 1;
    int iterations = 25;
    std::uint64_t seed = 0;
    KMeansMetric metric = KMeansMetric::L2;
    unsigned workers = 1;
};

struct KMeansResult {
    std::vector<float> centroids; // k x dim
    std::vector<std::uint32_t> assignment;
    /// Mean squared distance of each point to its assigned centroid,
    /// measured after every assignment step (iterations + 1 entries).
    std::vector<double> mse_trace;
};

/// Lloyd iterations from a k-means++ seeding. Empty clusters are re-seeded
/// with the farthest member of the currently largest cluster. Deterministic
/// for a fixed seed and input order. Requires n >= k.
KMeansResult kmeans(std::span<const float> data, std::size_t dim, const KMeansOptions& options);

/// Index of the nearest centroid (ties: lowest index).
std::uint32_t nearest_centroid(
        const float* v,
        std::span<const float> centroids,
        std::size_t dim,
        KMeansMetric metric);

} // namespace bitext
