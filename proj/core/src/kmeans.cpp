#include <bitext/common.hpp>
#include <bitext/kmeans.hpp>

#include "kernels.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace bitext {

namespace {

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void normalize_row(float* c, std::size_t dim) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
        sq += static_cast<double>(c[d]) * c[d];
    }
    if (sq > 0.0) {
        double inv = 1.0 / std::sqrt(sq);
        for (std::size_t d = 0; d < dim; ++d) {
            c[d] = static_cast<float>(c[d] * inv);
        }
    }
}

std::vector<float> plus_plus_init(
        std::span<const float> data,
        std::size_t n,
        std::size_t dim,
        const KMeansOptions& opt,
        std::mt19937_64& rng) {
    std::vector<float> centroids(opt.k * dim);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    auto first = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    std::copy_n(data.data() + std::min(first, n - 1) * dim, dim, centroids.data());
    for (std::size_t i = 0; i < n; ++i) {
        d2[i] = detail::l2sqr_kernel(data.data() + i * dim, centroids.data(), dim);
    }
    // Greedy variant: draw several D^2-weighted candidates per step and keep
    // the one that lowers the total potential most.
    const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(opt.k)));
    std::vector<double> trial_d2(n), best_d2(n);
    for (std::uint32_t c = 1; c < opt.k; ++c) {
        double total = 0.0;
        for (double d : d2) {
            total += d;
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double best_pot = std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < trials; ++t) {
                double target = uniform01(rng) * total;
                double acc = 0.0;
                std::size_t cand = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (acc > target && d2[i] > 0.0) {
                        cand = i;
                        break;
                    }
                }
                double pot = 0.0;
                const float* cv = data.data() + cand * dim;
                for (std::size_t i = 0; i < n; ++i) {
                    trial_d2[i] = std::min(d2[i], static_cast<double>(detail::l2sqr_kernel(data.data() + i * dim, cv, dim)));
                    pot += trial_d2[i];
                }
                if (pot < best_pot) {
                    best_pot = pot;
                    pick = cand;
                    best_d2.swap(trial_d2);
                }
            }
            d2.swap(best_d2);
        } else {
            // every point coincides with a chosen centroid
            pick = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
        }
        std::copy_n(data.data() + pick * dim, dim, centroids.data() + c * dim);
    }
    if (opt.metric == KMeansMetric::Spherical) {
        for (std::uint32_t c = 0; c < opt.k; ++c) {
            normalize_row(centroids.data() + c * dim, dim);
        }
    }
    return centroids;
}

} // namespace

std::uint32_t nearest_centroid(
        const float* v,
        std::span<const float> centroids,
        std::size_t dim,
        KMeansMetric metric) {
    std::size_t k = centroids.size() / dim;
    std::uint32_t best = 0;
    if (metric == KMeansMetric::Spherical) {
        float best_score = -std::numeric_limits<float>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            float s = detail::dot_kernel(v, centroids.data() + c * dim, dim);
            if (s > best_score) {
                best_score = s;
                best = static_cast<std::uint32_t>(c);
            }
        }
    } else {
        float best_dist = std::numeric_limits<float>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            float d = detail::l2sqr_kernel(v, centroids.data() + c * dim, dim);
            if (d < best_dist) {
                best_dist = d;
                best = static_cast<std::uint32_t>(c);
            }
        }
    }
    return best;
}

KMeansResult kmeans(std::span<const float> data, std::size_t dim, const KMeansOptions& opt) {
    if (dim == 0 || data.size() % dim != 0) {
        throw ConfigError("kmeans: data size is not a multiple of dim");
    }
    std::size_t n = data.size() / dim;
    if (opt.k == 0) {
        throw ConfigError("kmeans: k must be >= 1");
    }
    if (n < opt.k) {
        throw ConfigError(
                "kmeans: need at least k=" + std::to_string(opt.k) + " points, got " +
                std::to_string(n));
    }

    std::mt19937_64 rng(opt.seed);
    KMeansResult res;
    res.centroids = plus_plus_init(data, n, dim, opt, rng);
    res.assignment.assign(n, 0);
    std::vector<float> dist(n, 0.0f);

    constexpr std::size_t kChunk = 1024;
    auto assign = [&] {
        std::size_t chunks = (n + kChunk - 1) / kChunk;
        parallel_for(chunks, opt.workers, [&](std::size_t c) {
            std::size_t end = std::min(n, (c + 1) * kChunk);
            for (std::size_t i = c * kChunk; i < end; ++i) {
                const float* v = data.data() + i * dim;
                auto a = nearest_centroid(v, res.centroids, dim, opt.metric);
                res.assignment[i] = a;
                dist[i] = detail::l2sqr_kernel(v, res.centroids.data() + a * dim, dim);
            }
        });
        double total = 0.0;
        for (float d : dist) {
            total += d;
        }
        res.mse_trace.push_back(total / static_cast<double>(n));
    };

    std::vector<std::size_t> counts(opt.k);
    std::vector<double> sums(opt.k * dim);
    for (int it = 0; it < opt.iterations; ++it) {
        assign();

        std::fill(counts.begin(), counts.end(), 0);
        for (auto a : res.assignment) {
            ++counts[a];
        }
        for (std::uint32_t j = 0; j < opt.k; ++j) {
            if (counts[j] != 0) {
                continue;
            }
            std::size_t largest = static_cast<std::size_t>(
                    std::max_element(counts.begin(), counts.end()) - counts.begin());
            if (counts[largest] <= 1) {
                break;
            }
            std::size_t far = n;
            float far_dist = -1.0f;
            for (std::size_t i = 0; i < n; ++i) {
                if (res.assignment[i] == largest && dist[i] > far_dist) {
                    far_dist = dist[i];
                    far = i;
                }
            }
            std::copy_n(data.data() + far * dim, dim, res.centroids.data() + j * dim);
            if (opt.metric == KMeansMetric::Spherical) {
                normalize_row(res.centroids.data() + j * dim, dim);
            }
            res.assignment[far] = j;
            dist[far] = 0.0f;
            --counts[largest];
            ++counts[j];
        }

        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* s = sums.data() + res.assignment[i] * dim;
            const float* v = data.data() + i * dim;
            for (std::size_t d = 0; d < dim; ++d) {
                s[d] += v[d];
            }
        }
        for (std::uint32_t j = 0; j < opt.k; ++j) {
            if (counts[j] == 0) {
                continue;
            }
            float* c = res.centroids.data() + j * dim;
            const double* s = sums.data() + j * dim;
            for (std::size_t d = 0; d < dim; ++d) {
                c[d] = static_cast<float>(s[d] / static_cast<double>(counts[j]));
            }
            if (opt.metric == KMeansMetric::Spherical) {
                normalize_row(c, dim);
            }
        }
    }
    assign();
    return res;
}

} // namespace bitext
