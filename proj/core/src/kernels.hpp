#pragma once

// Inner-product kernels shared by exact search, IVF refinement and the
// quantizers. Eight independent accumulators combined in a fixed tree: the
// result for (a, b) is bit-identical to (b, a) and does not depend on the
// caller, which the margin symmetry and exact-refine checks rely on.

#include <cstddef>

namespace bitext::detail {

inline float dot_kernel(const float* a, const float* b, std::size_t dim) {
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= dim; i += 8) {
        for (std::size_t j = 0; j < 8; ++j) {
            acc[j] += a[i + j] * b[i + j];
        }
    }
    for (std::size_t j = 0; i < dim; ++i, ++j) {
        acc[j] += a[i] * b[i];
    }
    return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

inline float l2sqr_kernel(const float* a, const float* b, std::size_t dim) {
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= dim; i += 8) {
        for (std::size_t j = 0; j < 8; ++j) {
            float d = a[i + j] - b[i + j];
            acc[j] += d * d;
        }
    }
    for (std::size_t j = 0; i < dim; ++i, ++j) {
        float d = a[i] - b[i];
        acc[j] += d * d;
    }
    return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

} // namespace bitext::detail
