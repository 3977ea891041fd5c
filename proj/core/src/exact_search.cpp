#include <bitext/vindex.hpp>

#include "kernels.hpp"

namespace bitext::vindex {

std::vector<NeighborList> search_exact(
        std::span<const EmbeddingBlock> corpus,
        const EmbeddingBlock& queries,
        std::uint32_t k,
        Direction direction,
        unsigned workers) {
    if (k == 0) {
        throw ConfigError("search_exact: k must be >= 1");
    }
    const std::uint32_t dim = queries.dim;
    for (const auto& b : corpus) {
        if (b.rows() > 0 && queries.rows() > 0 && b.dim != dim) {
            throw ConfigError(
                    "search_exact: corpus dim " + std::to_string(b.dim) + " != query dim " +
                    std::to_string(dim));
        }
    }

    // Query chunks stay in L1 while a tile of corpus rows streams through L2.
    constexpr std::size_t kQueryChunk = 32;
    constexpr std::size_t kTile = 2048;
    std::vector<NeighborList> out(queries.rows());
    std::size_t chunks = (queries.rows() + kQueryChunk - 1) / kQueryChunk;

    parallel_for(chunks, workers, [&](std::size_t chunk) {
        std::size_t q0 = chunk * kQueryChunk;
        std::size_t q1 = std::min(queries.rows(), q0 + kQueryChunk);
        std::vector<TopK> tops(q1 - q0, TopK(k));
        for (const auto& block : corpus) {
            const std::size_t rows = block.rows();
            for (std::size_t t0 = 0; t0 < rows; t0 += kTile) {
                std::size_t t1 = std::min(rows, t0 + kTile);
                for (std::size_t qi = q0; qi < q1; ++qi) {
                    const float* q = queries.row(qi).data();
                    auto& top = tops[qi - q0];
                    for (std::size_t r = t0; r < t1; ++r) {
                        float s = detail::dot_kernel(q, block.data.data() + r * dim, dim);
                        if (!top.full() || s >= top.worst_sim()) {
                            top.push(s, block.id(r));
                        }
                    }
                }
            }
        }
        for (std::size_t qi = q0; qi < q1; ++qi) {
            auto& res = out[qi];
            res.query_id = queries.id(qi);
            res.direction = direction;
            tops[qi - q0].extract(res);
        }
    });
    return out;
}

std::vector<NeighborList> search_exact(
        const EmbeddingBlock& corpus,
        const EmbeddingBlock& queries,
        std::uint32_t k,
        Direction direction,
        unsigned workers) {
    return search_exact(std::span<const EmbeddingBlock>(&corpus, 1), queries, k, direction, workers);
}

} // namespace bitext::vindex
