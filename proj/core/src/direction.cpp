#include <bitext/miner.hpp>

#include <unordered_map>

namespace bitext::miner {

namespace {

template <typename Fn>
void with_context(const std::string& context, std::size_t block, Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        if (context.empty()) {
            throw;
        }
        throw Error(context + " (query block " + std::to_string(block) + "): " + e.what());
    }
}

} // namespace

NeighborFile compute_direction(
        std::span<const EmbeddingBlock> queries,
        std::span<const EmbeddingBlock> targets,
        std::uint32_t k,
        Direction direction,
        unsigned workers,
        const std::string& context) {
    NeighborFile out;
    out.k = k;
    out.direction = direction;
    for (std::size_t b = 0; b < queries.size(); ++b) {
        with_context(context, queries[b].block, [&] {
            auto lists = vindex::search_exact(targets, queries[b], k, direction, workers);
            for (auto& l : lists) {
                out.lists.push_back(std::move(l));
            }
        });
    }
    return out;
}

NeighborFile compute_direction(
        std::span<const EmbeddingBlock> queries,
        const vindex::IndexShard& target,
        const vindex::SearchParams& params,
        const std::string& context) {
    NeighborFile out;
    out.k = params.k;
    out.direction = params.direction;
    for (std::size_t b = 0; b < queries.size(); ++b) {
        with_context(context, queries[b].block, [&] {
            auto lists = target.search(queries[b], params);
            for (auto& l : lists) {
                out.lists.push_back(std::move(l));
            }
        });
    }
    return out;
}

NeighborFile merge_sweeps(std::span<const NeighborFile> shards) {
    if (shards.empty()) {
        throw ConfigError("merge_sweeps: no sweeps given");
    }
    if (shards.size() == 1) {
        return shards.front();
    }
    NeighborFile out;
    out.k = shards.front().k;
    out.direction = shards.front().direction;
    for (const auto& s : shards) {
        if (s.k != out.k || s.direction != out.direction || s.lists.size() != shards.front().lists.size()) {
            throw ConfigError("merge_sweeps: sweeps are not over the same queries with the same k");
        }
    }
    out.lists.reserve(shards.front().lists.size());
    std::vector<const NeighborList*> parts(shards.size());
    for (std::size_t i = 0; i < shards.front().lists.size(); ++i) {
        for (std::size_t s = 0; s < shards.size(); ++s) {
            parts[s] = &shards[s].lists[i];
        }
        out.lists.push_back(merge_neighbor_lists(parts, out.k));
    }
    return out;
}

MineResult mine_exact(
        std::span<const EmbeddingBlock> source,
        std::span<const EmbeddingBlock> target,
        const MiningConfig& config,
        unsigned workers) {
    config.validate();
    MineResult r;
    auto fwd = compute_direction(source, target, config.k, Direction::Forward, workers);
    if (config.mode == MiningMode::MaxStrategy) {
        auto bwd = compute_direction(target, source, config.k, Direction::Backward, workers);
        r.candidates = margin_scores(fwd, bwd, &r.stats);
        r.pairs = max_strategy_select(r.candidates, config.threshold);
    } else {
        r.candidates = forward_only_scores(fwd, &r.stats);
        r.pairs = max_strategy_select(r.candidates, config.threshold);
    }
    return r;
}

} // namespace bitext::miner
