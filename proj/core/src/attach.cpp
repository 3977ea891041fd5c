#include <bitext/miner.hpp>

namespace bitext::miner {

TextResolver::TextResolver(corpus::BlockManifest manifest, corpus::BlockStore store)
        : manifest_(std::move(manifest)), store_(std::move(store)) {}

const std::string& TextResolver::text(GlobalId id) {
    auto [block, row] = manifest_.locate(id);
    auto it = cache_.find(block);
    if (it == cache_.end()) {
        auto lines = store_.read(manifest_.lang, block);
        it = cache_.emplace(block, std::move(lines)).first;
    }
    if (row >= it->second.size()) {
        throw ConfigError(
                "dangling id " + std::to_string(id) + " for lang '" + manifest_.lang +
                "': block file is shorter than its manifest entry");
    }
    return it->second[row];
}

std::vector<AlignedPair> attach_text(
        std::span<const ScoredPair> pairs,
        TextResolver& source,
        TextResolver& target) {
    std::vector<AlignedPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        out.push_back({p.margin, p.src_id, p.tgt_id, source.text(p.src_id), target.text(p.tgt_id)});
    }
    return out;
}

} // namespace bitext::miner
