#include <bitext/miner.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <unordered_set>

namespace bitext::miner {

std::vector<ScoredPair> max_strategy_select(std::vector<MarginCandidate> candidates, double threshold) {
    std::erase_if(candidates, [&](const MarginCandidate& c) {
        return !passes(c.margin, threshold);
    });
    // one entry per (src, tgt), the best margin wins
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.src_id != b.src_id) {
            return a.src_id < b.src_id;
        }
        if (a.tgt_id != b.tgt_id) {
            return a.tgt_id < b.tgt_id;
        }
        return a.margin > b.margin;
    });
    candidates.erase(
            std::unique(candidates.begin(), candidates.end(),
                        [](const auto& a, const auto& b) {
                            return a.src_id == b.src_id && a.tgt_id == b.tgt_id;
                        }),
            candidates.end());
    std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        return a.margin > b.margin;
    });

    std::vector<ScoredPair> accepted;
    std::unordered_set<GlobalId> used_src;
    std::unordered_set<GlobalId> used_tgt;
    for (const auto& c : candidates) {
        if (used_src.contains(c.src_id) || used_tgt.contains(c.tgt_id)) {
            continue;
        }
        used_src.insert(c.src_id);
        used_tgt.insert(c.tgt_id);
        accepted.push_back({c.margin, c.src_id, c.tgt_id});
    }
    return accepted;
}

std::vector<ScoredPair> forward_only_select_candidates(
        std::span<const std::vector<MarginCandidate>> shards,
        double threshold) {
    std::vector<ScoredPair> out;
    for (const auto& shard : shards) {
        auto selected = max_strategy_select(shard, threshold);
        out.insert(out.end(), selected.begin(), selected.end());
    }
    return out;
}

std::vector<ScoredPair> forward_only_select(
        std::span<const NeighborFile> shards,
        double threshold,
        MarginStats* stats) {
    if (!shards.empty()) {
        for (const auto& s : shards) {
            if (s.k != shards.front().k) {
                throw ConfigError("forward_only_select: shards disagree on k");
            }
            if (s.direction != Direction::Forward) {
                throw ConfigError("forward_only_select: expected forward neighbor lists");
            }
        }
    }
    std::vector<std::vector<MarginCandidate>> scored;
    scored.reserve(shards.size());
    for (const auto& s : shards) {
        scored.push_back(forward_only_scores(s, stats));
    }
    return forward_only_select_candidates(scored, threshold);
}

namespace {
constexpr char kMagic[4] = {'C', 'N', 'D', '1'};
}

std::string serialize_candidates(std::span<const MarginCandidate> candidates) {
    ByteWriter w;
    w.put_bytes(kMagic, 4);
    for (const auto& c : candidates) {
        w.put<std::uint64_t>(c.src_id);
        w.put<std::uint64_t>(c.tgt_id);
        w.put<float>(c.margin);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(c.direction));
    }
    return w.take();
}

std::vector<MarginCandidate> parse_candidates(std::string_view bytes, const std::string& what) {
    ByteReader r(bytes, what);
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
        throw FormatError(what + ": bad magic (expected CND1)");
    }
    if (r.remaining() % kCandidateRecordSize != 0) {
        throw FormatError(what + ": truncated record");
    }
    std::vector<MarginCandidate> out(r.remaining() / kCandidateRecordSize);
    for (auto& c : out) {
        c.src_id = r.get<std::uint64_t>();
        c.tgt_id = r.get<std::uint64_t>();
        c.margin = r.get<float>();
        auto d = r.get<std::uint8_t>();
        if (d > 1) {
            throw FormatError(what + ": bad direction byte");
        }
        c.direction = static_cast<Direction>(d);
    }
    return out;
}

void write_candidates(std::span<const MarginCandidate> candidates, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_candidates(candidates));
}

std::vector<MarginCandidate> read_candidates(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error("missing candidate file " + path.string());
    }
    return parse_candidates(read_file(path), path.string());
}

std::string format_pairs_tsv(std::span<const ScoredPair> pairs) {
    std::string out;
    char buf[96];
    for (const auto& p : pairs) {
        int n = std::snprintf(buf, sizeof(buf), "%.9g\t%llu\t%llu\n", static_cast<double>(p.margin),
                              static_cast<unsigned long long>(p.src_id),
                              static_cast<unsigned long long>(p.tgt_id));
        out.append(buf, static_cast<std::size_t>(n));
    }
    return out;
}

std::vector<ScoredPair> parse_pairs_tsv(std::string_view text) {
    std::vector<ScoredPair> out;
    std::size_t line_no = 0;
    for (const auto& line : corpus::decode_lines(text)) {
        ++line_no;
        auto bad = [&] {
            return FormatError("pairs line " + std::to_string(line_no) + ": expected margin<TAB>src_id<TAB>tgt_id");
        };
        auto t1 = line.find('\t');
        auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) {
            throw bad();
        }
        ScoredPair p;
        const char* b = line.data();
        if (std::from_chars(b, b + t1, p.margin).ptr != b + t1 ||
            std::from_chars(b + t1 + 1, b + t2, p.src_id).ptr != b + t2 ||
            std::from_chars(b + t2 + 1, b + line.size(), p.tgt_id).ptr != b + line.size()) {
            throw bad();
        }
        out.push_back(p);
    }
    return out;
}

std::string format_bitext_tsv(std::span<const AlignedPair> pairs) {
    std::string out;
    char buf[64];
    for (const auto& p : pairs) {
        int n = std::snprintf(buf, sizeof(buf), "%.6f\t", static_cast<double>(p.margin));
        out.append(buf, static_cast<std::size_t>(n));
        out += p.src_text;
        out += '\t';
        out += p.tgt_text;
        out += '\n';
    }
    return out;
}

} // namespace bitext::miner
