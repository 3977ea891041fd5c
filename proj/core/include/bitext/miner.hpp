#pragma once

#include <bitext/common.hpp>
#include <bitext/corpus.hpp>
#include <bitext/neighbors.hpp>
#include <bitext/vindex.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace bitext::miner {

inline constexpr std::uint32_t kDefaultK = 16;
inline constexpr double kDefaultThreshold = 1.06;

enum class MiningMode {
    MaxStrategy, // forward + backward sweeps, union, greedy 1:1
    ForwardOnly, // forward sweeps over S target shards, alternatives kept
};

const char* to_string(MiningMode mode);
MiningMode parse_mining_mode(std::string_view s);

struct MiningConfig {
    std::uint32_t k = kDefaultK;
    double threshold = kDefaultThreshold;
    MiningMode mode = MiningMode::MaxStrategy;
    std::uint32_t nprobe = 0; // 0: exact search

    void validate() const;
};

struct MarginCandidate {
    GlobalId src_id = 0;
    GlobalId tgt_id = 0;
    float margin = 0.0f;
    Direction direction = Direction::Forward;

    bool operator==(const MarginCandidate&) const = default;
};

/// A selected (src, tgt) pair before its texts are attached.
struct ScoredPair {
    float margin = 0.0f;
    GlobalId src_id = 0;
    GlobalId tgt_id = 0;

    bool operator==(const ScoredPair&) const = default;
};

struct AlignedPair {
    float margin = 0.0f;
    GlobalId src_id = 0;
    GlobalId tgt_id = 0;
    std::string src_text;
    std::string tgt_text;
};

/// Ratio of cos(x, y) to the averaged neighborhood similarities of x and y:
///   cos(x,y) / ( sum_{z in NN_k(x)} cos(x,z)/2k + sum_{z in NN_k(y)} cos(y,z)/2k )
/// Lists shorter than k still divide by 2k.
double margin(
        double cos_xy,
        std::span<const float> x_neighbor_sims,
        std::span<const float> y_neighbor_sims,
        std::uint32_t k);

/// Backward lists do not exist: the target-side term is replaced by the
/// source-side term, i.e. cos(x,y) / (sum_{z in NN_k(x)} cos(x,z) / k).
double forward_only_margin(double cos_xy, std::span<const float> x_neighbor_sims, std::uint32_t k);

/// `margin >= threshold`, compared at the stored float precision.
bool passes(float margin, double threshold);

struct MarginStats {
    std::uint64_t forward_candidates = 0;
    std::uint64_t backward_candidates = 0;
    std::uint64_t dropped_missing_counterpart = 0;
    std::uint64_t dropped_denominator = 0;
    std::uint64_t dropped_nonpositive = 0;
    std::uint64_t unique_pairs = 0; // distinct (src, tgt) among kept candidates
    std::map<std::string, std::uint64_t> accepted; // threshold (6 decimals) -> count

    MarginStats& operator+=(const MarginStats& other);
    std::string to_json() const;
};

/// Scores every (x, y in NN_k(x)) of the forward sweep and every
/// (y, x in NN_k(y)) of the backward sweep. Candidates whose counterpart
/// list is missing, whose denominator is <= 0, or whose margin is <= 0 are
/// dropped and counted.
std::vector<MarginCandidate> margin_scores(
        const NeighborFile& forward,
        const NeighborFile& backward,
        MarginStats* stats = nullptr);

/// Forward candidates scored with forward_only_margin.
std::vector<MarginCandidate> forward_only_scores(
        const NeighborFile& forward,
        MarginStats* stats = nullptr);

/// Max-strategy: union, keep the best margin per (src, tgt), drop margins
/// below threshold, sort by margin descending (ties by ascending
/// (src, tgt)), then accept greedily while both sides are unused.
std::vector<ScoredPair> max_strategy_select(
        std::vector<MarginCandidate> candidates,
        double threshold);

/// Forward-only mining over S target shards: each shard is scored,
/// thresholded and made 1:1 on its own; results are concatenated in shard
/// order without cross-shard dedup, so a source keeps up to S alternatives.
std::vector<ScoredPair> forward_only_select(
        std::span<const NeighborFile> shards,
        double threshold,
        MarginStats* stats = nullptr);

/// Forward-only selection over already-scored per-shard candidates.
std::vector<ScoredPair> forward_only_select_candidates(
        std::span<const std::vector<MarginCandidate>> shards,
        double threshold);

// ---------------------------------------------------------------------------
// Distance sweeps

/// Exact top-k of every query row over the target blocks, one list per
/// query in query order. Errors are rethrown with `context` prepended.
NeighborFile compute_direction(
        std::span<const EmbeddingBlock> queries,
        std::span<const EmbeddingBlock> targets,
        std::uint32_t k,
        Direction direction,
        unsigned workers = 1,
        const std::string& context = {});

/// Same over a compressed index shard.
NeighborFile compute_direction(
        std::span<const EmbeddingBlock> queries,
        const vindex::IndexShard& target,
        const vindex::SearchParams& params,
        const std::string& context = {});

/// Merges per-shard sweeps of the same queries into global top-k lists.
NeighborFile merge_sweeps(std::span<const NeighborFile> shards);

struct MineResult {
    std::vector<MarginCandidate> candidates;
    std::vector<ScoredPair> pairs;
    MarginStats stats;
};

/// In-memory max-strategy mining with exact search in both directions.
MineResult mine_exact(
        std::span<const EmbeddingBlock> source,
        std::span<const EmbeddingBlock> target,
        const MiningConfig& config,
        unsigned workers = 1);

// ---------------------------------------------------------------------------
// "CND1" candidate files: magic, then packed records
// (u64 src_id, u64 tgt_id, f32 margin, u8 direction).

inline constexpr std::size_t kCandidateRecordSize = 8 + 8 + 4 + 1;

std::string serialize_candidates(std::span<const MarginCandidate> candidates);
std::vector<MarginCandidate> parse_candidates(std::string_view bytes, const std::string& what = "candidates");
void write_candidates(std::span<const MarginCandidate> candidates, const std::filesystem::path& path);
std::vector<MarginCandidate> read_candidates(const std::filesystem::path& path);

/// Id-level selection output: `margin<TAB>src_id<TAB>tgt_id`, margin with
/// enough digits to round-trip the float.
std::string format_pairs_tsv(std::span<const ScoredPair> pairs);
std::vector<ScoredPair> parse_pairs_tsv(std::string_view text);

/// Final bitext: `margin<TAB>src_text<TAB>tgt_text`, margin with 6 decimals.
std::string format_bitext_tsv(std::span<const AlignedPair> pairs);

// ---------------------------------------------------------------------------

/// Resolves global ids to sentence text via (block, row) arithmetic over a
/// manifest and its block files. Blocks are loaded lazily and cached.
class TextResolver {
   public:
    TextResolver(corpus::BlockManifest manifest, corpus::BlockStore store);

    /// Throws ConfigError naming the id and language for dangling ids.
    const std::string& text(GlobalId id);
    const corpus::BlockManifest& manifest() const {
        return manifest_;
    }

   private:
    corpus::BlockManifest manifest_;
    corpus::BlockStore store_;
    std::unordered_map<std::uint32_t, std::vector<std::string>> cache_;
};

std::vector<AlignedPair> attach_text(
        std::span<const ScoredPair> pairs,
        TextResolver& source,
        TextResolver& target);

} // namespace bitext::miner
