#pragma once

#include <bitext/common.hpp>
#include <bitext/encoder.hpp>
#include <bitext/kmeans.hpp>
#include <bitext/neighbors.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <unordered_set>
#include <vector>

namespace bitext::vindex {

inline constexpr std::uint32_t kCodebookSize = 256;

/// Orthonormal dim x dim matrix (row-major) applied as y = R x.
struct Rotation {
    std::uint32_t dim = 0;
    bool enabled = false;
    std::vector<float> matrix;

    static Rotation identity(std::uint32_t dim);
    void apply(const float* in, float* out) const;
    /// max |(R^T R - I)_ij|
    double orthonormality_error() const;

    bool operator==(const Rotation&) const = default;
};

/// Unit-normalized IVF centroids; a vector belongs to the list whose
/// centroid has the largest dot product with it.
struct CoarseQuantizer {
    std::uint32_t dim = 0;
    std::uint32_t nlist = 0;
    std::vector<float> centroids;

    std::uint32_t assign(const float* v) const;
    const float* centroid(std::uint32_t list) const {
        return centroids.data() + static_cast<std::size_t>(list) * dim;
    }

    bool operator==(const CoarseQuantizer&) const = default;
};

/// m sub-quantizers of 256 entries each over dim/m dimensional slices.
struct PQCodebook {
    std::uint32_t dim = 0;
    std::uint32_t m = 0;
    std::vector<float> codebooks; // m x 256 x sub_dim

    std::uint32_t sub_dim() const {
        return dim / m;
    }
    const float* entry(std::uint32_t sub, std::uint32_t code) const {
        return codebooks.data() + (static_cast<std::size_t>(sub) * kCodebookSize + code) * sub_dim();
    }
    void encode(const float* v, std::uint8_t* code) const;
    void decode(const std::uint8_t* code, float* out) const;

    bool operator==(const PQCodebook&) const = default;
};

struct TrainedQuantizers {
    Rotation rotation;
    CoarseQuantizer coarse;
    PQCodebook pq;

    std::uint32_t dim() const {
        return coarse.dim;
    }
    std::size_t code_size() const {
        return pq.m;
    }
    bool operator==(const TrainedQuantizers&) const = default;
};

struct TrainOptions {
    std::uint32_t nlist = 256;
    std::uint32_t m = 16;
    bool use_rotation = false;
    std::uint64_t seed = 0;
    int iterations = 25;
    int rotation_rounds = 3;
    unsigned workers = 1;
};

struct TrainReport {
    std::vector<double> coarse_mse;  // per Lloyd iteration
    std::vector<double> pq_mse;      // summed over sub-quantizers, per iteration
    std::vector<double> rotation_mse; // PQ error of the rotated sample, per round
};

/// Minimum sample size train_index accepts for the given options.
std::size_t min_training_rows(const TrainOptions& options);

/// Trains rotation (optional), coarse centroids and residual PQ on a sample.
TrainedQuantizers train_index(
        std::span<const EmbeddingBlock> sample,
        const TrainOptions& options,
        TrainReport* report = nullptr);

/// Draws up to `max_rows` rows uniformly (seeded) from the blocks into one
/// training block, preserving block order.
EmbeddingBlock sample_rows(
        std::span<const EmbeddingBlock> blocks,
        std::size_t max_rows,
        std::uint64_t seed);

// ---------------------------------------------------------------------------

struct InvertedList {
    std::vector<GlobalId> ids;
    std::vector<std::uint8_t> codes; // m bytes per entry
    // Present only when the shard retains full vectors:
    std::vector<float> vectors;       // dim floats per entry, unrotated
    std::vector<float> error_bounds;  // || rotated v - reconstruction ||

    bool operator==(const InvertedList&) const = default;
};

struct SearchParams {
    std::uint32_t k = 16;
    std::uint32_t nprobe = 1;
    bool refine = false;
    std::uint32_t refine_factor = 4;
    Direction direction = Direction::Forward;
    unsigned workers = 1;
};

/// Compressed IVF-PQ index over a slice of one language's sentences.
/// Trained quantizers are shared and immutable.
class IndexShard {
   public:
    IndexShard(std::shared_ptr<const TrainedQuantizers> quantizers, bool retain_vectors);

    const TrainedQuantizers& quantizers() const {
        return *quantizers_;
    }
    std::shared_ptr<const TrainedQuantizers> shared_quantizers() const {
        return quantizers_;
    }
    bool retains_vectors() const {
        return retain_vectors_;
    }
    std::size_t size() const {
        return count_;
    }
    const std::vector<InvertedList>& lists() const {
        return lists_;
    }
    bool contains(GlobalId id) const {
        return ids_.contains(id);
    }

    /// Rotates, assigns and PQ-encodes every row. Throws on dim mismatch or
    /// when an id is already stored (the shard is left unchanged).
    void add_block(const EmbeddingBlock& block);

    /// Concatenates lists in shard order. All shards must carry bit-equal
    /// quantizers, agree on vector retention and have disjoint ids.
    static IndexShard merge(std::span<const IndexShard> shards);

    /// Top-k by estimated inner product over `nprobe` probed lists. With
    /// `refine` and retained vectors, at least refine_factor*k candidates are
    /// rescored exactly, and further candidates whose error bound could
    /// still enter the top-k are rescored as well, so the result is the exact
    /// top-k of the probed lists.
    std::vector<NeighborList> search(const EmbeddingBlock& queries, const SearchParams& params) const;

    /// Mean || v - (centroid + decode(code)) ||^2 over `block` using the
    /// shard's quantizers (in the rotated space).
    double reconstruction_mse(const EmbeddingBlock& block) const;

    std::string serialize() const;
    /// Header, rotation, centroids and codebooks: the bytes that must match
    /// for two shards to be mergeable.
    std::string serialize_quantizers_only() const;
    static IndexShard parse(std::string_view bytes, const std::string& what = "index");
    void save(const std::filesystem::path& path) const;
    static IndexShard load(const std::filesystem::path& path);

    /// Empty shard file carrying only trained quantizers.
    static void save_quantizers(
            const std::shared_ptr<const TrainedQuantizers>& q,
            const std::filesystem::path& path);

   private:
    std::shared_ptr<const TrainedQuantizers> quantizers_;
    bool retain_vectors_;
    std::vector<InvertedList> lists_;
    std::unordered_set<GlobalId> ids_;
    std::size_t count_ = 0;
};

std::string index_file_name(std::string_view lang, std::uint32_t shard);

// ---------------------------------------------------------------------------

/// Brute-force inner-product top-k over every row of `corpus`.
std::vector<NeighborList> search_exact(
        std::span<const EmbeddingBlock> corpus,
        const EmbeddingBlock& queries,
        std::uint32_t k,
        Direction direction = Direction::Forward,
        unsigned workers = 1);

std::vector<NeighborList> search_exact(
        const EmbeddingBlock& corpus,
        const EmbeddingBlock& queries,
        std::uint32_t k,
        Direction direction = Direction::Forward,
        unsigned workers = 1);

} // namespace bitext::vindex
