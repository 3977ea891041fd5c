#pragma once

#include <bitext/common.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bitext {

inline constexpr std::uint32_t kDefaultEmbeddingDim = 1024;
inline constexpr double kNormTolerance = 1e-5;

/// Row-major float32 matrix of unit-normalized sentence vectors. Row `r`
/// belongs to sentence `base_global_id + r`.
struct EmbeddingBlock {
    std::string lang;
    std::uint32_t block = 0;
    std::uint32_t dim = 0;
    GlobalId base_global_id = 0;
    std::vector<float> data;

    EmbeddingBlock() = default;
    EmbeddingBlock(std::uint32_t dim, std::size_t rows) : dim(dim), data(dim * rows) {}

    std::size_t rows() const {
        return dim == 0 ? 0 : data.size() / dim;
    }
    std::span<const float> row(std::size_t r) const {
        return {data.data() + r * dim, dim};
    }
    std::span<float> row(std::size_t r) {
        return {data.data() + r * dim, dim};
    }
    GlobalId id(std::size_t r) const {
        return base_global_id + r;
    }

    /// max | ||row||_2 - 1 | over all rows (0 for an empty block).
    double max_norm_deviation() const;
};

/// Scales `v` to unit L2 norm. Returns false when the norm is zero or
/// any component is non-finite.
bool normalize(std::span<float> v);

float dot(std::span<const float> a, std::span<const float> b);
float dot(const float* a, const float* b, std::size_t dim);

// ---------------------------------------------------------------------------

struct EncoderDescriptor {
    std::string name;
    std::uint32_t dim = 0;
    bool deterministic = true;
    std::string version;
};

/// Maps sentences to fixed-dimension vectors. `encode` must be safe to call
/// concurrently from several threads.
class SentenceEncoder {
   public:
    virtual ~SentenceEncoder() = default;
    virtual EncoderDescriptor descriptor() const = 0;
    virtual void encode(std::string_view sentence, std::span<float> out) const = 0;
};

/// Hashed character 3-gram counts through a seeded random projection.
/// Stands in for a neural encoder in tests: similar strings land close.
class TrigramEncoder final : public SentenceEncoder {
   public:
    TrigramEncoder(std::uint32_t dim, std::uint64_t seed);

    EncoderDescriptor descriptor() const override;
    void encode(std::string_view sentence, std::span<float> out) const override;

   private:
    std::uint32_t dim_;
    std::uint64_t seed_;
};

std::unique_ptr<SentenceEncoder> make_test_encoder(std::uint32_t dim, std::uint64_t seed);

/// Encodes and normalizes every sentence. Throws Error carrying the
/// sentence index when the encoder throws or yields a zero/non-finite row.
EmbeddingBlock encode_batch(
        const std::vector<std::string>& sentences,
        const SentenceEncoder& encoder,
        unsigned workers = 1);

// ---------------------------------------------------------------------------
// "EMB1" files

inline constexpr char kEmbeddingMagic[4] = {'E', 'M', 'B', '1'};
inline constexpr std::size_t kEmbeddingHeaderSize = 4 + 4 + 8 + 8;

std::string serialize_embeddings(const EmbeddingBlock& block);
/// `expected_dim` of 0 accepts any dimension.
EmbeddingBlock parse_embeddings(
        std::string_view bytes,
        std::uint32_t expected_dim = 0,
        const std::string& what = "embeddings");

/// Throws Error when a row is not unit norm within tolerance.
void write_embeddings(const EmbeddingBlock& block, const std::filesystem::path& path);
/// Lang and block are recovered from a `{lang}.{block:05}.emb` file name.
EmbeddingBlock read_embeddings(const std::filesystem::path& path, std::uint32_t expected_dim = 0);

/// Imports a headerless float32 file of `count` x `dim` values (row-major),
/// renormalizing every row.
EmbeddingBlock import_embeddings(
        const std::filesystem::path& raw,
        std::uint32_t dim,
        std::uint64_t count,
        GlobalId base_global_id,
        std::string lang = {},
        std::uint32_t block = 0);

/// Same as import_embeddings over bytes already in memory.
EmbeddingBlock import_embeddings_bytes(
        std::string_view raw,
        std::uint32_t dim,
        std::uint64_t count,
        GlobalId base_global_id,
        const std::string& what = "raw embeddings");

} // namespace bitext
