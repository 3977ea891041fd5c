#include <bitext/encoder.hpp>
#include <bitext/utf8.hpp>

#include "kernels.hpp"

#include <cmath>
#include <exception>

namespace bitext {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

float dot(const float* a, const float* b, std::size_t dim) {
    return detail::dot_kernel(a, b, dim);
}

float dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw ConfigError("dot: dimension mismatch");
    }
    return detail::dot_kernel(a.data(), b.data(), a.size());
}

bool normalize(std::span<float> v) {
    double sq = 0.0;
    for (float x : v) {
        if (!std::isfinite(x)) {
            return false;
        }
        sq += static_cast<double>(x) * x;
    }
    if (!(sq > 0.0) || !std::isfinite(sq)) {
        return false;
    }
    double inv = 1.0 / std::sqrt(sq);
    for (float& x : v) {
        x = static_cast<float>(x * inv);
    }
    return true;
}

double EmbeddingBlock::max_norm_deviation() const {
    double worst = 0.0;
    for (std::size_t r = 0; r < rows(); ++r) {
        double sq = 0.0;
        for (float x : row(r)) {
            sq += static_cast<double>(x) * x;
        }
        worst = std::max(worst, std::abs(std::sqrt(sq) - 1.0));
    }
    return worst;
}

TrigramEncoder::TrigramEncoder(std::uint32_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 2) {
        throw ConfigError("test encoder: dim must be >= 2");
    }
}

EncoderDescriptor TrigramEncoder::descriptor() const {
    return {"trigram-projection", dim_, true, "1"};
}

void TrigramEncoder::encode(std::string_view sentence, std::span<float> out) const {
    if (out.size() != dim_) {
        throw ConfigError("test encoder: output span has wrong dimension");
    }
    std::fill(out.begin(), out.end(), 0.0f);
    std::vector<char32_t> cps = {' ', ' '};
    for (std::size_t pos = 0; pos < sentence.size();) {
        auto d = utf8::decode(sentence, pos);
        cps.push_back(d.cp);
        pos += d.length;
    }
    cps.push_back(' ');
    cps.push_back(' ');
    for (std::size_t i = 0; i + 2 < cps.size(); ++i) {
        std::uint64_t key = seed_;
        key ^= (static_cast<std::uint64_t>(cps[i]) << 42) ^
                (static_cast<std::uint64_t>(cps[i + 1]) << 21) ^ cps[i + 2];
        std::uint64_t state = splitmix64(key);
        for (std::uint32_t d = 0; d < dim_; d += 2) {
            std::uint64_t bits = splitmix64(state);
            // two uniform values in [-1, 1) from the high and low halves
            out[d] += static_cast<float>(static_cast<double>(bits >> 40) / 8388608.0 - 1.0);
            if (d + 1 < dim_) {
                out[d + 1] += static_cast<float>(
                        static_cast<double>((bits >> 8) & 0xFFFFFF) / 8388608.0 - 1.0);
            }
        }
    }
}

std::unique_ptr<SentenceEncoder> make_test_encoder(std::uint32_t dim, std::uint64_t seed) {
    return std::make_unique<TrigramEncoder>(dim, seed);
}

EmbeddingBlock encode_batch(
        const std::vector<std::string>& sentences,
        const SentenceEncoder& encoder,
        unsigned workers) {
    auto desc = encoder.descriptor();
    if (desc.dim < 2) {
        throw ConfigError("encoder '" + desc.name + "' declares dim < 2");
    }
    EmbeddingBlock block(desc.dim, sentences.size());
    constexpr std::size_t kChunk = 256;
    std::size_t chunks = (sentences.size() + kChunk - 1) / kChunk;
    parallel_for(chunks, workers, [&](std::size_t c) {
        std::size_t end = std::min(sentences.size(), (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i) {
            try {
                encoder.encode(sentences[i], block.row(i));
            } catch (const std::exception& e) {
                throw Error(
                        "encoder '" + desc.name + "' failed on sentence " + std::to_string(i) +
                        ": " + e.what());
            }
            if (!normalize(block.row(i))) {
                throw Error(
                        "encoder '" + desc.name + "' produced a zero or non-finite vector for sentence " +
                        std::to_string(i));
            }
        }
    });
    return block;
}

} // namespace bitext
