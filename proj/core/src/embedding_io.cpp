#include <bitext/encoder.hpp>

#include <charconv>
#include <cmath>

namespace bitext {

std::string serialize_embeddings(const EmbeddingBlock& block) {
    ByteWriter w;
    w.put_bytes(kEmbeddingMagic, 4);
    w.put<std::uint32_t>(block.dim);
    w.put<std::uint64_t>(block.rows());
    w.put<std::uint64_t>(block.base_global_id);
    w.put_bytes(block.data.data(), block.data.size() * sizeof(float));
    return w.take();
}

EmbeddingBlock parse_embeddings(
        std::string_view bytes,
        std::uint32_t expected_dim,
        const std::string& what) {
    ByteReader r(bytes, what);
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::string_view(magic, 4) != std::string_view(kEmbeddingMagic, 4)) {
        throw FormatError(what + ": bad magic (expected EMB1)");
    }
    EmbeddingBlock block;
    block.dim = r.get<std::uint32_t>();
    auto rows = r.get<std::uint64_t>();
    block.base_global_id = r.get<std::uint64_t>();
    if (block.dim < 2) {
        throw FormatError(what + ": dim " + std::to_string(block.dim) + " < 2");
    }
    if (expected_dim != 0 && block.dim != expected_dim) {
        throw FormatError(
                what + ": dim mismatch (file " + std::to_string(block.dim) + ", expected " +
                std::to_string(expected_dim) + ")");
    }
    auto payload = static_cast<unsigned __int128>(rows) * block.dim * sizeof(float);
    if (payload != r.remaining()) {
        throw FormatError(
                what + ": payload holds " + std::to_string(r.remaining()) + " bytes, header declares " +
                std::to_string(rows) + " rows of dim " + std::to_string(block.dim));
    }
    block.data.resize(rows * block.dim);
    r.get_bytes(block.data.data(), block.data.size() * sizeof(float));
    return block;
}

void write_embeddings(const EmbeddingBlock& block, const std::filesystem::path& path) {
    if (block.dim < 2 || block.data.size() % block.dim != 0) {
        throw ConfigError("write_embeddings: malformed block for " + path.string());
    }
    if (block.max_norm_deviation() > kNormTolerance) {
        throw ConfigError("write_embeddings: rows of " + path.string() + " are not unit-normalized");
    }
    write_file_atomic(path, serialize_embeddings(block));
}

namespace {

// Parses `{lang}.{block}.emb`; leaves the block untouched otherwise.
void apply_file_name(const std::filesystem::path& path, EmbeddingBlock& block) {
    auto name = path.filename().string();
    auto ext = name.rfind(".emb");
    if (ext == std::string::npos || ext + 4 != name.size()) {
        return;
    }
    auto stem = name.substr(0, ext);
    auto dot = stem.rfind('.');
    if (dot == std::string::npos) {
        return;
    }
    std::uint32_t idx = 0;
    auto digits = std::string_view(stem).substr(dot + 1);
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), idx);
    if (ec != std::errc{} || p != digits.data() + digits.size()) {
        return;
    }
    block.lang = stem.substr(0, dot);
    block.block = idx;
}

} // namespace

EmbeddingBlock read_embeddings(const std::filesystem::path& path, std::uint32_t expected_dim) {
    if (!std::filesystem::exists(path)) {
        throw Error("missing embedding file " + path.string());
    }
    auto block = parse_embeddings(read_file(path), expected_dim, path.string());
    apply_file_name(path, block);
    return block;
}

EmbeddingBlock import_embeddings_bytes(
        std::string_view raw,
        std::uint32_t dim,
        std::uint64_t count,
        GlobalId base_global_id,
        const std::string& what) {
    if (dim < 2) {
        throw ConfigError(what + ": dim must be >= 2");
    }
    auto expected = static_cast<unsigned __int128>(count) * dim * sizeof(float);
    if (expected != raw.size()) {
        throw FormatError(
                what + ": size " + std::to_string(raw.size()) + " bytes != count " +
                std::to_string(count) + " x dim " + std::to_string(dim) + " x 4");
    }
    EmbeddingBlock block(dim, count);
    block.base_global_id = base_global_id;
    std::memcpy(block.data.data(), raw.data(), raw.size());
    for (std::size_t r = 0; r < block.rows(); ++r) {
        for (float x : block.row(r)) {
            if (!std::isfinite(x)) {
                throw FormatError(what + ": non-finite value in row " + std::to_string(r));
            }
        }
        if (!normalize(block.row(r))) {
            throw FormatError(what + ": zero vector in row " + std::to_string(r));
        }
    }
    return block;
}

EmbeddingBlock import_embeddings(
        const std::filesystem::path& raw,
        std::uint32_t dim,
        std::uint64_t count,
        GlobalId base_global_id,
        std::string lang,
        std::uint32_t block) {
    if (!std::filesystem::exists(raw)) {
        throw Error("missing raw embedding file " + raw.string());
    }
    auto result = import_embeddings_bytes(read_file(raw), dim, count, base_global_id, raw.string());
    result.lang = std::move(lang);
    result.block = block;
    return result;
}

} // namespace bitext
