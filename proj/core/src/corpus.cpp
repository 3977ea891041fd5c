#include <bitext/corpus.hpp>
#include <bitext/utf8.hpp>

#include <json.hpp>

#include <algorithm>
#include <unordered_set>

namespace bitext::corpus {

using json = nlohmann::json;

std::uint64_t BlockManifest::total_count() const {
    std::uint64_t n = 0;
    for (const auto& b : blocks) {
        n += b.count;
    }
    return n;
}

std::pair<std::uint32_t, std::uint64_t> BlockManifest::locate(GlobalId id) const {
    if (block_capacity == 0) {
        throw ConfigError("manifest for '" + lang + "' has zero block capacity");
    }
    auto block = static_cast<std::uint32_t>(id / block_capacity);
    std::uint64_t row = id % block_capacity;
    auto it = std::find_if(blocks.begin(), blocks.end(), [&](const BlockEntry& b) {
        return b.index == block;
    });
    if (it == blocks.end() || row >= it->count) {
        throw ConfigError(
                "dangling id " + std::to_string(id) + " for lang '" + lang + "'");
    }
    return {block, row};
}

std::string BlockManifest::to_json() const {
    json j;
    j["lang"] = lang;
    j["block_capacity"] = block_capacity;
    j["blocks"] = json::array();
    for (const auto& b : blocks) {
        j["blocks"].push_back({{"index", b.index}, {"count", b.count}, {"sha256", b.sha256}});
    }
    return j.dump(2) + "\n";
}

BlockManifest BlockManifest::from_json(std::string_view text) {
    BlockManifest m;
    try {
        auto j = json::parse(text);
        m.lang = j.at("lang").get<std::string>();
        m.block_capacity = j.at("block_capacity").get<std::uint64_t>();
        for (const auto& b : j.at("blocks")) {
            m.blocks.push_back(
                    {b.at("index").get<std::uint32_t>(),
                     b.at("count").get<std::uint64_t>(),
                     b.at("sha256").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    return m;
}

std::string manifest_file_name(std::string_view lang) {
    return std::string(lang) + ".manifest.json";
}

BlockManifest load_manifest(const std::filesystem::path& dir, std::string_view lang) {
    auto path = dir / manifest_file_name(lang);
    if (!std::filesystem::exists(path)) {
        throw Error("missing manifest " + path.string());
    }
    return BlockManifest::from_json(read_file(path));
}

void save_manifest(const std::filesystem::path& dir, const BlockManifest& manifest) {
    write_file_atomic(dir / manifest_file_name(manifest.lang), manifest.to_json());
}

std::string encode_lines(const std::vector<std::string>& lines) {
    std::size_t total = 0;
    for (const auto& l : lines) {
        total += l.size() + 1;
    }
    std::string out;
    out.reserve(total);
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

std::vector<std::string> decode_lines(std::string_view data) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < data.size()) {
        auto nl = data.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(data.substr(start));
            break;
        }
        lines.emplace_back(data.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::filesystem::path BlockStore::path(std::string_view lang, std::uint32_t block) const {
    return dir_ / block_file_name(lang, block, "txt");
}

bool BlockStore::exists(std::string_view lang, std::uint32_t block) const {
    return std::filesystem::exists(path(lang, block));
}

std::vector<std::string> BlockStore::read(std::string_view lang, std::uint32_t block) const {
    auto p = path(lang, block);
    if (!std::filesystem::exists(p)) {
        throw Error(
                "missing block " + std::string(lang) + " #" + std::to_string(block) +
                " (" + p.string() + ")");
    }
    return decode_lines(read_file(p));
}

std::string BlockStore::write(
        std::string_view lang,
        std::uint32_t block,
        const std::vector<std::string>& lines) const {
    auto data = encode_lines(lines);
    write_file_atomic(path(lang, block), data);
    return sha256_hex(data);
}

std::vector<std::string> filter_length(
        std::vector<std::string> sentences,
        std::size_t max_chars) {
    std::erase_if(sentences, [&](const std::string& s) {
        return utf8::length(s) > max_chars;
    });
    return sentences;
}

std::vector<SentenceRecord> lid_filter(
        const std::vector<std::string>& sentences,
        std::string_view expected,
        const LanguagePredictor& predictor,
        double min_conf,
        std::uint32_t block,
        std::uint64_t block_capacity) {
    auto predictions = predictor.predict(sentences, expected);
    if (predictions.size() != sentences.size()) {
        throw FormatError(
                "lid: " + std::to_string(predictions.size()) + " predictions for " +
                std::to_string(sentences.size()) + " sentences");
    }
    std::vector<SentenceRecord> kept;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        const auto& p = predictions[i];
        if (p.label == expected && p.confidence >= min_conf) {
            SentenceRecord r;
            r.global_id = block * block_capacity + kept.size();
            r.text = sentences[i];
            r.lang = std::string(expected);
            r.block = block;
            kept.push_back(std::move(r));
        }
    }
    return kept;
}

DedupResult dedup_block(const std::vector<std::string>& block) {
    DedupResult r;
    std::unordered_set<std::string_view> seen;
    seen.reserve(block.size());
    for (const auto& s : block) {
        if (seen.insert(s).second) {
            r.sentences.push_back(s);
        }
    }
    r.duplicate_count = block.size() - r.sentences.size();
    return r;
}

BlockManifest dedup_global(
        const BlockManifest& manifest,
        const BlockStore& in,
        const BlockStore& out) {
    if (manifest.block_capacity == 0) {
        throw ConfigError("block capacity must be positive");
    }
    if (std::filesystem::exists(in.dir()) && std::filesystem::exists(out.dir()) &&
        std::filesystem::equivalent(in.dir(), out.dir())) {
        throw ConfigError("dedup_global: input and output directories must differ");
    }
    auto ordered = manifest.blocks;
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        return a.index < b.index;
    });
    for (const auto& b : ordered) {
        if (!in.exists(manifest.lang, b.index)) {
            throw Error(
                    "missing block " + manifest.lang + " #" + std::to_string(b.index) +
                    " (" + in.path(manifest.lang, b.index).string() + ")");
        }
    }

    BlockManifest result;
    result.lang = manifest.lang;
    result.block_capacity = manifest.block_capacity;

    // Hashes of survivors; the texts themselves live in `pending` or were
    // already flushed, so keep owned copies.
    std::unordered_set<std::string> seen;
    std::vector<std::string> pending;
    std::uint32_t next_block = 0;
    auto flush = [&] {
        auto digest = out.write(result.lang, next_block, pending);
        result.blocks.push_back({next_block, pending.size(), digest});
        ++next_block;
        pending.clear();
    };
    for (const auto& b : ordered) {
        for (auto& s : in.read(manifest.lang, b.index)) {
            if (seen.contains(s)) {
                continue;
            }
            seen.insert(s);
            pending.push_back(std::move(s));
            if (pending.size() == result.block_capacity) {
                flush();
            }
        }
    }
    if (!pending.empty()) {
        flush();
    }
    return result;
}

BlockManifest preprocess(
        const std::vector<std::string>& paragraphs,
        const RuleRegistry& rules,
        const PreprocessOptions& options,
        const BlockStore& scratch,
        const BlockStore& out,
        PreprocessStats* stats) {
    if (options.block_capacity == 0) {
        throw ConfigError("block capacity must be positive");
    }
    rules.resolve(options.lang);

    PreprocessStats local;
    local.paragraphs = paragraphs.size();

    std::vector<std::vector<std::string>> split(paragraphs.size());
    parallel_for(paragraphs.size(), options.workers, [&](std::size_t i) {
        split[i] = split_sentences(paragraphs[i], options.lang, rules);
    });
    std::vector<std::string> sentences;
    for (auto& s : split) {
        local.sentences += s.size();
        for (auto& x : s) {
            sentences.push_back(std::move(x));
        }
    }
    split.clear();

    auto before = sentences.size();
    sentences = filter_length(std::move(sentences), options.max_chars);
    local.too_long = before - sentences.size();

    if (options.quality_hook) {
        before = sentences.size();
        std::erase_if(sentences, [&](const std::string& s) {
            return !options.quality_hook(s);
        });
        local.quality_rejected = before - sentences.size();
    }

    if (options.predictor) {
        before = sentences.size();
        auto records = lid_filter(
                sentences, options.lang, *options.predictor, options.min_conf);
        sentences.clear();
        for (auto& r : records) {
            sentences.push_back(std::move(r.text));
        }
        local.lid_rejected = before - sentences.size();
    }

    BlockManifest partial;
    partial.lang = options.lang;
    partial.block_capacity = options.block_capacity;
    std::size_t nblocks = (sentences.size() + options.block_capacity - 1) / options.block_capacity;
    partial.blocks.resize(nblocks);
    std::vector<std::size_t> dups(nblocks, 0);
    parallel_for(nblocks, options.workers, [&](std::size_t b) {
        auto first = sentences.begin() + static_cast<std::ptrdiff_t>(b * options.block_capacity);
        auto last = sentences.begin() +
                static_cast<std::ptrdiff_t>(std::min<std::size_t>(
                        sentences.size(), (b + 1) * options.block_capacity));
        auto d = dedup_block(std::vector<std::string>(first, last));
        dups[b] = d.duplicate_count;
        auto idx = static_cast<std::uint32_t>(b);
        auto digest = scratch.write(options.lang, idx, d.sentences);
        partial.blocks[b] = {idx, d.sentences.size(), digest};
    });
    for (auto d : dups) {
        local.block_duplicates += d;
    }

    auto result = dedup_global(partial, scratch, out);
    local.global_duplicates = partial.total_count() - result.total_count();
    save_manifest(out.dir(), result);
    if (stats) {
        *stats = local;
    }
    return result;
}

} // namespace bitext::corpus
