#pragma once

#include <bitext/common.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bitext::corpus {

inline constexpr std::size_t kDefaultMaxChars = 500;
inline constexpr std::uint64_t kDefaultBlockCapacity = 50'000'000;
inline constexpr double kDefaultMinConfidence = 0.5;

struct SentenceRecord {
    GlobalId global_id = 0;
    std::string text;
    std::string lang;
    std::uint32_t block = 0;
};

struct BlockEntry {
    std::uint32_t index = 0;
    std::uint64_t count = 0;
    std::string sha256;

    bool operator==(const BlockEntry&) const = default;
};

/// Sidecar describing the sentence blocks of one language. Sentence
/// `global_id` is `index * block_capacity + row`.
struct BlockManifest {
    std::string lang;
    std::uint64_t block_capacity = kDefaultBlockCapacity;
    std::vector<BlockEntry> blocks;

    std::uint64_t total_count() const;
    std::size_t block_count() const {
        return blocks.size();
    }
    /// Throws ConfigError when `id` does not address an existing row.
    std::pair<std::uint32_t, std::uint64_t> locate(GlobalId id) const;

    std::string to_json() const;
    static BlockManifest from_json(std::string_view text);

    bool operator==(const BlockManifest&) const = default;
};

std::string manifest_file_name(std::string_view lang);
BlockManifest load_manifest(const std::filesystem::path& dir, std::string_view lang);
void save_manifest(const std::filesystem::path& dir, const BlockManifest& manifest);

/// Sentence block files `{lang}.{block:05}.txt` in one directory.
class BlockStore {
   public:
    explicit BlockStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

    const std::filesystem::path& dir() const {
        return dir_;
    }
    std::filesystem::path path(std::string_view lang, std::uint32_t block) const;
    bool exists(std::string_view lang, std::uint32_t block) const;

    /// Throws Error naming the block when the file is missing.
    std::vector<std::string> read(std::string_view lang, std::uint32_t block) const;
    /// Writes the block and returns its sha256.
    std::string write(
            std::string_view lang,
            std::uint32_t block,
            const std::vector<std::string>& lines) const;

   private:
    std::filesystem::path dir_;
};

std::string encode_lines(const std::vector<std::string>& lines);
std::vector<std::string> decode_lines(std::string_view data);

// ---------------------------------------------------------------------------
// Sentence splitting

enum class SplitStyle {
    Punctuation, // terminal . ! ? followed by space and a plausible start
    Cjk,         // terminal-punctuation pattern, no whitespace requirement
};

struct SplitRules {
    SplitStyle style = SplitStyle::Punctuation;
    std::set<std::string, std::less<>> abbreviations; // without the dot
};

/// Per-language splitting rules with a fallback chain
/// lang -> similar language -> English.
class RuleRegistry {
   public:
    /// Rules for en, de, fr, es, it, pt, nl, ru and the CJK set, plus
    /// similar-language fallbacks (gl->es, ca->es, ...).
    static RuleRegistry builtin();

    void add(std::string lang, SplitRules rules);
    void add_fallback(std::string lang, std::string similar);
    void set_default_to_english(bool enabled) {
        default_to_english_ = enabled;
    }

    /// Resolves the rules for `lang`. Throws ConfigError naming the
    /// language when no rule set is reachable.
    const SplitRules& resolve(std::string_view lang) const;
    /// The language whose rules `resolve(lang)` returns.
    std::string resolved_language(std::string_view lang) const;

   private:
    std::map<std::string, SplitRules, std::less<>> rules_;
    std::map<std::string, std::string, std::less<>> fallbacks_;
    bool default_to_english_ = true;
};

std::vector<std::string> split_sentences(
        std::string_view paragraph,
        std::string_view lang,
        const RuleRegistry& rules);

std::vector<std::string> filter_length(
        std::vector<std::string> sentences,
        std::size_t max_chars = kDefaultMaxChars);

// ---------------------------------------------------------------------------
// Language identification

struct LangIdPrediction {
    std::string label;
    double confidence = 0.0;
};

class LanguagePredictor {
   public:
    virtual ~LanguagePredictor() = default;
    /// One prediction per sentence. `expected` is a hint the predictor may
    /// use to pick a label among languages sharing a script.
    virtual std::vector<LangIdPrediction> predict(
            const std::vector<std::string>& sentences,
            std::string_view expected) const = 0;
};

enum class Script {
    Unknown,
    Latin,
    Cyrillic,
    Greek,
    Arabic,
    Hebrew,
    Devanagari,
    Thai,
    Hangul,
    Kana,
    Han,
    Georgian,
    Armenian,
};

Script classify_codepoint(char32_t cp);
/// Script of a language code, Unknown for unlisted codes.
Script script_of_language(std::string_view lang);

/// Deterministic Unicode-script heuristic. The dominant script among the
/// letters of a sentence selects a language group; the label is `expected`
/// when it belongs to that group and the group's representative otherwise.
/// Confidence is the dominant script's share of letters.
class ScriptPredictor final : public LanguagePredictor {
   public:
    std::vector<LangIdPrediction> predict(
            const std::vector<std::string>& sentences,
            std::string_view expected) const override;
};

/// Predictions loaded from a `label<TAB>confidence` TSV, one row per
/// sentence in block order.
class FilePredictor final : public LanguagePredictor {
   public:
    explicit FilePredictor(std::vector<LangIdPrediction> rows)
            : rows_(std::move(rows)) {}
    static FilePredictor load(const std::filesystem::path& path);
    static std::vector<LangIdPrediction> parse(std::string_view tsv);

    /// Throws FormatError when the row count differs from the sentence count.
    std::vector<LangIdPrediction> predict(
            const std::vector<std::string>& sentences,
            std::string_view expected) const override;

   private:
    std::vector<LangIdPrediction> rows_;
};

/// Keeps sentences labelled `expected` with confidence >= min_conf.
/// Records carry `block` and their row within the kept list.
std::vector<SentenceRecord> lid_filter(
        const std::vector<std::string>& sentences,
        std::string_view expected,
        const LanguagePredictor& predictor,
        double min_conf = kDefaultMinConfidence,
        std::uint32_t block = 0,
        std::uint64_t block_capacity = kDefaultBlockCapacity);

// ---------------------------------------------------------------------------
// Deduplication

struct DedupResult {
    std::vector<std::string> sentences;
    std::size_t duplicate_count = 0;
};

/// Exact byte-equality dedup; first occurrence wins.
DedupResult dedup_block(const std::vector<std::string>& block);

/// Removes cross-block duplicates (the lowest (block, row) copy survives),
/// repacks survivors into full blocks of `manifest.block_capacity` so that
/// global ids are contiguous, writes them to `out` and returns the new
/// manifest. `in` and `out` may not share a directory.
BlockManifest dedup_global(
        const BlockManifest& manifest,
        const BlockStore& in,
        const BlockStore& out);

// ---------------------------------------------------------------------------
// Text task driver

struct PreprocessOptions {
    std::string lang;
    std::uint64_t block_capacity = kDefaultBlockCapacity;
    std::size_t max_chars = kDefaultMaxChars;
    double min_conf = kDefaultMinConfidence;
    /// nullptr disables LID.
    const LanguagePredictor* predictor = nullptr;
    /// Upstream quality filter (e.g. LM perplexity); return false to drop.
    std::function<bool(std::string_view)> quality_hook;
    unsigned workers = 1;
};

struct PreprocessStats {
    std::size_t paragraphs = 0;
    std::size_t sentences = 0;
    std::size_t too_long = 0;
    std::size_t lid_rejected = 0;
    std::size_t quality_rejected = 0;
    std::size_t block_duplicates = 0;
    std::size_t global_duplicates = 0;
};

/// Paragraphs in (one per element), deduplicated blocks and manifest out.
/// `scratch` receives the block-deduplicated intermediate blocks.
BlockManifest preprocess(
        const std::vector<std::string>& paragraphs,
        const RuleRegistry& rules,
        const PreprocessOptions& options,
        const BlockStore& scratch,
        const BlockStore& out,
        PreprocessStats* stats = nullptr);

} // namespace bitext::corpus
