#include <bitext/corpus.hpp>
#include <bitext/utf8.hpp>

#include <array>
#include <charconv>
#include <cmath>

namespace bitext::corpus {

Script classify_codepoint(char32_t cp) {
    if ((cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z') ||
        (cp >= 0xC0 && cp <= 0x24F && cp != 0xD7 && cp != 0xF7) ||
        (cp >= 0x1E00 && cp <= 0x1EFF)) {
        return Script::Latin;
    }
    if (cp >= 0x0400 && cp <= 0x052F) {
        return Script::Cyrillic;
    }
    if (cp >= 0x0370 && cp <= 0x03FF) {
        return Script::Greek;
    }
    if ((cp >= 0x0600 && cp <= 0x06FF) || (cp >= 0x0750 && cp <= 0x077F)) {
        return Script::Arabic;
    }
    if (cp >= 0x0590 && cp <= 0x05FF) {
        return Script::Hebrew;
    }
    if (cp >= 0x0900 && cp <= 0x097F) {
        return Script::Devanagari;
    }
    if (cp >= 0x0E00 && cp <= 0x0E7F) {
        return Script::Thai;
    }
    if ((cp >= 0xAC00 && cp <= 0xD7AF) || (cp >= 0x1100 && cp <= 0x11FF)) {
        return Script::Hangul;
    }
    if ((cp >= 0x3040 && cp <= 0x30FF) || (cp >= 0x31F0 && cp <= 0x31FF)) {
        return Script::Kana;
    }
    if ((cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
        (cp >= 0xF900 && cp <= 0xFAFF)) {
        return Script::Han;
    }
    if (cp >= 0x10A0 && cp <= 0x10FF) {
        return Script::Georgian;
    }
    if (cp >= 0x0530 && cp <= 0x058F) {
        return Script::Armenian;
    }
    return Script::Unknown;
}

namespace {

struct ScriptGroup {
    Script script;
    const char* representative;
    std::initializer_list<const char*> members;
};

const std::vector<ScriptGroup>& groups() {
    static const std::vector<ScriptGroup> g = {
            {Script::Latin,
             "en",
             {"en", "de", "fr", "es", "it", "pt", "nl", "ca", "gl", "ast", "oc", "af",
              "lb", "gsw", "pl", "cs", "sk", "sl", "hr", "bs", "ro", "hu", "fi", "et",
              "lv", "lt", "sv", "da", "no", "nb", "nn", "is", "ga", "cy", "eu", "tr",
              "az", "id", "ms", "tl", "vi", "sq", "mt", "sw", "eo", "la"}},
            {Script::Cyrillic, "ru", {"ru", "uk", "be", "bg", "mk", "sr", "kk", "ky", "tg", "mn"}},
            {Script::Greek, "el", {"el"}},
            {Script::Arabic, "ar", {"ar", "fa", "ur", "ps"}},
            {Script::Hebrew, "he", {"he", "yi"}},
            {Script::Devanagari, "hi", {"hi", "mr", "ne"}},
            {Script::Thai, "th", {"th"}},
            {Script::Hangul, "ko", {"ko"}},
            {Script::Kana, "ja", {"ja"}},
            {Script::Han, "zh", {"zh", "yue", "wuu"}},
            {Script::Georgian, "ka", {"ka"}},
            {Script::Armenian, "hy", {"hy"}},
    };
    return g;
}

const ScriptGroup* group_of(Script s) {
    for (const auto& g : groups()) {
        if (g.script == s) {
            return &g;
        }
    }
    return nullptr;
}

bool in_group(const ScriptGroup& g, std::string_view lang) {
    for (const char* m : g.members) {
        if (lang == m) {
            return true;
        }
    }
    return false;
}

LangIdPrediction predict_one(std::string_view text, std::string_view expected) {
    constexpr std::size_t kScripts = static_cast<std::size_t>(Script::Armenian) + 1;
    std::array<std::size_t, kScripts> counts{};
    std::size_t letters = 0;
    for (std::size_t pos = 0; pos < text.size();) {
        auto d = utf8::decode(text, pos);
        pos += d.length;
        auto s = classify_codepoint(d.cp);
        if (s != Script::Unknown) {
            ++counts[static_cast<std::size_t>(s)];
            ++letters;
        }
    }
    if (letters == 0) {
        return {"und", 0.0};
    }
    // Japanese mixes kana with Han; any kana claims the Han letters too.
    auto kana = static_cast<std::size_t>(Script::Kana);
    auto han = static_cast<std::size_t>(Script::Han);
    if (counts[kana] > 0) {
        counts[kana] += counts[han];
        counts[han] = 0;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < kScripts; ++i) {
        if (counts[i] > counts[best]) {
            best = i;
        }
    }
    auto script = static_cast<Script>(best);
    double conf = static_cast<double>(counts[best]) / static_cast<double>(letters);
    const auto* g = group_of(script);
    if (!g) {
        return {"und", 0.0};
    }
    // Kanji-only Japanese text is indistinguishable from Chinese by script.
    if (script == Script::Han && expected == "ja") {
        return {"ja", conf};
    }
    if (in_group(*g, expected)) {
        return {std::string(expected), conf};
    }
    return {g->representative, conf};
}

} // namespace

Script script_of_language(std::string_view lang) {
    for (const auto& g : groups()) {
        if (in_group(g, lang)) {
            return g.script;
        }
    }
    return Script::Unknown;
}

std::vector<LangIdPrediction> ScriptPredictor::predict(
        const std::vector<std::string>& sentences,
        std::string_view expected) const {
    std::vector<LangIdPrediction> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) {
        out.push_back(predict_one(s, expected));
    }
    return out;
}

std::vector<LangIdPrediction> FilePredictor::parse(std::string_view tsv) {
    std::vector<LangIdPrediction> rows;
    std::size_t line_no = 0;
    for (const auto& line : decode_lines(tsv)) {
        ++line_no;
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw FormatError("lid predictions line " + std::to_string(line_no) + ": missing tab");
        }
        LangIdPrediction p;
        p.label = line.substr(0, tab);
        auto value = std::string_view(line).substr(tab + 1);
        auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), p.confidence);
        if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(p.confidence) ||
            p.confidence < 0.0 || p.confidence > 1.0) {
            throw FormatError(
                    "lid predictions line " + std::to_string(line_no) +
                    ": confidence must be a number in [0,1]");
        }
        rows.push_back(std::move(p));
    }
    return rows;
}

FilePredictor FilePredictor::load(const std::filesystem::path& path) {
    return FilePredictor(parse(read_file(path)));
}

std::vector<LangIdPrediction> FilePredictor::predict(
        const std::vector<std::string>& sentences,
        std::string_view) const {
    if (sentences.size() != rows_.size()) {
        throw FormatError(
                "lid prediction file has " + std::to_string(rows_.size()) + " rows for " +
                std::to_string(sentences.size()) + " sentences");
    }
    return rows_;
}

} // namespace bitext::corpus
