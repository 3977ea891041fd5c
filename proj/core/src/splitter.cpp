#include <bitext/corpus.hpp>
#include <bitext/utf8.hpp>

#include <algorithm>

namespace bitext::corpus {

namespace {

SplitRules punctuation_rules(std::initializer_list<const char*> abbrevs) {
    SplitRules r;
    r.style = SplitStyle::Punctuation;
    for (const char* a : abbrevs) {
        r.abbreviations.emplace(a);
    }
    return r;
}

bool is_terminal(char32_t cp) {
    return cp == '.' || cp == '!' || cp == '?' || cp == 0x2026 /* … */;
}

bool is_cjk_terminal(char32_t cp) {
    return cp == 0x3002    // 。
            || cp == 0xFF01 // ！
            || cp == 0xFF1F // ？
            || cp == 0xFF0E // ．
            || cp == '!' || cp == '?';
}

bool is_closing(char32_t cp) {
    switch (cp) {
        case '"':
        case '\'':
        case ')':
        case ']':
        case 0x00BB: // »
        case 0x2019: // ’
        case 0x201D: // ”
        case 0x300D: // 」
        case 0x300F: // 』
        case 0xFF09: // ）
        case 0x3011: // 】
            return true;
        default:
            return false;
    }
}

bool is_lowercase(char32_t cp) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 0xDF && cp <= 0xFF && cp != 0xF7) ||
            (cp >= 0x0430 && cp <= 0x045F) || (cp >= 0x03AC && cp <= 0x03CE);
}

struct Cp {
    char32_t cp;
    std::size_t begin;
    std::size_t end;
};

std::vector<Cp> decode_all(std::string_view s) {
    std::vector<Cp> out;
    out.reserve(s.size());
    for (std::size_t pos = 0; pos < s.size();) {
        auto d = utf8::decode(s, pos);
        out.push_back({d.cp, pos, pos + d.length});
        pos += d.length;
    }
    return out;
}

std::string ascii_lower(std::string_view s) {
    std::string r(s);
    std::transform(r.begin(), r.end(), r.begin(), [](char c) {
        return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    });
    return r;
}

void emit(std::string_view text, std::vector<std::string>& out) {
    auto cps = decode_all(text);
    std::size_t first = 0;
    while (first < cps.size() && utf8::is_space(cps[first].cp)) {
        ++first;
    }
    std::size_t last = cps.size();
    while (last > first && utf8::is_space(cps[last - 1].cp)) {
        --last;
    }
    if (first == last) {
        return;
    }
    std::string s(text.substr(cps[first].begin, cps[last - 1].end - cps[first].begin));
    std::replace(s.begin(), s.end(), '\t', ' ');
    out.push_back(std::move(s));
}

// True when the word ending right before the period at `dot` is an
// abbreviation or a single-letter initial.
bool ends_with_abbreviation(
        std::string_view line,
        const std::vector<Cp>& cps,
        std::size_t dot,
        const SplitRules& rules) {
    std::size_t start = dot;
    while (start > 0 && !utf8::is_space(cps[start - 1].cp) && cps[start - 1].cp != '(' &&
           cps[start - 1].cp != '"') {
        --start;
    }
    if (start == dot) {
        return false;
    }
    std::size_t letters = dot - start;
    auto word = line.substr(cps[start].begin, cps[dot].begin - cps[start].begin);
    if (letters == 1) {
        char32_t c = cps[start].cp;
        return !(c >= '0' && c <= '9');
    }
    return rules.abbreviations.contains(ascii_lower(word));
}

void split_punctuation(
        std::string_view line,
        const SplitRules& rules,
        std::vector<std::string>& out) {
    auto cps = decode_all(line);
    std::size_t seg_begin = 0; // byte offset
    std::size_t i = 0;
    while (i < cps.size()) {
        if (!is_terminal(cps[i].cp)) {
            ++i;
            continue;
        }
        std::size_t term = i;
        std::size_t j = i;
        while (j < cps.size() && is_terminal(cps[j].cp)) {
            ++j;
        }
        while (j < cps.size() && is_closing(cps[j].cp)) {
            ++j;
        }
        if (j == cps.size()) {
            break;
        }
        if (!utf8::is_space(cps[j].cp)) {
            i = j;
            continue;
        }
        std::size_t next = j;
        while (next < cps.size() && utf8::is_space(cps[next].cp)) {
            ++next;
        }
        if (next == cps.size()) {
            break;
        }
        bool boundary = !is_lowercase(cps[next].cp);
        if (boundary && cps[term].cp == '.' && j == term + 1 &&
            ends_with_abbreviation(line, cps, term, rules)) {
            boundary = false;
        }
        if (boundary) {
            emit(line.substr(seg_begin, cps[j].begin - seg_begin), out);
            seg_begin = cps[next].begin;
        }
        i = next;
    }
    emit(line.substr(seg_begin), out);
}

void split_cjk(std::string_view line, std::vector<std::string>& out) {
    auto cps = decode_all(line);
    std::size_t seg_begin = 0;
    std::size_t i = 0;
    while (i < cps.size()) {
        if (!is_cjk_terminal(cps[i].cp)) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < cps.size() && is_cjk_terminal(cps[j].cp)) {
            ++j;
        }
        while (j < cps.size() && is_closing(cps[j].cp)) {
            ++j;
        }
        std::size_t end = j < cps.size() ? cps[j].begin : line.size();
        emit(line.substr(seg_begin, end - seg_begin), out);
        seg_begin = end;
        i = j;
    }
    if (seg_begin < line.size()) {
        emit(line.substr(seg_begin), out);
    }
}

} // namespace

RuleRegistry RuleRegistry::builtin() {
    RuleRegistry reg;
    reg.add("en",
            punctuation_rules(
                    {"mr",   "mrs",  "ms",   "dr",  "prof", "sr",  "jr",  "st",
                     "vs",   "etc",  "e.g",  "i.e", "inc",  "ltd", "co",  "corp",
                     "no",   "fig",  "approx", "dept", "est", "jan", "feb", "mar",
                     "apr",  "jun",  "jul",  "aug", "sep",  "sept", "oct", "nov",
                     "dec",  "mt",   "u.s",  "a.m", "p.m",  "gen", "gov", "rev"}));
    reg.add("de",
            punctuation_rules(
                    {"z.b", "bzw", "usw", "nr", "dr", "prof", "ca", "vgl", "d.h",
                     "str", "hr", "fr", "evtl", "ggf", "inkl", "jh", "u.a", "s"}));
    reg.add("fr",
            punctuation_rules(
                    {"m", "mme", "mlle", "dr", "etc", "p.ex", "cf", "av", "bd", "st",
                     "ste", "env", "vol", "chap"}));
    reg.add("es",
            punctuation_rules(
                    {"sr", "sra", "srta", "dr", "dra", "etc", "ud", "uds", "pág",
                     "p.ej", "av", "ej", "núm", "vol"}));
    reg.add("it",
            punctuation_rules({"sig", "sig.ra", "dott", "ecc", "pag", "prof", "avv", "ing"}));
    reg.add("pt",
            punctuation_rules({"sr", "sra", "dr", "dra", "etc", "p.ex", "av", "pág", "prof"}));
    reg.add("nl",
            punctuation_rules({"dhr", "mevr", "dr", "bijv", "enz", "nr", "o.a", "prof", "blz"}));
    reg.add("ru",
            punctuation_rules({"г", "гг", "т.е", "т.д", "т.п", "им", "ул", "др", "стр", "см"}));
    for (const char* cjk : {"ja", "zh", "yue", "wuu"}) {
        SplitRules r;
        r.style = SplitStyle::Cjk;
        reg.add(cjk, r);
    }
    reg.add_fallback("gl", "es");
    reg.add_fallback("ca", "es");
    reg.add_fallback("ast", "es");
    reg.add_fallback("oc", "fr");
    reg.add_fallback("lb", "de");
    reg.add_fallback("gsw", "de");
    reg.add_fallback("af", "nl");
    reg.add_fallback("uk", "ru");
    reg.add_fallback("be", "ru");
    return reg;
}

void RuleRegistry::add(std::string lang, SplitRules rules) {
    rules_[std::move(lang)] = std::move(rules);
}

void RuleRegistry::add_fallback(std::string lang, std::string similar) {
    fallbacks_[std::move(lang)] = std::move(similar);
}

std::string RuleRegistry::resolved_language(std::string_view lang) const {
    if (rules_.contains(lang)) {
        return std::string(lang);
    }
    if (auto it = fallbacks_.find(lang); it != fallbacks_.end() && rules_.contains(it->second)) {
        return it->second;
    }
    if (default_to_english_ && rules_.contains("en")) {
        return "en";
    }
    throw ConfigError(
            "no sentence splitting rules for language '" + std::string(lang) +
            "' and no fallback configured");
}

const SplitRules& RuleRegistry::resolve(std::string_view lang) const {
    return rules_.find(resolved_language(lang))->second;
}

std::vector<std::string> split_sentences(
        std::string_view paragraph,
        std::string_view lang,
        const RuleRegistry& registry) {
    const auto& rules = registry.resolve(lang);
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= paragraph.size()) {
        auto nl = paragraph.find_first_of("\r\n", start);
        auto line = paragraph.substr(
                start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        if (rules.style == SplitStyle::Cjk) {
            split_cjk(line, out);
        } else {
            split_punctuation(line, rules, out);
        }
        if (nl == std::string_view::npos) {
            break;
        }
        start = nl + 1;
    }
    return out;
}

} // namespace bitext::corpus
