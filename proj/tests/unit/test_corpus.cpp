#include <bitext/corpus.hpp>
#include <bitext/utf8.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <unordered_set>

using namespace bitext;
using namespace bitext::corpus;
using testsupport::TempDir;

namespace {

std::string repeat_cp(const std::string& cp, std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
        s += cp;
    }
    return s;
}

std::size_t oracle_scalar_count(const std::string& s) {
    // Counts bytes that do not start with 10xxxxxx: one per scalar in valid UTF-8.
    std::size_t n = 0;
    for (unsigned char c : s) {
        n += (c & 0xC0) != 0x80;
    }
    return n;
}

} // namespace

// ---- split_sentences -------------------------------------------------------

TEST(Split, TwoTerminalPeriods) {
    auto rules = RuleRegistry::builtin();
    EXPECT_EQ(split_sentences("Hello. World.", "en", rules), (std::vector<std::string>{"Hello.", "World."}));
}

TEST(Split, EmptyInput) {
    auto rules = RuleRegistry::builtin();
    EXPECT_TRUE(split_sentences("", "en", rules).empty());
    EXPECT_TRUE(split_sentences("", "ja", rules).empty());
    EXPECT_TRUE(split_sentences("   \n  ", "de", rules).empty());
}

TEST(Split, JapaneseAtIdeographicFullStop) {
    auto rules = RuleRegistry::builtin();
    // Three sentences joined without spaces; the rule splits after each 。
    std::string text = "今日は晴れです。明日は雨でしょう。週末は出かけます。";
    auto got = split_sentences(text, "ja", rules);
    EXPECT_EQ(got, (std::vector<std::string>{"今日は晴れです。", "明日は雨でしょう。", "週末は出かけます。"}));
}

TEST(Split, CjkClosersStayWithSentence) {
    auto rules = RuleRegistry::builtin();
    auto got = split_sentences("「行こう！」彼は言った。", "ja", rules);
    EXPECT_EQ(got, (std::vector<std::string>{"「行こう！」", "彼は言った。"}));
}

TEST(Split, AbbreviationsAndInitialsDoNotSplit) {
    auto rules = RuleRegistry::builtin();
    auto got = split_sentences("Dr. Smith met J. Doe. They talked.", "en", rules);
    EXPECT_EQ(got, (std::vector<std::string>{"Dr. Smith met J. Doe.", "They talked."}));
}

TEST(Split, LowercaseContinuationDoesNotSplit) {
    auto rules = RuleRegistry::builtin();
    auto got = split_sentences("It costs 3 p.m. tickets. ok then.", "en", rules);
    EXPECT_EQ(got.size(), 1u);
}

TEST(Split, NewlinesAreBoundariesAndNeverEmitted) {
    auto rules = RuleRegistry::builtin();
    auto got = split_sentences("first line\nsecond line\r\nthird", "en", rules);
    EXPECT_EQ(got, (std::vector<std::string>{"first line", "second line", "third"}));
}

TEST(Split, FallbackChain) {
    auto rules = RuleRegistry::builtin();
    EXPECT_EQ(rules.resolved_language("gl"), "es");
    EXPECT_EQ(rules.resolved_language("de"), "de");
    EXPECT_EQ(rules.resolved_language("sw"), "en");
    rules.set_default_to_english(false);
    try {
        rules.resolve("sw");
        FAIL() << "expected an error";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("sw"), std::string::npos);
    }
}

TEST(Split, CoversInputAndNoEmptySegments) {
    auto rules = RuleRegistry::builtin();
    std::mt19937 rng(7);
    const std::vector<std::string> pieces = {"Word", "tiny", ".", "!", "?", " ", "  ", "Mr.", "A.", "\"", ")", "ok", "X"};
    for (int trial = 0; trial < 500; ++trial) {
        std::string para;
        for (int i = 0; i < 30; ++i) {
            para += pieces[rng() % pieces.size()];
        }
        auto out = split_sentences(para, "en", rules);
        std::string joined, stripped;
        for (const auto& s : out) {
            ASSERT_FALSE(s.empty());
            ASSERT_EQ(s.find('\n'), std::string::npos);
            joined += s;
        }
        for (char c : para) {
            if (c != ' ') {
                stripped += c;
            }
        }
        std::string joined_stripped;
        for (char c : joined) {
            if (c != ' ') {
                joined_stripped += c;
            }
        }
        ASSERT_EQ(joined_stripped, stripped) << para;
    }
}

// ---- filter_length ---------------------------------------------------------

TEST(FilterLength, Boundaries) {
    std::string s500(500, 'x'), s501(501, 'x');
    EXPECT_EQ(filter_length({"ok", s501}, 500), (std::vector<std::string>{"ok"}));
    EXPECT_EQ(filter_length({s500}, 500), (std::vector<std::string>{s500}));
}

TEST(FilterLength, CountsScalarsNotBytes) {
    auto cyr = repeat_cp("ж", 500); // 1000 bytes
    EXPECT_EQ(filter_length({cyr}, 500).size(), 1u);
    EXPECT_EQ(filter_length({cyr + "ж"}, 500).size(), 0u);
}

TEST(FilterLength, RandomAgainstIndependentScan) {
    std::mt19937 rng(11);
    const std::vector<std::string> cps = {"a", "é", "ж", "中", "😀"};
    std::vector<std::string> in;
    for (int i = 0; i < 10000; ++i) {
        std::string s;
        auto len = rng() % 700;
        for (std::size_t j = 0; j < len; ++j) {
            s += cps[rng() % cps.size()];
        }
        in.push_back(std::move(s));
    }
    std::vector<std::string> want;
    for (const auto& s : in) {
        if (oracle_scalar_count(s) <= 500) {
            want.push_back(s);
        }
    }
    auto got = filter_length(in, 500);
    EXPECT_EQ(got, want);
    EXPECT_EQ(filter_length(got, 500), got); // idempotent
}

// ---- LID -------------------------------------------------------------------

TEST(Lid, BuiltinScripts) {
    ScriptPredictor p;
    EXPECT_EQ(lid_filter({"Привет"}, "ru", p).size(), 1u);
    EXPECT_EQ(lid_filter({"hello"}, "zh", p).size(), 0u);
    EXPECT_EQ(lid_filter({"Привет"}, "uk", p).size(), 1u); // labelled within the Cyrillic group
    EXPECT_EQ(lid_filter({"12345 !!"}, "en", p).size(), 0u);
    auto pred = p.predict({"hello", "日本語のテキスト"}, "ja");
    EXPECT_EQ(pred[0].label, "en");
    EXPECT_EQ(pred[1].label, "ja");
    for (const auto& x : pred) {
        EXPECT_GE(x.confidence, 0.0);
        EXPECT_LE(x.confidence, 1.0);
    }
}

TEST(Lid, ExternalPredictionFileJoin) {
    TempDir dir("lid");
    std::mt19937 rng(3);
    const std::vector<std::string> labels = {"en", "de", "fr"};
    std::vector<std::string> lines;
    std::string tsv;
    std::vector<std::string> want;
    for (int i = 0; i < 1000; ++i) {
        lines.push_back("line " + std::to_string(i));
        auto label = labels[rng() % labels.size()];
        double conf = (rng() % 101) / 100.0;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%s\t%.2f\n", label.c_str(), conf);
        tsv += buf;
    }
    write_file_atomic(dir / "pred.tsv", tsv);
    // Independent join: re-read the file row by row.
    {
        std::istringstream in(tsv);
        std::string label;
        double conf;
        for (int i = 0; in >> label >> conf; ++i) {
            if (label == "en" && conf >= 0.5) {
                want.push_back(lines[i]);
            }
        }
    }
    auto fp = FilePredictor::load(dir / "pred.tsv");
    auto kept = lid_filter(lines, "en", fp, 0.5);
    std::vector<std::string> got;
    for (const auto& r : kept) {
        got.push_back(r.text);
        EXPECT_EQ(r.lang, "en");
    }
    EXPECT_EQ(got, want);
}

TEST(Lid, PredictionCountMismatch) {
    FilePredictor fp({{"en", 1.0}});
    EXPECT_THROW(lid_filter({"a", "b"}, "en", fp), FormatError);
}

// ---- dedup -----------------------------------------------------------------

TEST(DedupBlock, Examples) {
    auto r = dedup_block({"a", "b", "a"});
    EXPECT_EQ(r.sentences, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(r.duplicate_count, 1u);
    auto e = dedup_block({});
    EXPECT_TRUE(e.sentences.empty());
    EXPECT_EQ(e.duplicate_count, 0u);
}

TEST(DedupBlock, ByteEqualityOnly) {
    // "é" precomposed vs decomposed: different bytes, both kept.
    auto r = dedup_block({"caf\xC3\xA9", "cafe\xCC\x81", "caf\xC3\xA9"});
    EXPECT_EQ(r.sentences.size(), 2u);
}

TEST(DedupBlock, PlantedDuplicatesAgainstHashSet) {
    std::mt19937_64 rng(5);
    std::vector<std::string> lines;
    for (int i = 0; i < 90000; ++i) {
        lines.push_back("s" + std::to_string(rng()));
    }
    for (int i = 0; i < 10000; ++i) {
        lines.push_back(lines[rng() % 90000]);
    }
    std::shuffle(lines.begin(), lines.end(), rng);
    std::unordered_set<std::string> oracle(lines.begin(), lines.end());
    auto r = dedup_block(lines);
    EXPECT_EQ(r.sentences.size(), oracle.size());
    EXPECT_EQ(r.duplicate_count, lines.size() - oracle.size());
    EXPECT_EQ(dedup_block(r.sentences).sentences, r.sentences); // idempotent
    // first-occurrence order
    std::unordered_set<std::string> seen;
    std::vector<std::string> order;
    for (const auto& l : lines) {
        if (seen.insert(l).second) {
            order.push_back(l);
        }
    }
    EXPECT_EQ(r.sentences, order);
}

namespace {

BlockManifest write_blocks(const BlockStore& store, const std::string& lang, std::uint64_t cap,
                           const std::vector<std::vector<std::string>>& blocks) {
    BlockManifest m;
    m.lang = lang;
    m.block_capacity = cap;
    for (std::uint32_t b = 0; b < blocks.size(); ++b) {
        m.blocks.push_back({b, blocks[b].size(), store.write(lang, b, blocks[b])});
    }
    return m;
}

std::vector<std::string> read_all_lines(const BlockStore& store, const BlockManifest& m) {
    std::vector<std::string> out;
    for (const auto& b : m.blocks) {
        auto lines = store.read(m.lang, b.index);
        out.insert(out.end(), lines.begin(), lines.end());
    }
    return out;
}

} // namespace

TEST(DedupGlobal, SharedSentenceSurvivesInLowerBlock) {
    TempDir dir("dg");
    BlockStore in(dir / "in"), out(dir / "out");
    std::filesystem::create_directories(in.dir());
    auto m = write_blocks(in, "en", 3, {{"a", "b", "c"}, {"d", "a"}});
    auto r = dedup_global(m, in, out);
    EXPECT_EQ(r.total_count(), 4u);
    EXPECT_EQ(read_all_lines(out, r), (std::vector<std::string>{"a", "b", "c", "d"}));
}

TEST(DedupGlobal, DisjointBlocksUnchanged) {
    TempDir dir("dg");
    BlockStore in(dir / "in"), out(dir / "out");
    std::filesystem::create_directories(in.dir());
    auto m = write_blocks(in, "en", 2, {{"a", "b"}, {"c", "d"}});
    auto r = dedup_global(m, in, out);
    EXPECT_EQ(r.total_count(), 4u);
    EXPECT_EQ(r.blocks.size(), 2u);
    EXPECT_EQ(r.blocks[0].count, 2u);
}

TEST(DedupGlobal, MissingBlockNamed) {
    TempDir dir("dg");
    BlockStore in(dir / "in"), out(dir / "out");
    std::filesystem::create_directories(in.dir());
    auto m = write_blocks(in, "en", 2, {{"a", "b"}, {"c"}});
    std::filesystem::remove(in.path("en", 1));
    try {
        dedup_global(m, in, out);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("en.00001.txt"), std::string::npos) << e.what();
    }
}

TEST(DedupGlobal, EightBlocksAgainstSinglePassOracle) {
    TempDir dir("dg");
    BlockStore in(dir / "in"), out(dir / "out"), again(dir / "again");
    std::filesystem::create_directories(in.dir());
    std::mt19937_64 rng(9);
    std::vector<std::vector<std::string>> blocks(8);
    std::vector<std::string> all;
    for (auto& b : blocks) {
        std::unordered_set<std::string> local;
        while (b.size() < 10000) {
            std::string s = (!all.empty() && rng() % 20 == 0) ? all[rng() % all.size()] : "s" + std::to_string(rng());
            if (local.insert(s).second) {
                b.push_back(s);
                all.push_back(s);
            }
        }
    }
    std::unordered_set<std::string> seen;
    std::vector<std::string> oracle;
    for (const auto& s : all) {
        if (seen.insert(s).second) {
            oracle.push_back(s);
        }
    }
    auto m = write_blocks(in, "de", 10000, blocks);
    auto r = dedup_global(m, in, out);
    EXPECT_EQ(r.total_count(), oracle.size());
    EXPECT_EQ(read_all_lines(out, r), oracle);
    // contiguous ids: every block but the last is full
    for (std::size_t i = 0; i + 1 < r.blocks.size(); ++i) {
        EXPECT_EQ(r.blocks[i].count, r.block_capacity);
    }
    // idempotent
    auto r2 = dedup_global(r, out, again);
    EXPECT_EQ(r2, r);
}

TEST(DedupGlobal, SameDirectoryRejected) {
    TempDir dir("dg");
    BlockStore in(dir.path());
    BlockManifest m;
    m.lang = "en";
    EXPECT_THROW(dedup_global(m, in, in), ConfigError);
}

// ---- manifest + preprocess --------------------------------------------------

TEST(Manifest, JsonFieldsAndLocate) {
    BlockManifest m;
    m.lang = "fr";
    m.block_capacity = 10;
    m.blocks = {{0, 10, "aa"}, {1, 4, "bb"}};
    auto j = m.to_json();
    EXPECT_NE(j.find("\"lang\""), std::string::npos);
    EXPECT_NE(j.find("\"block_capacity\""), std::string::npos);
    EXPECT_NE(j.find("\"sha256\""), std::string::npos);
    EXPECT_EQ(BlockManifest::from_json(j), m);
    EXPECT_EQ(m.total_count(), 14u);
    EXPECT_EQ(m.locate(10), (std::pair<std::uint32_t, std::uint64_t>{1, 0}));
    EXPECT_THROW(m.locate(14), ConfigError);
    EXPECT_THROW(m.locate(25), ConfigError);
}

TEST(Preprocess, EndToEndInvariants) {
    TempDir dir("pp");
    BlockStore scratch(dir / "scratch"), out(dir / "out");
    std::vector<std::string> paragraphs;
    std::mt19937 rng(1);
    for (int i = 0; i < 3000; ++i) {
        int id = rng() % 2500; // forces cross-block duplicates
        paragraphs.push_back("Sentence number " + std::to_string(id) + " is here. Another one " +
                             std::to_string(id % 700) + " follows!");
    }
    paragraphs.push_back(std::string(600, 'y') + ".");
    paragraphs.push_back("Это русский текст.");
    ScriptPredictor p;
    PreprocessOptions opt;
    opt.lang = "en";
    opt.block_capacity = 1000;
    opt.predictor = &p;
    PreprocessStats stats;
    auto m = preprocess(paragraphs, RuleRegistry::builtin(), opt, scratch, out, &stats);
    EXPECT_EQ(stats.too_long, 1u);
    EXPECT_EQ(stats.lid_rejected, 1u);

    // Oracle: split by hand (both sentences of every paragraph), set projection.
    std::unordered_set<std::string> want;
    for (int i = 0; i < 3000; ++i) {
        auto two = split_sentences(paragraphs[i], "en", RuleRegistry::builtin());
        ASSERT_EQ(two.size(), 2u);
        want.insert(two.begin(), two.end());
    }
    auto lines = read_all_lines(out, m);
    std::unordered_set<std::string> got(lines.begin(), lines.end());
    EXPECT_EQ(got.size(), lines.size()); // globally unique
    EXPECT_EQ(got, want);
    EXPECT_EQ(m.total_count(), lines.size());
    for (const auto& l : lines) {
        EXPECT_LE(utf8::length(l), 500u);
        EXPECT_EQ(l.find('\n'), std::string::npos);
    }
    for (const auto& b : m.blocks) {
        EXPECT_EQ(sha256_file(out.path("en", b.index)), b.sha256);
    }
}
