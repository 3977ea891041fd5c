#include <bitext/evalkit.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

namespace bitext::evalkit {

namespace fs = std::filesystem;

namespace {

// Box-Muller over mt19937_64 so draws do not depend on the standard
// library's distribution implementations.
class Gaussian {
   public:
    explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

    double uniform01() {
        return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    }
    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) {
            u1 = uniform01();
        }
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform01() * static_cast<double>(n));
    }

   private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

void unit_vector(Gaussian& g, std::span<float> out) {
    do {
        for (auto& x : out) {
            x = static_cast<float>(g.next());
        }
    } while (!normalize(out));
}

std::vector<std::size_t> permutation(std::size_t n, Gaussian& g) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(p[i - 1], p[g.below(i)]);
    }
    return p;
}

} // namespace

PlantedCorpus plant_corpus(
        std::size_t n_pairs,
        std::size_t n_distractors,
        std::uint32_t dim,
        double sigma,
        std::uint64_t seed,
        const std::string& lang_a,
        const std::string& lang_b) {
    if (!(sigma >= 0.0)) {
        throw ConfigError("sigma must be >= 0");
    }
    if (dim == 0) {
        throw ConfigError("dim must be positive");
    }
    Gaussian g(seed);
    const std::size_t rows = n_pairs + n_distractors;
    PlantedCorpus c;
    c.sigma = sigma;
    c.distractors = n_distractors;
    c.a = EmbeddingBlock(dim, rows);
    c.b = EmbeddingBlock(dim, rows);
    c.a.lang = lang_a;
    c.b.lang = lang_b;

    // Row r of each side holds gold pair r for r < n_pairs, a distractor
    // otherwise; the permutations then place the rows.
    auto perm_a = permutation(rows, g);
    auto perm_b = permutation(rows, g);
    std::vector<float> u(dim);
    for (std::size_t r = 0; r < n_pairs; ++r) {
        unit_vector(g, u);
        for (auto* side : {&c.a, &c.b}) {
            auto row = side->row(side == &c.a ? perm_a[r] : perm_b[r]);
            do {
                for (std::uint32_t d = 0; d < dim; ++d) {
                    row[d] = u[d] + static_cast<float>(sigma * g.next());
                }
            } while (!normalize(row));
        }
        c.gold.emplace_back(perm_a[r], perm_b[r]);
    }
    for (std::size_t r = n_pairs; r < rows; ++r) {
        unit_vector(g, c.a.row(perm_a[r]));
        unit_vector(g, c.b.row(perm_b[r]));
    }
    std::sort(c.gold.begin(), c.gold.end());

    char buf[64];
    for (std::size_t r = 0; r < rows; ++r) {
        std::snprintf(buf, sizeof buf, "%s sentence %zu", lang_a.c_str(), r);
        c.a_sentences.emplace_back(buf);
        std::snprintf(buf, sizeof buf, "%s sentence %zu", lang_b.c_str(), r);
        c.b_sentences.emplace_back(buf);
    }
    return c;
}

std::string format_gold_tsv(std::span<const GoldPair> gold) {
    std::string out;
    for (const auto& [a, b] : gold) {
        out += std::to_string(a) + "\t" + std::to_string(b) + "\n";
    }
    return out;
}

std::vector<GoldPair> parse_gold_tsv(std::string_view text) {
    std::vector<GoldPair> out;
    std::size_t start = 0, line_no = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        auto end = nl == std::string_view::npos ? text.size() : nl;
        auto line = std::string(text.substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (line.empty()) {
            continue;
        }
        unsigned long long a = 0, b = 0;
        char tail = 0;
        if (std::sscanf(line.c_str(), "%llu\t%llu%c", &a, &b, &tail) != 2) {
            throw FormatError("gold line " + std::to_string(line_no) + ": expected a_id<TAB>b_id");
        }
        out.emplace_back(a, b);
    }
    return out;
}

void write_planted(const PlantedCorpus& corpus, const fs::path& dir) {
    fs::create_directories(dir);
    for (const auto* side : {&corpus.a, &corpus.b}) {
        const auto& sentences = side == &corpus.a ? corpus.a_sentences : corpus.b_sentences;
        std::string text;
        for (const auto& s : sentences) {
            text += s + "\n";
        }
        write_file_atomic(dir / (side->lang + ".txt"), text);
        write_file_atomic(
                dir / (side->lang + ".raw"),
                std::string_view(reinterpret_cast<const char*>(side->data.data()), side->data.size() * sizeof(float)));
    }
    write_file_atomic(dir / "gold.tsv", format_gold_tsv(corpus.gold));
}

PRReport score(std::span<const GoldPair> mined, std::span<const GoldPair> gold, double threshold) {
    std::set<GoldPair> m(mined.begin(), mined.end());
    std::set<GoldPair> g(gold.begin(), gold.end());
    std::size_t hit = 0;
    for (const auto& p : m) {
        hit += g.contains(p);
    }
    PRReport r;
    r.threshold = threshold;
    r.accepted = m.size();
    r.precision = m.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(m.size());
    r.recall = g.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(g.size());
    r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

PRReport score(std::span<const miner::ScoredPair> mined, std::span<const GoldPair> gold, double threshold) {
    std::vector<GoldPair> ids;
    ids.reserve(mined.size());
    for (const auto& p : mined) {
        ids.emplace_back(p.src_id, p.tgt_id);
    }
    return score(ids, gold, threshold);
}

std::vector<PRReport> sweep_threshold(
        std::span<const miner::MarginCandidate> candidates,
        std::span<const GoldPair> gold,
        std::span<const double> thresholds,
        unsigned workers) {
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw ConfigError("sweep thresholds must be sorted ascending");
    }
    std::vector<miner::MarginCandidate> all(candidates.begin(), candidates.end());
    std::vector<PRReport> out(thresholds.size());
    parallel_for(thresholds.size(), workers, [&](std::size_t i) {
        auto pairs = miner::max_strategy_select(all, thresholds[i]);
        out[i] = score(pairs, gold, thresholds[i]);
    });
    return out;
}

std::vector<PRReport> sweep_threshold(
        const PlantedCorpus& corpus,
        std::span<const double> thresholds,
        const miner::MiningConfig& config,
        unsigned workers) {
    auto mined = miner::mine_exact({&corpus.a, 1}, {&corpus.b, 1}, config, workers);
    return sweep_threshold(mined.candidates, corpus.gold, thresholds, workers);
}

std::string format_sweep_tsv(std::span<const PRReport> reports) {
    std::string out = "threshold\tprecision\trecall\tf1\taccepted\n";
    char buf[160];
    for (const auto& r : reports) {
        std::snprintf(
                buf, sizeof buf, "%.6f\t%.6f\t%.6f\t%.6f\t%zu\n", r.threshold, r.precision, r.recall, r.f1,
                r.accepted);
        out += buf;
    }
    return out;
}

std::size_t best_f1(std::span<const PRReport> reports) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < reports.size(); ++i) {
        if (reports[i].f1 > reports[best].f1) {
            best = i;
        }
    }
    return best;
}

std::vector<double> threshold_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || hi < lo) {
        throw ConfigError("threshold grid needs lo <= hi and step > 0");
    }
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) {
        out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e9) / 1e9);
    }
    return out;
}

} // namespace bitext::evalkit
