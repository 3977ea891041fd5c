#pragma once

#include <bitext/encoder.hpp>
#include <bitext/miner.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bitext::evalkit {

using GoldPair = std::pair<GlobalId, GlobalId>;

/// Synthetic bilingual corpus with known alignments. Gold rows and
/// distractor rows are shuffled together on each side; ids are row numbers.
struct PlantedCorpus {
    EmbeddingBlock a;
    EmbeddingBlock b;
    std::vector<std::string> a_sentences;
    std::vector<std::string> b_sentences;
    std::vector<GoldPair> gold; // sorted by a id
    double sigma = 0.0;
    std::size_t distractors = 0;
};

/// For each gold pair draws a unit u and stores normalize(u + e_a),
/// normalize(u + e_b) with e ~ N(0, sigma^2 I); distractors are independent
/// unit vectors. Deterministic per seed.
PlantedCorpus plant_corpus(
        std::size_t n_pairs,
        std::size_t n_distractors_per_side,
        std::uint32_t dim,
        double sigma,
        std::uint64_t seed,
        const std::string& lang_a = "xa",
        const std::string& lang_b = "xb");

/// Writes {lang}.txt (one sentence per line), {lang}.raw (headerless
/// float32 rows) for both sides and gold.tsv (`a_id<TAB>b_id`).
void write_planted(const PlantedCorpus& corpus, const std::filesystem::path& dir);

std::string format_gold_tsv(std::span<const GoldPair> gold);
std::vector<GoldPair> parse_gold_tsv(std::string_view text);

struct PRReport {
    double threshold = 0.0;
    double precision = 1.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t accepted = 0;
};

/// Precision over mined pairs, recall over gold. Empty mined gives
/// precision 1.0; empty gold gives recall 1.0. Duplicates count once.
PRReport score(std::span<const GoldPair> mined, std::span<const GoldPair> gold, double threshold = 0.0);
PRReport score(std::span<const miner::ScoredPair> mined, std::span<const GoldPair> gold, double threshold = 0.0);

/// Applies each threshold to one candidate set. `thresholds` must be sorted
/// ascending.
std::vector<PRReport> sweep_threshold(
        std::span<const miner::MarginCandidate> candidates,
        std::span<const GoldPair> gold,
        std::span<const double> thresholds,
        unsigned workers = 1);

/// Mines the corpus once with exact search, then sweeps.
std::vector<PRReport> sweep_threshold(
        const PlantedCorpus& corpus,
        std::span<const double> thresholds,
        const miner::MiningConfig& config,
        unsigned workers = 1);

/// `threshold<TAB>precision<TAB>recall<TAB>f1<TAB>accepted` with a header row.
std::string format_sweep_tsv(std::span<const PRReport> reports);

/// Index of the best F1 (first on ties).
std::size_t best_f1(std::span<const PRReport> reports);

/// Evenly spaced thresholds from `lo` to `hi` inclusive.
std::vector<double> threshold_grid(double lo, double hi, double step);

} // namespace bitext::evalkit
