#pragma once

#include <bitext/config.hpp>
#include <bitext/corpus.hpp>
#include <bitext/encoder.hpp>
#include <bitext/miner.hpp>
#include <bitext/vindex.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace bitext::pipeline {

enum class Stage {
    Preprocess,
    Embed,
    IndexTrain,
    IndexAdd,
    IndexMerge,
    MineFwd,
    MineBwd,
    MineCombine,
    Attach,
};

const char* to_string(Stage stage);

struct LangPair {
    std::string src;
    std::string tgt;

    std::string name() const {
        return src + "-" + tgt;
    }
    bool operator==(const LangPair&) const = default;
};

/// Parses "de-en" style pair lists.
std::vector<LangPair> parse_pairs(const std::vector<std::string>& items);

struct JobSpec {
    std::string id; // unique, e.g. "embed:de:00003"
    Stage stage = Stage::Preprocess;
    std::string lang;             // single-language stages
    std::optional<LangPair> pair; // mining and attach stages
    std::uint32_t block = 0;
    std::uint32_t shard = 0;
    std::vector<std::string> deps;
    /// Files whose content digests, with the config digest, form the job key.
    std::vector<std::filesystem::path> inputs;
    /// Stage arguments: e.g. query and target files of a sweep, forward and
    /// backward sweeps of a combine.
    std::vector<std::filesystem::path> sources;
    std::vector<std::filesystem::path> targets;
    std::vector<std::filesystem::path> outputs;
    std::string config_digest;
};

/// Jobs in a topological order. `complete` is false when some language had
/// no manifest yet, in which case only its preprocess job is planned.
struct Plan {
    std::vector<JobSpec> jobs;
    bool complete = true;

    const JobSpec* find(std::string_view id) const;
};

/// Where every artifact lives under the working directory.
struct Layout {
    std::filesystem::path workdir;
    std::filesystem::path input_dir;

    explicit Layout(const Config& config);

    std::filesystem::path input_text(std::string_view lang) const;  // {input}/{lang}.txt
    std::filesystem::path input_lid(std::string_view lang) const;   // {input}/{lang}.lid.tsv
    std::filesystem::path input_raw(std::string_view lang) const;   // {input}/{lang}.raw
    std::filesystem::path text_dir() const;
    std::filesystem::path scratch_dir(std::string_view lang) const;
    std::filesystem::path manifest(std::string_view lang) const;
    std::filesystem::path embedding(std::string_view lang, std::uint32_t block) const;
    std::filesystem::path trained_index(std::string_view lang) const;
    std::filesystem::path block_index(std::string_view lang, std::uint32_t block) const;
    std::filesystem::path shard_index(std::string_view lang, std::uint32_t shard) const;
    std::filesystem::path neighbors(const LangPair& p, Direction d, std::uint32_t shard) const;
    std::filesystem::path candidates(const LangPair& p) const;
    std::filesystem::path shard_candidates(const LangPair& p, std::uint32_t shard) const;
    std::filesystem::path stats(const LangPair& p) const;
    std::filesystem::path pairs(const LangPair& p) const;
    std::filesystem::path bitext(const LangPair& p) const;
    std::filesystem::path journal() const;
};

/// Consecutive blocks grouped so that no shard exceeds `cap` vectors
/// (a single larger block gets a shard of its own).
std::vector<std::vector<std::uint32_t>> shard_layout(const corpus::BlockManifest& manifest, std::uint64_t cap);

miner::MiningMode mode_for(const Config& config, const LangPair& pair);

/// Throws ConfigError for unknown languages, pairs naming a language not in
/// `langs`, missing input corpora and search=ivf without nprobe. Asserts the
/// resulting graph is acyclic.
Plan plan(const Config& config, const std::map<std::string, corpus::BlockManifest>& manifests);

/// Manifests already present under the working directory.
std::map<std::string, corpus::BlockManifest> load_manifests(const Config& config);

// ---------------------------------------------------------------------------

enum class JobStatus { Pending, Running, Done, Failed };

const char* to_string(JobStatus s);

struct JobState {
    JobStatus status = JobStatus::Pending;
    std::string key;
    std::map<std::string, std::string> outputs; // path -> sha256
    std::string error;
    bool executed = false; // ran (not reused) during this RunState's lifetime
};

struct RunState {
    std::map<std::string, JobState> jobs;

    bool ok() const;
    std::size_t count(JobStatus s) const;
    std::size_t executed_count() const;
};

/// JSON-lines journal, one record per state transition, rewritten through
/// a temporary file and rename.
class Journal {
   public:
    explicit Journal(std::filesystem::path path);

    /// Last recorded state of every job.
    const std::map<std::string, JobState>& last() const {
        return last_;
    }
    void record(const std::string& job, const JobState& state, bool reused = false);

   private:
    std::filesystem::path path_;
    std::string text_;
    std::map<std::string, JobState> last_;
};

/// Runs the plan with up to `workers` jobs at a time. A job is reused when
/// the journal holds a done record with the same key, its outputs still
/// match their digests and none of its dependencies ran in this state. A
/// failure stops only the failed job's dependents.
void execute(const Plan& plan, const Config& config, unsigned workers, Journal& journal, RunState& state);

/// Text task first, then the full plan.
RunState run_pipeline(const Config& config, unsigned workers);

// ---------------------------------------------------------------------------
// Stage bodies shared by the pipeline jobs and the CLI subcommands. Each
// returns the files it wrote.

namespace stages {

std::vector<std::filesystem::path> preprocess(
        const std::filesystem::path& input,
        const std::string& lang,
        const std::filesystem::path& out_dir,
        const std::filesystem::path& scratch_dir,
        const Config& config,
        const std::optional<std::filesystem::path>& lid_file = std::nullopt);

std::vector<std::filesystem::path> embed(
        const std::filesystem::path& text_dir,
        const std::string& lang,
        std::uint32_t block,
        const std::filesystem::path& out,
        const Config& config);

/// Slices the rows of `block` out of a raw float32 file aligned with the
/// deduplicated corpus.
std::vector<std::filesystem::path> import_block(
        const std::filesystem::path& raw,
        const std::filesystem::path& text_dir,
        const std::string& lang,
        std::uint32_t block,
        const std::filesystem::path& out,
        const Config& config);

std::vector<std::filesystem::path> index_train(
        const std::vector<std::filesystem::path>& embeddings,
        const std::filesystem::path& out,
        const Config& config);

std::vector<std::filesystem::path> index_add(
        const std::filesystem::path& trained,
        const std::filesystem::path& embedding,
        const std::filesystem::path& out,
        const Config& config);

std::vector<std::filesystem::path> index_merge(
        const std::vector<std::filesystem::path>& parts,
        const std::filesystem::path& out);

/// One sweep: every query row against the target (an index file with
/// search=ivf, else embedding files searched exactly).
std::vector<std::filesystem::path> sweep(
        const std::vector<std::filesystem::path>& queries,
        const std::vector<std::filesystem::path>& targets,
        Direction direction,
        const std::filesystem::path& out,
        const Config& config);

/// Max-strategy: merges the per-shard sweeps of each direction, scores and
/// selects. Writes candidates, stats and id pairs.
std::vector<std::filesystem::path> combine_max(
        const std::vector<std::filesystem::path>& forward,
        const std::vector<std::filesystem::path>& backward,
        const std::filesystem::path& candidates_out,
        const std::filesystem::path& stats_out,
        const std::filesystem::path& pairs_out,
        const Config& config);

/// Forward-only: per-shard candidates, per-shard selection, concatenated.
std::vector<std::filesystem::path> combine_forward_only(
        const std::vector<std::filesystem::path>& forward,
        const std::vector<std::filesystem::path>& candidates_out,
        const std::filesystem::path& stats_out,
        const std::filesystem::path& pairs_out,
        const Config& config);

std::vector<std::filesystem::path> attach(
        const std::filesystem::path& pairs,
        const std::filesystem::path& text_dir,
        const std::string& src_lang,
        const std::string& tgt_lang,
        const std::filesystem::path& out);

} // namespace stages

} // namespace bitext::pipeline
