#include <bitext/pipeline.hpp>

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <unordered_set>

namespace bitext::pipeline {

namespace fs = std::filesystem;

const char* to_string(Stage stage) {
    switch (stage) {
        case Stage::Preprocess: return "preprocess";
        case Stage::Embed: return "embed";
        case Stage::IndexTrain: return "index-train";
        case Stage::IndexAdd: return "index-add";
        case Stage::IndexMerge: return "index-merge";
        case Stage::MineFwd: return "mine-fwd";
        case Stage::MineBwd: return "mine-bwd";
        case Stage::MineCombine: return "mine-combine";
        case Stage::Attach: return "attach";
    }
    return "?";
}

namespace {

bool valid_lang_code(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
    });
}

std::string block_tag(std::uint32_t block) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05u", block);
    return buf;
}

} // namespace

std::vector<LangPair> parse_pairs(const std::vector<std::string>& items) {
    std::vector<LangPair> out;
    for (const auto& item : items) {
        auto dash = item.find('-');
        if (dash == std::string::npos || item.find('-', dash + 1) != std::string::npos) {
            throw ConfigError("malformed language pair '" + item + "' (expected src-tgt)");
        }
        LangPair p{item.substr(0, dash), item.substr(dash + 1)};
        if (!valid_lang_code(p.src) || !valid_lang_code(p.tgt)) {
            throw ConfigError("malformed language pair '" + item + "'");
        }
        if (p.src == p.tgt) {
            throw ConfigError("language pair '" + item + "' pairs a language with itself");
        }
        if (std::find(out.begin(), out.end(), p) != out.end()) {
            throw ConfigError("language pair '" + item + "' listed twice");
        }
        out.push_back(std::move(p));
    }
    return out;
}

const JobSpec* Plan::find(std::string_view id) const {
    for (const auto& j : jobs) {
        if (j.id == id) {
            return &j;
        }
    }
    return nullptr;
}

Layout::Layout(const Config& config) : workdir(config.get("workdir")), input_dir(config.get("input_dir")) {}

fs::path Layout::input_text(std::string_view lang) const {
    return input_dir / (std::string(lang) + ".txt");
}
fs::path Layout::input_lid(std::string_view lang) const {
    return input_dir / (std::string(lang) + ".lid.tsv");
}
fs::path Layout::input_raw(std::string_view lang) const {
    return input_dir / (std::string(lang) + ".raw");
}
fs::path Layout::text_dir() const {
    return workdir / "text";
}
fs::path Layout::scratch_dir(std::string_view lang) const {
    return workdir / "tmp" / std::string(lang);
}
fs::path Layout::manifest(std::string_view lang) const {
    return text_dir() / corpus::manifest_file_name(lang);
}
fs::path Layout::embedding(std::string_view lang, std::uint32_t block) const {
    return workdir / "emb" / block_file_name(lang, block, "emb");
}
fs::path Layout::trained_index(std::string_view lang) const {
    return workdir / "index" / (std::string(lang) + ".trained.idx");
}
fs::path Layout::block_index(std::string_view lang, std::uint32_t block) const {
    return workdir / "index" / (std::string(lang) + ".b" + block_tag(block) + ".idx");
}
fs::path Layout::shard_index(std::string_view lang, std::uint32_t shard) const {
    return workdir / "index" / vindex::index_file_name(lang, shard);
}
fs::path Layout::neighbors(const LangPair& p, Direction d, std::uint32_t shard) const {
    return workdir / "mine" / (p.name() + (d == Direction::Forward ? ".fwd." : ".bwd.") + std::to_string(shard) + ".nbr");
}
fs::path Layout::candidates(const LangPair& p) const {
    return workdir / "mine" / (p.name() + ".cnd");
}
fs::path Layout::shard_candidates(const LangPair& p, std::uint32_t shard) const {
    return workdir / "mine" / (p.name() + "." + std::to_string(shard) + ".cnd");
}
fs::path Layout::stats(const LangPair& p) const {
    return workdir / "mine" / (p.name() + ".stats.json");
}
fs::path Layout::pairs(const LangPair& p) const {
    return workdir / "mine" / (p.name() + ".pairs.tsv");
}
fs::path Layout::bitext(const LangPair& p) const {
    return workdir / "bitext" / (p.name() + ".tsv");
}
fs::path Layout::journal() const {
    return workdir / "run.journal.jsonl";
}

std::vector<std::vector<std::uint32_t>> shard_layout(const corpus::BlockManifest& manifest, std::uint64_t cap) {
    if (cap == 0) {
        throw ConfigError("shard_cap must be positive");
    }
    std::vector<std::vector<std::uint32_t>> shards;
    std::uint64_t filled = 0;
    for (const auto& b : manifest.blocks) {
        if (shards.empty() || filled + b.count > cap) {
            shards.emplace_back();
            filled = 0;
        }
        shards.back().push_back(b.index);
        filled += b.count;
    }
    return shards;
}

miner::MiningMode mode_for(const Config& config, const LangPair& pair) {
    auto fwd = config.get_list("forward_only_langs");
    return std::find(fwd.begin(), fwd.end(), pair.tgt) != fwd.end() ? miner::MiningMode::ForwardOnly
                                                                     : miner::MiningMode::MaxStrategy;
}

std::map<std::string, corpus::BlockManifest> load_manifests(const Config& config) {
    Layout layout(config);
    std::map<std::string, corpus::BlockManifest> out;
    for (const auto& lang : config.get_list("langs")) {
        if (fs::exists(layout.manifest(lang))) {
            out.emplace(lang, corpus::load_manifest(layout.text_dir(), lang));
        }
    }
    return out;
}

namespace {

void check_config(const Config& config) {
    const auto& search = config.get("search");
    if (search != "exact" && search != "ivf") {
        throw ConfigError("search must be exact or ivf, got '" + search + "'");
    }
    if (search == "ivf") {
        if (!config.has("nprobe")) {
            throw ConfigError("search=ivf requires nprobe");
        }
        auto nprobe = config.get_u32("nprobe");
        if (nprobe == 0 || nprobe > config.get_u32("nlist")) {
            throw ConfigError("nprobe must lie in [1, nlist]");
        }
        if (config.get_u32("dim") % std::max(1u, config.get_u32("m")) != 0) {
            throw ConfigError("dim must be divisible by m");
        }
    }
    const auto& encoder = config.get("encoder");
    if (encoder != "trigram" && encoder != "import") {
        throw ConfigError("encoder must be trigram or import, got '" + encoder + "'");
    }
    const auto& lid = config.get("lid");
    if (lid != "builtin" && lid != "file" && lid != "none") {
        throw ConfigError("lid must be builtin, file or none, got '" + lid + "'");
    }
    if (config.get_u64("block_capacity") == 0) {
        throw ConfigError("block_capacity must be positive");
    }
    miner::MiningConfig mc;
    mc.k = config.get_u32("k");
    mc.threshold = config.get_double("threshold");
    mc.validate();
    config.get_u32("dim");
    config.get_u64("shard_cap");
    config.get_u64("seed");
    config.get_double("min_conf");
    config.get_bool("rotation");
    config.get_bool("refine");
    config.get_bool("retain_vectors");
    for (const auto& t : config.get_list("stats_thresholds")) {
        Config probe;
        probe.set("threshold", t);
        probe.get_double("threshold");
    }
}

void assert_acyclic(const std::vector<JobSpec>& jobs) {
    std::unordered_set<std::string> seen;
    for (const auto& j : jobs) {
        for (const auto& d : j.deps) {
            if (!seen.contains(d)) {
                throw std::logic_error("plan: job " + j.id + " depends on " + d + ", which is not planned before it");
            }
        }
        if (!seen.insert(j.id).second) {
            throw std::logic_error("plan: duplicate job id " + j.id);
        }
    }
}

} // namespace

Plan plan(const Config& config, const std::map<std::string, corpus::BlockManifest>& manifests) {
    check_config(config);
    Layout layout(config);
    const auto digest = config.digest();
    const bool ivf = config.get("search") == "ivf";
    const bool import = config.get("encoder") == "import";
    const auto cap = config.get_u64("shard_cap");

    auto langs = config.get_list("langs");
    for (std::size_t i = 0; i < langs.size(); ++i) {
        if (!valid_lang_code(langs[i])) {
            throw ConfigError("unknown language '" + langs[i] + "'");
        }
        if (std::find(langs.begin(), langs.begin() + i, langs[i]) != langs.begin() + i) {
            throw ConfigError("language '" + langs[i] + "' listed twice");
        }
    }
    auto pairs = parse_pairs(config.get_list("pairs"));
    for (const auto& p : pairs) {
        for (const auto& l : {p.src, p.tgt}) {
            if (std::find(langs.begin(), langs.end(), l) == langs.end()) {
                throw ConfigError("pair " + p.name() + " references unknown language '" + l + "'");
            }
        }
    }
    for (const auto& l : langs) {
        if (!fs::exists(layout.input_text(l)) && !manifests.contains(l)) {
            throw ConfigError("missing corpus for '" + l + "': " + layout.input_text(l).string());
        }
    }

    Plan out;
    auto add = [&](JobSpec j) {
        j.config_digest = digest;
        out.jobs.push_back(std::move(j));
    };

    std::map<std::string, std::vector<std::vector<std::uint32_t>>> shards;
    for (const auto& l : langs) {
        JobSpec pre;
        pre.id = "preprocess:" + l;
        pre.stage = Stage::Preprocess;
        pre.lang = l;
        pre.inputs = {layout.input_text(l)};
        if (config.get("lid") == "file") {
            pre.inputs.push_back(layout.input_lid(l));
        }
        pre.sources = pre.inputs;
        pre.outputs = {layout.manifest(l)};
        add(std::move(pre));

        auto it = manifests.find(l);
        if (it == manifests.end()) {
            out.complete = false;
            continue;
        }
        const auto& m = it->second;
        shards[l] = shard_layout(m, cap);

        std::vector<fs::path> embs;
        for (const auto& b : m.blocks) {
            JobSpec e;
            e.id = "embed:" + l + ":" + block_tag(b.index);
            e.stage = Stage::Embed;
            e.lang = l;
            e.block = b.index;
            e.deps = {"preprocess:" + l};
            e.inputs = {layout.manifest(l), corpus::BlockStore(layout.text_dir()).path(l, b.index)};
            if (import) {
                e.inputs.push_back(layout.input_raw(l));
                e.sources = {layout.input_raw(l)};
            }
            e.outputs = {layout.embedding(l, b.index)};
            embs.push_back(layout.embedding(l, b.index));
            add(std::move(e));
        }

        if (!ivf) {
            continue;
        }
        JobSpec train;
        train.id = "index-train:" + l;
        train.stage = Stage::IndexTrain;
        train.lang = l;
        for (const auto& b : m.blocks) {
            train.deps.push_back("embed:" + l + ":" + block_tag(b.index));
        }
        train.inputs = embs;
        train.sources = embs;
        train.outputs = {layout.trained_index(l)};
        add(std::move(train));

        for (const auto& b : m.blocks) {
            JobSpec a;
            a.id = "index-add:" + l + ":" + block_tag(b.index);
            a.stage = Stage::IndexAdd;
            a.lang = l;
            a.block = b.index;
            a.deps = {"index-train:" + l, "embed:" + l + ":" + block_tag(b.index)};
            a.inputs = {layout.trained_index(l), layout.embedding(l, b.index)};
            a.sources = a.inputs;
            a.outputs = {layout.block_index(l, b.index)};
            add(std::move(a));
        }
        const auto& sh = shards[l];
        for (std::uint32_t s = 0; s < sh.size(); ++s) {
            JobSpec mg;
            mg.id = "index-merge:" + l + ":" + std::to_string(s);
            mg.stage = Stage::IndexMerge;
            mg.lang = l;
            mg.shard = s;
            for (auto b : sh[s]) {
                mg.deps.push_back("index-add:" + l + ":" + block_tag(b));
                mg.inputs.push_back(layout.block_index(l, b));
            }
            mg.sources = mg.inputs;
            mg.outputs = {layout.shard_index(l, s)};
            add(std::move(mg));
        }
    }

    if (!out.complete) {
        assert_acyclic(out.jobs);
        return out;
    }

    // Sweep queries: every block of one language. Targets: one shard of the
    // other, either its merged index or its embedding blocks.
    auto query_side = [&](const std::string& l, JobSpec& j) {
        for (const auto& b : manifests.at(l).blocks) {
            j.deps.push_back("embed:" + l + ":" + block_tag(b.index));
            j.sources.push_back(layout.embedding(l, b.index));
        }
    };
    auto target_side = [&](const std::string& l, std::uint32_t s, JobSpec& j) {
        if (ivf) {
            j.deps.push_back("index-merge:" + l + ":" + std::to_string(s));
            j.targets.push_back(layout.shard_index(l, s));
        } else {
            for (auto b : shards[l][s]) {
                j.deps.push_back("embed:" + l + ":" + block_tag(b));
                j.targets.push_back(layout.embedding(l, b));
            }
        }
    };

    for (const auto& p : pairs) {
        const auto mode = mode_for(config, p);
        std::vector<std::string> sweep_ids;
        std::vector<fs::path> fwd_files, bwd_files;
        auto add_sweep = [&](Stage stage, const std::string& q, const std::string& t, std::uint32_t s) {
            JobSpec j;
            const auto dir = stage == Stage::MineFwd ? Direction::Forward : Direction::Backward;
            j.id = std::string(to_string(stage)) + ":" + p.name() + ":" + std::to_string(s);
            j.stage = stage;
            j.pair = p;
            j.shard = s;
            query_side(q, j);
            target_side(t, s, j);
            j.inputs = j.sources;
            j.inputs.insert(j.inputs.end(), j.targets.begin(), j.targets.end());
            j.outputs = {layout.neighbors(p, dir, s)};
            (dir == Direction::Forward ? fwd_files : bwd_files).push_back(j.outputs.front());
            sweep_ids.push_back(j.id);
            add(std::move(j));
        };
        for (std::uint32_t s = 0; s < shards[p.tgt].size(); ++s) {
            add_sweep(Stage::MineFwd, p.src, p.tgt, s);
        }
        if (mode == miner::MiningMode::MaxStrategy) {
            for (std::uint32_t s = 0; s < shards[p.src].size(); ++s) {
                add_sweep(Stage::MineBwd, p.tgt, p.src, s);
            }
        }

        JobSpec c;
        c.id = "mine-combine:" + p.name();
        c.stage = Stage::MineCombine;
        c.pair = p;
        c.deps = sweep_ids;
        c.sources = fwd_files;
        c.targets = bwd_files;
        c.inputs = fwd_files;
        c.inputs.insert(c.inputs.end(), bwd_files.begin(), bwd_files.end());
        if (mode == miner::MiningMode::MaxStrategy) {
            c.outputs = {layout.candidates(p)};
        } else {
            for (std::uint32_t s = 0; s < fwd_files.size(); ++s) {
                c.outputs.push_back(layout.shard_candidates(p, s));
            }
        }
        c.outputs.push_back(layout.stats(p));
        c.outputs.push_back(layout.pairs(p));
        add(std::move(c));

        JobSpec a;
        a.id = "attach:" + p.name();
        a.stage = Stage::Attach;
        a.pair = p;
        a.deps = {"mine-combine:" + p.name(), "preprocess:" + p.src, "preprocess:" + p.tgt};
        a.inputs = {layout.pairs(p), layout.manifest(p.src), layout.manifest(p.tgt)};
        a.sources = {layout.pairs(p)};
        a.outputs = {layout.bitext(p)};
        add(std::move(a));
    }

    assert_acyclic(out.jobs);
    return out;
}

} // namespace bitext::pipeline
