#include <bitext/pipeline.hpp>

#include <cstdio>
#include <fstream>

namespace bitext::pipeline::stages {

namespace fs = std::filesystem;

namespace {

unsigned threads(const Config& config) {
    return std::max(1u, config.get_u32("threads"));
}

std::vector<std::string> read_paragraphs(const fs::path& path) {
    if (!fs::exists(path)) {
        throw Error("input corpus not found: " + path.string());
    }
    auto text = read_file(path);
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        auto end = nl == std::string::npos ? text.size() : nl;
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            out.push_back(std::move(line));
        }
        start = end + 1;
    }
    return out;
}

std::vector<EmbeddingBlock> read_all(const std::vector<fs::path>& files, std::uint32_t dim) {
    std::vector<EmbeddingBlock> out;
    out.reserve(files.size());
    for (const auto& f : files) {
        out.push_back(read_embeddings(f, dim));
    }
    return out;
}

std::string threshold_key(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", t);
    return buf;
}

std::vector<double> report_thresholds(const Config& config) {
    std::vector<double> out{config.get_double("threshold")};
    for (const auto& t : config.get_list("stats_thresholds")) {
        Config probe;
        probe.set("threshold", t);
        out.push_back(probe.get_double("threshold"));
    }
    return out;
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
}

} // namespace

std::vector<fs::path> preprocess(
        const fs::path& input,
        const std::string& lang,
        const fs::path& out_dir,
        const fs::path& scratch_dir,
        const Config& config,
        const std::optional<fs::path>& lid_file) {
    auto paragraphs = read_paragraphs(input);

    corpus::ScriptPredictor script;
    std::optional<corpus::FilePredictor> file;
    corpus::PreprocessOptions options;
    options.lang = lang;
    options.block_capacity = config.get_u64("block_capacity");
    options.max_chars = config.get_u64("max_chars");
    options.min_conf = config.get_double("min_conf");
    options.workers = threads(config);
    const auto& lid = config.get("lid");
    if (lid == "builtin") {
        options.predictor = &script;
    } else if (lid == "file") {
        if (!lid_file) {
            throw ConfigError("lid=file needs a label file for '" + lang + "'");
        }
        file.emplace(corpus::FilePredictor::load(*lid_file));
        options.predictor = &*file;
    }

    fs::remove_all(scratch_dir);
    fs::create_directories(scratch_dir);
    fs::create_directories(out_dir);
    {
        corpus::BlockStore stale(out_dir);
        for (std::uint32_t b = 0; stale.exists(lang, b); ++b) {
            fs::remove(stale.path(lang, b));
        }
    }
    auto manifest = corpus::preprocess(
            paragraphs, corpus::RuleRegistry::builtin(), options, corpus::BlockStore(scratch_dir),
            corpus::BlockStore(out_dir));
    fs::remove_all(scratch_dir);

    corpus::BlockStore store(out_dir);
    std::vector<fs::path> written{out_dir / corpus::manifest_file_name(lang)};
    for (const auto& b : manifest.blocks) {
        written.push_back(store.path(lang, b.index));
    }
    return written;
}

std::vector<fs::path> embed(
        const fs::path& text_dir,
        const std::string& lang,
        std::uint32_t block,
        const fs::path& out,
        const Config& config) {
    auto manifest = corpus::load_manifest(text_dir, lang);
    auto lines = corpus::BlockStore(text_dir).read(lang, block);
    auto encoder = make_test_encoder(config.get_u32("dim"), config.get_u64("seed"));
    auto eb = encode_batch(lines, *encoder, threads(config));
    eb.lang = lang;
    eb.block = block;
    eb.base_global_id = static_cast<GlobalId>(block) * manifest.block_capacity;
    ensure_parent(out);
    write_embeddings(eb, out);
    return {out};
}

std::vector<fs::path> import_block(
        const fs::path& raw,
        const fs::path& text_dir,
        const std::string& lang,
        std::uint32_t block,
        const fs::path& out,
        const Config& config) {
    auto manifest = corpus::load_manifest(text_dir, lang);
    const auto dim = config.get_u32("dim");
    const std::uint64_t row_bytes = static_cast<std::uint64_t>(dim) * sizeof(float);
    if (!fs::exists(raw)) {
        throw Error("raw embedding file not found: " + raw.string());
    }
    const auto size = fs::file_size(raw);
    if (size != manifest.total_count() * row_bytes) {
        throw FormatError(
                raw.string() + ": holds " + std::to_string(size / std::max<std::uint64_t>(row_bytes, 1)) +
                " rows of dim " + std::to_string(dim) + ", corpus '" + lang + "' has " +
                std::to_string(manifest.total_count()) + " sentences");
    }
    std::uint64_t first = 0;
    const corpus::BlockEntry* entry = nullptr;
    for (const auto& b : manifest.blocks) {
        if (b.index == block) {
            entry = &b;
            break;
        }
        first += b.count;
    }
    if (entry == nullptr) {
        throw ConfigError("block " + std::to_string(block) + " not in manifest of '" + lang + "'");
    }
    std::string bytes(entry->count * row_bytes, '\0');
    std::ifstream in(raw, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(first * row_bytes));
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!in) {
        throw Error("short read from " + raw.string());
    }
    auto eb = import_embeddings_bytes(
            bytes, dim, entry->count, static_cast<GlobalId>(block) * manifest.block_capacity, raw.string());
    eb.lang = lang;
    eb.block = block;
    ensure_parent(out);
    write_embeddings(eb, out);
    return {out};
}

std::vector<fs::path> index_train(
        const std::vector<fs::path>& embeddings,
        const fs::path& out,
        const Config& config) {
    auto blocks = read_all(embeddings, config.get_u32("dim"));
    vindex::TrainOptions opts;
    opts.nlist = config.get_u32("nlist");
    opts.m = config.get_u32("m");
    opts.use_rotation = config.get_bool("rotation");
    opts.seed = config.get_u64("seed");
    opts.workers = threads(config);
    auto sample = vindex::sample_rows(blocks, config.get_u64("train_sample"), opts.seed);
    auto q = std::make_shared<const vindex::TrainedQuantizers>(vindex::train_index({&sample, 1}, opts));
    ensure_parent(out);
    vindex::IndexShard::save_quantizers(q, out);
    return {out};
}

std::vector<fs::path> index_add(
        const fs::path& trained,
        const fs::path& embedding,
        const fs::path& out,
        const Config& config) {
    auto base = vindex::IndexShard::load(trained);
    vindex::IndexShard shard(base.shared_quantizers(), config.get_bool("retain_vectors"));
    shard.add_block(read_embeddings(embedding, base.quantizers().dim()));
    ensure_parent(out);
    shard.save(out);
    return {out};
}

std::vector<fs::path> index_merge(const std::vector<fs::path>& parts, const fs::path& out) {
    if (parts.empty()) {
        throw ConfigError("index-merge: no input shards");
    }
    std::vector<vindex::IndexShard> shards;
    shards.reserve(parts.size());
    for (const auto& p : parts) {
        shards.push_back(vindex::IndexShard::load(p));
    }
    auto merged = vindex::IndexShard::merge(shards);
    ensure_parent(out);
    merged.save(out);
    return {out};
}

std::vector<fs::path> sweep(
        const std::vector<fs::path>& queries,
        const std::vector<fs::path>& targets,
        Direction direction,
        const fs::path& out,
        const Config& config) {
    if (queries.empty() || targets.empty()) {
        throw ConfigError("sweep: queries and targets are both required");
    }
    const auto dim = config.get_u32("dim");
    auto q = read_all(queries, dim);
    const auto k = config.get_u32("k");
    const std::string context = out.filename().string();
    NeighborFile file;
    if (targets.size() == 1 && targets.front().extension() == ".idx") {
        auto shard = vindex::IndexShard::load(targets.front());
        if (!config.has("nprobe")) {
            throw ConfigError("searching an index requires nprobe");
        }
        vindex::SearchParams params;
        params.k = k;
        params.nprobe = config.get_u32("nprobe");
        params.refine = config.get_bool("refine");
        params.direction = direction;
        params.workers = threads(config);
        file = miner::compute_direction(q, shard, params, context);
    } else {
        auto t = read_all(targets, dim);
        file = miner::compute_direction(q, t, k, direction, threads(config), context);
    }
    ensure_parent(out);
    write_neighbors(file, out);
    return {out};
}

std::vector<fs::path> combine_max(
        const std::vector<fs::path>& forward,
        const std::vector<fs::path>& backward,
        const fs::path& candidates_out,
        const fs::path& stats_out,
        const fs::path& pairs_out,
        const Config& config) {
    std::vector<NeighborFile> fwd, bwd;
    for (const auto& f : forward) {
        fwd.push_back(read_neighbors(f));
    }
    for (const auto& f : backward) {
        bwd.push_back(read_neighbors(f));
    }
    if (fwd.empty() || bwd.empty()) {
        throw ConfigError("max-strategy combine needs forward and backward sweeps");
    }
    miner::MarginStats stats;
    auto candidates = miner::margin_scores(miner::merge_sweeps(fwd), miner::merge_sweeps(bwd), &stats);
    for (double t : report_thresholds(config)) {
        stats.accepted[threshold_key(t)] = miner::max_strategy_select(candidates, t).size();
    }
    auto pairs = miner::max_strategy_select(candidates, config.get_double("threshold"));
    for (const auto& p : {candidates_out, stats_out, pairs_out}) {
        ensure_parent(p);
    }
    miner::write_candidates(candidates, candidates_out);
    write_file_atomic(stats_out, stats.to_json());
    write_file_atomic(pairs_out, miner::format_pairs_tsv(pairs));
    return {candidates_out, stats_out, pairs_out};
}

std::vector<fs::path> combine_forward_only(
        const std::vector<fs::path>& forward,
        const std::vector<fs::path>& candidates_out,
        const fs::path& stats_out,
        const fs::path& pairs_out,
        const Config& config) {
    if (forward.empty() || forward.size() != candidates_out.size()) {
        throw ConfigError("forward-only combine needs one candidate output per forward sweep");
    }
    miner::MarginStats stats;
    std::vector<std::vector<miner::MarginCandidate>> per_shard;
    for (const auto& f : forward) {
        per_shard.push_back(miner::forward_only_scores(read_neighbors(f), &stats));
    }
    for (double t : report_thresholds(config)) {
        stats.accepted[threshold_key(t)] = miner::forward_only_select_candidates(per_shard, t).size();
    }
    auto pairs = miner::forward_only_select_candidates(per_shard, config.get_double("threshold"));
    std::vector<fs::path> written;
    for (std::size_t s = 0; s < per_shard.size(); ++s) {
        ensure_parent(candidates_out[s]);
        miner::write_candidates(per_shard[s], candidates_out[s]);
        written.push_back(candidates_out[s]);
    }
    ensure_parent(stats_out);
    ensure_parent(pairs_out);
    write_file_atomic(stats_out, stats.to_json());
    write_file_atomic(pairs_out, miner::format_pairs_tsv(pairs));
    written.push_back(stats_out);
    written.push_back(pairs_out);
    return written;
}

std::vector<fs::path> attach(
        const fs::path& pairs,
        const fs::path& text_dir,
        const std::string& src_lang,
        const std::string& tgt_lang,
        const fs::path& out) {
    auto scored = miner::parse_pairs_tsv(read_file(pairs));
    miner::TextResolver src(corpus::load_manifest(text_dir, src_lang), corpus::BlockStore(text_dir));
    miner::TextResolver tgt(corpus::load_manifest(text_dir, tgt_lang), corpus::BlockStore(text_dir));
    auto aligned = miner::attach_text(scored, src, tgt);
    auto text = miner::format_bitext_tsv(aligned);
    if (out == "-") {
        std::fwrite(text.data(), 1, text.size(), stdout);
        return {};
    }
    ensure_parent(out);
    write_file_atomic(out, text);
    return {out};
}

} // namespace bitext::pipeline::stages
