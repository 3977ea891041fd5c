// ccmine: every stage of the mining pipeline as a subcommand, plus `run`.

#include <bitext/config.hpp>
#include <bitext/evalkit.hpp>
#include <bitext/pipeline.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace bitext;
using pipeline::Config;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

// Every config key as a `--key value` override on one subcommand.
struct Overrides {
    std::string config_file;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App* app) {
        app->add_option("--config", config_file, "key=value configuration file")->check(CLI::ExistingFile);
        for (const auto& k : pipeline::config_keys()) {
            std::string help = k.help;
            if (*k.default_value != '\0') {
                help += " [" + std::string(k.default_value) + "]";
            }
            options[k.name] = app->add_option("--" + std::string(k.name), values[k.name], help);
        }
    }

    Config resolve() const {
        Config c = config_file.empty() ? Config() : Config::load(config_file);
        for (const auto& [name, opt] : options) {
            if (opt->count() > 0) {
                c.set(name, values.at(name));
            }
        }
        return c;
    }
};

void write_output(const std::string& path, const std::string& data) {
    if (path == "-") {
        std::fwrite(data.data(), 1, data.size(), stdout);
        std::fflush(stdout);
        return;
    }
    fs::path p(path);
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    write_file_atomic(p, data);
}

std::vector<fs::path> to_paths(const std::vector<std::string>& v) {
    return {v.begin(), v.end()};
}

Direction parse_direction(const std::string& s) {
    if (s == "forward" || s == "fwd") {
        return Direction::Forward;
    }
    if (s == "backward" || s == "bwd") {
        return Direction::Backward;
    }
    throw ConfigError("direction must be forward or backward, got '" + s + "'");
}

std::vector<double> parse_thresholds(const std::string& list, const std::string& grid) {
    if (!grid.empty()) {
        double lo = 0, hi = 0, step = 0;
        char tail = 0;
        if (std::sscanf(grid.c_str(), "%lf:%lf:%lf%c", &lo, &hi, &step, &tail) != 3) {
            throw ConfigError("--grid expects lo:hi:step");
        }
        return evalkit::threshold_grid(lo, hi, step);
    }
    Config probe;
    probe.set("stats_thresholds", list);
    std::vector<double> out;
    for (const auto& t : probe.get_list("stats_thresholds")) {
        Config one;
        one.set("threshold", t);
        out.push_back(one.get_double("threshold"));
    }
    if (out.empty()) {
        throw ConfigError("no thresholds given");
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ccmine: margin-based bitext mining over monolingual corpora"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    std::map<CLI::App*, Overrides> overrides;
    auto sub = [&](const char* name, const char* help) {
        auto* s = app.add_subcommand(name, help);
        overrides[s].attach(s);
        return s;
    };
    std::function<int(const Config&)> action;

    // preprocess
    std::string in, out, lang, lid_file, scratch, text_dir;
    auto* pre = sub("preprocess", "Split, filter, LID and dedup one language into sentence blocks");
    pre->add_option("-i,--input", in, "paragraph file, one paragraph per line")->required();
    pre->add_option("--lang", lang, "language code")->required();
    pre->add_option("-o,--output", out, "directory receiving blocks and the manifest")->required();
    pre->add_option("--lid-file", lid_file, "per-sentence labels for lid=file");
    pre->add_option("--scratch", scratch, "scratch directory [<output>/.scratch-<lang>]");
    pre->callback([&] {
        action = [&](const Config& c) {
            auto sc = scratch.empty() ? fs::path(out) / (".scratch-" + lang) : fs::path(scratch);
            std::optional<fs::path> lid;
            if (!lid_file.empty()) {
                lid = lid_file;
            }
            pipeline::stages::preprocess(in, lang, out, sc, c, lid);
            return 0;
        };
    });

    // embed
    std::uint32_t block = 0;
    auto* emb = sub("embed", "Encode one sentence block with the built-in test encoder");
    emb->add_option("--text-dir", text_dir, "directory holding blocks and manifests")->required();
    emb->add_option("--lang", lang)->required();
    emb->add_option("--block", block)->required();
    emb->add_option("-o,--output", out, "embedding file")->required();
    emb->callback([&] {
        action = [&](const Config& c) {
            pipeline::stages::embed(text_dir, lang, block, out, c);
            return 0;
        };
    });

    // import-emb
    auto* imp = sub("import-emb", "Import one block's rows from a raw float32 file aligned with the corpus");
    imp->add_option("-i,--input", in, "raw float32 rows, one per deduplicated sentence")->required();
    imp->add_option("--text-dir", text_dir)->required();
    imp->add_option("--lang", lang)->required();
    imp->add_option("--block", block)->required();
    imp->add_option("-o,--output", out, "embedding file")->required();
    imp->callback([&] {
        action = [&](const Config& c) {
            pipeline::stages::import_block(in, text_dir, lang, block, out, c);
            return 0;
        };
    });

    // index-train
    std::vector<std::string> inputs, targets, backward;
    auto* itrain = sub("index-train", "Train rotation, coarse and product quantizers on a sample");
    itrain->add_option("-i,--input", inputs, "embedding files")->required();
    itrain->add_option("-o,--output", out, "trained (empty) index file")->required();
    itrain->callback([&] {
        action = [&](const Config& c) {
            pipeline::stages::index_train(to_paths(inputs), out, c);
            return 0;
        };
    });

    // index-add
    std::string trained;
    auto* iadd = sub("index-add", "Encode one embedding block into an index shard");
    iadd->add_option("--trained", trained, "trained index file")->required();
    iadd->add_option("-i,--input", in, "embedding file")->required();
    iadd->add_option("-o,--output", out, "shard file")->required();
    iadd->callback([&] {
        action = [&](const Config& c) {
            pipeline::stages::index_add(trained, in, out, c);
            return 0;
        };
    });

    // index-merge
    auto* imerge = sub("index-merge", "Merge shards that share trained quantizers");
    imerge->add_option("-i,--input", inputs, "shard files, in order")->required();
    imerge->add_option("-o,--output", out, "merged shard")->required();
    imerge->callback([&] {
        action = [&](const Config&) {
            pipeline::stages::index_merge(to_paths(inputs), out);
            return 0;
        };
    });

    // mine
    std::string direction = "forward", stats_out, mode;
    std::vector<std::string> cand_out;
    auto* mine = app.add_subcommand("mine", "Nearest-neighbor sweeps and margin scoring");
    mine->require_subcommand(1);
    auto* msweep = mine->add_subcommand("sweep", "Top-k neighbors of every query row in one target");
    overrides[msweep].attach(msweep);
    msweep->add_option("-q,--queries", inputs, "query embedding files")->required();
    msweep->add_option("-t,--targets", targets, "one index file, or target embedding files")->required();
    msweep->add_option("--direction", direction, "forward | backward")->capture_default_str();
    msweep->add_option("-o,--output", out, "neighbor file")->required();
    msweep->callback([&] {
        action = [&](const Config& c) {
            pipeline::stages::sweep(to_paths(inputs), to_paths(targets), parse_direction(direction), out, c);
            return 0;
        };
    });
    auto* mcombine = mine->add_subcommand("combine", "Margin-score sweeps and select pairs");
    overrides[mcombine].attach(mcombine);
    mcombine->add_option("--forward", inputs, "forward neighbor files, one per target shard")->required();
    mcombine->add_option("--backward", backward, "backward neighbor files (max-strategy)");
    mcombine->add_option("--mode", mode, "max-strategy | forward-only [max-strategy]");
    mcombine->add_option("--candidates", cand_out, "candidate output(s); one per shard in forward-only mode")
            ->required();
    mcombine->add_option("--stats", stats_out, "stats sidecar")->required();
    mcombine->add_option("-o,--output", out, "selected id pairs (TSV)")->required();
    mcombine->callback([&] {
        action = [&](const Config& c) {
            auto m = miner::parse_mining_mode(mode.empty() ? "max-strategy" : mode);
            if (m == miner::MiningMode::MaxStrategy) {
                if (cand_out.size() != 1) {
                    throw ConfigError("max-strategy writes exactly one candidate file");
                }
                pipeline::stages::combine_max(
                        to_paths(inputs), to_paths(backward), cand_out[0], stats_out, out, c);
            } else {
                if (!backward.empty()) {
                    throw ConfigError("forward-only mode takes no backward sweeps");
                }
                pipeline::stages::combine_forward_only(to_paths(inputs), to_paths(cand_out), stats_out, out, c);
            }
            return 0;
        };
    });

    // filter
    auto* filt = sub("filter", "Select pairs from candidate files at a margin threshold");
    filt->add_option("-i,--input", inputs, "candidate files (one per shard in forward-only mode)")->required();
    filt->add_option("--mode", mode, "max-strategy | forward-only [max-strategy]");
    filt->add_option("-o,--output", out, "selected id pairs (TSV), - for stdout")->required();
    filt->callback([&] {
        action = [&](const Config& c) {
            const double t = c.get_double("threshold");
            auto m = miner::parse_mining_mode(mode.empty() ? "max-strategy" : mode);
            std::vector<std::vector<miner::MarginCandidate>> shards;
            for (const auto& f : inputs) {
                shards.push_back(miner::read_candidates(f));
            }
            std::vector<miner::ScoredPair> pairs;
            if (m == miner::MiningMode::MaxStrategy) {
                std::vector<miner::MarginCandidate> all;
                for (auto& s : shards) {
                    all.insert(all.end(), s.begin(), s.end());
                }
                pairs = miner::max_strategy_select(std::move(all), t);
            } else {
                pairs = miner::forward_only_select_candidates(shards, t);
            }
            write_output(out, miner::format_pairs_tsv(pairs));
            return 0;
        };
    });

    // attach
    std::string src_lang, tgt_lang;
    auto* att = sub("attach", "Resolve selected id pairs to sentence text");
    att->add_option("-i,--input", in, "selected id pairs (TSV)")->required();
    att->add_option("--text-dir", text_dir)->required();
    att->add_option("--src", src_lang, "source language")->required();
    att->add_option("--tgt", tgt_lang, "target language")->required();
    att->add_option("-o,--output", out, "bitext TSV, - for stdout")->required();
    att->callback([&] {
        action = [&](const Config&) {
            pipeline::stages::attach(in, text_dir, src_lang, tgt_lang, out);
            return 0;
        };
    });

    // plant
    std::size_t n_pairs = 1000, n_distractors = 1000;
    double sigma = 0.1;
    std::string lang_a = "xa", lang_b = "xb";
    auto* plant = sub("plant", "Write a planted-pair synthetic corpus (uses --dim and --seed)");
    plant->add_option("--n-pairs", n_pairs, "gold pairs")->capture_default_str();
    plant->add_option("--n-distractors", n_distractors, "unpaired rows per side")->capture_default_str();
    plant->add_option("--sigma", sigma, "Gaussian noise before renormalization")->capture_default_str();
    plant->add_option("--lang-a", lang_a)->capture_default_str();
    plant->add_option("--lang-b", lang_b)->capture_default_str();
    plant->add_option("-o,--output", out, "output directory")->required();
    plant->callback([&] {
        action = [&](const Config& c) {
            auto corpus = evalkit::plant_corpus(
                    n_pairs, n_distractors, c.get_u32("dim"), sigma, c.get_u64("seed"), lang_a, lang_b);
            evalkit::write_planted(corpus, out);
            return 0;
        };
    });

    // score
    std::string gold;
    auto* sc = sub("score", "Precision, recall and F1 of selected pairs against gold");
    sc->add_option("-i,--input", in, "selected id pairs (TSV)")->required();
    sc->add_option("--gold", gold, "gold TSV a_id<TAB>b_id")->required()->check(CLI::ExistingFile);
    sc->add_option("-o,--output", out, "report TSV, - for stdout")->default_val("-");
    sc->callback([&] {
        action = [&](const Config& c) {
            auto pairs = miner::parse_pairs_tsv(read_file(in));
            auto g = evalkit::parse_gold_tsv(read_file(gold));
            evalkit::PRReport r = evalkit::score(pairs, g, c.get_double("threshold"));
            write_output(out, evalkit::format_sweep_tsv({&r, 1}));
            return 0;
        };
    });

    // sweep
    std::string thresholds = "1.0,1.02,1.04,1.06,1.08,1.1,1.15,1.2", grid;
    auto* sw = sub("sweep", "Precision/recall/F1 over a threshold list from one candidate set");
    sw->add_option("-i,--input", inputs, "candidate files")->required();
    sw->add_option("--gold", gold, "gold TSV")->required()->check(CLI::ExistingFile);
    sw->add_option("--thresholds", thresholds, "comma-separated, ascending")->capture_default_str();
    sw->add_option("--grid", grid, "lo:hi:step instead of --thresholds");
    sw->add_option("-o,--output", out, "plot TSV, - for stdout")->default_val("-");
    sw->callback([&] {
        action = [&](const Config& c) {
            std::vector<miner::MarginCandidate> all;
            for (const auto& f : inputs) {
                auto part = miner::read_candidates(f);
                all.insert(all.end(), part.begin(), part.end());
            }
            auto ts = parse_thresholds(thresholds, grid);
            auto g = evalkit::parse_gold_tsv(read_file(gold));
            auto reports = evalkit::sweep_threshold(all, g, ts, std::max(1u, c.get_u32("threads")));
            write_output(out, evalkit::format_sweep_tsv(reports));
            const auto& best = reports[evalkit::best_f1(reports)];
            std::fprintf(stderr, "best F1 %.4f at threshold %.4f (%zu pairs)\n", best.f1, best.threshold, best.accepted);
            return 0;
        };
    });

    // run
    bool dry_run = false;
    auto* run = sub("run", "Plan and execute the whole pipeline, reusing finished jobs");
    run->add_flag("--dry-run", dry_run, "print the plan and exit");
    run->callback([&] {
        action = [&](const Config& c) {
            if (dry_run) {
                auto p = pipeline::plan(c, pipeline::load_manifests(c));
                for (const auto& j : p.jobs) {
                    std::string line = j.id;
                    if (!j.deps.empty()) {
                        line += "  <-";
                        for (const auto& d : j.deps) {
                            line += " " + d;
                        }
                    }
                    std::fprintf(stderr, "%s\n", line.c_str());
                }
                if (!p.complete) {
                    std::fprintf(stderr, "(later stages are planned once the text task has run)\n");
                }
                return 0;
            }
            auto state = pipeline::run_pipeline(c, std::max(1u, c.get_u32("workers")));
            std::size_t reused = 0;
            for (const auto& [id, st] : state.jobs) {
                reused += st.status == pipeline::JobStatus::Done && !st.executed;
                if (st.status == pipeline::JobStatus::Failed) {
                    std::fprintf(stderr, "FAILED %s: %s\n", id.c_str(), st.error.c_str());
                }
            }
            std::fprintf(
                    stderr, "%zu jobs: %zu ran, %zu reused, %zu failed, %zu blocked\n", state.jobs.size(),
                    state.executed_count() - state.count(pipeline::JobStatus::Failed), reused,
                    state.count(pipeline::JobStatus::Failed), state.count(pipeline::JobStatus::Pending));
            return state.ok() ? 0 : kExitFailure;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    CLI::App* chosen = app.get_subcommands().front();
    if (chosen == mine) {
        chosen = mine->get_subcommands().front();
    }
    try {
        Config c = overrides.at(chosen).resolve();
        return action(c);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "ccmine: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "ccmine: %s\n", e.what());
        return kExitFailure;
    }
}
