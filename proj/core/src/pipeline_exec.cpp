#include <bitext/pipeline.hpp>

#include <json.hpp>

#include <condition_variable>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

namespace bitext::pipeline {

namespace fs = std::filesystem;

const char* to_string(JobStatus s) {
    switch (s) {
        case JobStatus::Pending: return "pending";
        case JobStatus::Running: return "running";
        case JobStatus::Done: return "done";
        case JobStatus::Failed: return "failed";
    }
    return "?";
}

namespace {

JobStatus parse_status(const std::string& s) {
    for (auto st : {JobStatus::Pending, JobStatus::Running, JobStatus::Done, JobStatus::Failed}) {
        if (s == to_string(st)) {
            return st;
        }
    }
    throw FormatError("journal: unknown job status '" + s + "'");
}

} // namespace

bool RunState::ok() const {
    return count(JobStatus::Failed) == 0;
}

std::size_t RunState::count(JobStatus s) const {
    std::size_t n = 0;
    for (const auto& [id, st] : jobs) {
        n += st.status == s;
    }
    return n;
}

std::size_t RunState::executed_count() const {
    std::size_t n = 0;
    for (const auto& [id, st] : jobs) {
        n += st.executed;
    }
    return n;
}

Journal::Journal(fs::path path) : path_(std::move(path)) {
    if (!fs::exists(path_)) {
        return;
    }
    text_ = read_file(path_);
    std::size_t start = 0, line_no = 0;
    while (start < text_.size()) {
        auto nl = text_.find('\n', start);
        auto end = nl == std::string::npos ? text_.size() : nl;
        ++line_no;
        auto line = std::string_view(text_).substr(start, end - start);
        start = end + 1;
        if (line.empty()) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(line);
            JobState st;
            st.status = parse_status(j.at("status").get<std::string>());
            st.key = j.value("key", "");
            st.error = j.value("error", "");
            if (j.contains("outputs")) {
                st.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
            }
            last_[j.at("job").get<std::string>()] = std::move(st);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void Journal::record(const std::string& job, const JobState& state, bool reused) {
    nlohmann::ordered_json j;
    j["job"] = job;
    j["status"] = to_string(state.status);
    if (!state.key.empty()) {
        j["key"] = state.key;
    }
    if (state.status == JobStatus::Done) {
        j["outputs"] = state.outputs;
        j["reused"] = reused;
    }
    if (!state.error.empty()) {
        j["error"] = state.error;
    }
    text_ += j.dump() + "\n";
    last_[job] = state;
    if (path_.has_parent_path()) {
        fs::create_directories(path_.parent_path());
    }
    write_file_atomic(path_, text_);
}

namespace {

std::vector<fs::path> run_job(const JobSpec& job, const Config& config, const Layout& layout) {
    switch (job.stage) {
        case Stage::Preprocess: {
            std::optional<fs::path> lid;
            if (job.sources.size() > 1) {
                lid = job.sources[1];
            }
            auto written = stages::preprocess(
                    job.sources.at(0), job.lang, layout.text_dir(), layout.scratch_dir(job.lang), config, lid);
            std::error_code ec;
            fs::remove(layout.scratch_dir(job.lang).parent_path(), ec); // only succeeds once empty
            return written;
        }
        case Stage::Embed:
            if (config.get("encoder") == "import") {
                return stages::import_block(
                        job.sources.at(0), layout.text_dir(), job.lang, job.block, job.outputs.at(0), config);
            }
            return stages::embed(layout.text_dir(), job.lang, job.block, job.outputs.at(0), config);
        case Stage::IndexTrain:
            return stages::index_train(job.sources, job.outputs.at(0), config);
        case Stage::IndexAdd:
            return stages::index_add(job.sources.at(0), job.sources.at(1), job.outputs.at(0), config);
        case Stage::IndexMerge:
            return stages::index_merge(job.sources, job.outputs.at(0));
        case Stage::MineFwd:
            return stages::sweep(job.sources, job.targets, Direction::Forward, job.outputs.at(0), config);
        case Stage::MineBwd:
            return stages::sweep(job.sources, job.targets, Direction::Backward, job.outputs.at(0), config);
        case Stage::MineCombine: {
            const auto n = job.outputs.size();
            if (mode_for(config, *job.pair) == miner::MiningMode::MaxStrategy) {
                return stages::combine_max(
                        job.sources, job.targets, job.outputs.at(0), job.outputs.at(1), job.outputs.at(2), config);
            }
            std::vector<fs::path> cands(job.outputs.begin(), job.outputs.end() - 2);
            return stages::combine_forward_only(job.sources, cands, job.outputs[n - 2], job.outputs[n - 1], config);
        }
        case Stage::Attach:
            return stages::attach(
                    job.sources.at(0), layout.text_dir(), job.pair->src, job.pair->tgt, job.outputs.at(0));
    }
    throw std::logic_error("unhandled stage");
}

class DigestCache {
   public:
    std::string get(const fs::path& p) {
        {
            std::lock_guard lock(mu_);
            if (auto it = cache_.find(p.string()); it != cache_.end()) {
                return it->second;
            }
        }
        if (!fs::exists(p)) {
            throw Error("missing input " + p.string());
        }
        auto d = sha256_file(p);
        std::lock_guard lock(mu_);
        cache_[p.string()] = d;
        return d;
    }

   private:
    std::mutex mu_;
    std::unordered_map<std::string, std::string> cache_;
};

std::string job_key(const JobSpec& job, DigestCache& digests) {
    std::string canonical = job.id + "\n" + to_string(job.stage) + "\n" + job.config_digest + "\n";
    for (const auto& in : job.inputs) {
        canonical += in.string() + "\t" + digests.get(in) + "\n";
    }
    return sha256_hex(canonical);
}

bool outputs_intact(const JobState& st) {
    if (st.outputs.empty()) {
        return false;
    }
    for (const auto& [path, digest] : st.outputs) {
        if (!fs::exists(path) || sha256_file(path) != digest) {
            return false;
        }
    }
    return true;
}

} // namespace

void execute(const Plan& plan, const Config& config, unsigned workers, Journal& journal, RunState& state) {
    const Layout layout(config);
    const std::size_t n = plan.jobs.size();
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) {
        index[plan.jobs[i].id] = i;
    }
    std::vector<std::vector<std::size_t>> dependents(n);
    std::vector<std::size_t> waiting(n, 0);
    std::set<std::size_t> ready;
    std::mutex mu;
    std::condition_variable cv;
    std::size_t running = 0;

    auto finished = [&](std::size_t i) {
        auto it = state.jobs.find(plan.jobs[i].id);
        return it != state.jobs.end() && it->second.status == JobStatus::Done;
    };
    std::vector<bool> skip(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& job = plan.jobs[i];
        skip[i] = finished(i);
        if (!skip[i]) {
            state.jobs[job.id] = JobState{};
        }
        for (const auto& d : job.deps) {
            auto it = index.find(d);
            if (it == index.end()) {
                auto st = state.jobs.find(d);
                if (st == state.jobs.end() || st->second.status != JobStatus::Done) {
                    throw std::logic_error("execute: dependency " + d + " of " + job.id + " is not planned");
                }
                continue;
            }
            dependents[it->second].push_back(i);
            if (!finished(it->second)) {
                ++waiting[i];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!skip[i] && waiting[i] == 0) {
            ready.insert(i);
        }
    }

    DigestCache digests;
    auto worker = [&] {
        std::unique_lock lock(mu);
        for (;;) {
            cv.wait(lock, [&] { return !ready.empty() || running == 0; });
            if (ready.empty()) {
                return;
            }
            const std::size_t i = *ready.begin();
            ready.erase(ready.begin());
            ++running;
            const JobSpec& job = plan.jobs[i];
            bool deps_ran = false;
            for (const auto& d : job.deps) {
                deps_ran = deps_ran || state.jobs[d].executed;
            }
            JobState prior;
            if (auto it = journal.last().find(job.id); it != journal.last().end()) {
                prior = it->second;
            }
            lock.unlock();

            JobState result;
            bool reused = false;
            try {
                result.key = job_key(job, digests);
                if (!deps_ran && prior.status == JobStatus::Done && prior.key == result.key && outputs_intact(prior)) {
                    result.outputs = prior.outputs;
                    reused = true;
                } else {
                    {
                        std::lock_guard g(mu);
                        JobState r;
                        r.status = JobStatus::Running;
                        r.key = result.key;
                        state.jobs[job.id] = r;
                        journal.record(job.id, r);
                    }
                    for (const auto& out : run_job(job, config, layout)) {
                        result.outputs[out.string()] = sha256_file(out);
                    }
                    result.executed = true;
                }
                result.status = JobStatus::Done;
            } catch (const std::exception& e) {
                result.status = JobStatus::Failed;
                result.executed = true;
                result.error = e.what();
            }

            lock.lock();
            state.jobs[job.id] = result;
            journal.record(job.id, result, reused);
            --running;
            if (result.status == JobStatus::Done) {
                for (auto d : dependents[i]) {
                    if (--waiting[d] == 0) {
                        ready.insert(d);
                    }
                }
            }
            cv.notify_all();
        }
    };

    const unsigned w = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < w; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
}

RunState run_pipeline(const Config& config, unsigned workers) {
    Layout layout(config);
    Journal journal(layout.journal());
    RunState state;
    auto text_plan = plan(config, {});
    execute(text_plan, config, workers, journal, state);
    if (!state.ok()) {
        return state;
    }
    auto full = plan(config, load_manifests(config));
    execute(full, config, workers, journal, state);
    return state;
}

} // namespace bitext::pipeline
