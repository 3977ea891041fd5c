#include <bitext/miner.hpp>

#include <json.hpp>

#include <algorithm>
#include <cstdio>

namespace bitext::miner {

const char* to_string(MiningMode mode) {
    return mode == MiningMode::MaxStrategy ? "max-strategy" : "forward-only";
}

MiningMode parse_mining_mode(std::string_view s) {
    if (s == "max-strategy" || s == "max") {
        return MiningMode::MaxStrategy;
    }
    if (s == "forward-only" || s == "forward") {
        return MiningMode::ForwardOnly;
    }
    throw ConfigError("unknown mining mode '" + std::string(s) + "'");
}

void MiningConfig::validate() const {
    if (k == 0) {
        throw ConfigError("k must be >= 1");
    }
    if (!(threshold > 0.0)) {
        throw ConfigError("threshold must be > 0");
    }
}

namespace {

double neighborhood_sum(std::span<const float> sims) {
    double s = 0.0;
    for (float x : sims) {
        s += x;
    }
    return s;
}

} // namespace

double margin(
        double cos_xy,
        std::span<const float> x_neighbor_sims,
        std::span<const float> y_neighbor_sims,
        std::uint32_t k) {
    const double two_k = 2.0 * k;
    double denom = neighborhood_sum(x_neighbor_sims) / two_k + neighborhood_sum(y_neighbor_sims) / two_k;
    return cos_xy / denom;
}

double forward_only_margin(double cos_xy, std::span<const float> x_neighbor_sims, std::uint32_t k) {
    const double two_k = 2.0 * k;
    double term = neighborhood_sum(x_neighbor_sims) / two_k;
    return cos_xy / (2.0 * term);
}

bool passes(float margin, double threshold) {
    return margin >= static_cast<float>(threshold);
}

MarginStats& MarginStats::operator+=(const MarginStats& o) {
    forward_candidates += o.forward_candidates;
    backward_candidates += o.backward_candidates;
    dropped_missing_counterpart += o.dropped_missing_counterpart;
    dropped_denominator += o.dropped_denominator;
    dropped_nonpositive += o.dropped_nonpositive;
    unique_pairs += o.unique_pairs;
    for (const auto& [t, n] : o.accepted) {
        accepted[t] += n;
    }
    return *this;
}

std::string MarginStats::to_json() const {
    nlohmann::ordered_json j;
    j["forward_candidates"] = forward_candidates;
    j["backward_candidates"] = backward_candidates;
    j["dropped_missing_counterpart"] = dropped_missing_counterpart;
    j["dropped_denominator"] = dropped_denominator;
    j["dropped_nonpositive_margin"] = dropped_nonpositive;
    j["unique_pairs"] = unique_pairs;
    j["accepted"] = nlohmann::ordered_json::object();
    for (const auto& [t, n] : accepted) {
        j["accepted"][t] = n;
    }
    return j.dump(2) + "\n";
}

namespace {

std::unordered_map<GlobalId, const NeighborList*> index_lists(const NeighborFile& f, const char* what) {
    std::unordered_map<GlobalId, const NeighborList*> out;
    out.reserve(f.lists.size());
    for (const auto& l : f.lists) {
        if (l.size() > f.k || l.ids.size() != l.sims.size()) {
            throw FormatError(std::string(what) + ": malformed list for query " + std::to_string(l.query_id));
        }
        if (!out.emplace(l.query_id, &l).second) {
            throw FormatError(std::string(what) + ": query " + std::to_string(l.query_id) + " appears twice");
        }
    }
    return out;
}

std::uint64_t count_unique(const std::vector<MarginCandidate>& c) {
    std::vector<std::pair<GlobalId, GlobalId>> keys;
    keys.reserve(c.size());
    for (const auto& x : c) {
        keys.emplace_back(x.src_id, x.tgt_id);
    }
    std::sort(keys.begin(), keys.end());
    return static_cast<std::uint64_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

// Scores one sweep. `own` are the query lists; `other` the opposite sweep.
void score_sweep(
        const NeighborFile& own,
        const std::unordered_map<GlobalId, const NeighborList*>& other,
        bool own_is_forward,
        std::vector<MarginCandidate>& out,
        MarginStats& stats) {
    const std::uint32_t k = own.k;
    for (const auto& list : own.lists) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            GlobalId nb = list.ids[i];
            (own_is_forward ? stats.forward_candidates : stats.backward_candidates)++;
            auto it = other.find(nb);
            if (it == other.end()) {
                ++stats.dropped_missing_counterpart;
                continue;
            }
            const double two_k = 2.0 * k;
            double denom = neighborhood_sum(list.sims) / two_k + neighborhood_sum(it->second->sims) / two_k;
            if (!(denom > 0.0)) {
                ++stats.dropped_denominator;
                continue;
            }
            double m = margin(list.sims[i], list.sims, it->second->sims, k);
            auto mf = static_cast<float>(m);
            if (!(mf > 0.0f)) {
                ++stats.dropped_nonpositive;
                continue;
            }
            MarginCandidate c;
            c.margin = mf;
            if (own_is_forward) {
                c.src_id = list.query_id;
                c.tgt_id = nb;
                c.direction = Direction::Forward;
            } else {
                c.src_id = nb;
                c.tgt_id = list.query_id;
                c.direction = Direction::Backward;
            }
            out.push_back(c);
        }
    }
}

} // namespace

std::vector<MarginCandidate> margin_scores(
        const NeighborFile& forward,
        const NeighborFile& backward,
        MarginStats* stats) {
    if (forward.k != backward.k) {
        throw ConfigError(
                "margin_scores: k mismatch between directions (" + std::to_string(forward.k) + " vs " +
                std::to_string(backward.k) + ")");
    }
    if (forward.k == 0) {
        throw ConfigError("margin_scores: k must be >= 1");
    }
    auto fwd = index_lists(forward, "forward neighbors");
    auto bwd = index_lists(backward, "backward neighbors");
    MarginStats local;
    std::vector<MarginCandidate> out;
    score_sweep(forward, bwd, true, out, local);
    score_sweep(backward, fwd, false, out, local);
    local.unique_pairs = count_unique(out);
    if (stats) {
        *stats += local;
    }
    return out;
}

std::vector<MarginCandidate> forward_only_scores(const NeighborFile& forward, MarginStats* stats) {
    if (forward.k == 0) {
        throw ConfigError("forward_only_scores: k must be >= 1");
    }
    index_lists(forward, "forward neighbors");
    MarginStats local;
    std::vector<MarginCandidate> out;
    for (const auto& list : forward.lists) {
        double denom = neighborhood_sum(list.sims) / forward.k;
        for (std::size_t i = 0; i < list.size(); ++i) {
            ++local.forward_candidates;
            if (!(denom > 0.0)) {
                ++local.dropped_denominator;
                continue;
            }
            auto mf = static_cast<float>(forward_only_margin(list.sims[i], list.sims, forward.k));
            if (!(mf > 0.0f)) {
                ++local.dropped_nonpositive;
                continue;
            }
            out.push_back({list.query_id, list.ids[i], mf, Direction::Forward});
        }
    }
    local.unique_pairs = count_unique(out);
    if (stats) {
        *stats += local;
    }
    return out;
}

} // namespace bitext::miner
