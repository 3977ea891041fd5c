#include <bitext/config.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>

namespace bitext::pipeline {

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
            {"workdir", "work", "directory receiving every artifact and the run journal", false},
            {"input_dir", "input", "directory holding {lang}.txt paragraph files", false},
            {"langs", "", "comma-separated language codes", true},
            {"pairs", "", "comma-separated src-tgt pairs, e.g. de-en,de-fr", true},
            {"forward_only_langs", "", "targets mined forward-only (sharded, no backward sweep)", true},
            {"block_capacity", "50000000", "sentences per block", true},
            {"max_chars", "500", "drop sentences longer than this (Unicode scalars)", true},
            {"lid", "builtin", "language identification: builtin | file | none", true},
            {"min_conf", "0.5", "minimum LID confidence", true},
            {"encoder", "trigram", "trigram (test encoder) | import ({input_dir}/{lang}.raw)", true},
            {"dim", "1024", "embedding dimension", true},
            {"seed", "0", "seed for the encoder, sampling and k-means", true},
            {"search", "exact", "exact | ivf", true},
            {"nlist", "256", "IVF cells", true},
            {"m", "16", "PQ sub-quantizers (dim must be divisible by m)", true},
            {"rotation", "false", "train an OPQ rotation before IVF-PQ", true},
            {"train_sample", "40000000", "rows sampled to train the index", true},
            {"retain_vectors", "false", "keep full vectors in shards for exact refinement", true},
            {"nprobe", "", "IVF cells visited per query (required for search=ivf)", true},
            {"refine", "false", "rescore IVF candidates with retained full vectors", true},
            {"shard_cap", "1000000", "maximum vectors per index shard", true},
            {"k", "16", "neighborhood size of the margin", true},
            {"threshold", "1.06", "margin threshold", true},
            {"stats_thresholds", "1.0,1.02,1.04,1.06,1.07,1.08,1.1,1.15,1.2",
             "thresholds reported in the stats sidecar", true},
            {"workers", "1", "pipeline jobs run in parallel", false},
            {"threads", "1", "threads inside one job", false},
    };
    return keys;
}

namespace {

std::string trim(std::string_view s) {
    auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

} // namespace

Config::Config() {
    for (const auto& k : config_keys()) {
        values_[k.name] = k.default_value;
    }
}

const ConfigKey& Config::key_info(std::string_view key) const {
    for (const auto& k : config_keys()) {
        if (key == k.name) {
            return k;
        }
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

Config Config::parse(std::string_view text, const std::string& what) {
    Config c;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        auto raw = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        ++line_no;
        std::string line = trim(raw);
        bool quoted_hash = false;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            auto q = line.find('"');
            quoted_hash = q != std::string::npos && q < hash;
            if (!quoted_hash) {
                line = trim(line.substr(0, hash));
            }
        }
        if (!line.empty()) {
            auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(what + ":" + std::to_string(line_no) + ": expected key = value");
            }
            auto key = trim(line.substr(0, eq));
            auto value = trim(line.substr(eq + 1));
            if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
                value = value.substr(1, value.size() - 2);
            }
            try {
                c.set(key, value);
            } catch (const ConfigError& e) {
                throw ConfigError(what + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
        if (nl == std::string_view::npos) {
            break;
        }
        start = nl + 1;
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError("config file not found: " + path.string());
    }
    return parse(read_file(path), path.string());
}

void Config::set(std::string_view key, std::string value) {
    key_info(key);
    values_.find(key)->second = std::move(value);
}

bool Config::has(std::string_view key) const {
    return !get(key).empty();
}

const std::string& Config::get(std::string_view key) const {
    key_info(key);
    return values_.find(key)->second;
}

std::uint64_t Config::get_u64(std::string_view key) const {
    const auto& v = get(key);
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc{} || p != v.data() + v.size()) {
        throw ConfigError("config key '" + std::string(key) + "' must be a non-negative integer, got '" + v + "'");
    }
    return out;
}

std::uint32_t Config::get_u32(std::string_view key) const {
    auto v = get_u64(key);
    if (v > 0xFFFFFFFFULL) {
        throw ConfigError("config key '" + std::string(key) + "' is out of range");
    }
    return static_cast<std::uint32_t>(v);
}

double Config::get_double(std::string_view key) const {
    const auto& v = get(key);
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) {
        throw ConfigError("config key '" + std::string(key) + "' must be a number, got '" + v + "'");
    }
    return out;
}

bool Config::get_bool(std::string_view key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw ConfigError("config key '" + std::string(key) + "' must be a boolean, got '" + v + "'");
}

std::vector<std::string> Config::get_list(std::string_view key) const {
    std::vector<std::string> out;
    const auto& v = get(key);
    std::size_t start = 0;
    while (start <= v.size()) {
        auto comma = v.find(',', start);
        auto item = trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (!item.empty()) {
            out.push_back(std::move(item));
        }
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

std::string Config::digest() const {
    std::string canonical;
    for (const auto& [k, v] : values_) {
        if (key_info(k).affects_output) {
            canonical += k + "=" + v + "\n";
        }
    }
    return sha256_hex(canonical);
}

std::string Config::to_text() const {
    std::string out;
    for (const auto& k : config_keys()) {
        out += std::string(k.name) + " = " + values_.find(k.name)->second + "\n";
    }
    return out;
}

} // namespace bitext::pipeline
