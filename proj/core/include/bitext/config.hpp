#pragma once

#include <bitext/common.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace bitext::pipeline {

struct ConfigKey {
    const char* name;
    const char* default_value; // "" means unset
    const char* help;
    /// Part of the config digest. Paths and parallelism are not: they do
    /// not change artifact bytes.
    bool affects_output;
};

/// Every recognised key, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Flat key=value configuration. Lines are `key = value`; `#` starts a
/// comment; values may be double-quoted. Unknown keys are errors.
class Config {
   public:
    /// All keys at their defaults.
    Config();

    static Config parse(std::string_view text, const std::string& what = "config");
    static Config load(const std::filesystem::path& path);

    void set(std::string_view key, std::string value);
    bool has(std::string_view key) const; // set to a non-empty value

    const std::string& get(std::string_view key) const;
    std::uint64_t get_u64(std::string_view key) const;
    std::uint32_t get_u32(std::string_view key) const;
    double get_double(std::string_view key) const;
    bool get_bool(std::string_view key) const;
    /// Comma-separated list, whitespace trimmed, empty items dropped.
    std::vector<std::string> get_list(std::string_view key) const;

    /// sha256 over the sorted output-affecting keys.
    std::string digest() const;
    std::string to_text() const;

   private:
    const ConfigKey& key_info(std::string_view key) const;
    std::map<std::string, std::string, std::less<>> values_;
};

} // namespace bitext::pipeline
