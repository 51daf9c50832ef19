#pragma once

#include "icmpc/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace icmpc::cfg {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct KeySpec {
    const char* key;
    const char* def;
    const char* help;
};

/// Flat `key = value` configuration with a closed key registry: unknown keys
/// are rejected, every key has a default, and the effective (merged) config
/// can be echoed back out.
class Config {
public:
    Config() = default;

    /// Parses a config file: one `key = value` per line, '#' starts a
    /// comment line, blank lines ignored.
    static Config from_file(const std::string& path);

    /// Applies a "key=value" override (flags win over the file).
    void set_pair(const std::string& pair);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key) const;
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    Vec get_vec(const std::string& key) const;                 // comma-separated doubles
    std::vector<std::string> get_list(const std::string& key) const; // comma-separated tokens

    /// All keys with defaults overlaid by explicit settings, as file text.
    std::string effective_text() const;
    void echo_to(const std::string& path) const;

    static const std::vector<KeySpec>& registry();
    static std::string registry_help();

private:
    std::map<std::string, std::string> values_;

    static const KeySpec& spec_for(const std::string& key);
};

} // namespace icmpc::cfg
