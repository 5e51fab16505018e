#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace npt {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key=value configuration text. Lines are `key = value`; blank lines and
// `#` comments are ignored. Duplicate keys and keys outside the allowed set
// are errors, so typos fail loudly instead of silently using defaults.
class Config {
public:
    static Config parse_text(const std::string& text,
                             const std::set<std::string>* allowed = nullptr);
    static Config load(const std::string& path, const std::set<std::string>* allowed = nullptr);

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string str(const std::string& key, const std::string& fallback) const;
    double real(const std::string& key, double fallback) const;
    int integer(const std::string& key, int fallback) const;
    std::uint64_t u64(const std::string& key, std::uint64_t fallback) const;
    bool boolean(const std::string& key, bool fallback) const;
    // comma-separated integers, e.g. "6,9"
    std::vector<int> int_list(const std::string& key, std::vector<int> fallback) const;
    std::vector<std::string> str_list(const std::string& key,
                                      std::vector<std::string> fallback) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// Every key the lab CLI understands; mirrors the option-struct fields.
const std::set<std::string>& known_config_keys();

// ---- seed manifests ----------------------------------------------------------
// One `name=seed` line per entry plus the command line that produced the run;
// feeding the manifest back replays the run byte for byte.

struct SeedManifest {
    std::string command;
    std::vector<std::pair<std::string, std::uint64_t>> seeds;

    std::uint64_t get(const std::string& name) const;
    void set(const std::string& name, std::uint64_t v);
};

std::string seed_manifest_text(const SeedManifest& manifest);
SeedManifest parse_seed_manifest(const std::string& text);
void save_seed_manifest(const std::string& path, const SeedManifest& manifest);
SeedManifest load_seed_manifest(const std::string& path);

}  // namespace npt
