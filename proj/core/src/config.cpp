#include "npt/config.hpp"

#include <fstream>
#include <sstream>

#include "npt/common.hpp"

namespace npt {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(str_cat("cannot open ", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(trim(cur));
    return parts;
}

}  // namespace

Config Config::parse_text(const std::string& text, const std::set<std::string>* allowed) {
    Config cfg;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string stripped = trim(raw);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(str_cat("line ", lineno, ": expected key=value, got \"", stripped,
                                      "\""));
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw ConfigError(str_cat("line ", lineno, ": empty key"));
        if (allowed && allowed->count(key) == 0)
            throw ConfigError(str_cat("line ", lineno, ": unknown key \"", key, "\""));
        if (!cfg.values_.emplace(key, value).second)
            throw ConfigError(str_cat("line ", lineno, ": duplicate key \"", key, "\""));
    }
    return cfg;
}

Config Config::load(const std::string& path, const std::set<std::string>* allowed) {
    return parse_text(read_text_file(path), allowed);
}

std::string Config::str(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::real(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw ConfigError("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(str_cat("key \"", key, "\": not a number: \"", it->second, "\""));
    }
}

int Config::integer(const std::string& key, int fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const int v = std::stoi(it->second, &pos);
        if (pos != it->second.size()) throw ConfigError("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(str_cat("key \"", key, "\": not an integer: \"", it->second, "\""));
    }
}

std::uint64_t Config::u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw ConfigError("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(str_cat("key \"", key, "\": not an unsigned integer: \"", it->second,
                                  "\""));
    }
}

bool Config::boolean(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(str_cat("key \"", key, "\": not a boolean: \"", v, "\""));
}

std::vector<int> Config::int_list(const std::string& key, std::vector<int> fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (trim(it->second).empty()) return {};
    std::vector<int> out;
    for (const std::string& part : split_commas(it->second)) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stoi(part, &pos));
            if (pos != part.size()) throw ConfigError("");
        } catch (const std::exception&) {
            throw ConfigError(str_cat("key \"", key, "\": bad integer list element \"", part,
                                      "\""));
        }
    }
    return out;
}

std::vector<std::string> Config::str_list(const std::string& key,
                                          std::vector<std::string> fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (trim(it->second).empty()) return {};
    return split_commas(it->second);
}

const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        // dataset source
        "dataset.kind", "dataset.path", "dataset.train", "dataset.val", "dataset.test",
        "dataset.classes",
        // network architecture
        "net.conv1", "net.conv2", "net.kernel",
        // optimizer
        "sgd.learning_rate", "sgd.momentum", "sgd.decay_epochs", "sgd.decay_multiplier",
        "sgd.batch_size",
        // schedule
        "train.n1", "train.n2",
        // perturbation family parameters
        "perturb.randomization_width", "perturb.elastic_sigma", "perturb.occlusion_thickness",
        "perturb.wave_frequency",
        // attack
        "attack.epsilon", "attack.step", "attack.steps",
        // calibration
        "calibrate.target", "calibrate.tolerance", "calibrate.max_evals", "calibrate.repeats",
        "calibrate.batch_size",
        // matrix / ablation harness
        "matrix.repeats", "matrix.eval_batch", "matrix.include_multi", "matrix.include_augment",
        "matrix.attack_steps", "ablate.kinds", "ablate.rhos",
    };
    return keys;
}

std::uint64_t SeedManifest::get(const std::string& name) const {
    for (const auto& [k, v] : seeds)
        if (k == name) return v;
    throw ConfigError(str_cat("seed manifest: no entry named \"", name, "\""));
}

void SeedManifest::set(const std::string& name, std::uint64_t v) {
    for (auto& [k, existing] : seeds) {
        if (k == name) {
            existing = v;
            return;
        }
    }
    seeds.emplace_back(name, v);
}

std::string seed_manifest_text(const SeedManifest& manifest) {
    std::string out = str_cat("command=", manifest.command, "\n");
    for (const auto& [k, v] : manifest.seeds) out += str_cat(k, '=', v, '\n');
    return out;
}

SeedManifest parse_seed_manifest(const std::string& text) {
    SeedManifest m;
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
        const std::string stripped = trim(raw);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(str_cat("seed manifest: bad line \"", stripped, "\""));
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key == "command") {
            m.command = value;
        } else {
            try {
                std::size_t pos = 0;
                const std::uint64_t v = std::stoull(value, &pos);
                if (pos != value.size()) throw ConfigError("");
                m.seeds.emplace_back(key, v);
            } catch (const std::exception&) {
                throw ConfigError(str_cat("seed manifest: bad seed value \"", value, "\""));
            }
        }
    }
    return m;
}

void save_seed_manifest(const std::string& path, const SeedManifest& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(str_cat("cannot write ", path));
    out << seed_manifest_text(manifest);
}

SeedManifest load_seed_manifest(const std::string& path) {
    return parse_seed_manifest(read_text_file(path));
}

}  // namespace npt
