#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace frito {

inline constexpr const char* kToolVersion = "0.1.0";

// Flat key=value config file: one pair per line, '#' lines and blank lines
// ignored, whitespace around keys and values trimmed. Keys in the reserved
// "run." namespace come from emitted manifests and are skipped on load, which
// lets a manifest be fed straight back in as a config file.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig load(const std::string& path);
    static KvConfig parse(const std::string& text, const std::string& origin);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string get_string(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;

    // Rejects keys outside the allowed set, naming the offender (typo guard).
    void restrict_keys(const std::vector<std::string>& allowed) const;

private:
    std::map<std::string, std::string> values_;
    std::string origin_ = "<none>";
};

// Record of one CLI run: subcommand, tool version, the fully resolved config,
// and the artifact paths it produced. Rendered as key=value text with the
// meta fields under "run.", so the file is also a loadable config.
class RunManifest {
public:
    RunManifest(std::string subcommand) : subcommand_(std::move(subcommand)) {}

    void set_config(const std::string& key, const std::string& value);
    void set_config(const std::string& key, std::uint64_t value);
    void set_config(const std::string& key, double value);
    void add_artifact(const std::string& name, const std::string& path);

    std::string render() const;
    // Writes render() to path and returns path.
    std::string write(const std::string& path) const;

private:
    std::string subcommand_;
    std::vector<std::pair<std::string, std::string>> config_;
    std::vector<std::pair<std::string, std::string>> artifacts_;
};

}  // namespace frito
