#include "frito/manifest.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "frito/errors.hpp"

namespace frito {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KvConfig KvConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse(buf.str(), path);
}

KvConfig KvConfig::parse(const std::string& text, const std::string& origin) {
    KvConfig cfg;
    cfg.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + t + "'");
        }
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        }
        if (key.rfind("run.", 0) == 0) continue;  // manifest meta fields
        cfg.values_[key] = trim(t.substr(eq + 1));
    }
    return cfg;
}

std::string KvConfig::get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "' in " + origin_);
    return it->second;
}

std::uint64_t KvConfig::get_u64(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t used = 0;
        const std::uint64_t n = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' has non-integer value '" + v + "' in " +
                          origin_);
    }
}

double KvConfig::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' has non-numeric value '" + v + "' in " +
                          origin_);
    }
}

void KvConfig::restrict_keys(const std::vector<std::string>& allowed) const {
    for (const auto& [key, value] : values_) {
        bool ok = false;
        for (const auto& a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ConfigError("unknown config key '" + key + "' in " + origin_);
    }
}

void RunManifest::set_config(const std::string& key, const std::string& value) {
    for (auto& [k, v] : config_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    config_.emplace_back(key, value);
}

void RunManifest::set_config(const std::string& key, std::uint64_t value) {
    set_config(key, std::to_string(value));
}

void RunManifest::set_config(const std::string& key, double value) {
    std::ostringstream os;
    os << std::setprecision(17) << value;
    set_config(key, os.str());
}

void RunManifest::add_artifact(const std::string& name, const std::string& path) {
    artifacts_.emplace_back(name, path);
}

std::string RunManifest::render() const {
    std::ostringstream os;
    os << "run.subcommand=" << subcommand_ << "\n";
    os << "run.tool_version=" << kToolVersion << "\n";
    for (const auto& [name, path] : artifacts_) os << "run.artifact." << name << "=" << path << "\n";
    for (const auto& [key, value] : config_) os << key << "=" << value << "\n";
    return os.str();
}

std::string RunManifest::write(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write manifest " + path);
    f << render();
    if (!f) throw IoError("write failed for manifest " + path);
    return path;
}

}  // namespace frito
