#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gradenav/csv.hpp"
#include "gradenav/errors.hpp"

namespace gradenav {

/// Parsed key/value config, TOML-style sections with scalar, string and
/// numeric-array values:
///
///   [noise]
///   sigma_v = 0.25        # comment
///   seeds = [1, 2, 3]
///   scenario = "localization_mc"
class Config {
public:
    Config() = default;

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config '" + path + "'");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return parse(text, path);
    }

    static Config parse(const std::string& text, const std::string& origin = "<string>") {
        Config cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = find_comment(line);
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = csv::trim(line);
            if (line.empty()) continue;
            const std::string where = origin + ":" + std::to_string(lineno);
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError("unterminated section header at " + where);
                section = csv::trim(line.substr(1, line.size() - 2));
                if (section.empty()) throw ConfigError("empty section name at " + where);
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("expected 'key = value' at " + where);
            std::string key = csv::trim(line.substr(0, eq));
            std::string value = csv::trim(line.substr(eq + 1));
            if (key.empty() || value.empty()) throw ConfigError("expected 'key = value' at " + where);
            cfg.entries_[section + "." + key] = Entry{value, where};
        }
        return cfg;
    }

    bool has(const std::string& section, const std::string& key) const {
        return entries_.count(section + "." + key) > 0;
    }

    double number(const std::string& section, const std::string& key) const {
        const Entry& e = entry(section, key);
        return csv::parse_double(e.raw, "in " + e.where);
    }
    double number_or(const std::string& section, const std::string& key, double fallback) const {
        return has(section, key) ? number(section, key) : fallback;
    }
    long integer_or(const std::string& section, const std::string& key, long fallback) const {
        if (!has(section, key)) return fallback;
        double v = number(section, key);
        long n = static_cast<long>(v);
        if (static_cast<double>(n) != v)
            throw ConfigError("expected integer for " + section + "." + key);
        return n;
    }

    std::string string_or(const std::string& section, const std::string& key,
                          const std::string& fallback) const {
        if (!has(section, key)) return fallback;
        std::string raw = entry(section, key).raw;
        if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
            return raw.substr(1, raw.size() - 2);
        return raw;
    }

    std::vector<double> numbers_or(const std::string& section, const std::string& key,
                                   std::vector<double> fallback = {}) const {
        if (!has(section, key)) return fallback;
        const Entry& e = entry(section, key);
        std::string raw = e.raw;
        if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']')
            throw ConfigError("expected array [..] for " + section + "." + key + " in " + e.where);
        raw = csv::trim(raw.substr(1, raw.size() - 2));
        std::vector<double> out;
        if (raw.empty()) return out;
        for (const auto& f : csv::split(raw))
            out.push_back(csv::parse_double(f, "in " + e.where));
        return out;
    }

    /// Overlay: values in `other` win.
    void merge(const Config& other) {
        for (const auto& [k, v] : other.entries_) entries_[k] = v;
    }

private:
    struct Entry {
        std::string raw;
        std::string where;
    };

    const Entry& entry(const std::string& section, const std::string& key) const {
        auto it = entries_.find(section + "." + key);
        if (it == entries_.end())
            throw ConfigError("missing config key " + section + "." + key);
        return it->second;
    }

    // '#' starts a comment unless inside a quoted string
    static std::size_t find_comment(const std::string& line) {
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) return i;
        }
        return std::string::npos;
    }

    std::map<std::string, Entry> entries_;
};

}  // namespace gradenav
