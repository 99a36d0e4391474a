#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gradenav/errors.hpp"

namespace gradenav::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& field, const std::string& where) {
    const std::string t = trim(field);
    double v = 0.0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size())
        throw ConfigError("malformed numeric field '" + field + "' " + where);
    return v;
}

/// Reads a numeric CSV with a one-line header. Short rows are an error,
/// trailing columns beyond the header are ignored.
inline Table read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    Table t;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split(line);
        if (t.header.empty()) {
            for (auto& f : fields) t.header.push_back(trim(f));
            continue;
        }
        if (fields.size() < t.header.size())
            throw ConfigError("row with " + std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(t.header.size()) + " at " + path + ":" + std::to_string(lineno));
        std::vector<double> row;
        row.reserve(t.header.size());
        for (std::size_t i = 0; i < t.header.size(); ++i)
            row.push_back(parse_double(fields[i], "at " + path + ":" + std::to_string(lineno)));
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw ConfigError("empty CSV file '" + path + "'");
    return t;
}

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path) {
        if (!out_) throw ConfigError("cannot write '" + path + "'");
        out_.precision(12);
    }
    void header(const std::vector<std::string>& names) {
        for (std::size_t i = 0; i < names.size(); ++i)
            out_ << (i ? "," : "") << names[i];
        out_ << "\n";
    }
    void row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i)
            out_ << (i ? "," : "") << values[i];
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

}  // namespace gradenav::csv
