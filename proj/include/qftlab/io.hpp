#pragma once

// Deterministic tabular output: CSV with a config-hash comment line, or an
// equivalent JSON document. Numbers are printed with 17 significant digits.

#include <cstdint>
#include <cstdio>
#include <json.hpp>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace qftlab::io {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& s)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the canonical (key-sorted, compact) JSON form.
inline std::string config_hash(const nlohmann::json& descriptor) { return hex64(fnv1a64(descriptor.dump())); }

inline std::string format_number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

using Cell = std::variant<double, std::string>;

class Table {
public:
    explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add(std::vector<Cell> row)
    {
        if (row.size() != columns_.size()) throw std::logic_error("Table: row width mismatch");
        rows_.push_back(std::move(row));
    }

    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<Cell>>& rows() const { return rows_; }

    void write_csv(std::ostream& os, const std::string& hash) const
    {
        os << "# config_hash=" << hash << '\n';
        for (std::size_t i = 0; i < columns_.size(); ++i) os << (i ? "," : "") << columns_[i];
        os << '\n';
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) os << ',';
                if (const auto* d = std::get_if<double>(&r[i])) os << format_number(*d);
                else os << std::get<std::string>(r[i]);
            }
            os << '\n';
        }
    }

    nlohmann::json to_json(const std::string& hash) const
    {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : rows_) {
            nlohmann::json obj = nlohmann::json::object();
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (const auto* d = std::get_if<double>(&r[i])) obj[columns_[i]] = *d;
                else obj[columns_[i]] = std::get<std::string>(r[i]);
            }
            rows.push_back(std::move(obj));
        }
        return nlohmann::json{{"config_hash", hash}, {"columns", columns_}, {"rows", std::move(rows)}};
    }

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<Cell>> rows_;
};

} // namespace qftlab::io
