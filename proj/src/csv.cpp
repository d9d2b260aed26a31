#include "mcgrad/csv.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mcgrad {

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == name) return c;
    }
    throw std::out_of_range("csv: no column named " + name);
}

double CsvTable::number(std::size_t row, std::size_t col) const {
    const std::string& s = rows.at(row).at(col);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        throw std::invalid_argument("csv: not a number: '" + s + "'");
    }
    return v;
}

double CsvTable::number(std::size_t row, const std::string& name) const {
    return number(row, column(name));
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) {
        throw std::runtime_error("format_double failed");
    }
    return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const CsvTable& table) {
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (c) out << ',';
            out << fields[c];
        }
        out << '\n';
    };
    line(table.header);
    for (const auto& r : table.rows) {
        if (r.size() != table.header.size()) {
            throw std::invalid_argument("csv: row width does not match header");
        }
        line(r);
    }
}

void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    write_csv(out, table);
    if (!out) {
        throw std::runtime_error("write to " + path + " failed");
    }
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

} // namespace

CsvTable read_csv(std::istream& in, const std::string& source) {
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw std::runtime_error(source + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(t.header.size()) + " fields, got " +
                                     std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty()) {
        throw std::runtime_error(source + ": empty csv");
    }
    return t;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return read_csv(in, path);
}

} // namespace mcgrad
