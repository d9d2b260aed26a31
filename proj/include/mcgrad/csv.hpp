#pragma once

// Minimal CSV tables: comma separated, one header row, no quoting (fields
// are numbers or identifiers).

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace mcgrad {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
    double number(std::size_t row, std::size_t col) const;
    double number(std::size_t row, const std::string& name) const;
};

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

void write_csv(std::ostream& out, const CsvTable& table);
void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(std::istream& in, const std::string& source = "<stream>");
CsvTable read_csv(const std::string& path);

} // namespace mcgrad
