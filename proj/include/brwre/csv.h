#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace brwre {

using Cell = std::variant<std::string, double, std::int64_t, std::uint64_t, bool>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void addRow(std::vector<Cell> row);
};

/// Shortest round-trip decimal form; "inf", "-inf" and "nan" for the rest.
std::string formatDouble(double value);
std::string formatCell(const Cell& cell);

/// RFC-4180 field quoting.
std::string csvEscape(const std::string& field);

/// Header row then data rows, CRLF line endings.
void writeCsv(std::ostream& out, const Table& table);

}  // namespace brwre
