#pragma once

#include "mortcast/types.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mortcast {

// One parsed row of a delimited text file. `line` is the 1-based line number
// in the source file, kept for error diagnostics.
struct TextRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

struct TextTable {
    std::vector<std::string> header;
    std::vector<TextRow> rows;

    // Column index by header name; throws DataError if absent.
    std::size_t column(const std::string& name) const;
};

TextTable read_delimited(const std::filesystem::path& path, char delimiter = ',');

// Writes rows of preformatted cells. Deterministic: no timestamps, no locale.
void write_delimited(const std::filesystem::path& path,
                     const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows,
                     char delimiter = ',');

// Shortest text that round-trips the double exactly ("%.17g" fallback).
std::string format_double(double v);

double parse_double(const std::string& s, std::size_t line, const std::string& what);
long long parse_integer(const std::string& s, std::size_t line, const std::string& what);

void ensure_parent_dir(const std::filesystem::path& path);

}  // namespace mortcast
