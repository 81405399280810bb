#include "mortcast/io.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mortcast {

std::size_t TextTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw DataError("missing column '" + name + "' in header");
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == delimiter) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

TextTable read_delimited(const std::filesystem::path& path, char delimiter) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path.string());

    TextTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        auto fields = split_line(line, delimiter);
        if (table.header.empty()) {
            table.header = std::move(fields);
        } else {
            table.rows.push_back({line_no, std::move(fields)});
        }
    }
    if (table.header.empty()) throw DataError("empty file: " + path.string());
    return table;
}

void write_delimited(const std::filesystem::path& path,
                     const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows,
                     char delimiter) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    const std::string delim(1, delimiter);
    for (std::size_t i = 0; i < header.size(); ++i)
        out << (i ? delim : "") << header[i];
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? delim : "") << row[i];
        out << '\n';
    }
}

std::string format_double(double v) {
    // Try increasing precision until the value round-trips.
    char buf[64];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

double parse_double(const std::string& s, std::size_t line, const std::string& what) {
    const char* begin = s.c_str();
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || errno == ERANGE) {
        throw DataError("line " + std::to_string(line) + ": cannot parse " + what +
                        " from '" + s + "'");
    }
    return v;
}

long long parse_integer(const std::string& s, std::size_t line, const std::string& what) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw DataError("line " + std::to_string(line) + ": cannot parse " + what +
                        " from '" + s + "'");
    }
    return v;
}

void ensure_parent_dir(const std::filesystem::path& path) {
    auto parent = path.parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

}  // namespace mortcast
