#pragma once

#include <string>
#include <vector>

namespace tabattack::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// RFC-4180 reader: comma-separated, optional double-quoted fields with ""
/// escapes, CRLF or LF line ends. First record is the header.
Table read_file(const std::string& path);
Table parse(const std::string& text);

/// Writes fields verbatim, quoting only when a field contains , " or a newline.
void write_file(const std::string& path, const Table& table);

/// Shortest round-trip decimal form of v (std::to_chars).
std::string format_double(double v);

/// Strict finite-double parse of an entire field; returns false on any junk.
bool parse_double(const std::string& field, double& out);

}  // namespace tabattack::csv
