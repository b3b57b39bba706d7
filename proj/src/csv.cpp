#include "tabattack/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tabattack::csv {

namespace {

std::vector<std::vector<std::string>> parse_records(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    size_t i = 0;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
    };
    while (i < text.size()) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    i += 2;
                } else {
                    in_quotes = false;
                    ++i;
                }
            } else {
                field.push_back(c);
                ++i;
            }
        } else if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
            ++i;
        } else if (c == ',') {
            end_field();
            ++i;
        } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
            end_record();
            i += 2;
        } else if (c == '\n') {
            end_record();
            ++i;
        } else {
            field.push_back(c);
            field_started = true;
            ++i;
        }
    }
    if (in_quotes) throw std::runtime_error("csv: unterminated quoted field");
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

bool needs_quoting(const std::string& s) {
    return s.find_first_of(",\"\n\r") != std::string::npos;
}

}  // namespace

Table parse(const std::string& text) {
    auto records = parse_records(text);
    if (records.empty()) throw std::runtime_error("csv: empty input, expected a header row");
    Table t;
    t.header = std::move(records.front());
    t.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
    for (size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r].size() != t.header.size()) {
            throw std::runtime_error("csv: row " + std::to_string(r) + " has " + std::to_string(t.rows[r].size()) +
                                     " fields, header has " + std::to_string(t.header.size()));
        }
    }
    return t;
}

Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open CSV file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void write_file(const std::string& path, const Table& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write CSV file: " + path);
    auto write_row = [&](const std::vector<std::string>& row) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            if (needs_quoting(row[i])) {
                out << '"';
                for (char c : row[i]) {
                    if (c == '"') out << "\"\"";
                    else out << c;
                }
                out << '"';
            } else {
                out << row[i];
            }
        }
        out << "\r\n";
    };
    write_row(table.header);
    for (const auto& row : table.rows) write_row(row);
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

bool parse_double(const std::string& field, double& out) {
    if (field.empty()) return false;
    const char* begin = field.data();
    const char* end = begin + field.size();
    double parsed = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, parsed, std::chars_format::general);
    if (ec != std::errc{} || ptr != end || !std::isfinite(parsed)) return false;
    out = parsed;
    return true;
}

}  // namespace tabattack::csv
