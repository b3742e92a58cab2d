#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ehrgrid/error.hpp"

namespace ehrgrid {

// RFC-4180 reader: quoted fields may contain commas, doubled quotes, and
// newlines; CRLF and LF line endings both accepted. Input must be UTF-8.
class CsvReader {
public:
    explicit CsvReader(std::istream& in, std::string name = "<stream>")
        : in_(in), name_(std::move(name)) {}

    // Returns false at end of input. 1-based record number in record_number().
    bool next_row(std::vector<std::string>& row) {
        row.clear();
        int c = in_.get();
        if (c == EOF) return false;
        ++record_;
        std::string field;
        bool quoted = false;
        for (;;) {
            if (quoted) {
                if (c == EOF)
                    throw Error(ErrorCode::parse_error,
                                name_ + ": unterminated quoted field at record " +
                                    std::to_string(record_));
                if (c == '"') {
                    int d = in_.get();
                    if (d == '"') {
                        field.push_back('"');
                    } else {
                        quoted = false;
                        c = d;
                        continue;
                    }
                } else {
                    field.push_back(static_cast<char>(c));
                }
            } else if (c == '"' && field.empty()) {
                quoted = true;
            } else if (c == ',') {
                row.push_back(std::move(field));
                field.clear();
            } else if (c == '\n' || c == EOF) {
                break;
            } else if (c == '\r') {
                int d = in_.get();
                if (d == '\n' || d == EOF) break;
                field.push_back('\r');
                c = d;
                continue;
            } else {
                field.push_back(static_cast<char>(c));
            }
            c = in_.get();
        }
        row.push_back(std::move(field));
        return true;
    }

    std::int64_t record_number() const { return record_; }
    const std::string& name() const { return name_; }

private:
    std::istream& in_;
    std::string name_;
    std::int64_t record_ = 0;
};

inline void write_csv_field(std::ostream& out, std::string_view field) {
    bool need_quotes = field.find_first_of(",\"\n\r") != std::string_view::npos;
    if (!need_quotes) {
        out << field;
        return;
    }
    out << '"';
    for (char c : field) {
        if (c == '"') out << '"';
        out << c;
    }
    out << '"';
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        write_csv_field(out, row[i]);
    }
    out << '\n';
}

// Shortest digit string that round-trips through a double.
inline std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

inline std::optional<double> try_parse_double(std::string_view s) {
    double v;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<std::int64_t> try_parse_int(std::string_view s) {
    std::int64_t v;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace ehrgrid
