#include "leveldot/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace leveldot {

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

double parse_double(std::string_view text) {
    std::string s(text);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.pop_back();
    std::size_t start = s.find_first_not_of(' ');
    if (start == std::string::npos) throw std::invalid_argument("empty numeric field");
    const char* begin = s.c_str() + start;
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        std::string_view field = line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos);
        while (!field.empty() && (field.front() == ' ')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
        out.emplace_back(field);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw std::invalid_argument("missing CSV column '" + std::string(name) + "'");
}

CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            t.comments.push_back(line);
            continue;
        }
        auto fields = split_csv_line(line);
        if (t.columns.empty()) {
            t.columns = std::move(fields);
            continue;
        }
        if (fields.size() != t.columns.size())
            throw std::invalid_argument("CSV row has " + std::to_string(fields.size()) +
                                        " fields, header has " + std::to_string(t.columns.size()));
        t.rows.push_back(std::move(fields));
    }
    if (t.columns.empty()) throw std::invalid_argument("CSV has no header row");
    return t;
}

}  // namespace leveldot
