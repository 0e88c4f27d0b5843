#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace leveldot {

/// Shortest-safe decimal text for a double: 17 significant digits, so that
/// parsing it back yields the same bits. Non-finite values print as inf,
/// -inf or nan.
std::string format_double(double x);

/// strtod over the whole field; throws std::invalid_argument on junk.
double parse_double(std::string_view text);

std::vector<std::string> split_csv_line(std::string_view line);

/// Parsed comma-separated table; '#' lines are kept as comments.
struct CsvTable {
    std::vector<std::string> comments;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    /// Index of a named column; throws std::invalid_argument when absent.
    std::size_t column(std::string_view name) const;
};

CsvTable read_csv(std::istream& in);

}  // namespace leveldot
