#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace lhdff::data {

struct CsvRow {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line where the row starts
};

// RFC-4180: comma separated, double-quoted fields may hold commas, quotes
// ("") and line breaks. CRLF and LF both end a record. Blank lines are
// skipped. Throws ParseError with the line number on malformed quoting.
std::vector<CsvRow> parse_csv(std::string_view text);

// Quotes the field only when needed.
std::string csv_escape(std::string_view field);

}  // namespace lhdff::data
