// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace coder_consensus::csv {

struct Row {
    std::size_t line = 0; ///< 1-based line on which the record starts
    std::vector<std::string> fields;
};

/// RFC 4180 reader: comma separated, double-quoted fields may contain
/// commas, newlines and "" escapes. Blank lines are skipped. A leading
/// UTF-8 BOM is dropped. Throws ParseError on an unterminated quote.
std::vector<Row> parse(std::string_view text, const std::string& source_name = "<csv>");

std::string escape(std::string_view field);

/// Joins escaped fields with commas and appends '\n'.
std::string format_row(const std::vector<std::string>& fields);

} // namespace coder_consensus::csv
