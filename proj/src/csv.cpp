// SPDX-License-Identifier: Apache-2.0

#include "coder_consensus/csv.hpp"

#include "coder_consensus/errors.hpp"

namespace coder_consensus::csv {

std::vector<Row> parse(std::string_view text, const std::string& source_name) {
    if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    std::vector<Row> rows;
    Row current;
    std::string field;
    std::size_t line = 1;
    std::size_t quote_line = 0;
    bool in_quotes = false;
    bool row_started = false;

    auto start_row = [&] {
        if (!row_started) {
            row_started = true;
            current.line = line;
        }
    };
    auto end_field = [&] {
        current.fields.push_back(std::move(field));
        field.clear();
    };
    auto end_row = [&] {
        if (row_started) {
            end_field();
            rows.push_back(std::move(current));
        }
        current = Row{};
        row_started = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            start_row();
            in_quotes = true;
            quote_line = line;
            break;
        case ',':
            start_row();
            end_field();
            break;
        case '\r':
            break;
        case '\n':
            end_row();
            ++line;
            break;
        default:
            start_row();
            field.push_back(c);
        }
    }
    if (in_quotes) throw ParseError(source_name, quote_line, "", "unterminated quoted field");
    end_row();
    return rows;
}

std::string escape(std::string_view field) {
    bool needs_quotes = field.find_first_of(",\"\n\r") != std::string_view::npos ||
                        (!field.empty() && (field.front() == ' ' || field.back() == ' '));
    if (!needs_quotes) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string format_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += escape(fields[i]);
    }
    out.push_back('\n');
    return out;
}

} // namespace coder_consensus::csv
