// SPDX-License-Identifier: Apache-2.0

#include "coder_consensus/codebook.hpp"

#include "coder_consensus/csv.hpp"
#include "coder_consensus/errors.hpp"
#include "coder_consensus/extraction.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace coder_consensus {

using nlohmann::json;

Codebook::Codebook(std::string version, std::vector<CodeCategory> categories)
    : version_(std::move(version)), categories_(std::move(categories)) {
    if (categories_.empty()) throw ValidationError("codebook has no categories");
    std::set<std::string> seen;
    for (const auto& c : categories_) {
        auto key = normalize_label(c.name);
        if (key.empty()) throw ValidationError("codebook category with empty name");
        if (!seen.insert(key).second)
            throw ValidationError("duplicate codebook category name: \"" + c.name + "\"");
    }
}

std::vector<std::string> Codebook::names() const {
    std::vector<std::string> out;
    out.reserve(categories_.size());
    for (const auto& c : categories_) out.push_back(c.name);
    return out;
}

std::optional<std::size_t> Codebook::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < categories_.size(); ++i)
        if (categories_[i].name == name) return i;
    auto key = normalize_label(name);
    for (std::size_t i = 0; i < categories_.size(); ++i)
        if (normalize_label(categories_[i].name) == key) return i;
    return std::nullopt;
}

std::string_view to_string(CodeValue v) noexcept {
    switch (v) {
    case CodeValue::absent: return "absent";
    case CodeValue::present: return "present";
    case CodeValue::missing: return "missing";
    }
    return "missing";
}

std::string to_cell(CodeValue v) {
    switch (v) {
    case CodeValue::absent: return "0";
    case CodeValue::present: return "1";
    case CodeValue::missing: return "missing";
    }
    return "missing";
}

std::optional<CodeValue> code_value_from_cell(std::string_view cell) {
    if (cell == "0") return CodeValue::absent;
    if (cell == "1") return CodeValue::present;
    if (cell == "missing") return CodeValue::missing;
    return std::nullopt;
}

std::string_view to_string(AssignmentSource s) noexcept {
    switch (s) {
    case AssignmentSource::human: return "human";
    case AssignmentSource::agent: return "agent";
    case AssignmentSource::consensus: return "consensus";
    case AssignmentSource::single_agent: return "single_agent";
    }
    return "agent";
}

AssignmentSource assignment_source_from_string(std::string_view s) {
    if (s == "human") return AssignmentSource::human;
    if (s == "agent") return AssignmentSource::agent;
    if (s == "consensus") return AssignmentSource::consensus;
    if (s == "single_agent") return AssignmentSource::single_agent;
    throw ValidationError("unknown assignment source: " + std::string(s));
}

bool CodeAssignment::has_missing() const noexcept {
    for (auto v : values)
        if (v == CodeValue::missing) return true;
    return false;
}

CodeValue CodeAssignment::at(const Codebook& codebook, std::string_view category) const {
    auto idx = codebook.index_of(category);
    if (!idx || *idx >= values.size())
        throw ContractViolation("category not in assignment: " + std::string(category));
    return values[*idx];
}

std::string render_assignment(const Codebook& codebook, const CodeAssignment& a) {
    std::string out = "{";
    for (std::size_t i = 0; i < codebook.size(); ++i) {
        if (i) out += ", ";
        out += "'" + codebook[i].name + "': ";
        out += i < a.values.size() ? to_cell(a.values[i]) : "missing";
    }
    return out + "}";
}

std::string Segment::display() const {
    return speaker.empty() ? text : speaker + ": " + text;
}

const Codebook& builtin_codebook() {
    static const Codebook codebook(
        "tutoring-8",
        {
            {"Greeting",
             "The initial interaction between the tutor and student, often at the beginning or end of "
             "the session. Anytime a salutation or farewell is exchanged.",
             {"Hello.", "Cheers.", "I'll see you in a couple of days.", "Enjoy the rest of your day.",
              "Bye"}},
            {"Instruction",
             "Specific instructions or directions posed by the tutor throughout the lesson.",
             {"So, we're going to test it out. I'm going to have you guys work on this do now right here.",
              "So factor these equations using our grouping method.", "Go ahead and fill that out.",
              "We need to put a capital Z here for this point."}},
            {"Guiding Feedback",
             "Guided practice through a math problem by the tutor. Feedback on the student's work or "
             "response and clarification or explanation of a concept or instruction.",
             {"Not quite. I'm not sure why you have these X's.",
              "No, not quite one x because you divided the negative three by three but did you divide "
              "the x by x?",
              "Look for factor pairs."}},
            {"Aligning to Prior Knowledge",
             "Instances when the tutor brings attention to a previous math concept that a student knows "
             "or has discussed in a session. Tutor aligns the student to previous knowledge using the "
             "word \"remember\".",
             {"Remember [NAME], what does factor mean?", "Okay, so you should remember this from last time.",
              "But remember, what's in your parentheses should be the same if you did it right."}},
            {"Understanding/Engagement-Tutor",
             "Tutor questioning: The tutor presents checks for understanding as questions to students.",
             {"How do you figure out what's halfway?", "Why do you think we might have done that?",
              "All right, so what would you multiply on both sides?"}},
            {"Technical or Logistics",
             "Tutor comments related to the technical aspects or logistics of the lesson.",
             {"Your camera's looking at the ceiling.", "You're on mute.", "Did you lose connection?",
              "Can you hear me okay?"}},
            {"Encouragement",
             "Affirmative statements from the tutor recognizing the student's efforts, answers, or "
             "performance. Anytime the tutor provides a positive acknowledgment or praise.",
             {"Perfect.", "Good job.", "Great.", "You're getting it, man."}},
            {"Time Management",
             "Statements regarding the duration left, the need to move on, or how much has been "
             "covered. Any mention of time, pacing, or the order of topics.",
             {"We have about 5 minutes.", "So, that's the end of our time together.", "Two more minutes.",
              "Class is almost halfway over.",
              "This should go fairly quickly so we can finish the lesson today."}},
        });
    return codebook;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// --- codebook -------------------------------------------------------------

namespace {

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

std::string require_string(const json& obj, const char* key, const std::string& source,
                           const std::string& where) {
    if (!obj.contains(key)) throw ParseError(source, 0, where + "." + key, "missing field");
    if (!obj[key].is_string()) throw ParseError(source, 0, where + "." + key, "expected a string");
    return obj[key].get<std::string>();
}

} // namespace

Codebook parse_codebook(std::string_view json_text, const std::string& source_name) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(source_name, line_of_offset(json_text, e.byte), "", e.what());
    }
    if (!doc.is_object()) throw ParseError(source_name, 1, "", "codebook must be a JSON object");
    std::string version = doc.contains("version") ? require_string(doc, "version", source_name, "") : "";
    if (!doc.contains("category") || !doc["category"].is_array())
        throw ParseError(source_name, 0, "category", "expected an array of category entries");

    std::vector<CodeCategory> categories;
    for (std::size_t i = 0; i < doc["category"].size(); ++i) {
        const auto& entry = doc["category"][i];
        std::string where = "category[" + std::to_string(i) + "]";
        if (!entry.is_object()) throw ParseError(source_name, 0, where, "expected an object");
        CodeCategory c;
        c.name = require_string(entry, "name", source_name, where);
        c.definition = entry.contains("definition") ? require_string(entry, "definition", source_name, where) : "";
        if (entry.contains("examples")) {
            if (!entry["examples"].is_array())
                throw ParseError(source_name, 0, where + ".examples", "expected an array of strings");
            for (const auto& ex : entry["examples"]) {
                if (!ex.is_string())
                    throw ParseError(source_name, 0, where + ".examples", "expected an array of strings");
                c.examples.push_back(ex.get<std::string>());
            }
        }
        categories.push_back(std::move(c));
    }
    return Codebook(std::move(version), std::move(categories));
}

Codebook load_codebook(const std::filesystem::path& path) {
    if (path == "builtin") return builtin_codebook();
    return parse_codebook(read_file(path), path.string());
}

std::string serialize_codebook(const Codebook& codebook) {
    json doc;
    doc["version"] = codebook.version();
    doc["category"] = json::array();
    for (const auto& c : codebook.categories())
        doc["category"].push_back({{"name", c.name}, {"definition", c.definition}, {"examples", c.examples}});
    return doc.dump(2) + "\n";
}

// --- transcript -----------------------------------------------------------

namespace {

std::vector<std::size_t> header_columns(const csv::Row& header, const std::vector<std::string>& wanted,
                                        const std::string& source) {
    std::vector<std::size_t> idx;
    for (const auto& w : wanted) {
        auto it = std::find(header.fields.begin(), header.fields.end(), w);
        if (it == header.fields.end())
            throw ParseError(source, header.line, w, "missing header column");
        idx.push_back(static_cast<std::size_t>(it - header.fields.begin()));
    }
    return idx;
}

bool is_blank(std::string_view s) {
    return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

/// "Tutor: text" -> {"Tutor", "text"}. The prefix is at most three words and
/// starts with an uppercase letter; the colon must be followed by whitespace.
std::optional<std::pair<std::string, std::string>> split_speaker_prefix(const std::string& text) {
    auto colon = text.find(':');
    if (colon == std::string::npos || colon == 0 || colon > 40) return std::nullopt;
    if (!std::isupper(static_cast<unsigned char>(text[0]))) return std::nullopt;
    int words = 1;
    for (std::size_t i = 0; i < colon; ++i) {
        auto ch = static_cast<unsigned char>(text[i]);
        if (ch == ' ') {
            if (i + 1 == colon || text[i + 1] == ' ') return std::nullopt;
            ++words;
        } else if (!std::isalnum(ch) && ch != '_' && ch != '\'' && ch != '.' && ch != '-') {
            return std::nullopt;
        }
    }
    if (words > 3) return std::nullopt;
    if (colon + 1 >= text.size() || !std::isspace(static_cast<unsigned char>(text[colon + 1])))
        return std::nullopt;
    auto body = text.find_first_not_of(" \t\r\n", colon + 1);
    if (body == std::string::npos) return std::nullopt;
    return std::pair{text.substr(0, colon), text.substr(body)};
}

} // namespace

std::vector<Segment> parse_transcript(std::string_view csv_text, const std::string& source_name) {
    auto rows = csv::parse(csv_text, source_name);
    if (rows.empty()) throw ParseError(source_name, 0, "", "transcript is empty");
    auto cols = header_columns(rows[0], {"segment_id", "transcript_id", "speaker", "text"}, source_name);
    if (rows.size() == 1) throw ParseError(source_name, rows[0].line, "", "transcript has no segments");

    std::vector<Segment> segments;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        std::string where = "row " + std::to_string(r);
        auto field = [&](std::size_t c) -> std::string {
            return cols[c] < row.fields.size() ? row.fields[cols[c]] : std::string{};
        };
        Segment s;
        s.id = static_cast<std::int64_t>(segments.size());
        s.transcript_id = field(1);
        s.speaker = field(2);
        s.text = field(3);

        auto declared = field(0);
        if (!is_blank(declared)) {
            auto v = parse_int(declared);
            if (!v || *v != s.id)
                throw ParseError(source_name, row.line, "segment_id",
                                 where + ": segment_id must equal the 0-based row ordinal " +
                                     std::to_string(s.id) + ", got \"" + declared + "\"");
        }
        if (is_blank(s.text)) throw ParseError(source_name, row.line, "text", where + ": empty text");
        if (s.speaker.empty()) {
            if (auto split = split_speaker_prefix(s.text)) {
                s.speaker = split->first;
                s.text = split->second;
            }
        }
        segments.push_back(std::move(s));
    }
    return segments;
}

std::vector<Segment> load_transcript(const std::filesystem::path& path) {
    return parse_transcript(read_file(path), path.string());
}

std::string serialize_transcript(const std::vector<Segment>& segments) {
    std::string out = csv::format_row({"segment_id", "transcript_id", "speaker", "text"});
    for (const auto& s : segments)
        out += csv::format_row({std::to_string(s.id), s.transcript_id, s.speaker, s.text});
    return out;
}

// --- ground truth ---------------------------------------------------------

std::vector<GroundTruth> parse_ground_truth(std::string_view csv_text, const Codebook& codebook,
                                            const std::vector<Segment>& segments,
                                            const std::string& source_name) {
    auto rows = csv::parse(csv_text, source_name);
    if (rows.empty()) throw ParseError(source_name, 0, "", "ground truth is empty");
    const auto& header = rows[0];
    if (header.fields.empty() || header.fields[0] != "segment_id")
        throw ParseError(source_name, header.line, "segment_id", "first header column must be segment_id");

    std::vector<std::optional<std::size_t>> column_category(header.fields.size());
    std::vector<bool> covered(codebook.size(), false);
    std::vector<std::string> unknown;
    for (std::size_t c = 1; c < header.fields.size(); ++c) {
        auto idx = codebook.index_of(header.fields[c]);
        if (!idx) {
            unknown.push_back(header.fields[c]);
            continue;
        }
        if (covered[*idx])
            throw ParseError(source_name, header.line, header.fields[c], "duplicate category column");
        covered[*idx] = true;
        column_category[c] = idx;
    }
    if (!unknown.empty()) {
        std::string list;
        for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + ("\"" + u + "\"");
        throw ParseError(source_name, header.line, "", "unknown category column(s): " + list);
    }
    for (std::size_t i = 0; i < codebook.size(); ++i)
        if (!covered[i])
            throw ParseError(source_name, header.line, codebook[i].name, "missing category column");

    std::vector<std::optional<GroundTruth>> by_segment(segments.size());
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != header.fields.size())
            throw ParseError(source_name, row.line, "",
                             "expected " + std::to_string(header.fields.size()) + " cells, got " +
                                 std::to_string(row.fields.size()));
        auto id = parse_int(row.fields[0]);
        if (!id) throw ParseError(source_name, row.line, "segment_id", "not an integer: \"" + row.fields[0] + "\"");
        if (*id < 0 || static_cast<std::size_t>(*id) >= segments.size())
            throw ParseError(source_name, row.line, "segment_id",
                             "references unknown segment " + std::to_string(*id));
        auto& slot = by_segment[static_cast<std::size_t>(*id)];
        if (slot) throw ParseError(source_name, row.line, "segment_id", "duplicate row for segment " + std::to_string(*id));

        GroundTruth gt;
        gt.segment_id = *id;
        gt.assignment = CodeAssignment::all(codebook.size(), CodeValue::absent, AssignmentSource::human);
        for (std::size_t c = 1; c < row.fields.size(); ++c) {
            const auto& cell = row.fields[c];
            if (cell != "0" && cell != "1")
                throw ParseError(source_name, row.line, header.fields[c],
                                 "non-binary cell \"" + cell + "\" (expected 0 or 1)");
            gt.assignment.values[*column_category[c]] = cell == "1" ? CodeValue::present : CodeValue::absent;
        }
        slot = std::move(gt);
    }

    std::vector<GroundTruth> out;
    out.reserve(segments.size());
    for (std::size_t i = 0; i < by_segment.size(); ++i) {
        if (!by_segment[i])
            throw ValidationError(source_name + ": no ground-truth row for segment " + std::to_string(i));
        out.push_back(std::move(*by_segment[i]));
    }
    return out;
}

std::vector<GroundTruth> load_ground_truth(const std::filesystem::path& path, const Codebook& codebook,
                                           const std::vector<Segment>& segments) {
    return parse_ground_truth(read_file(path), codebook, segments, path.string());
}

std::string serialize_ground_truth(const Codebook& codebook, const std::vector<GroundTruth>& truth) {
    std::vector<std::string> header{"segment_id"};
    for (const auto& n : codebook.names()) header.push_back(n);
    std::string out = csv::format_row(header);
    for (const auto& gt : truth) {
        std::vector<std::string> row{std::to_string(gt.segment_id)};
        for (auto v : gt.assignment.values) row.push_back(to_cell(v));
        out += csv::format_row(row);
    }
    return out;
}

} // namespace coder_consensus
