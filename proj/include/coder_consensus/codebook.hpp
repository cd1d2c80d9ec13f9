// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coder_consensus {

struct CodeCategory {
    std::string name;
    std::string definition;
    std::vector<std::string> examples;

    bool operator==(const CodeCategory&) const = default;
};

/// Ordered set of categories. Category order is the column order of every
/// emitted table and of every CodeAssignment.
class Codebook {
public:
    Codebook() = default;
    /// Throws ValidationError on an empty list, an empty name, or two names
    /// that collide after label normalization.
    Codebook(std::string version, std::vector<CodeCategory> categories);

    const std::string& version() const noexcept { return version_; }
    const std::vector<CodeCategory>& categories() const noexcept { return categories_; }
    std::size_t size() const noexcept { return categories_.size(); }
    const CodeCategory& operator[](std::size_t i) const { return categories_[i]; }

    std::vector<std::string> names() const;
    /// Lookup by exact name, then by normalized name.
    std::optional<std::size_t> index_of(std::string_view name) const;

    bool operator==(const Codebook&) const = default;

private:
    std::string version_;
    std::vector<CodeCategory> categories_;
};

enum class CodeValue : std::uint8_t { absent = 0, present = 1, missing = 2 };

std::string_view to_string(CodeValue v) noexcept;
/// "0", "1", "missing"
std::string to_cell(CodeValue v);
/// Accepts "0", "1", "missing"; anything else is nullopt.
std::optional<CodeValue> code_value_from_cell(std::string_view cell);

enum class AssignmentSource : std::uint8_t { human, agent, consensus, single_agent };

std::string_view to_string(AssignmentSource s) noexcept;
AssignmentSource assignment_source_from_string(std::string_view s);

/// One value per codebook category, in codebook order.
struct CodeAssignment {
    std::vector<CodeValue> values;
    AssignmentSource source = AssignmentSource::agent;

    static CodeAssignment all(std::size_t n, CodeValue v, AssignmentSource source) {
        return CodeAssignment{std::vector<CodeValue>(n, v), source};
    }

    std::size_t size() const noexcept { return values.size(); }
    bool has_missing() const noexcept;
    CodeValue at(const Codebook& codebook, std::string_view category) const;

    bool operator==(const CodeAssignment&) const = default;
};

/// Renders `{'Greeting': 1, 'Instruction': 0, ...}` in codebook order.
std::string render_assignment(const Codebook& codebook, const CodeAssignment& a);

struct Segment {
    std::int64_t id = 0;
    std::string speaker;
    std::string text;
    std::string transcript_id;

    /// "Speaker: text", or just text when there is no speaker.
    std::string display() const;

    bool operator==(const Segment&) const = default;
};

struct GroundTruth {
    std::int64_t segment_id = 0;
    CodeAssignment assignment;

    bool operator==(const GroundTruth&) const = default;
};

/// The eight-category tutoring codebook, Greeting through Time Management.
const Codebook& builtin_codebook();

/// `path == "builtin"` returns builtin_codebook().
Codebook load_codebook(const std::filesystem::path& path);
Codebook parse_codebook(std::string_view json_text, const std::string& source_name = "<codebook>");
std::string serialize_codebook(const Codebook& codebook);

std::vector<Segment> load_transcript(const std::filesystem::path& path);
std::vector<Segment> parse_transcript(std::string_view csv_text,
                                      const std::string& source_name = "<transcript>");
std::string serialize_transcript(const std::vector<Segment>& segments);

std::vector<GroundTruth> load_ground_truth(const std::filesystem::path& path, const Codebook& codebook,
                                           const std::vector<Segment>& segments);
std::vector<GroundTruth> parse_ground_truth(std::string_view csv_text, const Codebook& codebook,
                                            const std::vector<Segment>& segments,
                                            const std::string& source_name = "<ground truth>");
std::string serialize_ground_truth(const Codebook& codebook, const std::vector<GroundTruth>& truth);

/// Reads a whole file; throws Error when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

} // namespace coder_consensus
