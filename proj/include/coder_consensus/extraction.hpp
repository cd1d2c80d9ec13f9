// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coder_consensus/codebook.hpp"
#include "coder_consensus/errors.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace coder_consensus {

/// Syntactic key normalization: ASCII case-fold, collapse whitespace runs,
/// drop spaces around '/', strip trailing ".<digits>" suffixes, trim.
/// Idempotent.
std::string normalize_label(std::string_view raw);

/// alias (any spelling) -> codebook category name
using AliasTable = std::map<std::string, std::string>;

/// Variants observed in model output for the tutoring codebook.
AliasTable default_aliases();

/// JSON object `{"aliases": {"<variant>": "<category>"}}`. Entries are merged
/// over default_aliases(), file entries winning.
AliasTable load_alias_file(const std::filesystem::path& path);

/// Maps raw dictionary keys onto codebook categories.
class LabelResolver {
public:
    explicit LabelResolver(const Codebook& codebook, const AliasTable& aliases = default_aliases());

    std::optional<std::size_t> resolve(std::string_view raw_key) const;
    /// Normalized category name when the key resolves, normalize_label(raw) otherwise.
    std::string canonical(std::string_view raw_key) const;
    /// Aliases whose target is not a category of this codebook.
    const std::vector<std::string>& unused_aliases() const noexcept { return unused_; }

private:
    std::map<std::string, std::size_t, std::less<>> by_name_;
    std::map<std::string, std::size_t, std::less<>> by_alias_;
    std::vector<std::string> unused_;
    std::vector<std::string> normalized_names_;
};

enum class ParseStatus { clean, partial, failed };

std::string_view to_string(ParseStatus s) noexcept;
ParseStatus parse_status_from_string(std::string_view s);

struct ExtractionResult {
    CodeAssignment assignment;
    /// Categories left Missing, in codebook order (includes malformed ones).
    std::vector<std::string> missing_labels;
    /// Raw keys that matched no category, one entry per occurrence.
    std::vector<std::string> extraneous_labels;
    /// Categories whose value was neither 0 nor 1.
    std::vector<std::string> malformed_labels;
    /// Categories that appeared more than once with disagreeing values.
    std::vector<std::string> conflicting_labels;
    std::size_t duplicate_keys = 0;
    ParseStatus parse_status = ParseStatus::failed;
    bool retried = false;

    bool complete() const noexcept { return missing_labels.empty(); }
};

struct MergeResult {
    /// First-seen key order, last-seen value.
    std::vector<std::pair<std::string, std::string>> entries;
    std::vector<std::string> conflicts;
    std::size_t duplicates = 0;
};

/// Last occurrence of a key wins; a key is flagged as a conflict when its
/// occurrences disagree.
MergeResult merge_duplicates(const std::vector<std::pair<std::string, std::string>>& pairs);

/// Pulls the `key: value` pairs out of the last {...} region of `raw`.
/// nullopt when there is no brace region.
std::optional<std::vector<std::pair<std::string, std::string>>> find_code_dictionary(std::string_view raw);

/// Total: never throws on any input text.
ExtractionResult extract_codes(std::string_view raw, const Codebook& codebook, const LabelResolver& resolver);

/// Thrown when the single re-prompt fails in transport. Carries the
/// first-pass extraction.
class RetryTransportError : public TransportError {
public:
    RetryTransportError(const TransportError& cause, ExtractionResult first_pass)
        : TransportError(cause.what(), cause.attempts()), first_pass_(std::move(first_pass)) {}

    const ExtractionResult& first_pass() const noexcept { return first_pass_; }

private:
    ExtractionResult first_pass_;
};

struct RetryOutcome {
    ExtractionResult result;
    /// Text the final result was extracted from.
    std::string raw_text;
    /// First completion, set only when a retry happened.
    std::optional<std::string> first_raw_text;
};

/// Re-prompts exactly once when the first extraction is incomplete and keeps
/// the retry's extraction; residual gaps stay Missing.
RetryOutcome extract_with_retry(std::string raw, const std::function<std::string()>& reprompt,
                                const Codebook& codebook, const LabelResolver& resolver);

} // namespace coder_consensus
