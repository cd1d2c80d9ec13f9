// SPDX-License-Identifier: Apache-2.0

#include "coder_consensus/extraction.hpp"

#include "coder_consensus/errors.hpp"

#include <nlohmann/json.hpp>

#include <cctype>

namespace coder_consensus {

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

bool strip_numeric_suffix(std::string& s) {
    std::size_t end = s.size();
    std::size_t i = end;
    while (i > 0 && std::isdigit(static_cast<unsigned char>(s[i - 1]))) --i;
    if (i == end || i == 0 || s[i - 1] != '.') return false;
    s.erase(i - 1);
    return true;
}

} // namespace

std::string normalize_label(std::string_view raw) {
    std::string collapsed;
    collapsed.reserve(raw.size());
    bool pending_space = false;
    for (char c : trim(raw)) {
        if (is_space(c)) {
            pending_space = true;
            continue;
        }
        if (pending_space) {
            if (c != '/' && (collapsed.empty() || collapsed.back() != '/')) collapsed.push_back(' ');
            pending_space = false;
        }
        collapsed.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    // "x .1" -> "x " -> "x", and "x.1.2" -> "x"
    for (;;) {
        while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
        if (!strip_numeric_suffix(collapsed)) break;
    }
    // a trailing '/' may now be followed by a kept space from before the suffix
    while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
    return collapsed;
}

AliasTable default_aliases() {
    return {
        {"Tutor questioning", "Understanding/Engagement-Tutor"},
        {"Tutor questions", "Understanding/Engagement-Tutor"},
        {"Understanding/Engagement - Tutor", "Understanding/Engagement-Tutor"},
        {"Understanding-Engagement-Tutor", "Understanding/Engagement-Tutor"},
        {"Aligning to prior knowledge", "Aligning to Prior Knowledge"},
        {"Prior knowledge", "Aligning to Prior Knowledge"},
        {"Technical/Logistics", "Technical or Logistics"},
        {"Technical and Logistics", "Technical or Logistics"},
    };
}

AliasTable load_alias_file(const std::filesystem::path& path) {
    auto text = read_file(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string(), 0, "", e.what());
    }
    if (!doc.is_object() || !doc.contains("aliases") || !doc["aliases"].is_object())
        throw ParseError(path.string(), 0, "aliases", "expected an object of alias -> category");
    auto table = default_aliases();
    for (const auto& [alias, target] : doc["aliases"].items()) {
        if (!target.is_string()) throw ParseError(path.string(), 0, "aliases." + alias, "expected a string");
        table[alias] = target.get<std::string>();
    }
    return table;
}

LabelResolver::LabelResolver(const Codebook& codebook, const AliasTable& aliases) {
    for (std::size_t i = 0; i < codebook.size(); ++i) {
        auto key = normalize_label(codebook[i].name);
        by_name_.emplace(key, i);
        normalized_names_.push_back(std::move(key));
    }
    for (const auto& [alias, target] : aliases) {
        auto it = by_name_.find(normalize_label(target));
        if (it == by_name_.end()) {
            unused_.push_back(alias);
            continue;
        }
        auto key = normalize_label(alias);
        // a category's own name always resolves to itself
        if (!by_name_.contains(key)) by_alias_[key] = it->second;
    }
}

std::optional<std::size_t> LabelResolver::resolve(std::string_view raw_key) const {
    auto key = normalize_label(raw_key);
    if (auto it = by_name_.find(key); it != by_name_.end()) return it->second;
    if (auto it = by_alias_.find(key); it != by_alias_.end()) return it->second;
    return std::nullopt;
}

std::string LabelResolver::canonical(std::string_view raw_key) const {
    if (auto idx = resolve(raw_key)) return normalized_names_[*idx];
    return normalize_label(raw_key);
}

std::string_view to_string(ParseStatus s) noexcept {
    switch (s) {
    case ParseStatus::clean: return "clean";
    case ParseStatus::partial: return "partial";
    case ParseStatus::failed: return "failed";
    }
    return "failed";
}

ParseStatus parse_status_from_string(std::string_view s) {
    if (s == "clean") return ParseStatus::clean;
    if (s == "partial") return ParseStatus::partial;
    if (s == "failed") return ParseStatus::failed;
    throw ValidationError("unknown parse status: " + std::string(s));
}

MergeResult merge_duplicates(const std::vector<std::pair<std::string, std::string>>& pairs) {
    MergeResult out;
    std::map<std::string, std::size_t, std::less<>> position;
    for (const auto& [key, value] : pairs) {
        auto it = position.find(key);
        if (it == position.end()) {
            position.emplace(key, out.entries.size());
            out.entries.emplace_back(key, value);
            continue;
        }
        ++out.duplicates;
        auto& slot = out.entries[it->second].second;
        if (slot != value && std::find(out.conflicts.begin(), out.conflicts.end(), key) == out.conflicts.end())
            out.conflicts.push_back(key);
        slot = value;
    }
    return out;
}

namespace {

bool is_quote(char c) { return c == '\'' || c == '"'; }

/// Reads a quoted token starting at body[pos] (the opening quote). Returns
/// the content and leaves pos after the closing quote (or at end).
std::string read_quoted(std::string_view body, std::size_t& pos) {
    char q = body[pos++];
    auto close = body.find(q, pos);
    if (close == std::string_view::npos) close = body.size();
    std::string out(body.substr(pos, close - pos));
    pos = close == body.size() ? close : close + 1;
    return out;
}

std::vector<std::pair<std::string, std::string>> parse_pairs(std::string_view body) {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < body.size() && is_space(body[pos])) ++pos;
    };
    auto skip_to_comma = [&] {
        auto next = body.find(',', pos);
        pos = next == std::string_view::npos ? body.size() : next + 1;
    };

    while (pos < body.size()) {
        while (pos < body.size() && (is_space(body[pos]) || body[pos] == ',')) ++pos;
        if (pos >= body.size()) break;

        std::string key;
        if (is_quote(body[pos])) {
            key = read_quoted(body, pos);
        } else {
            auto stop = body.find_first_of(":,", pos);
            if (stop == std::string_view::npos) stop = body.size();
            key = std::string(trim(body.substr(pos, stop - pos)));
            pos = stop;
        }
        skip_space();
        if (pos >= body.size() || body[pos] != ':') {
            skip_to_comma();
            continue;
        }
        ++pos;
        skip_space();

        std::string value;
        if (pos < body.size() && is_quote(body[pos])) {
            value = read_quoted(body, pos);
            auto stop = body.find(',', pos);
            if (stop == std::string_view::npos) stop = body.size();
            // anything after the closing quote makes the value malformed
            auto rest = trim(body.substr(pos, stop - pos));
            if (!rest.empty()) value = "\"" + value + "\"" + std::string(rest);
            pos = stop == body.size() ? stop : stop + 1;
        } else {
            auto stop = body.find(',', pos);
            if (stop == std::string_view::npos) stop = body.size();
            value = std::string(trim(body.substr(pos, stop - pos)));
            pos = stop == body.size() ? stop : stop + 1;
        }
        pairs.emplace_back(std::move(key), std::string(trim(value)));
    }
    return pairs;
}

} // namespace

std::optional<std::vector<std::pair<std::string, std::string>>> find_code_dictionary(std::string_view raw) {
    auto close = raw.rfind('}');
    if (close == std::string_view::npos) return std::nullopt;
    auto open = raw.rfind('{', close);
    if (open == std::string_view::npos) return std::nullopt;
    return parse_pairs(raw.substr(open + 1, close - open - 1));
}

ExtractionResult extract_codes(std::string_view raw, const Codebook& codebook, const LabelResolver& resolver) {
    ExtractionResult out;
    out.assignment = CodeAssignment::all(codebook.size(), CodeValue::missing, AssignmentSource::agent);

    auto pairs = find_code_dictionary(raw);
    if (pairs && !pairs->empty()) {
        std::vector<std::pair<std::string, std::string>> matched;
        for (auto& [key, value] : *pairs) {
            if (auto idx = resolver.resolve(key))
                matched.emplace_back(codebook[*idx].name, value);
            else
                out.extraneous_labels.push_back(key);
        }
        auto merged = merge_duplicates(matched);
        out.duplicate_keys = merged.duplicates;
        out.conflicting_labels = std::move(merged.conflicts);
        for (const auto& [name, value] : merged.entries) {
            auto idx = *codebook.index_of(name);
            if (value == "1")
                out.assignment.values[idx] = CodeValue::present;
            else if (value == "0")
                out.assignment.values[idx] = CodeValue::absent;
            else
                out.malformed_labels.push_back(name);
        }
    }

    for (std::size_t i = 0; i < codebook.size(); ++i)
        if (out.assignment.values[i] == CodeValue::missing) out.missing_labels.push_back(codebook[i].name);

    if (!pairs || pairs->empty())
        out.parse_status = ParseStatus::failed;
    else if (out.missing_labels.empty() && out.extraneous_labels.empty())
        out.parse_status = ParseStatus::clean;
    else
        out.parse_status = ParseStatus::partial;
    return out;
}

RetryOutcome extract_with_retry(std::string raw, const std::function<std::string()>& reprompt,
                                const Codebook& codebook, const LabelResolver& resolver) {
    RetryOutcome out;
    out.result = extract_codes(raw, codebook, resolver);
    if (out.result.complete()) {
        out.raw_text = std::move(raw);
        return out;
    }
    std::string second;
    try {
        second = reprompt();
    } catch (const TransportError& e) {
        throw RetryTransportError(e, out.result);
    }
    out.result = extract_codes(second, codebook, resolver);
    out.result.retried = true;
    out.first_raw_text = std::move(raw);
    out.raw_text = std::move(second);
    return out;
}

} // namespace coder_consensus
