// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coder_consensus/codebook.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coder_consensus {

enum class PersonaArchetype { balanced, bold, empathetic };

std::string_view to_string(PersonaArchetype p) noexcept;
/// Lower-case prompt phrase, e.g. "bold and dominant but elaborative".
std::string_view descriptor(PersonaArchetype p) noexcept;
/// Accepts "balanced", "bold", "empathetic" (case-insensitive).
PersonaArchetype persona_from_string(std::string_view s);

enum class AgentRole { single_coder, discussant, consensus };

std::string_view to_string(AgentRole r) noexcept;

struct AgentProfile {
    std::string name;
    PersonaArchetype persona = PersonaArchetype::balanced;
    AgentRole role = AgentRole::single_coder;
    double temperature = 0.0;
};

inline constexpr std::string_view kSingleAgentName = "Agent";
inline constexpr std::string_view kCoderAName = "Coder 1";
inline constexpr std::string_view kCoderBName = "Coder 2";
inline constexpr std::string_view kArbiterName = "Arbiter";

struct PromptBundle {
    std::string system_prompt;
    std::string user_prompt;
};

/// A previous turn of the current segment's discussion.
struct DiscussionEntry {
    std::string agent;
    int round = 1;
    std::string text;
};

/// Raw system templates with [AgentName], [Personality] and [CodeFormat] slots.
struct PromptTemplates {
    static constexpr std::string_view single_coder =
        "You are [AgentName], a [Personality] qualitative coding agent. Your role: Assign codes to the text "
        "based on the codebook. Use the provided codebook definitions to analyze qualitative text data. Be "
        "brief (2 sentences max), thoughtful, and justify your reasoning. After your reasoning, always "
        "provide your codes in this format: [CodeFormat].";
    static constexpr std::string_view initial_coding =
        "You are [AgentName], a [Personality] qualitative coding agent. Your role: Establish an initial code "
        "for the best fitting code. Be brief, thoughtful, and justify your reasoning. After your reasoning, "
        "provide your codes in this format: [CodeFormat].";
    static constexpr std::string_view discussion =
        "You are [AgentName], a [Personality] qualitative coding agent. Your role: Engage in collaborative "
        "discussion about the best fitting code. Consider your peer's reasoning appended after \"The "
        "previous turn said: ...\". Justify your revisions if applicable. At the end of your turn, always "
        "provide your revised codes in the same structured format: [CodeFormat].";
    static constexpr std::string_view consensus =
        "You are [AgentName], a balanced and reflective qualitative coding agent. Your role: Resolve "
        "differences in assigned codes and propose a consensus label. Consider the reasoning from both "
        "agents and the full codebook. Be sure to follow the JSON format at the end of this prompt. After "
        "justification, output your final codes in this format: [CodeFormat].";
};

inline constexpr std::string_view kPreviousTurnPrefix = "The previous turn said: ";

/// `{'Greeting': 0, 'Instruction': 1, ...}` listing every category in order.
std::string format_instruction(const Codebook& codebook);

/// Numbered definitions plus quoted examples.
std::string render_codebook(const Codebook& codebook);

/// Dump of the four templates, for audit.
std::string dump_templates();

PromptBundle build_single_prompt(const AgentProfile& profile, const Segment& segment, const Codebook& codebook,
                                 std::span<const Segment> history);

/// Round 1 uses the initial-coding template; any later round the discussion
/// template. Rounds >= 2 require `peer_turn`.
PromptBundle build_discussion_prompt(const AgentProfile& profile, const Segment& segment, const Codebook& codebook,
                                     int round, const std::optional<std::string>& peer_turn,
                                     std::span<const Segment> history,
                                     std::span<const DiscussionEntry> discussion = {});

struct LabeledTurn {
    std::string agent;
    std::string text;
};

PromptBundle build_consensus_prompt(const AgentProfile& profile, const Segment& segment, const Codebook& codebook,
                                    const LabeledTurn& turn_a, const LabeledTurn& turn_b);

} // namespace coder_consensus
