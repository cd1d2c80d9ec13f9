// SPDX-License-Identifier: Apache-2.0

#include "coder_consensus/prompting.hpp"

#include "coder_consensus/errors.hpp"

#include <algorithm>
#include <cctype>

namespace coder_consensus {

std::string_view to_string(PersonaArchetype p) noexcept {
    switch (p) {
    case PersonaArchetype::balanced: return "balanced";
    case PersonaArchetype::bold: return "bold";
    case PersonaArchetype::empathetic: return "empathetic";
    }
    return "balanced";
}

std::string_view descriptor(PersonaArchetype p) noexcept {
    switch (p) {
    case PersonaArchetype::balanced: return "balanced and reflective";
    case PersonaArchetype::bold: return "bold and dominant but elaborative";
    case PersonaArchetype::empathetic: return "empathetic and open-minded";
    }
    return "balanced and reflective";
}

PersonaArchetype persona_from_string(std::string_view s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "balanced") return PersonaArchetype::balanced;
    if (lower == "bold") return PersonaArchetype::bold;
    if (lower == "empathetic") return PersonaArchetype::empathetic;
    throw ValidationError("unknown persona \"" + std::string(s) + "\" (expected balanced, bold or empathetic)");
}

std::string_view to_string(AgentRole r) noexcept {
    switch (r) {
    case AgentRole::single_coder: return "single_coder";
    case AgentRole::discussant: return "discussant";
    case AgentRole::consensus: return "consensus";
    }
    return "single_coder";
}

std::string format_instruction(const Codebook& codebook) {
    std::string out = "{";
    for (std::size_t i = 0; i < codebook.size(); ++i) {
        if (i) out += ", ";
        out += "'" + codebook[i].name + "': " + (i == 1 ? "1" : "0");
    }
    return out + "}";
}

std::string render_codebook(const Codebook& codebook) {
    std::string out;
    for (std::size_t i = 0; i < codebook.size(); ++i) {
        const auto& c = codebook[i];
        out += std::to_string(i + 1) + ". " + c.name;
        if (!c.definition.empty()) out += ": " + c.definition;
        out += "\n";
        if (!c.examples.empty()) {
            out += "   Examples:";
            for (const auto& ex : c.examples) out += " \"" + ex + "\"";
            out += "\n";
        }
    }
    return out;
}

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}

std::string fill(std::string_view tmpl, const AgentProfile& profile, const Codebook& codebook) {
    std::string out(tmpl);
    replace_all(out, "[AgentName]", profile.name);
    replace_all(out, "[Personality]", descriptor(profile.persona));
    replace_all(out, "[CodeFormat]", format_instruction(codebook));
    return out;
}

std::string context_sections(const Segment& segment, const Codebook& codebook, std::span<const Segment> history) {
    std::string out;
    if (!history.empty()) {
        out += "Conversation history (preceding segments):\n";
        for (const auto& h : history) out += h.display() + "\n";
        out += "\n";
    }
    out += "Codebook:\n" + render_codebook(codebook) + "\n";
    out += "Text to code:\n" + segment.display() + "\n";
    return out;
}

} // namespace

std::string dump_templates() {
    std::string out;
    out += "[single_coder]\n" + std::string(PromptTemplates::single_coder) + "\n\n";
    out += "[discussion_round_1]\n" + std::string(PromptTemplates::initial_coding) + "\n\n";
    out += "[discussion_round_2]\n" + std::string(PromptTemplates::discussion) + "\n\n";
    out += "[consensus]\n" + std::string(PromptTemplates::consensus) + "\n";
    return out;
}

PromptBundle build_single_prompt(const AgentProfile& profile, const Segment& segment, const Codebook& codebook,
                                 std::span<const Segment> history) {
    if (profile.role != AgentRole::single_coder)
        throw ContractViolation("single-coder prompt requested for a " + std::string(to_string(profile.role)) +
                                " profile");
    return {fill(PromptTemplates::single_coder, profile, codebook), context_sections(segment, codebook, history)};
}

PromptBundle build_discussion_prompt(const AgentProfile& profile, const Segment& segment, const Codebook& codebook,
                                     int round, const std::optional<std::string>& peer_turn,
                                     std::span<const Segment> history,
                                     std::span<const DiscussionEntry> discussion) {
    if (profile.role != AgentRole::discussant)
        throw ContractViolation("discussion prompt requested for a " + std::string(to_string(profile.role)) +
                                " profile");
    if (round < 1) throw ContractViolation("discussion round must be >= 1");
    if (round == 1) {
        return {fill(PromptTemplates::initial_coding, profile, codebook),
                context_sections(segment, codebook, history)};
    }
    if (!peer_turn) throw ContractViolation("round " + std::to_string(round) + " requires the peer's latest turn");

    std::string user = context_sections(segment, codebook, history);
    if (!discussion.empty()) {
        user += "\nDiscussion so far:\n";
        for (const auto& d : discussion)
            user += d.agent + " (round " + std::to_string(d.round) + "): " + d.text + "\n";
    }
    user += "\n" + std::string(kPreviousTurnPrefix) + *peer_turn + "\n";
    return {fill(PromptTemplates::discussion, profile, codebook), std::move(user)};
}

PromptBundle build_consensus_prompt(const AgentProfile& profile, const Segment& segment, const Codebook& codebook,
                                    const LabeledTurn& turn_a, const LabeledTurn& turn_b) {
    if (profile.role != AgentRole::consensus)
        throw ContractViolation("consensus prompt requested for a " + std::string(to_string(profile.role)) +
                                " profile");
    if (profile.persona != PersonaArchetype::balanced)
        throw ContractViolation("the consensus agent must be balanced");
    if (turn_a.text.empty() || turn_b.text.empty())
        throw ContractViolation("consensus prompt requires both agents' final turns");

    std::string user = context_sections(segment, codebook, {});
    user += "\n" + turn_a.agent + " said:\n" + turn_a.text + "\n";
    user += "\n" + turn_b.agent + " said:\n" + turn_b.text + "\n";
    return {fill(PromptTemplates::consensus, profile, codebook), std::move(user)};
}

} // namespace coder_consensus
