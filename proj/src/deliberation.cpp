// SPDX-License-Identifier: Apache-2.0

#include "coder_consensus/deliberation.hpp"

#include "coder_consensus/errors.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <memory>

namespace coder_consensus {

using ojson = nlohmann::ordered_json;

std::string_view to_string(ConsensusOutcome o) noexcept {
    switch (o) {
    case ConsensusOutcome::first_consensus: return "first_consensus";
    case ConsensusOutcome::delayed_consensus: return "delayed_consensus";
    case ConsensusOutcome::no_consensus: return "no_consensus";
    }
    return "no_consensus";
}

ConsensusOutcome consensus_outcome_from_string(std::string_view s) {
    if (s == "first_consensus" || s == "first") return ConsensusOutcome::first_consensus;
    if (s == "delayed_consensus" || s == "delayed") return ConsensusOutcome::delayed_consensus;
    if (s == "no_consensus" || s == "none") return ConsensusOutcome::no_consensus;
    throw ValidationError("unknown consensus outcome: \"" + std::string(s) + "\"");
}

TurnClock wall_clock() {
    return [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
    };
}

TurnClock logical_clock() {
    auto counter = std::make_shared<std::atomic<std::int64_t>>(0);
    return [counter] { return ++*counter; };
}

namespace {

TurnRecord run_turn(const AgentProfile& profile, int round, const PromptBundle& prompt, const Segment& segment,
                    const DeliberationContext& ctx) {
    ChatRequest request;
    request.model_id = ctx.model_id;
    request.system_prompt = prompt.system_prompt;
    request.user_prompt = prompt.user_prompt;
    request.temperature = profile.temperature;
    request.seed = ctx.seed;
    request.tag = RequestTag{ctx.config_id, segment.id, round, profile.name, std::string(to_string(profile.role)), 0};

    auto first = ctx.backend.complete(request);
    auto reprompt = [&] {
        ChatRequest again = request;
        again.tag.attempt = 1;
        return ctx.backend.complete(again).text;
    };
    auto outcome = extract_with_retry(std::move(first.text), reprompt, ctx.codebook, ctx.resolver);

    TurnRecord turn;
    turn.round = round;
    turn.agent_name = profile.name;
    turn.role = profile.role;
    turn.raw_text = std::move(outcome.raw_text);
    turn.first_raw_text = std::move(outcome.first_raw_text);
    turn.retried = outcome.result.retried;
    turn.extraction = std::move(outcome.result);
    turn.timestamp = ctx.clock ? ctx.clock() : 0;
    return turn;
}

std::string non_empty(const std::string& text) { return text.empty() ? "(empty response)" : text; }

std::vector<DiscussionEntry> discussion_without(const std::vector<TurnRecord>& turns, std::size_t skip) {
    std::vector<DiscussionEntry> out;
    for (std::size_t i = 0; i < turns.size(); ++i)
        if (i != skip) out.push_back({turns[i].agent_name, turns[i].round, turns[i].raw_text});
    return out;
}

} // namespace

SingleAgentResult run_single_agent(const Segment& segment, const AgentProfile& profile,
                                   const DeliberationContext& ctx, std::span<const Segment> history) {
    auto prompt = build_single_prompt(profile, segment, ctx.codebook, history);
    auto turn = run_turn(profile, 1, prompt, segment, ctx);
    auto assignment = turn.extraction.assignment;
    assignment.source = AssignmentSource::single_agent;
    return {std::move(assignment), std::move(turn)};
}

bool check_alignment(const CodeAssignment& a, const CodeAssignment& b) {
    if (a.values.size() != b.values.size())
        throw ContractViolation("alignment check over assignments of different sizes (" +
                                std::to_string(a.values.size()) + " vs " + std::to_string(b.values.size()) + ")");
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (a.values[i] == CodeValue::missing || a.values[i] != b.values[i]) return false;
    }
    return true;
}

DeliberationTrace run_deliberation(const Segment& segment, const AgentProfile& profile_a,
                                   const AgentProfile& profile_b, const AgentProfile& arbiter,
                                   const DeliberationContext& ctx, std::span<const Segment> history,
                                   int max_rounds) {
    if (profile_a.role != AgentRole::discussant || profile_b.role != AgentRole::discussant)
        throw ContractViolation("deliberation requires two discussant profiles");
    if (profile_a.name == profile_b.name) throw ContractViolation("discussants must have distinct names");
    if (arbiter.role != AgentRole::consensus || arbiter.persona != PersonaArchetype::balanced)
        throw ContractViolation("the arbiter must be a balanced consensus profile");
    if (max_rounds < 1) throw ContractViolation("max_rounds must be >= 1");

    DeliberationTrace trace;
    trace.segment_id = segment.id;
    trace.config_id = ctx.config_id;
    trace.segment_text = segment.display();

    // Round 1: independent coding, neither agent sees the other.
    trace.turns.push_back(run_turn(
        profile_a, 1, build_discussion_prompt(profile_a, segment, ctx.codebook, 1, std::nullopt, history), segment, ctx));
    trace.turns.push_back(run_turn(
        profile_b, 1, build_discussion_prompt(profile_b, segment, ctx.codebook, 1, std::nullopt, history), segment, ctx));

    std::size_t latest_a = 0;
    std::size_t latest_b = 1;
    auto aligned = [&] {
        return check_alignment(trace.turns[latest_a].extraction.assignment, trace.turns[latest_b].extraction.assignment);
    };

    if (aligned()) {
        trace.aligned_round = 1;
    } else {
        for (int round = 2; round <= max_rounds; ++round) {
            auto discussion = discussion_without(trace.turns, latest_b);
            auto prompt_a = build_discussion_prompt(profile_a, segment, ctx.codebook, round,
                                                    trace.turns[latest_b].raw_text, history, discussion);
            trace.turns.push_back(run_turn(profile_a, round, prompt_a, segment, ctx));
            latest_a = trace.turns.size() - 1;

            discussion = discussion_without(trace.turns, latest_a);
            auto prompt_b = build_discussion_prompt(profile_b, segment, ctx.codebook, round,
                                                    trace.turns[latest_a].raw_text, history, discussion);
            trace.turns.push_back(run_turn(profile_b, round, prompt_b, segment, ctx));
            latest_b = trace.turns.size() - 1;

            if (aligned()) {
                trace.aligned_round = round;
                break;
            }
        }
    }

    if (trace.aligned_round > 0) {
        trace.outcome = trace.aligned_round == 1 ? ConsensusOutcome::first_consensus
                                                 : ConsensusOutcome::delayed_consensus;
        trace.final_codes = trace.turns[latest_a].extraction.assignment;
        trace.final_codes.source = AssignmentSource::agent;
        return trace;
    }

    const auto& turn_a = trace.turns[latest_a];
    const auto& turn_b = trace.turns[latest_b];
    auto prompt = build_consensus_prompt(arbiter, segment, ctx.codebook,
                                         {turn_a.agent_name, non_empty(turn_a.raw_text)},
                                         {turn_b.agent_name, non_empty(turn_b.raw_text)});
    trace.arbiter_turn = run_turn(arbiter, max_rounds + 1, prompt, segment, ctx);
    trace.outcome = ConsensusOutcome::no_consensus;
    trace.final_codes = trace.arbiter_turn->extraction.assignment;
    trace.final_codes.source = AssignmentSource::consensus;
    const auto& arb = trace.arbiter_turn->extraction;
    trace.arbiter_fallback = arb.parse_status == ParseStatus::failed || arb.missing_labels.size() == ctx.codebook.size();
    return trace;
}

ConsensusOutcome classify_outcome(const DeliberationTrace& trace) {
    const auto& turns = trace.turns;
    auto fail = [&](const std::string& why) {
        return IntegrityError("trace for segment " + std::to_string(trace.segment_id) + " (" + trace.config_id +
                              "): " + why);
    };
    if (trace.failure) throw fail("segment failed: " + *trace.failure);
    if (turns.size() < 2 || turns.size() % 2 != 0) throw fail("expected an even number (>= 2) of discussant turns");
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const auto& expected_agent = turns[i % 2].agent_name;
        if (turns[i].agent_name != expected_agent) throw fail("turns do not alternate between the two agents");
        if (turns[i].round != static_cast<int>(i / 2) + 1) throw fail("turn rounds are out of sequence");
    }
    if (turns[0].agent_name == turns[1].agent_name) throw fail("both discussants share a name");

    int aligned_round = 0;
    for (std::size_t i = 0; i + 1 < turns.size(); i += 2) {
        if (check_alignment(turns[i].extraction.assignment, turns[i + 1].extraction.assignment)) {
            aligned_round = static_cast<int>(i / 2) + 1;
            if (i + 2 != turns.size()) throw fail("discussion continued after alignment");
            break;
        }
    }

    ConsensusOutcome recomputed;
    if (aligned_round == 0) {
        if (!trace.arbiter_turn) throw fail("agents never aligned but no arbiter turn is recorded");
        recomputed = ConsensusOutcome::no_consensus;
    } else {
        if (trace.arbiter_turn) throw fail("arbiter turn recorded although the agents aligned");
        recomputed = aligned_round == 1 ? ConsensusOutcome::first_consensus : ConsensusOutcome::delayed_consensus;
    }
    if (recomputed != trace.outcome)
        throw fail("stored outcome " + std::string(to_string(trace.outcome)) + " but turns imply " +
                   std::string(to_string(recomputed)));
    return recomputed;
}

// --- persistence ----------------------------------------------------------

namespace {

ojson assignment_json(const CodeAssignment& a, const Codebook& codebook) {
    ojson out = ojson::object();
    for (std::size_t i = 0; i < codebook.size(); ++i) {
        auto v = i < a.values.size() ? a.values[i] : CodeValue::missing;
        if (v == CodeValue::missing)
            out[codebook[i].name] = "missing";
        else
            out[codebook[i].name] = v == CodeValue::present ? 1 : 0;
    }
    return out;
}

CodeAssignment assignment_from_json(const ojson& j, const Codebook& codebook, AssignmentSource source) {
    auto a = CodeAssignment::all(codebook.size(), CodeValue::missing, source);
    for (std::size_t i = 0; i < codebook.size(); ++i) {
        if (!j.contains(codebook[i].name)) throw ParseError("<trace>", 0, codebook[i].name, "category absent from trace");
        const auto& v = j[codebook[i].name];
        if (v.is_number_integer()) a.values[i] = v.get<int>() == 1 ? CodeValue::present : CodeValue::absent;
    }
    return a;
}

ojson turn_json(const TurnRecord& t, const Codebook& codebook) {
    ojson j;
    j["round"] = t.round;
    j["agent"] = t.agent_name;
    j["role"] = to_string(t.role);
    j["raw_text"] = t.raw_text;
    if (t.first_raw_text) j["first_raw_text"] = *t.first_raw_text;
    j["retried"] = t.retried;
    j["timestamp"] = t.timestamp;
    const auto& e = t.extraction;
    j["parse_status"] = to_string(e.parse_status);
    j["codes"] = assignment_json(e.assignment, codebook);
    j["missing_labels"] = e.missing_labels;
    j["extraneous_labels"] = e.extraneous_labels;
    j["malformed_labels"] = e.malformed_labels;
    j["conflicting_labels"] = e.conflicting_labels;
    j["duplicate_keys"] = e.duplicate_keys;
    return j;
}

AgentRole role_from_string(std::string_view s) {
    if (s == "single_coder") return AgentRole::single_coder;
    if (s == "discussant") return AgentRole::discussant;
    if (s == "consensus") return AgentRole::consensus;
    throw ValidationError("unknown agent role: " + std::string(s));
}

TurnRecord turn_from_json(const ojson& j, const Codebook& codebook) {
    TurnRecord t;
    t.round = j.at("round").get<int>();
    t.agent_name = j.at("agent").get<std::string>();
    t.role = role_from_string(j.at("role").get<std::string>());
    t.raw_text = j.at("raw_text").get<std::string>();
    if (j.contains("first_raw_text")) t.first_raw_text = j["first_raw_text"].get<std::string>();
    t.retried = j.at("retried").get<bool>();
    t.timestamp = j.at("timestamp").get<std::int64_t>();
    auto& e = t.extraction;
    e.parse_status = parse_status_from_string(j.at("parse_status").get<std::string>());
    e.assignment = assignment_from_json(j.at("codes"), codebook, AssignmentSource::agent);
    e.missing_labels = j.at("missing_labels").get<std::vector<std::string>>();
    e.extraneous_labels = j.at("extraneous_labels").get<std::vector<std::string>>();
    e.malformed_labels = j.at("malformed_labels").get<std::vector<std::string>>();
    e.conflicting_labels = j.at("conflicting_labels").get<std::vector<std::string>>();
    e.duplicate_keys = j.at("duplicate_keys").get<std::size_t>();
    e.retried = t.retried;
    return t;
}

} // namespace

std::string trace_to_json_line(const DeliberationTrace& trace, const Codebook& codebook) {
    ojson j;
    j["config_id"] = trace.config_id;
    j["segment_id"] = trace.segment_id;
    j["segment_text"] = trace.segment_text;
    if (trace.failure) {
        j["failure"] = *trace.failure;
    } else {
        j["outcome"] = to_string(trace.outcome);
        j["aligned_round"] = trace.aligned_round;
        j["arbiter_fallback"] = trace.arbiter_fallback;
        j["final_source"] = to_string(trace.final_codes.source);
        j["final_codes"] = assignment_json(trace.final_codes, codebook);
        j["single_agent_codes"] = assignment_json(trace.single_agent_codes, codebook);
    }
    if (trace.single_agent_turn) j["single_agent_turn"] = turn_json(*trace.single_agent_turn, codebook);
    j["turns"] = ojson::array();
    for (const auto& t : trace.turns) j["turns"].push_back(turn_json(t, codebook));
    if (trace.arbiter_turn) j["arbiter_turn"] = turn_json(*trace.arbiter_turn, codebook);
    return j.dump();
}

DeliberationTrace trace_from_json_line(std::string_view line, const Codebook& codebook) {
    ojson j;
    try {
        j = ojson::parse(line);
    } catch (const ojson::parse_error& e) {
        throw ParseError("<trace>", 0, "", e.what());
    }
    try {
        DeliberationTrace t;
        t.config_id = j.at("config_id").get<std::string>();
        t.segment_id = j.at("segment_id").get<std::int64_t>();
        t.segment_text = j.value("segment_text", "");
        if (j.contains("failure")) {
            t.failure = j["failure"].get<std::string>();
        } else {
            t.outcome = consensus_outcome_from_string(j.at("outcome").get<std::string>());
            t.aligned_round = j.at("aligned_round").get<int>();
            t.arbiter_fallback = j.at("arbiter_fallback").get<bool>();
            t.final_codes = assignment_from_json(j.at("final_codes"), codebook,
                                                 assignment_source_from_string(j.at("final_source").get<std::string>()));
            t.single_agent_codes =
                assignment_from_json(j.at("single_agent_codes"), codebook, AssignmentSource::single_agent);
        }
        if (j.contains("single_agent_turn")) t.single_agent_turn = turn_from_json(j["single_agent_turn"], codebook);
        for (const auto& turn : j.at("turns")) t.turns.push_back(turn_from_json(turn, codebook));
        if (j.contains("arbiter_turn")) t.arbiter_turn = turn_from_json(j["arbiter_turn"], codebook);
        return t;
    } catch (const ojson::exception& e) {
        throw ParseError("<trace>", 0, "", e.what());
    }
}

namespace {

std::string indented(const std::string& text) {
    std::string out = "    ";
    for (char c : text) {
        out += c;
        if (c == '\n') out += "    ";
    }
    return out;
}

void render_turn(std::string& out, const std::string& heading, const TurnRecord& t, const Codebook& codebook) {
    out += heading + " [" + std::string(to_string(t.extraction.parse_status)) + (t.retried ? ", re-prompted" : "") +
           "]\n";
    if (t.first_raw_text) out += "  first attempt:\n" + indented(*t.first_raw_text) + "\n  retry:\n";
    out += indented(t.raw_text) + "\n";
    out += "  codes: " + render_assignment(codebook, t.extraction.assignment) + "\n";
    if (!t.extraction.extraneous_labels.empty()) {
        out += "  extraneous:";
        for (const auto& e : t.extraction.extraneous_labels) out += " \"" + e + "\"";
        out += "\n";
    }
    if (!t.extraction.conflicting_labels.empty()) {
        out += "  conflicting duplicates:";
        for (const auto& e : t.extraction.conflicting_labels) out += " \"" + e + "\"";
        out += "\n";
    }
}

} // namespace

std::string render_trace(const DeliberationTrace& trace, const Codebook& codebook) {
    std::string out = "Segment " + std::to_string(trace.segment_id) + " (" + trace.config_id + ")\n";
    if (!trace.segment_text.empty()) out += "Text: " + trace.segment_text + "\n";
    out += "\n";
    if (trace.single_agent_turn) {
        render_turn(out, "Single agent - " + trace.single_agent_turn->agent_name, *trace.single_agent_turn, codebook);
        out += "\n";
    }
    for (const auto& t : trace.turns) render_turn(out, "Round " + std::to_string(t.round) + " - " + t.agent_name, t, codebook);
    if (trace.arbiter_turn) render_turn(out, "Arbiter - " + trace.arbiter_turn->agent_name, *trace.arbiter_turn, codebook);
    out += "\n";
    if (trace.failure) return out + "FAILED: " + *trace.failure + "\n";
    out += "Outcome: " + std::string(to_string(trace.outcome));
    if (trace.arbiter_fallback) out += " (arbiter_fallback)";
    out += "\nFinal codes: " + render_assignment(codebook, trace.final_codes) + "\n";
    return out;
}

} // namespace coder_consensus
