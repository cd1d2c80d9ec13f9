// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coder_consensus/codebook.hpp"
#include "coder_consensus/extraction.hpp"
#include "coder_consensus/llm_backend.hpp"
#include "coder_consensus/prompting.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coder_consensus {

struct TurnRecord {
    int round = 1; ///< arbiter turns carry max_rounds + 1
    std::string agent_name;
    AgentRole role = AgentRole::discussant;
    std::string raw_text;
    /// First completion when the turn was re-prompted.
    std::optional<std::string> first_raw_text;
    ExtractionResult extraction;
    bool retried = false;
    std::int64_t timestamp = 0;
};

enum class ConsensusOutcome { first_consensus, delayed_consensus, no_consensus };

std::string_view to_string(ConsensusOutcome o) noexcept;
/// Accepts the names above and the short forms first / delayed / none.
ConsensusOutcome consensus_outcome_from_string(std::string_view s);

struct DeliberationTrace {
    std::int64_t segment_id = 0;
    std::string config_id;
    std::string segment_text;
    std::vector<TurnRecord> turns;
    ConsensusOutcome outcome = ConsensusOutcome::first_consensus;
    CodeAssignment final_codes;
    std::optional<TurnRecord> arbiter_turn;
    bool arbiter_fallback = false;
    /// Round at which the discussants aligned; 0 when they never did.
    int aligned_round = 0;
    CodeAssignment single_agent_codes;
    std::optional<TurnRecord> single_agent_turn;
    /// Set when a transport failure aborted the segment.
    std::optional<std::string> failure;
};

/// Monotone stamp source for TurnRecord::timestamp.
using TurnClock = std::function<std::int64_t()>;

/// Milliseconds since the Unix epoch.
TurnClock wall_clock();
/// 1, 2, 3, ... per clock instance; used with the mock backend.
TurnClock logical_clock();

/// Everything a deliberation needs besides the segment itself.
struct DeliberationContext {
    const Codebook& codebook;
    const LabelResolver& resolver;
    ChatBackend& backend;
    std::string model_id;
    std::string config_id;
    std::optional<std::int64_t> seed;
    TurnClock clock = logical_clock();
};

struct SingleAgentResult {
    CodeAssignment assignment;
    TurnRecord turn;
};

/// Control condition: one prompt, one completion, one optional re-prompt.
SingleAgentResult run_single_agent(const Segment& segment, const AgentProfile& profile,
                                   const DeliberationContext& ctx, std::span<const Segment> history);

/// True iff every category carries the same binary value on both sides.
/// Missing never aligns. Throws ContractViolation on a size mismatch.
bool check_alignment(const CodeAssignment& a, const CodeAssignment& b);

/// Dual-agent discussion with arbitration after `max_rounds` misaligned rounds.
DeliberationTrace run_deliberation(const Segment& segment, const AgentProfile& profile_a,
                                   const AgentProfile& profile_b, const AgentProfile& arbiter,
                                   const DeliberationContext& ctx, std::span<const Segment> history,
                                   int max_rounds = 2);

/// Recomputes the outcome from the turns and checks it against the stored
/// one. Throws IntegrityError on any inconsistency.
ConsensusOutcome classify_outcome(const DeliberationTrace& trace);

/// One JSON object per trace, single line.
std::string trace_to_json_line(const DeliberationTrace& trace, const Codebook& codebook);
DeliberationTrace trace_from_json_line(std::string_view line, const Codebook& codebook);

/// Human-readable transcript of one trace.
std::string render_trace(const DeliberationTrace& trace, const Codebook& codebook);

} // namespace coder_consensus
