// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coder_consensus/codebook.hpp"
#include "coder_consensus/deliberation.hpp"
#include "coder_consensus/extraction.hpp"
#include "coder_consensus/llm_backend.hpp"
#include "coder_consensus/prompting.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coder_consensus {

inline constexpr std::string_view kEngineVersion = "0.1.0";

struct PersonaPairing {
    PersonaArchetype a = PersonaArchetype::balanced;
    PersonaArchetype b = PersonaArchetype::balanced;

    /// "bold-empathetic"
    std::string label() const;
    bool operator==(const PersonaPairing&) const = default;
};

PersonaPairing pairing_from_string(std::string_view s);

/// balanced-balanced, bold-bold, empathetic-empathetic, bold-empathetic,
/// balanced-bold, balanced-empathetic.
std::vector<PersonaPairing> canonical_pairings();
/// 0.0, 0.5, 1.0
std::vector<double> canonical_temperatures();

enum class Congruency { congruent, incongruent };
enum class PersonaGroup { has_bold, has_empathetic, has_both, neutral_only };

std::string_view to_string(Congruency c) noexcept;
std::string_view to_string(PersonaGroup g) noexcept;
Congruency congruency_from_string(std::string_view s);
PersonaGroup persona_group_from_string(std::string_view s);
PersonaGroup persona_group_of(const PersonaPairing& p) noexcept;

/// Shortest round-trip form with at least one decimal: 0.0, 0.5, 0.25.
std::string format_temperature(double t);

struct ExperimentConfig {
    std::string config_id;
    std::string model_id;
    double temperature = 0.0;
    PersonaPairing pairing;
    Congruency congruency = Congruency::congruent;
    PersonaGroup persona_group = PersonaGroup::neutral_only;
};

/// `<model>__t<temp>__<personaA>-<personaB>`
std::string make_config_id(const std::string& model_id, double temperature, const PersonaPairing& pairing);

/// Temperature-major Cartesian product. Throws ValidationError on empty
/// factor lists, duplicate pairings or duplicate temperatures.
std::vector<ExperimentConfig> build_matrix(const std::string& model_id, const std::vector<double>& temperatures,
                                           const std::vector<PersonaPairing>& pairings);
/// Models run in the order given.
std::vector<ExperimentConfig> build_matrix(const std::vector<std::string>& model_ids,
                                           const std::vector<double>& temperatures,
                                           const std::vector<PersonaPairing>& pairings);

/// One (configuration x segment x category) decision.
struct DecisionRecord {
    std::string config_id;
    std::string model_id;
    double temperature = 0.0;
    std::string pairing;
    Congruency congruency = Congruency::congruent;
    PersonaGroup persona_group = PersonaGroup::neutral_only;
    std::int64_t segment_id = 0;
    std::string category;
    CodeValue human = CodeValue::absent;
    CodeValue single_agent = CodeValue::missing;
    CodeValue consensus_final = CodeValue::missing;
    ConsensusOutcome outcome = ConsensusOutcome::first_consensus;

    bool operator==(const DecisionRecord&) const = default;
};

const std::vector<std::string>& decision_table_columns();
std::string format_decision_table(const std::vector<DecisionRecord>& records);
/// Throws ValidationError naming the first missing or unexpected column, or
/// the offending cell.
std::vector<DecisionRecord> parse_decision_table(std::string_view csv_text,
                                                 const std::string& source_name = "<decisions>");

struct Rq1Row {
    std::string config_id;
    std::int64_t segment_id = 0;
    double temperature = 0.0;
    Congruency congruency = Congruency::congruent;
    int first = 0;
    int delayed = 0;
    int none = 0;
};

struct Rq2Row {
    std::string config_id;
    std::string model_id;
    double temperature = 0.0;
    Congruency congruency = Congruency::congruent;
    PersonaGroup persona_group = PersonaGroup::neutral_only;
    std::int64_t segment_id = 0;
    std::string category;
    CodeValue human = CodeValue::absent;
    CodeValue single_agent = CodeValue::missing;
    CodeValue consensus_final = CodeValue::missing;
    int single_match = 0;
    int consensus_match = 0;
};

/// Long-format inputs for external mixed-effects fitting: one RQ2 row per
/// decision, one RQ1 row per (config, segment) consensus event.
struct ModelReadyExport {
    std::vector<Rq1Row> rq1;
    std::vector<Rq2Row> rq2;

    std::string rq1_csv() const;
    std::string rq2_csv() const;
};

ModelReadyExport export_model_ready(const std::vector<DecisionRecord>& records);

enum class ConfigStatus { pending, complete, incomplete };

std::string_view to_string(ConfigStatus s) noexcept;

struct RunManifest {
    struct Entry {
        std::string config_id;
        ConfigStatus status = ConfigStatus::pending;
        std::size_t segments = 0;
        std::size_t failed_segments = 0;
        std::size_t records = 0;
    };

    std::string dataset_digest;
    std::string settings_digest;
    std::string codebook_version;
    std::string engine_version{kEngineVersion};
    std::vector<Entry> configs;

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
    const Entry* find(const std::string& config_id) const;
};

struct RunSettings {
    int max_rounds = 2;
    std::size_t history_window = 10;
    std::size_t workers = 1;
    std::optional<std::int64_t> seed;
    /// Empty: keep everything in memory, write nothing.
    std::filesystem::path out_dir;
    bool resume = false;
    /// Stop after executing this many configurations (simulated interruption).
    std::optional<std::size_t> max_configs;
    std::function<void(const std::string&)> progress;
};

struct ExperimentResult {
    /// Traces of configurations executed by this invocation, in config order.
    std::vector<DeliberationTrace> traces;
    /// Decisions of every configuration with records on disk or in memory,
    /// in (config, segment, category) order.
    std::vector<DecisionRecord> records;
    RunManifest manifest;
    std::size_t executed_configs = 0;
    std::size_t failed_segments = 0;
    /// Every configuration is complete.
    bool complete = false;
};

/// SHA-256 over the canonical serialization of the three inputs.
std::string dataset_digest(const Codebook& codebook, const std::vector<Segment>& segments,
                           const std::vector<GroundTruth>& ground_truth);

/// Preceding segments of the same transcript, at most `window` of them.
std::span<const Segment> history_for(const std::vector<Segment>& segments, std::size_t index, std::size_t window);

/// Runs the single-agent control and the deliberation for every
/// (config, segment). With an out_dir, writes per-config traces and
/// decisions atomically, `decisions.csv` and `manifest.json`; `resume`
/// skips configurations the manifest lists as complete and refuses a
/// changed dataset or settings.
ExperimentResult run_experiment(const std::vector<ExperimentConfig>& configs, const std::vector<Segment>& segments,
                                const std::vector<GroundTruth>& ground_truth, const Codebook& codebook,
                                ChatBackend& backend, const LabelResolver& resolver, const RunSettings& settings);

/// Temp file + rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// File-system safe form of a config id.
std::string config_file_stem(const std::string& config_id);

} // namespace coder_consensus
