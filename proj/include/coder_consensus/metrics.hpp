// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coder_consensus/experiment.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace coder_consensus {

enum class GroupField { model, config, temperature, congruency, persona_group, category };

std::string_view to_string(GroupField f) noexcept;

using GroupKey = std::vector<GroupField>;
/// Field values in GroupKey order.
using GroupValues = std::vector<std::string>;

std::string group_value(const DecisionRecord& r, GroupField f);

enum class LabelSource { single, consensus };
enum class MissingPolicy { count_as_disagree, exclude };

std::string_view to_string(LabelSource s) noexcept;
std::string_view to_string(MissingPolicy p) noexcept;
MissingPolicy missing_policy_from_string(std::string_view s);

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

/// Wilson score interval. Throws ValidationError when n == 0 or agree > n.
Interval binomial_ci(std::size_t agree, std::size_t n, double level = 0.95);
/// p +/- z sqrt(p(1-p)/n), clipped to [0,1]; emitted alongside Wilson for
/// comparison with normal-approximation tables.
Interval wald_ci(std::size_t agree, std::size_t n, double level = 0.95);

struct AgreementSummary {
    GroupValues group;
    LabelSource source = LabelSource::consensus;
    std::size_t n = 0;
    std::size_t agree = 0;
    /// nullopt when n == 0 (possible under the exclude policy).
    std::optional<double> rate;
    Interval ci;
    Interval wald;
};

/// Groups sorted by key values.
std::vector<AgreementSummary> agreement_rate(std::span<const DecisionRecord> records, const GroupKey& key,
                                             LabelSource source,
                                             MissingPolicy policy = MissingPolicy::count_as_disagree,
                                             double level = 0.95);

struct ConsensusFrequency {
    GroupValues group;
    std::size_t segments = 0;
    double first = 0.0;
    double delayed = 0.0;
    double none = 0.0;
};

/// Per group proportions over distinct (config, segment) events. `key`
/// must not contain GroupField::category.
std::vector<ConsensusFrequency> consensus_frequencies(std::span<const DecisionRecord> records, const GroupKey& key);
std::vector<ConsensusFrequency> consensus_frequencies(std::span<const Rq1Row> rows);

struct KappaResult {
    double kappa = 0.0;
    double observed_agreement = 0.0;
    double expected_agreement = 0.0;
    std::size_t n = 0;
    /// Both raters used a single identical class (p_e = 1); kappa set to 1.
    bool degenerate = false;
    /// kappa > 0.61
    bool substantial = false;
};

/// Two raters, binary labels (0/1). Throws ValidationError on length
/// mismatch, empty input or a non-binary label.
KappaResult cohens_kappa(std::span<const int> a, std::span<const int> b);

struct AlignmentDiff {
    GroupValues group;
    std::size_t n = 0;
    double minuend_rate = 0.0;
    double subtrahend_rate = 0.0;
    double diff = 0.0;
    std::optional<double> kappa_minuend;
    std::optional<double> kappa_subtrahend;
};

/// mean(minuend matches human) - mean(subtrahend matches human) per group;
/// positive means the minuend (by default the consensus) is closer to the
/// human labels.
std::vector<AlignmentDiff> alignment_diff(std::span<const DecisionRecord> records,
                                          const GroupKey& key = {GroupField::model, GroupField::category},
                                          MissingPolicy policy = MissingPolicy::count_as_disagree,
                                          LabelSource minuend = LabelSource::consensus,
                                          LabelSource subtrahend = LabelSource::single);

enum class Direction { mas_better, single_better, none };

std::string_view to_string(Direction d) noexcept;

/// One pair: consensus-side and single-side correctness in [0,1].
struct PairedSample {
    double consensus = 0.0;
    double single = 0.0;
};

struct PairedTestResult {
    /// model, category, persona_group, temperature (category empty under
    /// the category pairing unit).
    std::string model_id;
    std::string category;
    std::string persona_group;
    std::string temperature;

    std::size_t n = 0;
    double mean_diff = 0.0; ///< consensus - single
    double t_statistic = 0.0;
    std::size_t df = 0;
    double p_raw = 1.0;
    double p_adjusted = 1.0;
    Direction direction = Direction::none;
    /// Zero variance of the differences.
    bool degenerate = false;
    /// n >= 2
    bool testable = false;
};

/// Classical paired t, two-sided Student-t p. Zero-variance differences are
/// degenerate: p = 1 when mean_diff == 0, p = 0 otherwise.
PairedTestResult paired_t(std::span<const PairedSample> pairs);

/// Benjamini-Hochberg step-up, returned in input order. Throws
/// ValidationError for p outside [0,1].
std::vector<double> bh_adjust(std::span<const double> p_values);

enum class PairingUnit { segment, category };

PairingUnit pairing_unit_from_string(std::string_view s);

/// One paired t per contrast cell (model x category x persona_group x
/// temperature under the segment unit; model x persona_group x temperature
/// under the category unit), neutral_only excluded, BH applied over the
/// testable contrasts.
std::vector<PairedTestResult> mas_vs_single_contrasts(std::span<const DecisionRecord> records,
                                                      PairingUnit unit = PairingUnit::segment,
                                                      MissingPolicy policy = MissingPolicy::count_as_disagree);

/// p_adjusted < alpha, direction by sign of mean_diff.
std::vector<PairedTestResult> significant_contrasts(std::span<const PairedTestResult> results, double alpha = 0.05);

} // namespace coder_consensus
