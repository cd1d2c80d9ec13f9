// SPDX-License-Identifier: Apache-2.0

#include "coder_consensus/metrics.hpp"

#include "coder_consensus/errors.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

namespace coder_consensus {

std::string_view to_string(GroupField f) noexcept {
    switch (f) {
    case GroupField::model: return "model_id";
    case GroupField::config: return "config_id";
    case GroupField::temperature: return "temperature";
    case GroupField::congruency: return "congruency";
    case GroupField::persona_group: return "persona_group";
    case GroupField::category: return "category";
    }
    return "";
}

std::string group_value(const DecisionRecord& r, GroupField f) {
    switch (f) {
    case GroupField::model: return r.model_id;
    case GroupField::config: return r.config_id;
    case GroupField::temperature: return format_temperature(r.temperature);
    case GroupField::congruency: return std::string(to_string(r.congruency));
    case GroupField::persona_group: return std::string(to_string(r.persona_group));
    case GroupField::category: return r.category;
    }
    return "";
}

std::string_view to_string(LabelSource s) noexcept { return s == LabelSource::single ? "single" : "consensus"; }

std::string_view to_string(MissingPolicy p) noexcept {
    return p == MissingPolicy::exclude ? "exclude" : "count_as_disagree";
}

MissingPolicy missing_policy_from_string(std::string_view s) {
    if (s == "count_as_disagree" || s == "disagree") return MissingPolicy::count_as_disagree;
    if (s == "exclude") return MissingPolicy::exclude;
    throw ValidationError("unknown missing policy \"" + std::string(s) + "\" (expected count_as_disagree or exclude)");
}

std::string_view to_string(Direction d) noexcept {
    switch (d) {
    case Direction::mas_better: return "mas_better";
    case Direction::single_better: return "single_better";
    case Direction::none: return "none";
    }
    return "none";
}

PairingUnit pairing_unit_from_string(std::string_view s) {
    if (s == "segment") return PairingUnit::segment;
    if (s == "category") return PairingUnit::category;
    throw ValidationError("unknown pairing unit \"" + std::string(s) + "\" (expected segment or category)");
}

// --- intervals ------------------------------------------------------------

namespace {

double z_for(double level) {
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0,1)");
    boost::math::normal_distribution<double> normal;
    return boost::math::quantile(normal, 1.0 - (1.0 - level) / 2.0);
}

void check_counts(std::size_t agree, std::size_t n) {
    if (n == 0) throw ValidationError("binomial interval needs n >= 1");
    if (agree > n) throw ValidationError("binomial interval needs agree <= n");
}

} // namespace

Interval binomial_ci(std::size_t agree, std::size_t n, double level) {
    check_counts(agree, n);
    const double z = z_for(level);
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(agree) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    Interval ci{std::clamp(center - half, 0.0, 1.0), std::clamp(center + half, 0.0, 1.0)};
    ci.low = std::min(ci.low, p);
    ci.high = std::max(ci.high, p);
    if (agree == 0) ci.low = 0.0;
    if (agree == n) ci.high = 1.0;
    return ci;
}

Interval wald_ci(std::size_t agree, std::size_t n, double level) {
    check_counts(agree, n);
    const double p = static_cast<double>(agree) / static_cast<double>(n);
    const double half = z_for(level) * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    return {std::clamp(p - half, 0.0, 1.0), std::clamp(p + half, 0.0, 1.0)};
}

// --- agreement ------------------------------------------------------------

namespace {

CodeValue label_of(const DecisionRecord& r, LabelSource s) {
    return s == LabelSource::single ? r.single_agent : r.consensus_final;
}

GroupValues key_of(const DecisionRecord& r, const GroupKey& key) {
    GroupValues out;
    out.reserve(key.size());
    for (auto f : key) out.push_back(group_value(r, f));
    return out;
}

} // namespace

std::vector<AgreementSummary> agreement_rate(std::span<const DecisionRecord> records, const GroupKey& key,
                                             LabelSource source, MissingPolicy policy, double level) {
    if (records.empty()) throw ValidationError("agreement rate over an empty record set");
    std::map<GroupValues, std::pair<std::size_t, std::size_t>> counts;
    for (const auto& r : records) {
        auto& [n, agree] = counts[key_of(r, key)];
        auto label = label_of(r, source);
        if (label == CodeValue::missing) {
            if (policy == MissingPolicy::count_as_disagree) ++n;
            continue;
        }
        ++n;
        if (label == r.human) ++agree;
    }
    std::vector<AgreementSummary> out;
    for (const auto& [group, c] : counts) {
        AgreementSummary s;
        s.group = group;
        s.source = source;
        s.n = c.first;
        s.agree = c.second;
        if (s.n > 0) {
            s.rate = static_cast<double>(s.agree) / static_cast<double>(s.n);
            s.ci = binomial_ci(s.agree, s.n, level);
            s.wald = wald_ci(s.agree, s.n, level);
        }
        out.push_back(std::move(s));
    }
    return out;
}

// --- consensus frequencies ------------------------------------------------

namespace {

ConsensusFrequency finish(GroupValues group, std::size_t first, std::size_t delayed, std::size_t none) {
    ConsensusFrequency f;
    f.group = std::move(group);
    f.segments = first + delayed + none;
    const double n = static_cast<double>(f.segments);
    f.first = static_cast<double>(first) / n;
    f.delayed = static_cast<double>(delayed) / n;
    f.none = static_cast<double>(none) / n;
    return f;
}

} // namespace

std::vector<ConsensusFrequency> consensus_frequencies(std::span<const DecisionRecord> records, const GroupKey& key) {
    if (records.empty()) throw ValidationError("consensus frequencies over an empty record set");
    if (std::find(key.begin(), key.end(), GroupField::category) != key.end())
        throw ContractViolation("consensus outcomes are per segment; category cannot be a grouping field");
    std::set<std::pair<std::string, std::int64_t>> seen;
    std::map<GroupValues, std::array<std::size_t, 3>> counts;
    for (const auto& r : records) {
        if (!seen.insert({r.config_id, r.segment_id}).second) continue;
        counts[key_of(r, key)][static_cast<std::size_t>(r.outcome)]++;
    }
    std::vector<ConsensusFrequency> out;
    for (const auto& [group, c] : counts) out.push_back(finish(group, c[0], c[1], c[2]));
    return out;
}

std::vector<ConsensusFrequency> consensus_frequencies(std::span<const Rq1Row> rows) {
    if (rows.empty()) throw ValidationError("consensus frequencies over an empty export");
    std::size_t first = 0, delayed = 0, none = 0;
    for (const auto& r : rows) {
        if (r.first + r.delayed + r.none != 1) throw ValidationError("RQ1 row is not one-hot");
        first += static_cast<std::size_t>(r.first);
        delayed += static_cast<std::size_t>(r.delayed);
        none += static_cast<std::size_t>(r.none);
    }
    return {finish({}, first, delayed, none)};
}

// --- kappa ----------------------------------------------------------------

KappaResult cohens_kappa(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size())
        throw ValidationError("kappa needs equal-length label vectors (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    if (a.empty()) throw ValidationError("kappa needs at least one label pair");
    std::size_t agree = 0, a1 = 0, b1 = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] != 0 && a[i] != 1) || (b[i] != 0 && b[i] != 1)) throw ValidationError("kappa labels must be 0 or 1");
        agree += a[i] == b[i];
        a1 += static_cast<std::size_t>(a[i]);
        b1 += static_cast<std::size_t>(b[i]);
    }
    const double n = static_cast<double>(a.size());
    KappaResult k;
    k.n = a.size();
    k.observed_agreement = static_cast<double>(agree) / n;
    const double pa = static_cast<double>(a1) / n;
    const double pb = static_cast<double>(b1) / n;
    k.expected_agreement = pa * pb + (1.0 - pa) * (1.0 - pb);
    bool single_class = (a1 == 0 && b1 == 0) || (a1 == a.size() && b1 == b.size());
    if (single_class) {
        k.degenerate = true;
        k.expected_agreement = 1.0;
        k.kappa = 1.0;
    } else {
        // integer form keeps exact zeros exact
        const double total = static_cast<double>(a.size());
        const double chance = static_cast<double>(a1) * b1 + static_cast<double>(a.size() - a1) * (b.size() - b1);
        k.kappa = (total * agree - chance) / (total * total - chance);
    }
    k.substantial = k.kappa > 0.61;
    return k;
}

// --- alignment diff -------------------------------------------------------

std::vector<AlignmentDiff> alignment_diff(std::span<const DecisionRecord> records, const GroupKey& key,
                                          MissingPolicy policy, LabelSource minuend, LabelSource subtrahend) {
    struct Acc {
        std::size_t n = 0, m_match = 0, s_match = 0;
        std::vector<int> human, m_labels, s_labels;
    };
    std::map<GroupValues, Acc> groups;
    for (const auto& r : records) {
        auto m = label_of(r, minuend);
        auto s = label_of(r, subtrahend);
        if (policy == MissingPolicy::exclude && (m == CodeValue::missing || s == CodeValue::missing)) continue;
        auto& acc = groups[key_of(r, key)];
        ++acc.n;
        acc.m_match += m == r.human;
        acc.s_match += s == r.human;
        const int h = r.human == CodeValue::present ? 1 : 0;
        // a Missing label counts as the opposite of the human decision
        auto as_int = [h](CodeValue v) { return v == CodeValue::missing ? 1 - h : (v == CodeValue::present ? 1 : 0); };
        acc.human.push_back(h);
        acc.m_labels.push_back(as_int(m));
        acc.s_labels.push_back(as_int(s));
    }
    std::vector<AlignmentDiff> out;
    for (const auto& [group, acc] : groups) {
        AlignmentDiff d;
        d.group = group;
        d.n = acc.n;
        const double n = static_cast<double>(acc.n);
        d.minuend_rate = static_cast<double>(acc.m_match) / n;
        d.subtrahend_rate = static_cast<double>(acc.s_match) / n;
        d.diff = d.minuend_rate - d.subtrahend_rate;
        d.kappa_minuend = cohens_kappa(acc.human, acc.m_labels).kappa;
        d.kappa_subtrahend = cohens_kappa(acc.human, acc.s_labels).kappa;
        out.push_back(std::move(d));
    }
    return out;
}

// --- paired t -------------------------------------------------------------

PairedTestResult paired_t(std::span<const PairedSample> pairs) {
    PairedTestResult r;
    r.n = pairs.size();
    if (r.n == 0) return r;
    std::vector<double> diffs;
    diffs.reserve(r.n);
    for (const auto& p : pairs) diffs.push_back(p.consensus - p.single);
    r.mean_diff = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(r.n);
    r.direction = r.mean_diff > 0 ? Direction::mas_better : (r.mean_diff < 0 ? Direction::single_better : Direction::none);
    if (r.n < 2) return r;

    r.testable = true;
    r.df = r.n - 1;
    const bool constant = std::all_of(diffs.begin(), diffs.end(), [&](double d) { return d == diffs.front(); });
    if (constant) {
        r.degenerate = true;
        r.mean_diff = diffs.front();
        r.t_statistic = r.mean_diff == 0.0 ? 0.0 : std::copysign(INFINITY, r.mean_diff);
        r.p_raw = r.mean_diff == 0.0 ? 1.0 : 0.0;
        r.p_adjusted = r.p_raw;
        return r;
    }
    double ss = 0.0;
    for (double d : diffs) ss += (d - r.mean_diff) * (d - r.mean_diff);
    const double sd = std::sqrt(ss / static_cast<double>(r.df));
    r.t_statistic = r.mean_diff / (sd / std::sqrt(static_cast<double>(r.n)));
    boost::math::students_t_distribution<double> dist(static_cast<double>(r.df));
    r.p_raw = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t_statistic))));
    r.p_adjusted = r.p_raw;
    return r;
}

// --- BH -------------------------------------------------------------------

std::vector<double> bh_adjust(std::span<const double> p_values) {
    const std::size_t m = p_values.size();
    for (double p : p_values)
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p-value outside [0,1]: " + std::to_string(p));
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return p_values[x] < p_values[y]; });

    std::vector<double> adjusted(m);
    double running = 1.0;
    for (std::size_t rank = m; rank >= 1; --rank) {
        const std::size_t idx = order[rank - 1];
        const double q = p_values[idx] * static_cast<double>(m) / static_cast<double>(rank);
        running = std::min(running, q);
        // m * p / m can round one ulp below p
        adjusted[idx] = std::min(1.0, std::max(running, p_values[idx]));
    }
    return adjusted;
}

// --- contrasts ------------------------------------------------------------

std::vector<PairedTestResult> mas_vs_single_contrasts(std::span<const DecisionRecord> records, PairingUnit unit,
                                                      MissingPolicy policy) {
    std::map<std::string, std::size_t> model_order, category_order;
    for (const auto& r : records) {
        model_order.emplace(r.model_id, model_order.size());
        category_order.emplace(r.category, category_order.size());
    }

    // cell -> pairing unit -> (consensus matches, single matches, count)
    using Cell = std::tuple<std::size_t, std::size_t, int, double>; // model, category, group, temperature
    struct Tally {
        double consensus = 0, single = 0;
        std::size_t n = 0;
    };
    std::map<Cell, std::map<std::string, Tally>> cells;
    for (const auto& r : records) {
        if (r.persona_group == PersonaGroup::neutral_only) continue;
        auto c = r.consensus_final;
        auto s = r.single_agent;
        if (policy == MissingPolicy::exclude && (c == CodeValue::missing || s == CodeValue::missing)) continue;
        Cell cell{model_order[r.model_id], unit == PairingUnit::segment ? category_order[r.category] : 0,
                  static_cast<int>(r.persona_group), r.temperature};
        auto unit_key = unit == PairingUnit::segment ? std::to_string(r.segment_id) : r.category;
        auto& t = cells[cell][unit_key];
        t.consensus += c == r.human;
        t.single += s == r.human;
        ++t.n;
    }

    std::vector<std::string> models(model_order.size()), categories(category_order.size());
    for (const auto& [k, v] : model_order) models[v] = k;
    for (const auto& [k, v] : category_order) categories[v] = k;

    std::vector<PairedTestResult> out;
    for (const auto& [cell, units] : cells) {
        std::vector<PairedSample> pairs;
        pairs.reserve(units.size());
        for (const auto& [_, t] : units) {
            const double n = static_cast<double>(t.n);
            pairs.push_back({t.consensus / n, t.single / n});
        }
        auto r = paired_t(pairs);
        r.model_id = models[std::get<0>(cell)];
        r.category = unit == PairingUnit::segment ? categories[std::get<1>(cell)] : "";
        r.persona_group = to_string(static_cast<PersonaGroup>(std::get<2>(cell)));
        r.temperature = format_temperature(std::get<3>(cell));
        out.push_back(std::move(r));
    }

    std::vector<double> raw;
    std::vector<std::size_t> testable;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!out[i].testable) continue;
        raw.push_back(out[i].p_raw);
        testable.push_back(i);
    }
    auto adjusted = bh_adjust(raw);
    for (std::size_t j = 0; j < testable.size(); ++j) out[testable[j]].p_adjusted = adjusted[j];
    return out;
}

std::vector<PairedTestResult> significant_contrasts(std::span<const PairedTestResult> results, double alpha) {
    std::vector<PairedTestResult> out;
    for (const auto& r : results)
        if (r.testable && r.p_adjusted < alpha && r.direction != Direction::none) out.push_back(r);
    return out;
}

} // namespace coder_consensus
