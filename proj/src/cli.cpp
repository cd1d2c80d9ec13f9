// SPDX-License-Identifier: Apache-2.0

#include "coder_consensus/cli.hpp"

#include "coder_consensus/codebook.hpp"
#include "coder_consensus/csv.hpp"
#include "coder_consensus/deliberation.hpp"
#include "coder_consensus/errors.hpp"
#include "coder_consensus/experiment.hpp"
#include "coder_consensus/extraction.hpp"
#include "coder_consensus/prompting.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace coder_consensus::cli {

using nlohmann::json;

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

// --- configuration --------------------------------------------------------

AppConfig load_config(const std::filesystem::path& path, AppConfig c) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 0, "", e.what());
    }
    if (!doc.is_object()) throw ParseError(path.string(), 0, "", "config must be a JSON object");
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "codebook") c.codebook = value.get<std::string>();
            else if (key == "transcript") c.transcript = value.get<std::string>();
            else if (key == "ground_truth") c.ground_truth = value.get<std::string>();
            else if (key == "backend") c.backend = value.get<std::string>();
            else if (key == "mock_script") c.mock_script = value.get<std::string>();
            else if (key == "base_url") c.base_url = value.get<std::string>();
            else if (key == "model_id" || key == "models") {
                if (value.is_array()) c.models = value.get<std::vector<std::string>>();
                else c.models = {value.get<std::string>()};
            }
            else if (key == "temperatures") c.temperatures = value.get<std::vector<double>>();
            else if (key == "pairings") c.pairings = value.get<std::vector<std::string>>();
            else if (key == "max_rounds") c.max_rounds = value.get<int>();
            else if (key == "history_window") c.history_window = value.get<std::size_t>();
            else if (key == "workers") c.workers = value.get<std::size_t>();
            else if (key == "out_dir") c.out_dir = value.get<std::string>();
            else if (key == "alias_file") c.alias_file = value.get<std::string>();
            else if (key == "seed") {
                if (value.is_null()) c.seed.reset();
                else c.seed = value.get<std::int64_t>();
            }
            else if (key == "timeout_s") c.timeout_s = value.get<int>();
            else if (key == "transport_retries") c.transport_retries = value.get<int>();
            else if (key == "max_in_flight") c.max_in_flight = value.get<std::size_t>();
            else if (key == "bearer_token") c.bearer_token = value.get<std::string>();
            else if (key == "missing_policy") c.missing_policy = value.get<std::string>();
            else throw ParseError(path.string(), 0, key, "unknown config key");
        }
    } catch (const json::type_error& e) {
        throw ParseError(path.string(), 0, "", e.what());
    }
    // relative input paths resolve against the config file's directory
    auto base = path.parent_path();
    auto rebase = [&](std::string& p) {
        if (!p.empty() && p != "builtin" && std::filesystem::path(p).is_relative() && !base.empty())
            p = (base / p).lexically_normal().string();
    };
    rebase(c.codebook);
    rebase(c.transcript);
    rebase(c.ground_truth);
    rebase(c.mock_script);
    rebase(c.alias_file);
    return c;
}

namespace {

std::string default_mock_response(const Codebook& codebook) {
    return "Code: " + render_assignment(codebook, CodeAssignment::all(codebook.size(), CodeValue::absent,
                                                                       AssignmentSource::agent));
}

} // namespace

std::unique_ptr<ChatBackend> make_backend(const AppConfig& config) {
    if (config.backend == "mock") {
        MockScript script;
        if (!config.mock_script.empty()) {
            script = MockScript::load(config.mock_script);
        } else {
            script.default_response = default_mock_response(load_codebook(config.codebook));
        }
        return std::make_unique<MockBackend>(std::move(script), config.max_in_flight);
    }
    if (config.backend == "http") {
        HttpBackendOptions opts;
        opts.base_url = resolve_base_url(config.base_url);
        opts.timeout = std::chrono::seconds(config.timeout_s);
        opts.transport_retries = config.transport_retries;
        opts.max_in_flight = config.max_in_flight;
        opts.bearer_token = config.bearer_token;
        return std::make_unique<HttpBackend>(std::move(opts));
    }
    throw ValidationError("unknown backend \"" + config.backend + "\" (expected http or mock)");
}

namespace {

std::vector<PersonaPairing> pairings_of(const AppConfig& c) {
    if (c.pairings.empty()) return canonical_pairings();
    std::vector<PersonaPairing> out;
    for (const auto& p : c.pairings) out.push_back(pairing_from_string(p));
    return out;
}

AliasTable aliases_of(const AppConfig& c) {
    return c.alias_file.empty() ? default_aliases() : load_alias_file(c.alias_file);
}

struct Inputs {
    Codebook codebook;
    std::vector<Segment> segments;
    std::vector<GroundTruth> truth;
};

Inputs load_inputs(const AppConfig& c) {
    if (c.transcript.empty()) throw ValidationError("no transcript configured (set `transcript` or --transcript)");
    if (c.ground_truth.empty())
        throw ValidationError("no ground truth configured (set `ground_truth` or --ground-truth)");
    Inputs in;
    in.codebook = load_codebook(c.codebook);
    in.segments = load_transcript(c.transcript);
    in.truth = load_ground_truth(c.ground_truth, in.codebook, in.segments);
    return in;
}

} // namespace

// --- validate -------------------------------------------------------------

int cmd_validate(const AppConfig& config, std::ostream& out, std::ostream& err) {
    int failures = 0;
    auto fail = [&](const std::string& what, const std::string& hint) {
        ++failures;
        err << "FAIL " << what << "\n     hint: " << hint << "\n";
    };

    std::optional<Codebook> codebook;
    try {
        codebook = load_codebook(config.codebook);
        out << "ok   codebook " << config.codebook << " (" << codebook->size() << " categories, version \""
            << codebook->version() << "\")\n";
    } catch (const Error& e) {
        fail(std::string("codebook: ") + e.what(), "fix the codebook file or use `builtin`");
    }

    std::optional<std::vector<Segment>> segments;
    try {
        if (config.transcript.empty()) throw ValidationError("no transcript configured");
        segments = load_transcript(config.transcript);
        out << "ok   transcript " << config.transcript << " (" << segments->size() << " segments)\n";
    } catch (const Error& e) {
        fail(std::string("transcript: ") + e.what(),
             "header must be segment_id,transcript_id,speaker,text with one non-empty text per row");
    }

    if (codebook && segments) {
        try {
            if (config.ground_truth.empty()) throw ValidationError("no ground truth configured");
            auto truth = load_ground_truth(config.ground_truth, *codebook, *segments);
            out << "ok   ground truth " << config.ground_truth << " (" << truth.size() << " rows)\n";
        } catch (const Error& e) {
            fail(std::string("ground truth: ") + e.what(),
                 "one row per segment, header segment_id plus every codebook category, cells 0 or 1");
        }
    }

    if (codebook) {
        try {
            LabelResolver resolver(*codebook, aliases_of(config));
            out << "ok   alias table";
            if (!resolver.unused_aliases().empty())
                out << " (" << resolver.unused_aliases().size() << " alias(es) target no category of this codebook)";
            out << "\n";
        } catch (const Error& e) {
            fail(std::string("alias file: ") + e.what(), R"(expected {"aliases": {"variant": "Category"}})");
        }
    }

    try {
        auto configs = build_matrix(config.models, config.temperatures, pairings_of(config));
        if (config.max_rounds < 1) throw ValidationError("max_rounds must be >= 1");
        missing_policy_from_string(config.missing_policy);
        out << "ok   experiment matrix (" << configs.size() << " configurations)\n";
    } catch (const Error& e) {
        fail(std::string("experiment settings: ") + e.what(), "check temperatures, pairings and models");
    }

    try {
        auto backend = make_backend(config);
        for (const auto& model : config.models) {
            auto report = backend->probe(model);
            if (report.ok)
                out << "ok   backend: " << report.detail << "\n";
            else
                fail("backend: " + report.detail, "check base_url / CODER_CONSENSUS_BASE_URL and the served models");
        }
    } catch (const Error& e) {
        fail(std::string("backend: ") + e.what(), "check base_url / CODER_CONSENSUS_BASE_URL");
    }

    if (failures) {
        err << failures << " check(s) failed\n";
        return kFailure;
    }
    out << "all checks passed\n";
    return kOk;
}

// --- run ------------------------------------------------------------------

int cmd_run(const AppConfig& config, const RunFlags& flags, std::ostream& out, std::ostream& err) {
    auto in = load_inputs(config);
    LabelResolver resolver(in.codebook, aliases_of(config));
    auto configs = build_matrix(config.models, config.temperatures, pairings_of(config));
    auto backend = make_backend(config);

    RunSettings settings;
    settings.max_rounds = config.max_rounds;
    settings.history_window = config.history_window;
    settings.workers = config.workers;
    settings.seed = config.seed;
    settings.out_dir = config.out_dir;
    settings.resume = flags.resume;
    settings.max_configs = flags.max_configs;
    settings.progress = [&out](const std::string& line) { out << line << "\n" << std::flush; };

    auto result = run_experiment(configs, in.segments, in.truth, in.codebook, *backend, resolver, settings);

    std::size_t complete = 0, incomplete = 0, pending = 0;
    for (const auto& e : result.manifest.configs) {
        if (e.status == ConfigStatus::complete) ++complete;
        else if (e.status == ConfigStatus::incomplete) ++incomplete;
        else ++pending;
    }
    out << "executed " << result.executed_configs << " configuration(s); " << complete << " complete, " << incomplete
        << " incomplete, " << pending << " pending; " << result.records.size() << " decision rows in "
        << (std::filesystem::path(config.out_dir) / "decisions.csv").string() << "\n";
    if (result.failed_segments > 0) {
        err << result.failed_segments << " segment(s) failed in transport and were excluded; rerun with --resume\n";
        return kTransport;
    }
    if (!result.complete) {
        err << "run stopped before all configurations finished; rerun with --resume\n";
        return kFailure;
    }
    return kOk;
}

// --- analyze --------------------------------------------------------------

const std::vector<std::string>& analysis_files() {
    static const std::vector<std::string> files{"agreement.csv",  "consensus_freq.csv", "alignment_diff.csv",
                                                "contrasts.csv",  "rq1_export.csv",     "rq2_export.csv"};
    return files;
}

namespace {

std::string grouping_label(const GroupKey& key) {
    std::string out;
    for (auto f : key) out += (out.empty() ? "" : "+") + std::string(to_string(f));
    return out;
}

/// Spreads group values into the fixed column set.
std::vector<std::string> spread(const GroupKey& key, const GroupValues& values, const std::vector<GroupField>& columns) {
    std::vector<std::string> out(columns.size());
    for (std::size_t i = 0; i < key.size(); ++i) {
        auto it = std::find(columns.begin(), columns.end(), key[i]);
        if (it != columns.end()) out[static_cast<std::size_t>(it - columns.begin())] = values[i];
    }
    return out;
}

} // namespace

int cmd_analyze(const std::filesystem::path& decisions, const std::filesystem::path& out_dir,
                const AnalyzeOptions& options, std::ostream& out, std::ostream& err) {
    (void)err;
    auto records = parse_decision_table(read_file(decisions), decisions.string());
    const std::span<const DecisionRecord> view(records);

    const std::vector<GroupField> columns{GroupField::model, GroupField::temperature, GroupField::congruency,
                                          GroupField::persona_group, GroupField::category};

    // agreement.csv
    {
        std::vector<std::string> header{"grouping"};
        for (auto f : columns) header.emplace_back(to_string(f));
        for (const char* h : {"source", "n", "agree", "rate", "ci_low", "ci_high", "wald_low", "wald_high"})
            header.emplace_back(h);
        std::string text = csv::format_row(header);
        const std::vector<GroupKey> groupings{
            {GroupField::model},
            {GroupField::model, GroupField::temperature, GroupField::congruency},
            {GroupField::model, GroupField::persona_group},
            {GroupField::model, GroupField::category},
        };
        for (const auto& key : groupings) {
            for (auto source : {LabelSource::single, LabelSource::consensus}) {
                for (const auto& s : agreement_rate(view, key, source, options.missing_policy)) {
                    std::vector<std::string> row{grouping_label(key)};
                    for (auto& v : spread(key, s.group, columns)) row.push_back(std::move(v));
                    row.emplace_back(to_string(source));
                    row.push_back(std::to_string(s.n));
                    row.push_back(std::to_string(s.agree));
                    if (s.rate) {
                        for (double v : {*s.rate, s.ci.low, s.ci.high, s.wald.low, s.wald.high})
                            row.push_back(format_number(v));
                    } else {
                        row.insert(row.end(), 5, "");
                    }
                    text += csv::format_row(row);
                }
            }
        }
        write_file_atomic(out_dir / "agreement.csv", text);
    }

    // consensus_freq.csv
    {
        std::string text = csv::format_row(
            {"grouping", "model_id", "temperature", "congruency", "persona_group", "segments", "first", "delayed", "none"});
        const std::vector<GroupKey> groupings{
            {GroupField::model},
            {GroupField::model, GroupField::temperature, GroupField::congruency},
            {GroupField::model, GroupField::persona_group},
        };
        const std::vector<GroupField> freq_columns{GroupField::model, GroupField::temperature, GroupField::congruency,
                                                   GroupField::persona_group};
        for (const auto& key : groupings) {
            for (const auto& f : consensus_frequencies(view, key)) {
                std::vector<std::string> row{grouping_label(key)};
                for (auto& v : spread(key, f.group, freq_columns)) row.push_back(std::move(v));
                row.push_back(std::to_string(f.segments));
                for (double v : {f.first, f.delayed, f.none}) row.push_back(format_number(v));
                text += csv::format_row(row);
            }
        }
        write_file_atomic(out_dir / "consensus_freq.csv", text);
    }

    // alignment_diff.csv
    {
        std::string text = csv::format_row({"model_id", "category", "n", "consensus_rate", "single_rate", "diff",
                                            "kappa_consensus", "kappa_single"});
        for (const auto& d : alignment_diff(view, {GroupField::model, GroupField::category}, options.missing_policy)) {
            text += csv::format_row({d.group[0], d.group[1], std::to_string(d.n), format_number(d.minuend_rate),
                                     format_number(d.subtrahend_rate), format_number(d.diff),
                                     d.kappa_minuend ? format_number(*d.kappa_minuend) : "",
                                     d.kappa_subtrahend ? format_number(*d.kappa_subtrahend) : ""});
        }
        write_file_atomic(out_dir / "alignment_diff.csv", text);
    }

    // contrasts.csv
    std::size_t significant = 0, mas_better = 0;
    {
        auto contrasts = mas_vs_single_contrasts(view, options.pairing_unit, options.missing_policy);
        auto sig = significant_contrasts(contrasts, options.alpha);
        significant = sig.size();
        for (const auto& s : sig) mas_better += s.direction == Direction::mas_better;
        std::string text = csv::format_row({"model_id", "category", "persona_group", "temperature", "n_pairs",
                                            "mean_diff", "t_statistic", "df", "p_raw", "p_adjusted", "direction",
                                            "degenerate", "testable", "significant"});
        for (const auto& c : contrasts) {
            bool is_sig = c.testable && c.p_adjusted < options.alpha && c.direction != Direction::none;
            text += csv::format_row({c.model_id, c.category, c.persona_group, c.temperature, std::to_string(c.n),
                                     format_number(c.mean_diff), c.testable ? format_number(c.t_statistic) : "",
                                     c.testable ? std::to_string(c.df) : "", c.testable ? format_number(c.p_raw) : "",
                                     c.testable ? format_number(c.p_adjusted) : "", std::string(to_string(c.direction)),
                                     c.degenerate ? "1" : "0", c.testable ? "1" : "0", is_sig ? "1" : "0"});
        }
        write_file_atomic(out_dir / "contrasts.csv", text);
    }

    auto exported = export_model_ready(records);
    write_file_atomic(out_dir / "rq1_export.csv", exported.rq1_csv());
    write_file_atomic(out_dir / "rq2_export.csv", exported.rq2_csv());

    out << "analyzed " << records.size() << " decisions; " << significant << " significant contrast(s) after BH ("
        << mas_better << " favour the multi-agent consensus); wrote";
    for (const auto& f : analysis_files()) out << " " << f;
    out << " to " << out_dir.string() << "\n";
    return kOk;
}

// --- trace ----------------------------------------------------------------

namespace {

/// Rebuilds the category order from a trace line's code dictionaries.
Codebook codebook_from_trace(const std::string& line) {
    auto j = nlohmann::ordered_json::parse(line);
    const nlohmann::ordered_json* codes = nullptr;
    if (j.contains("final_codes")) codes = &j["final_codes"];
    else if (j.contains("turns") && !j["turns"].empty()) codes = &j["turns"][0]["codes"];
    else if (j.contains("single_agent_turn")) codes = &j["single_agent_turn"]["codes"];
    if (!codes || !codes->is_object() || codes->empty())
        throw ValidationError("trace line carries no code dictionary to recover categories from");
    std::vector<CodeCategory> categories;
    for (const auto& [name, _] : codes->items()) categories.push_back({name, "", {}});
    return Codebook("from-trace", std::move(categories));
}

} // namespace

int cmd_trace(const std::filesystem::path& trace_file, std::optional<std::int64_t> segment_id, std::ostream& out,
              std::ostream& err) {
    std::istringstream lines(read_file(trace_file));
    std::string line;
    std::optional<Codebook> codebook;
    bool found = false;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        if (!codebook) codebook = codebook_from_trace(line);
        auto trace = trace_from_json_line(line, *codebook);
        if (segment_id && trace.segment_id != *segment_id) continue;
        if (found) out << "\n----------------------------------------\n\n";
        out << render_trace(trace, *codebook);
        found = true;
    }
    if (!found) {
        if (segment_id)
            err << "segment " << *segment_id << " not found in " << trace_file.string() << "\n";
        else
            err << "no traces in " << trace_file.string() << "\n";
        return kFailure;
    }
    return kOk;
}

int cmd_show_templates(std::ostream& out) {
    out << dump_templates();
    return kOk;
}

// --- mock demo ------------------------------------------------------------

namespace {

/// Full eight-key dictionary with the given categories set; `spelling`
/// overrides individual key spellings.
std::string demo_dict(const Codebook& cb, const std::set<std::string>& present,
                      const std::map<std::string, std::string>& spelling = {}, const std::string& extra = "") {
    std::string out = "{";
    for (std::size_t i = 0; i < cb.size(); ++i) {
        const auto& name = cb[i].name;
        auto key = spelling.contains(name) ? spelling.at(name) : name;
        out += (i ? ", '" : "'") + key + "': " + (present.contains(name) ? "1" : "0");
    }
    return out + extra + "}";
}

MockRule demo_rule(std::int64_t segment, std::optional<std::string> agent, std::optional<int> round,
                   std::string response, std::optional<int> attempt = std::nullopt) {
    MockRule r;
    r.segments = std::vector<std::int64_t>{segment};
    r.agent = std::move(agent);
    r.round = round;
    r.attempt = attempt;
    r.response = std::move(response);
    return r;
}

} // namespace

int cmd_mock_demo(const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err) {
    const auto& cb = builtin_codebook();
    const std::string c1(kCoderAName), c2(kCoderBName), arb(kArbiterName), single(kSingleAgentName);

    std::vector<Segment> segments{
        {0, "Tutor", "What's good, XX?", "demo"},
        {1, "Tutor", "Not quite. Look for factor pairs.", "demo"},
        {2, "Tutor", "Remember, what does factor mean?", "demo"},
        {3, "Tutor", "We found them.", "demo"},
        {4, "Tutor", "Why do you think we might have done that?", "demo"},
        {5, "Tutor", "Good job. We have about 5 minutes left.", "demo"},
    };
    auto gt = [&](std::int64_t id, std::set<std::string> present) {
        GroundTruth g{id, CodeAssignment::all(cb.size(), CodeValue::absent, AssignmentSource::human)};
        for (const auto& p : present) g.assignment.values[*cb.index_of(p)] = CodeValue::present;
        return g;
    };
    std::vector<GroundTruth> truth{gt(0, {"Greeting"}),
                                   gt(1, {"Guiding Feedback"}),
                                   gt(2, {"Aligning to Prior Knowledge", "Understanding/Engagement-Tutor"}),
                                   gt(3, {"Guiding Feedback"}),
                                   gt(4, {"Understanding/Engagement-Tutor"}),
                                   gt(5, {"Encouragement", "Time Management"})};

    std::string codebook_echo = "Codebook:\n" + render_codebook(cb);
    MockScript script;
    auto& rules = script.rules;
    // 0: clean first-round consensus
    rules.push_back(demo_rule(0, std::nullopt, std::nullopt,
                              "The tutor opens with a salutation. Code: " + demo_dict(cb, {"Greeting"})));
    // 1: duplicate keys ("Guiding Feedback.1"), resolved in round 2
    rules.push_back(demo_rule(1, c1, std::nullopt,
                              "This is feedback on the student's work. Code: " +
                                  demo_dict(cb, {"Guiding Feedback"}, {{"Guiding Feedback", "Guiding feedback"}},
                                            ", 'Guiding Feedback.1': 1, 'Instruction.1': 0")));
    rules.push_back(demo_rule(1, c2, 1, "The tutor directs the next step. Code: " + demo_dict(cb, {"Instruction"})));
    rules.push_back(demo_rule(1, c2, 2,
                              "I agree with the previous turn's analysis; it is feedback, not a directive. Code: " +
                                  demo_dict(cb, {"Guiding Feedback"})));
    // 2: codebook echo without a dictionary, recovered by the single re-prompt
    rules.push_back(demo_rule(2, c2, 1, codebook_echo, 0));
    rules.push_back(demo_rule(2, std::nullopt, std::nullopt,
                              "The word \"remember\" links to prior knowledge and it is a question. Code: " +
                                  demo_dict(cb, {"Aligning to Prior Knowledge", "Understanding/Engagement-Tutor"})));
    // 3: hallucinated datapoint, persistent disagreement, arbiter decides
    rules.push_back(demo_rule(3, c1, std::nullopt,
                              "{'Guiding feedback': 1}\n\nReasoning: The text \"We found them\" implies the tutor is "
                              "providing guidance."));
    rules.push_back(demo_rule(3, c2, std::nullopt,
                              "The previous turn said: Greeting, Instruction, Guiding feedback. The tutor asks whether "
                              "the student remembers what a factor is. My code: " +
                                  demo_dict(cb, {"Aligning to Prior Knowledge"})));
    rules.push_back(demo_rule(3, arb, std::nullopt,
                              "Coder 2 discusses an utterance that is not in the data. The tutor reports progress on "
                              "the problem. Code: " + demo_dict(cb, {"Guiding Feedback"})));
    // 4: alias ("Tutor questioning") plus an invented category
    rules.push_back(demo_rule(4, std::nullopt, std::nullopt,
                              "A check for understanding. Code: " +
                                  demo_dict(cb, {"Understanding/Engagement-Tutor"},
                                            {{"Understanding/Engagement-Tutor", "Tutor questioning"}},
                                            ", 'Student responses': 0")));
    // 5: two codes at once
    rules.push_back(demo_rule(5, std::nullopt, std::nullopt,
                              "Praise followed by pacing. Code: " + demo_dict(cb, {"Encouragement", "Time Management"})));
    script.default_response = "Code: " + demo_dict(cb, {});

    MockBackend backend(std::move(script), 1);
    LabelResolver resolver(cb);
    auto configs = build_matrix("mock-demo", {0.0}, {{PersonaArchetype::bold, PersonaArchetype::empathetic}});
    RunSettings settings;
    settings.out_dir = out_dir;
    auto result = run_experiment(configs, segments, truth, cb, backend, resolver, settings);

    for (std::size_t i = 0; i < result.traces.size(); ++i) {
        if (i) out << "\n----------------------------------------\n\n";
        out << render_trace(result.traces[i], cb);
    }
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& t : result.traces) ++counts[static_cast<int>(t.outcome)];
    out << "\nmock-demo: " << result.traces.size() << " segments, " << counts[0] << " first, " << counts[1]
        << " delayed, " << counts[2] << " no consensus; " << backend.request_count() << " backend calls; artifacts in "
        << out_dir.string() << "\n";
    (void)err;
    return kOk;
}

// --- entry point ----------------------------------------------------------

int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-agent deductive coding of dialog transcripts with LLMs", "coder-consensus"};
    app.require_subcommand(1);

    struct Overrides {
        std::string config, out_dir, base_url, alias_file, missing_policy, codebook, transcript, ground_truth, backend,
            mock_script;
        std::vector<std::string> models, pairings;
        std::vector<double> temperatures;
        std::optional<int> max_rounds;
        std::optional<std::size_t> workers, history_window, max_configs;
        std::optional<std::int64_t> seed;
        bool resume = false;
    } o;

    auto add_run_options = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--out-dir", o.out_dir, "Output directory");
        sub->add_option("--base-url", o.base_url, "Ollama-compatible endpoint");
        sub->add_option("--model", o.models, "Model id (repeatable)");
        sub->add_option("--temperatures", o.temperatures, "Decoding temperatures")->delimiter(',');
        sub->add_option("--pairings", o.pairings, "Persona pairings, e.g. bold-empathetic")->delimiter(',');
        sub->add_option("--max-rounds", o.max_rounds, "Coding rounds before arbitration");
        sub->add_option("--history-window", o.history_window, "Preceding segments shown as context");
        sub->add_option("--workers", o.workers, "Concurrent segments");
        sub->add_option("--alias-file", o.alias_file, "Label alias table");
        sub->add_option("--missing-policy", o.missing_policy, "count_as_disagree or exclude");
        sub->add_option("--seed", o.seed, "Seed passed to the backend");
        sub->add_option("--codebook", o.codebook, "Codebook file or `builtin`");
        sub->add_option("--transcript", o.transcript, "Transcript CSV");
        sub->add_option("--ground-truth", o.ground_truth, "Ground-truth CSV");
        sub->add_option("--backend", o.backend, "http or mock");
        sub->add_option("--mock-script", o.mock_script, "Mock backend script (JSON)");
    };

    auto* validate = app.add_subcommand("validate", "Check inputs, endpoint and model availability");
    add_run_options(validate);
    auto* run = app.add_subcommand("run", "Run the experiment matrix");
    add_run_options(run);
    run->add_flag("--resume", o.resume, "Skip configurations the manifest lists as complete");
    run->add_option("--max-configs", o.max_configs, "Stop after executing this many configurations");

    std::string decisions_path, analyze_out, pairing_unit = "segment", analyze_policy = "count_as_disagree";
    double alpha = 0.05;
    auto* analyze = app.add_subcommand("analyze", "Compute agreement, consensus and contrast statistics");
    analyze->add_option("decisions", decisions_path, "decisions.csv from `run`")->required()->check(CLI::ExistingFile);
    analyze->add_option("--out-dir", analyze_out, "Output directory (default: next to the decision table)");
    analyze->add_option("--missing-policy", analyze_policy, "count_as_disagree or exclude");
    analyze->add_option("--pairing-unit", pairing_unit, "segment or category");
    analyze->add_option("--alpha", alpha, "FDR level");

    std::string trace_path;
    std::optional<std::int64_t> trace_segment;
    bool show_templates = false;
    auto* trace = app.add_subcommand("trace", "Print a deliberation transcript");
    trace->add_option("trace_file", trace_path, "traces/<config>.jsonl");
    trace->add_option("--segment", trace_segment, "Segment id");
    trace->add_flag("--show-templates", show_templates, "Print the prompt templates");

    std::string demo_out = "mock-demo-out";
    auto* demo = app.add_subcommand("mock-demo", "Scripted offline scenario");
    demo->add_option("--out-dir", demo_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kFailure;
    }

    auto resolve_config = [&]() {
        AppConfig c;
        if (!o.config.empty()) c = load_config(o.config, c);
        if (!o.out_dir.empty()) c.out_dir = o.out_dir;
        if (!o.base_url.empty()) c.base_url = o.base_url;
        if (!o.models.empty()) c.models = o.models;
        if (!o.temperatures.empty()) c.temperatures = o.temperatures;
        if (!o.pairings.empty()) c.pairings = o.pairings;
        if (o.max_rounds) c.max_rounds = *o.max_rounds;
        if (o.history_window) c.history_window = *o.history_window;
        if (o.workers) c.workers = *o.workers;
        if (!o.alias_file.empty()) c.alias_file = o.alias_file;
        if (!o.missing_policy.empty()) c.missing_policy = o.missing_policy;
        if (o.seed) c.seed = o.seed;
        if (!o.codebook.empty()) c.codebook = o.codebook;
        if (!o.transcript.empty()) c.transcript = o.transcript;
        if (!o.ground_truth.empty()) c.ground_truth = o.ground_truth;
        if (!o.backend.empty()) c.backend = o.backend;
        if (!o.mock_script.empty()) c.mock_script = o.mock_script;
        return c;
    };

    try {
        if (*validate) return cmd_validate(resolve_config(), out, err);
        if (*run) return cmd_run(resolve_config(), RunFlags{o.resume, o.max_configs}, out, err);
        if (*analyze) {
            AnalyzeOptions opts;
            opts.missing_policy = missing_policy_from_string(analyze_policy);
            opts.pairing_unit = pairing_unit_from_string(pairing_unit);
            opts.alpha = alpha;
            std::filesystem::path dir = analyze_out.empty() ? std::filesystem::path(decisions_path).parent_path()
                                                            : std::filesystem::path(analyze_out);
            if (dir.empty()) dir = ".";
            return cmd_analyze(decisions_path, dir, opts, out, err);
        }
        if (*trace) {
            if (show_templates) return cmd_show_templates(out);
            if (trace_path.empty()) {
                err << "trace: give a trace file or --show-templates\n";
                return kFailure;
            }
            return cmd_trace(trace_path, trace_segment, out, err);
        }
        if (*demo) return cmd_mock_demo(demo_out, out, err);
    } catch (const TransportError& e) {
        err << "transport error: " << e.what() << "\n";
        return kTransport;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}

} // namespace coder_consensus::cli
