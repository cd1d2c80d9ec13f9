// SPDX-License-Identifier: Apache-2.0

#include "coder_consensus/experiment.hpp"

#include "coder_consensus/csv.hpp"
#include "coder_consensus/errors.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <thread>

namespace coder_consensus {

using ojson = nlohmann::ordered_json;

// --- factors --------------------------------------------------------------

std::string PersonaPairing::label() const {
    return std::string(to_string(a)) + "-" + std::string(to_string(b));
}

PersonaPairing pairing_from_string(std::string_view s) {
    auto dash = s.find('-');
    if (dash == std::string_view::npos)
        throw ValidationError("pairing must look like personaA-personaB, got \"" + std::string(s) + "\"");
    return {persona_from_string(s.substr(0, dash)), persona_from_string(s.substr(dash + 1))};
}

std::vector<PersonaPairing> canonical_pairings() {
    using P = PersonaArchetype;
    return {{P::balanced, P::balanced}, {P::bold, P::bold},         {P::empathetic, P::empathetic},
            {P::bold, P::empathetic},   {P::balanced, P::bold},     {P::balanced, P::empathetic}};
}

std::vector<double> canonical_temperatures() { return {0.0, 0.5, 1.0}; }

std::string_view to_string(Congruency c) noexcept {
    return c == Congruency::congruent ? "congruent" : "incongruent";
}

std::string_view to_string(PersonaGroup g) noexcept {
    switch (g) {
    case PersonaGroup::has_bold: return "has_bold";
    case PersonaGroup::has_empathetic: return "has_empathetic";
    case PersonaGroup::has_both: return "has_both";
    case PersonaGroup::neutral_only: return "neutral_only";
    }
    return "neutral_only";
}

Congruency congruency_from_string(std::string_view s) {
    if (s == "congruent") return Congruency::congruent;
    if (s == "incongruent") return Congruency::incongruent;
    throw ValidationError("unknown congruency: \"" + std::string(s) + "\"");
}

PersonaGroup persona_group_from_string(std::string_view s) {
    if (s == "has_bold") return PersonaGroup::has_bold;
    if (s == "has_empathetic") return PersonaGroup::has_empathetic;
    if (s == "has_both") return PersonaGroup::has_both;
    if (s == "neutral_only") return PersonaGroup::neutral_only;
    throw ValidationError("unknown persona group: \"" + std::string(s) + "\"");
}

PersonaGroup persona_group_of(const PersonaPairing& p) noexcept {
    bool bold = p.a == PersonaArchetype::bold || p.b == PersonaArchetype::bold;
    bool empathetic = p.a == PersonaArchetype::empathetic || p.b == PersonaArchetype::empathetic;
    if (bold && empathetic) return PersonaGroup::has_both;
    if (bold) return PersonaGroup::has_bold;
    if (empathetic) return PersonaGroup::has_empathetic;
    return PersonaGroup::neutral_only;
}

std::string format_temperature(double t) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, t);
    std::string out(buf, p);
    if (out.find_first_of(".e") == std::string::npos) out += ".0";
    return out;
}

std::string make_config_id(const std::string& model_id, double temperature, const PersonaPairing& pairing) {
    return model_id + "__t" + format_temperature(temperature) + "__" + pairing.label();
}

std::vector<ExperimentConfig> build_matrix(const std::string& model_id, const std::vector<double>& temperatures,
                                           const std::vector<PersonaPairing>& pairings) {
    return build_matrix(std::vector<std::string>{model_id}, temperatures, pairings);
}

std::vector<ExperimentConfig> build_matrix(const std::vector<std::string>& model_ids,
                                           const std::vector<double>& temperatures,
                                           const std::vector<PersonaPairing>& pairings) {
    if (model_ids.empty()) throw ValidationError("no models given");
    if (temperatures.empty()) throw ValidationError("no temperatures given");
    if (pairings.empty()) throw ValidationError("no pairings given");
    for (std::size_t i = 0; i < pairings.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (pairings[i] == pairings[j]) throw ValidationError("duplicate pairing: " + pairings[i].label());
    for (std::size_t i = 0; i < temperatures.size(); ++i) {
        if (!(temperatures[i] >= 0.0 && temperatures[i] <= 1.0))
            throw ValidationError("temperature out of [0,1]: " + format_temperature(temperatures[i]));
        for (std::size_t j = 0; j < i; ++j)
            if (temperatures[i] == temperatures[j])
                throw ValidationError("duplicate temperature: " + format_temperature(temperatures[i]));
    }
    std::set<std::string> models;
    for (const auto& m : model_ids) {
        if (m.empty()) throw ValidationError("empty model id");
        if (!models.insert(m).second) throw ValidationError("duplicate model: " + m);
    }

    std::vector<ExperimentConfig> out;
    for (const auto& model : model_ids) {
        for (double t : temperatures) {
            for (const auto& p : pairings) {
                ExperimentConfig c;
                c.config_id = make_config_id(model, t, p);
                c.model_id = model;
                c.temperature = t;
                c.pairing = p;
                c.congruency = p.a == p.b ? Congruency::congruent : Congruency::incongruent;
                c.persona_group = persona_group_of(p);
                out.push_back(std::move(c));
            }
        }
    }
    return out;
}

// --- decision table -------------------------------------------------------

const std::vector<std::string>& decision_table_columns() {
    static const std::vector<std::string> columns{
        "config_id", "model_id", "temperature", "pairing", "congruency", "persona_group",
        "segment_id", "category", "human", "single_agent", "consensus_final", "outcome"};
    return columns;
}

std::string format_decision_table(const std::vector<DecisionRecord>& records) {
    std::string out = csv::format_row(decision_table_columns());
    for (const auto& r : records) {
        out += csv::format_row({r.config_id, r.model_id, format_temperature(r.temperature), r.pairing,
                                std::string(to_string(r.congruency)), std::string(to_string(r.persona_group)),
                                std::to_string(r.segment_id), r.category, to_cell(r.human), to_cell(r.single_agent),
                                to_cell(r.consensus_final), std::string(to_string(r.outcome))});
    }
    return out;
}

namespace {

double parse_double(const std::string& s, const std::string& where) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw ValidationError(where + ": not a number: \"" + s + "\"");
    return v;
}

std::int64_t parse_i64(const std::string& s, const std::string& where) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ValidationError(where + ": not an integer: \"" + s + "\"");
    return v;
}

CodeValue parse_value(const std::string& s, const std::string& where) {
    auto v = code_value_from_cell(s);
    if (!v) throw ValidationError(where + ": expected 0, 1 or missing, got \"" + s + "\"");
    return *v;
}

} // namespace

std::vector<DecisionRecord> parse_decision_table(std::string_view csv_text, const std::string& source_name) {
    auto rows = csv::parse(csv_text, source_name);
    if (rows.empty()) throw ValidationError(source_name + ": decision table is empty");
    const auto& header = rows[0].fields;
    const auto& expected = decision_table_columns();
    for (const auto& col : expected)
        if (std::find(header.begin(), header.end(), col) == header.end())
            throw ValidationError(source_name + ": decision table lacks column \"" + col + "\"");
    for (const auto& col : header)
        if (std::find(expected.begin(), expected.end(), col) == expected.end())
            throw ValidationError(source_name + ": unexpected decision table column \"" + col + "\"");
    if (rows.size() == 1) throw ValidationError(source_name + ": decision table has no rows");

    std::map<std::string, std::size_t> at;
    for (std::size_t i = 0; i < header.size(); ++i) at[header[i]] = i;

    std::vector<DecisionRecord> out;
    out.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        std::string where = source_name + ":" + std::to_string(rows[r].line);
        if (f.size() != header.size())
            throw ValidationError(where + ": expected " + std::to_string(header.size()) + " cells, got " +
                                  std::to_string(f.size()));
        auto cell = [&](const char* col) -> const std::string& { return f[at[col]]; };
        DecisionRecord d;
        d.config_id = cell("config_id");
        d.model_id = cell("model_id");
        d.temperature = parse_double(cell("temperature"), where + " [temperature]");
        d.pairing = cell("pairing");
        try {
            d.congruency = congruency_from_string(cell("congruency"));
            d.persona_group = persona_group_from_string(cell("persona_group"));
            d.outcome = consensus_outcome_from_string(cell("outcome"));
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
        d.segment_id = parse_i64(cell("segment_id"), where + " [segment_id]");
        d.category = cell("category");
        d.human = parse_value(cell("human"), where + " [human]");
        if (d.human == CodeValue::missing) throw ValidationError(where + " [human]: ground truth cannot be missing");
        d.single_agent = parse_value(cell("single_agent"), where + " [single_agent]");
        d.consensus_final = parse_value(cell("consensus_final"), where + " [consensus_final]");
        out.push_back(std::move(d));
    }
    return out;
}

// --- model-ready export ---------------------------------------------------

ModelReadyExport export_model_ready(const std::vector<DecisionRecord>& records) {
    ModelReadyExport out;
    std::set<std::pair<std::string, std::int64_t>> seen;
    for (const auto& r : records) {
        if (seen.insert({r.config_id, r.segment_id}).second) {
            Rq1Row row;
            row.config_id = r.config_id;
            row.segment_id = r.segment_id;
            row.temperature = r.temperature;
            row.congruency = r.congruency;
            row.first = r.outcome == ConsensusOutcome::first_consensus;
            row.delayed = r.outcome == ConsensusOutcome::delayed_consensus;
            row.none = r.outcome == ConsensusOutcome::no_consensus;
            out.rq1.push_back(std::move(row));
        }
        Rq2Row row;
        row.config_id = r.config_id;
        row.model_id = r.model_id;
        row.temperature = r.temperature;
        row.congruency = r.congruency;
        row.persona_group = r.persona_group;
        row.segment_id = r.segment_id;
        row.category = r.category;
        row.human = r.human;
        row.single_agent = r.single_agent;
        row.consensus_final = r.consensus_final;
        row.single_match = r.single_agent == r.human;
        row.consensus_match = r.consensus_final == r.human;
        out.rq2.push_back(std::move(row));
    }
    return out;
}

std::string ModelReadyExport::rq1_csv() const {
    std::string out = csv::format_row({"config_id", "segment_id", "temperature", "congruency", "first", "delayed", "none"});
    for (const auto& r : rq1)
        out += csv::format_row({r.config_id, std::to_string(r.segment_id), format_temperature(r.temperature),
                                std::string(to_string(r.congruency)), std::to_string(r.first),
                                std::to_string(r.delayed), std::to_string(r.none)});
    return out;
}

std::string ModelReadyExport::rq2_csv() const {
    std::string out = csv::format_row({"config_id", "model_id", "temperature", "congruency", "persona_group",
                                       "segment_id", "category", "human", "single_agent", "consensus_final",
                                       "single_match", "consensus_match"});
    for (const auto& r : rq2)
        out += csv::format_row({r.config_id, r.model_id, format_temperature(r.temperature),
                                std::string(to_string(r.congruency)), std::string(to_string(r.persona_group)),
                                std::to_string(r.segment_id), r.category, to_cell(r.human), to_cell(r.single_agent),
                                to_cell(r.consensus_final), std::to_string(r.single_match),
                                std::to_string(r.consensus_match)});
    return out;
}

// --- manifest -------------------------------------------------------------

std::string_view to_string(ConfigStatus s) noexcept {
    switch (s) {
    case ConfigStatus::pending: return "pending";
    case ConfigStatus::complete: return "complete";
    case ConfigStatus::incomplete: return "incomplete";
    }
    return "pending";
}

namespace {

ConfigStatus config_status_from_string(std::string_view s) {
    if (s == "pending") return ConfigStatus::pending;
    if (s == "complete") return ConfigStatus::complete;
    if (s == "incomplete") return ConfigStatus::incomplete;
    throw ValidationError("unknown config status: \"" + std::string(s) + "\"");
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

} // namespace

std::string RunManifest::to_json() const {
    ojson j;
    j["engine_version"] = engine_version;
    j["codebook_version"] = codebook_version;
    j["dataset_digest"] = dataset_digest;
    j["settings_digest"] = settings_digest;
    j["configs"] = ojson::array();
    for (const auto& e : configs)
        j["configs"].push_back({{"config_id", e.config_id},
                                {"status", to_string(e.status)},
                                {"segments", e.segments},
                                {"failed_segments", e.failed_segments},
                                {"records", e.records}});
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
    try {
        auto j = ojson::parse(text);
        RunManifest m;
        m.engine_version = j.at("engine_version").get<std::string>();
        m.codebook_version = j.at("codebook_version").get<std::string>();
        m.dataset_digest = j.at("dataset_digest").get<std::string>();
        m.settings_digest = j.at("settings_digest").get<std::string>();
        for (const auto& e : j.at("configs")) {
            Entry entry;
            entry.config_id = e.at("config_id").get<std::string>();
            entry.status = config_status_from_string(e.at("status").get<std::string>());
            entry.segments = e.at("segments").get<std::size_t>();
            entry.failed_segments = e.at("failed_segments").get<std::size_t>();
            entry.records = e.at("records").get<std::size_t>();
            m.configs.push_back(std::move(entry));
        }
        return m;
    } catch (const ojson::exception& e) {
        throw ParseError("manifest.json", 0, "", e.what());
    }
}

const RunManifest::Entry* RunManifest::find(const std::string& config_id) const {
    for (const auto& e : configs)
        if (e.config_id == config_id) return &e;
    return nullptr;
}

std::string dataset_digest(const Codebook& codebook, const std::vector<Segment>& segments,
                           const std::vector<GroundTruth>& ground_truth) {
    std::string blob = serialize_codebook(codebook);
    blob += '\x1e';
    blob += serialize_transcript(segments);
    blob += '\x1e';
    blob += serialize_ground_truth(codebook, ground_truth);
    return sha256_hex(blob);
}

namespace {

std::string settings_digest(const std::vector<ExperimentConfig>& configs, const RunSettings& s) {
    std::string blob = "max_rounds=" + std::to_string(s.max_rounds) +
                       ";history_window=" + std::to_string(s.history_window) +
                       ";seed=" + (s.seed ? std::to_string(*s.seed) : "none") + ";configs=";
    for (const auto& c : configs) blob += c.config_id + ",";
    return sha256_hex(blob);
}

} // namespace

// --- execution ------------------------------------------------------------

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string config_file_stem(const std::string& config_id) {
    std::string out = config_id;
    for (auto& c : out)
        if (c == '/' || c == '\\' || c == ':' || c == ' ') c = '_';
    return out;
}

std::span<const Segment> history_for(const std::vector<Segment>& segments, std::size_t index, std::size_t window) {
    std::size_t begin = index;
    while (begin > 0 && index - begin < window && segments[begin - 1].transcript_id == segments[index].transcript_id)
        --begin;
    return std::span<const Segment>(segments).subspan(begin, index - begin);
}

namespace {

struct ConfigRun {
    std::vector<DeliberationTrace> traces;
    std::vector<DecisionRecord> records;
    std::size_t failed = 0;
};

ConfigRun run_config(const ExperimentConfig& config, const std::vector<Segment>& segments,
                     const std::vector<GroundTruth>& ground_truth, const Codebook& codebook, ChatBackend& backend,
                     const LabelResolver& resolver, const RunSettings& settings) {
    const AgentProfile single{std::string(kSingleAgentName), PersonaArchetype::balanced, AgentRole::single_coder,
                              config.temperature};
    const AgentProfile coder_a{std::string(kCoderAName), config.pairing.a, AgentRole::discussant, config.temperature};
    const AgentProfile coder_b{std::string(kCoderBName), config.pairing.b, AgentRole::discussant, config.temperature};
    const AgentProfile arbiter{std::string(kArbiterName), PersonaArchetype::balanced, AgentRole::consensus,
                               config.temperature};

    ConfigRun run;
    run.traces.resize(segments.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto work = [&] {
        for (;;) {
            auto i = next.fetch_add(1);
            if (i >= segments.size()) return;
            {
                std::lock_guard lock(error_mutex);
                if (error) return;
            }
            const auto& segment = segments[i];
            DeliberationContext ctx{codebook, resolver, backend, config.model_id, config.config_id, settings.seed,
                                    backend.kind() == BackendKind::mock ? logical_clock() : wall_clock()};
            auto history = history_for(segments, i, settings.history_window);
            auto& slot = run.traces[i];
            try {
                auto single_result = run_single_agent(segment, single, ctx, history);
                slot = run_deliberation(segment, coder_a, coder_b, arbiter, ctx, history, settings.max_rounds);
                slot.single_agent_codes = std::move(single_result.assignment);
                slot.single_agent_turn = std::move(single_result.turn);
            } catch (const TransportError& e) {
                slot = DeliberationTrace{};
                slot.segment_id = segment.id;
                slot.config_id = config.config_id;
                slot.segment_text = segment.display();
                slot.failure = e.what();
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };

    std::size_t workers = std::max<std::size_t>(1, std::min({settings.workers, backend.max_in_flight(), segments.size()}));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (error) std::rethrow_exception(error);

    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& trace = run.traces[i];
        if (trace.failure) {
            ++run.failed;
            continue;
        }
        const auto& truth = ground_truth[i].assignment;
        for (std::size_t c = 0; c < codebook.size(); ++c) {
            DecisionRecord d;
            d.config_id = config.config_id;
            d.model_id = config.model_id;
            d.temperature = config.temperature;
            d.pairing = config.pairing.label();
            d.congruency = config.congruency;
            d.persona_group = config.persona_group;
            d.segment_id = segments[i].id;
            d.category = codebook[c].name;
            d.human = truth.values[c];
            d.single_agent = trace.single_agent_codes.values[c];
            d.consensus_final = trace.final_codes.values[c];
            d.outcome = trace.outcome;
            run.records.push_back(std::move(d));
        }
    }
    return run;
}

} // namespace

ExperimentResult run_experiment(const std::vector<ExperimentConfig>& configs, const std::vector<Segment>& segments,
                                const std::vector<GroundTruth>& ground_truth, const Codebook& codebook,
                                ChatBackend& backend, const LabelResolver& resolver, const RunSettings& settings) {
    if (configs.empty()) throw ValidationError("no configurations to run");
    if (segments.empty()) throw ValidationError("no segments to code");
    if (ground_truth.size() != segments.size())
        throw ValidationError("ground truth covers " + std::to_string(ground_truth.size()) + " of " +
                              std::to_string(segments.size()) + " segments");
    for (std::size_t i = 0; i < segments.size(); ++i)
        if (ground_truth[i].segment_id != segments[i].id || ground_truth[i].assignment.size() != codebook.size())
            throw ValidationError("ground truth row " + std::to_string(i) + " does not match segment " +
                                  std::to_string(segments[i].id));

    const bool persist = !settings.out_dir.empty();
    const auto manifest_path = settings.out_dir / "manifest.json";

    ExperimentResult result;
    auto& manifest = result.manifest;
    manifest.dataset_digest = dataset_digest(codebook, segments, ground_truth);
    manifest.settings_digest = settings_digest(configs, settings);
    manifest.codebook_version = codebook.version();
    for (const auto& c : configs) manifest.configs.push_back({c.config_id, ConfigStatus::pending, segments.size(), 0, 0});

    std::optional<RunManifest> previous;
    if (persist && settings.resume && std::filesystem::exists(manifest_path)) {
        previous = RunManifest::from_json(read_file(manifest_path));
        if (previous->dataset_digest != manifest.dataset_digest)
            throw ValidationError("dataset digest mismatch: inputs changed since the run in " +
                                  settings.out_dir.string() + "; refusing to resume");
        if (previous->settings_digest != manifest.settings_digest)
            throw ValidationError("settings digest mismatch: configurations or run settings changed since the run in " +
                                  settings.out_dir.string() + "; refusing to resume");
    }

    auto decisions_path = [&](const ExperimentConfig& c) {
        return settings.out_dir / "decisions" / (config_file_stem(c.config_id) + ".csv");
    };
    auto traces_path = [&](const ExperimentConfig& c) {
        return settings.out_dir / "traces" / (config_file_stem(c.config_id) + ".jsonl");
    };

    std::vector<std::vector<DecisionRecord>> per_config(configs.size());
    for (std::size_t k = 0; k < configs.size(); ++k) {
        const auto& config = configs[k];
        auto& entry = manifest.configs[k];

        if (previous) {
            if (const auto* done = previous->find(config.config_id); done && done->status == ConfigStatus::complete) {
                per_config[k] = parse_decision_table(read_file(decisions_path(config)), decisions_path(config).string());
                entry = *done;
                if (settings.progress) settings.progress("skip " + config.config_id + " (complete)");
                continue;
            }
        }
        if (settings.max_configs && result.executed_configs >= *settings.max_configs) continue;

        if (settings.progress)
            settings.progress("run " + config.config_id + " (" + std::to_string(k + 1) + "/" +
                              std::to_string(configs.size()) + ")");
        auto run = run_config(config, segments, ground_truth, codebook, backend, resolver, settings);
        ++result.executed_configs;
        result.failed_segments += run.failed;
        entry.failed_segments = run.failed;
        entry.records = run.records.size();
        entry.status = run.failed == 0 ? ConfigStatus::complete : ConfigStatus::incomplete;

        if (persist) {
            std::string jsonl;
            for (const auto& t : run.traces) jsonl += trace_to_json_line(t, codebook) + "\n";
            write_file_atomic(traces_path(config), jsonl);
            write_file_atomic(decisions_path(config), format_decision_table(run.records));
            write_file_atomic(manifest_path, manifest.to_json());
        }
        per_config[k] = std::move(run.records);
        for (auto& t : run.traces) result.traces.push_back(std::move(t));
    }

    result.complete = true;
    for (std::size_t k = 0; k < configs.size(); ++k) {
        if (manifest.configs[k].status != ConfigStatus::complete) result.complete = false;
        for (auto& r : per_config[k]) result.records.push_back(std::move(r));
    }
    if (persist) {
        write_file_atomic(manifest_path, manifest.to_json());
        write_file_atomic(settings.out_dir / "decisions.csv", format_decision_table(result.records));
    }
    return result;
}

} // namespace coder_consensus
