// SPDX-License-Identifier: Apache-2.0
#include "test_support.hpp"

#include "coder_consensus/csv.hpp"
#include "coder_consensus/errors.hpp"

#include <doctest.h>

#include <fstream>

using namespace coder_consensus;
using cc_test::TempDir;

namespace {

const Codebook& cb() { return builtin_codebook(); }

struct Inputs {
    std::vector<Segment> segments = cc_test::make_segments(12, 5);
    std::vector<GroundTruth> truth = cc_test::make_truth(cb(), segments);
    LabelResolver resolver{cb()};
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

} // namespace

TEST_SUITE("matrix") {
    TEST_CASE("canonical matrix") {
        auto configs = build_matrix("wizardlm2:7b", canonical_temperatures(), canonical_pairings());
        REQUIRE(configs.size() == 18);
        CHECK(configs[0].config_id == "wizardlm2:7b__t0.0__balanced-balanced");
        CHECK(configs[3].config_id == "wizardlm2:7b__t0.0__bold-empathetic");
        CHECK(configs[17].config_id == "wizardlm2:7b__t1.0__balanced-empathetic");
        std::size_t congruent = 0;
        for (const auto& c : configs) congruent += c.congruency == Congruency::congruent;
        CHECK(congruent == 9);
        CHECK(configs[4].persona_group == PersonaGroup::has_bold);
        CHECK(configs[5].persona_group == PersonaGroup::has_empathetic);
        CHECK(configs[3].persona_group == PersonaGroup::has_both);
        CHECK(configs[0].persona_group == PersonaGroup::neutral_only);
    }

    TEST_CASE("multi-model and validation") {
        auto configs = build_matrix(std::vector<std::string>{"a", "b"}, {0.0, 0.5}, canonical_pairings());
        CHECK(configs.size() == 24);
        CHECK(configs[12].model_id == "b");
        CHECK_THROWS_AS(build_matrix("m", {}, canonical_pairings()), ValidationError);
        CHECK_THROWS_AS(build_matrix("m", {0.5, 0.5}, canonical_pairings()), ValidationError);
        CHECK_THROWS_AS(build_matrix("m", {0.0}, {pairing_from_string("bold-bold"), pairing_from_string("bold-bold")}),
                        ValidationError);
        CHECK_THROWS_AS(build_matrix("m", {-1.0}, canonical_pairings()), ValidationError);
        CHECK_THROWS_AS(pairing_from_string("bold"), ValidationError);
    }

    TEST_CASE("temperature formatting") {
        CHECK(format_temperature(0.0) == "0.0");
        CHECK(format_temperature(0.5) == "0.5");
        CHECK(format_temperature(1.0) == "1.0");
        CHECK(format_temperature(0.25) == "0.25");
        CHECK(make_config_id("m", 0.5, pairing_from_string("empathetic-bold")) == "m__t0.5__empathetic-bold");
        CHECK(config_file_stem("wizardlm2:7b__t0.0__bold-bold").find(':') == std::string::npos);
    }

    TEST_CASE("history window stays inside a transcript") {
        auto segs = cc_test::make_segments(12, 5);
        CHECK(history_for(segs, 0, 10).empty());
        CHECK(history_for(segs, 4, 10).size() == 4);
        CHECK(history_for(segs, 4, 2).size() == 2);
        CHECK(history_for(segs, 4, 2).front().id == 2);
        CHECK(history_for(segs, 5, 10).empty());
        CHECK(history_for(segs, 7, 10).size() == 2);
        CHECK(history_for(segs, 7, 0).empty());
    }
}

TEST_SUITE("decision table") {
    DecisionRecord sample() {
        DecisionRecord r;
        r.config_id = "m__t0.5__bold-empathetic";
        r.model_id = "m";
        r.temperature = 0.5;
        r.pairing = "bold-empathetic";
        r.congruency = Congruency::incongruent;
        r.persona_group = PersonaGroup::has_both;
        r.segment_id = 3;
        r.category = "Understanding/Engagement-Tutor";
        r.human = CodeValue::present;
        r.single_agent = CodeValue::missing;
        r.consensus_final = CodeValue::present;
        r.outcome = ConsensusOutcome::delayed_consensus;
        return r;
    }

    TEST_CASE("round trip") {
        std::vector<DecisionRecord> records{sample(), sample()};
        records[1].category = "Greeting";
        records[1].human = CodeValue::absent;
        auto text = format_decision_table(records);
        CHECK(text.rfind("config_id,model_id,temperature,pairing,congruency,persona_group,segment_id,category,human,"
                         "single_agent,consensus_final,outcome\n",
                         0) == 0);
        CHECK(parse_decision_table(text) == records);
        CHECK(format_decision_table(parse_decision_table(text)) == text);
    }

    TEST_CASE("schema errors name the column") {
        auto text = format_decision_table({sample()});
        auto no_outcome = text;
        auto header_end = no_outcome.find('\n');
        no_outcome = "config_id,model_id,temperature,pairing,congruency,persona_group,segment_id,category,human,"
                     "single_agent,consensus_final\n";
        CHECK_THROWS_WITH_AS(parse_decision_table(no_outcome + "a,b,0.5,bold-bold,congruent,has_bold,0,G,1,1,1\n"),
                             doctest::Contains("outcome"), ValidationError);
        CHECK_THROWS_WITH_AS(parse_decision_table(text.substr(0, header_end) + ",extra\n"), doctest::Contains("extra"),
                             ValidationError);
        CHECK_THROWS_AS(parse_decision_table(""), ValidationError);
        CHECK_THROWS_AS(parse_decision_table(text.substr(0, header_end + 1)), ValidationError);
        auto bad_cell = text;
        bad_cell.replace(bad_cell.find("delayed_consensus"), 17, "sometimes");
        CHECK_THROWS_AS(parse_decision_table(bad_cell), ValidationError);
    }

    TEST_CASE("model-ready exports") {
        std::vector<DecisionRecord> records;
        const ConsensusOutcome outcomes[] = {ConsensusOutcome::first_consensus, ConsensusOutcome::no_consensus,
                                            ConsensusOutcome::no_consensus};
        for (std::int64_t s = 0; s < 3; ++s) {
            for (const auto& name : cb().names()) {
                auto r = sample();
                r.segment_id = s;
                r.category = name;
                r.outcome = outcomes[s];
                r.single_agent = name == "Greeting" ? CodeValue::present : CodeValue::missing;
                records.push_back(r);
            }
        }
        auto ex = export_model_ready(records);
        CHECK(ex.rq2.size() == 24);
        REQUIRE(ex.rq1.size() == 3);
        CHECK(ex.rq1[0].first == 1);
        CHECK(ex.rq1[0].delayed == 0);
        CHECK(ex.rq1[0].none == 0);
        int first = 0, none = 0;
        for (const auto& r : ex.rq1) {
            first += r.first;
            none += r.none;
            CHECK(r.first + r.delayed + r.none == 1);
        }
        CHECK(first == 1);
        CHECK(none == 2);
        CHECK(ex.rq1_csv().rfind("config_id,segment_id,temperature,congruency,first,delayed,none\n", 0) == 0);
        CHECK(count_lines(ex.rq2_csv()) == 25);
        CHECK(ex.rq2[0].single_match == 1);
        CHECK(ex.rq2[1].single_match == 0);
        CHECK(ex.rq2[1].consensus_match == 1);
    }
}

TEST_SUITE("run_experiment") {
    TEST_CASE("in-memory run covers every decision") {
        Inputs in;
        MockBackend backend(cc_test::varied_script(cb()));
        auto configs = build_matrix("m", {0.0, 1.0}, {pairing_from_string("bold-empathetic"),
                                                      pairing_from_string("balanced-balanced")});
        RunSettings s;
        s.workers = 3;
        auto res = run_experiment(configs, in.segments, in.truth, cb(), backend, in.resolver, s);
        CHECK(res.complete);
        CHECK(res.executed_configs == 4);
        CHECK(res.records.size() == 4 * 12 * 8);
        CHECK(res.traces.size() == 48);
        for (const auto& t : res.traces) {
            CHECK(classify_outcome(t) == t.outcome);
            CHECK(t.single_agent_turn.has_value());
        }
        // records are in (config, segment, category) order
        CHECK(res.records[0].segment_id == 0);
        CHECK(res.records[8].segment_id == 1);
        CHECK(res.records[96].config_id == configs[1].config_id);
        CHECK(res.records[0].category == "Greeting");
    }

    TEST_CASE("persisted artifacts, resume and digest checks") {
        Inputs in;
        TempDir dir("run");
        MockBackend backend(cc_test::varied_script(cb()));
        auto configs = build_matrix("m", {0.0, 0.5}, {pairing_from_string("bold-bold")});
        RunSettings s;
        s.out_dir = dir.path();
        s.workers = 2;
        auto res = run_experiment(configs, in.segments, in.truth, cb(), backend, in.resolver, s);
        REQUIRE(res.complete);
        CHECK(std::filesystem::exists(dir / "manifest.json"));
        CHECK(std::filesystem::exists(dir / "decisions.csv"));
        CHECK(std::filesystem::exists(dir.path() / "traces" / (config_file_stem(configs[0].config_id) + ".jsonl")));
        CHECK(count_lines(read_file(dir / "decisions.csv")) == 1 + 2 * 12 * 8);
        auto manifest = RunManifest::from_json(read_file(dir / "manifest.json"));
        CHECK(manifest.dataset_digest.size() == 64);
        CHECK(manifest.find(configs[1].config_id)->status == ConfigStatus::complete);
        CHECK(manifest.engine_version == kEngineVersion);

        // resuming a complete run is a no-op
        auto before = read_file(dir / "decisions.csv");
        backend.clear_log();
        s.resume = true;
        auto again = run_experiment(configs, in.segments, in.truth, cb(), backend, in.resolver, s);
        CHECK(again.executed_configs == 0);
        CHECK(backend.request_count() == 0);
        CHECK(again.complete);
        CHECK(read_file(dir / "decisions.csv") == before);

        // changed ground truth
        auto truth = in.truth;
        truth[0].assignment.values[1] = CodeValue::present;
        CHECK_THROWS_WITH_AS(run_experiment(configs, in.segments, truth, cb(), backend, in.resolver, s),
                             doctest::Contains("dataset digest"), ValidationError);
        // changed settings
        auto s2 = s;
        s2.max_rounds = 3;
        CHECK_THROWS_WITH_AS(run_experiment(configs, in.segments, in.truth, cb(), backend, in.resolver, s2),
                             doctest::Contains("settings digest"), ValidationError);
    }

    TEST_CASE("transport failures exclude the segment and mark the config incomplete") {
        Inputs in;
        auto script = cc_test::varied_script(cb());
        MockRule down;
        down.segments = std::vector<std::int64_t>{4};
        down.agent = "Coder 2";
        down.fail = true;
        script.rules.insert(script.rules.begin(), down);
        MockBackend backend(script);
        auto configs = build_matrix("m", {0.0}, {pairing_from_string("bold-bold")});
        TempDir dir("fail");
        RunSettings s;
        s.out_dir = dir.path();
        auto res = run_experiment(configs, in.segments, in.truth, cb(), backend, in.resolver, s);
        CHECK_FALSE(res.complete);
        CHECK(res.failed_segments == 1);
        CHECK(res.records.size() == 11 * 8);
        CHECK(res.manifest.configs[0].status == ConfigStatus::incomplete);
        CHECK(res.manifest.configs[0].failed_segments == 1);
        for (const auto& r : res.records) CHECK(r.segment_id != 4);
        bool saw_failure = false;
        for (const auto& t : res.traces) saw_failure |= t.segment_id == 4 && t.failure.has_value();
        CHECK(saw_failure);

        // once the endpoint recovers, resume fills the gap
        MockBackend healthy(cc_test::varied_script(cb()));
        s.resume = true;
        auto healed = run_experiment(configs, in.segments, in.truth, cb(), healthy, in.resolver, s);
        CHECK(healed.complete);
        CHECK(healed.records.size() == 12 * 8);
    }

    TEST_CASE("max_configs stops early and resume completes") {
        Inputs in;
        TempDir dir("partial");
        MockBackend backend(cc_test::varied_script(cb()));
        auto configs = build_matrix("m", {0.0, 0.5, 1.0}, {pairing_from_string("bold-empathetic")});
        RunSettings s;
        s.out_dir = dir.path();
        s.max_configs = 1;
        auto first = run_experiment(configs, in.segments, in.truth, cb(), backend, in.resolver, s);
        CHECK_FALSE(first.complete);
        CHECK(first.executed_configs == 1);
        CHECK(first.manifest.configs[1].status == ConfigStatus::pending);
        s.resume = true;
        s.max_configs.reset();
        auto second = run_experiment(configs, in.segments, in.truth, cb(), backend, in.resolver, s);
        CHECK(second.executed_configs == 2);
        CHECK(second.complete);
    }

    TEST_CASE("input consistency") {
        Inputs in;
        MockBackend backend(cc_test::varied_script(cb()));
        auto configs = build_matrix("m", {0.0}, {pairing_from_string("bold-bold")});
        auto truth = in.truth;
        truth.pop_back();
        CHECK_THROWS_AS(run_experiment(configs, in.segments, truth, cb(), backend, in.resolver, {}), ValidationError);
        CHECK_THROWS_AS(run_experiment({}, in.segments, in.truth, cb(), backend, in.resolver, {}), ValidationError);
    }

    TEST_CASE("atomic write replaces content") {
        TempDir dir("atomic");
        write_file_atomic(dir / "sub/f.txt", "one");
        write_file_atomic(dir / "sub/f.txt", "two");
        CHECK(read_file(dir / "sub/f.txt") == "two");
        std::size_t files = 0;
        for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "sub")) ++files;
        CHECK(files == 1);
    }
}
