// SPDX-License-Identifier: Apache-2.0
#include "test_support.hpp"

#include "coder_consensus/cli.hpp"
#include "coder_consensus/csv.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace coder_consensus;
using cc_test::TempDir;

namespace {

struct Invocation {
    int code = -1;
    std::string out;
    std::string err;
};

Invocation invoke(std::vector<std::string> args) {
    ::unsetenv("CODER_CONSENSUS_BASE_URL");
    args.insert(args.begin(), "coder-consensus");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Invocation inv;
    inv.code = cli::run_main(static_cast<int>(argv.size()), argv.data(), out, err);
    inv.out = out.str();
    inv.err = err.str();
    return inv;
}

std::string config() { return cc_test::fixture("config.json").string(); }

std::size_t lines(const std::filesystem::path& p) {
    auto s = read_file(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::string header(const std::filesystem::path& p) {
    auto s = read_file(p);
    return s.substr(0, s.find('\n'));
}

} // namespace

TEST_SUITE("cli") {
    TEST_CASE("usage errors") {
        CHECK(invoke({}).code == cli::kFailure);
        CHECK(invoke({"frobnicate"}).code == cli::kFailure);
        CHECK(invoke({"--help"}).code == cli::kOk);
    }

    TEST_CASE("validate") {
        auto ok = invoke({"validate", "--config", config()});
        CHECK(ok.code == cli::kOk);
        CHECK(ok.out.find("all checks passed") != std::string::npos);

        TempDir dir("validate");
        {
            std::ofstream f(dir / "gt.csv");
            auto text = read_file(cc_test::fixture("ground_truth.csv"));
            f << text.substr(0, text.rfind("9,"));
        }
        auto missing = invoke({"validate", "--config", config(), "--ground-truth", (dir / "gt.csv").string()});
        CHECK(missing.code == cli::kFailure);
        CHECK(missing.err.find("segment 9") != std::string::npos);

        auto endpoint = invoke({"validate", "--config", config(), "--backend", "http", "--base-url", "http://127.0.0.1:1"});
        CHECK(endpoint.code == cli::kFailure);
        CHECK(endpoint.err.find("unreachable") != std::string::npos);
        CHECK(endpoint.err.find("hint") != std::string::npos);

        auto bad_url = invoke({"validate", "--config", config(), "--backend", "http", "--base-url", "localhost:11434"});
        CHECK(bad_url.code == cli::kFailure);
    }

    TEST_CASE("config precedence and unknown keys") {
        TempDir dir("cfg");
        {
            std::ofstream f(dir / "c.json");
            f << R"({"max_rounds": 3, "workers": 1, "models": ["a", "b"], "seed": null})";
        }
        auto c = cli::load_config(dir / "c.json");
        CHECK(c.max_rounds == 3);
        CHECK(c.models == std::vector<std::string>{"a", "b"});
        CHECK_FALSE(c.seed.has_value());
        CHECK(c.history_window == cli::AppConfig{}.history_window);
        {
            std::ofstream f(dir / "bad.json");
            f << R"({"max_round": 3})";
        }
        CHECK_THROWS_AS(cli::load_config(dir / "bad.json"), ParseError);
        auto inv = invoke({"validate", "--config", (dir / "bad.json").string()});
        CHECK(inv.code == cli::kFailure);
        CHECK(inv.err.find("max_round") != std::string::npos);
    }

    TEST_CASE("run, resume, analyze, trace") {
        TempDir dir("cli-run");
        auto out = dir / "out";
        auto run = invoke({"run", "--config", config(), "--out-dir", out.string()});
        REQUIRE(run.code == cli::kOk);
        CHECK(run.out.find("run mock-7b__t0.0__balanced-balanced (1/18)") != std::string::npos);
        CHECK(lines(out / "decisions.csv") == 1 + 18 * 10 * 8);

        auto resume = invoke({"run", "--config", config(), "--out-dir", out.string(), "--resume"});
        CHECK(resume.code == cli::kOk);
        CHECK(resume.out.find("executed 0 configuration(s)") != std::string::npos);

        auto analyze = invoke({"analyze", (out / "decisions.csv").string()});
        REQUIRE(analyze.code == cli::kOk);
        for (const auto& f : cli::analysis_files()) CHECK(std::filesystem::exists(out / f));
        CHECK(header(out / "alignment_diff.csv") ==
              "model_id,category,n,consensus_rate,single_rate,diff,kappa_consensus,kappa_single");
        CHECK(header(out / "rq1_export.csv") == "config_id,segment_id,temperature,congruency,first,delayed,none");
        CHECK(header(out / "contrasts.csv").find("p_raw,p_adjusted") != std::string::npos);
        // one model, 8 categories, three persona groups, three temperatures
        CHECK(lines(out / "contrasts.csv") == 1 + 8 * 3 * 3);
        CHECK(lines(out / "rq1_export.csv") == 1 + 18 * 10);
        CHECK(lines(out / "rq2_export.csv") == 1 + 18 * 10 * 8);

        auto trace_file = out / "traces" / (config_file_stem("mock-7b__t0.0__bold-empathetic") + ".jsonl");
        auto none = invoke({"trace", trace_file.string(), "--segment", "3"});
        REQUIRE(none.code == cli::kOk);
        CHECK(none.out.find("Arbiter - Arbiter") != std::string::npos);
        CHECK(none.out.find("Outcome: no_consensus") != std::string::npos);

        auto first = invoke({"trace", trace_file.string(), "--segment", "0"});
        CHECK(first.out.find("Round 1 - Coder 1") != std::string::npos);
        CHECK(first.out.find("Round 1 - Coder 2") != std::string::npos);
        CHECK(first.out.find("Round 2") == std::string::npos);
        CHECK(first.out.find("Outcome: first_consensus") != std::string::npos);

        auto delayed = invoke({"trace", trace_file.string(), "--segment", "1"});
        CHECK(delayed.out.find("Outcome: delayed_consensus") != std::string::npos);

        auto alias = invoke({"trace", trace_file.string(), "--segment", "4"});
        CHECK(alias.out.find("re-prompted") != std::string::npos);

        auto unknown = invoke({"trace", trace_file.string(), "--segment", "99"});
        CHECK(unknown.code == cli::kFailure);
        CHECK(unknown.err.find("segment 99") != std::string::npos);
    }

    TEST_CASE("interrupted run exits nonzero and resumes to the same table") {
        TempDir dir("cli-resume");
        auto full = dir / "full";
        auto partial = dir / "partial";
        REQUIRE(invoke({"run", "--config", config(), "--out-dir", full.string(), "--temperatures", "0.0,1.0"}).code ==
                cli::kOk);
        auto stopped =
            invoke({"run", "--config", config(), "--out-dir", partial.string(), "--temperatures", "0.0,1.0", "--max-configs", "5"});
        CHECK(stopped.code == cli::kFailure);
        CHECK(read_file(partial / "manifest.json").find("pending") != std::string::npos);
        auto resumed =
            invoke({"run", "--config", config(), "--out-dir", partial.string(), "--temperatures", "0.0,1.0", "--resume"});
        CHECK(resumed.code == cli::kOk);
        CHECK(read_file(full / "decisions.csv") == read_file(partial / "decisions.csv"));
        auto changed = invoke({"run", "--config", config(), "--out-dir", partial.string(), "--resume", "--max-rounds", "3",
                            "--temperatures", "0.0,1.0"});
        CHECK(changed.code == cli::kFailure);
        CHECK(changed.err.find("settings digest") != std::string::npos);
    }

    TEST_CASE("transport failures exit 2") {
        TempDir dir("cli-transport");
        {
            std::ofstream f(dir / "script.json");
            f << R"({"default": "{}", "rules": [{"match": {"segment": 2}, "fail": true}]})";
        }
        auto inv = invoke({"run", "--config", config(), "--mock-script", (dir / "script.json").string(), "--out-dir",
                        (dir / "out").string(), "--temperatures", "0.5", "--pairings", "bold-bold"});
        CHECK(inv.code == cli::kTransport);
        CHECK(inv.err.find("excluded") != std::string::npos);
        CHECK(lines(dir / "out/decisions.csv") == 1 + 9 * 8);
    }

    TEST_CASE("analyze schema errors") {
        TempDir dir("cli-analyze");
        {
            std::ofstream f(dir / "empty.csv");
        }
        CHECK(invoke({"analyze", (dir / "empty.csv").string()}).code == cli::kFailure);
        {
            std::ofstream f(dir / "no_outcome.csv");
            f << "config_id,model_id,temperature,pairing,congruency,persona_group,segment_id,category,human,"
                 "single_agent,consensus_final\n"
                 "m__t0.0__bold-bold,m,0.0,bold-bold,congruent,has_bold,0,Greeting,1,1,1\n";
        }
        auto inv = invoke({"analyze", (dir / "no_outcome.csv").string()});
        CHECK(inv.code == cli::kFailure);
        CHECK(inv.err.find("outcome") != std::string::npos);
        CHECK_FALSE(std::filesystem::exists(dir / "agreement.csv"));
        CHECK(invoke({"analyze", (dir / "missing.csv").string()}).code == cli::kFailure);
    }

    TEST_CASE("templates and mock demo") {
        auto t = invoke({"trace", "--show-templates"});
        CHECK(t.code == cli::kOk);
        CHECK(t.out.find("[consensus]") != std::string::npos);
        CHECK(invoke({"trace"}).code == cli::kFailure);

        TempDir dir("demo");
        auto demo = invoke({"mock-demo", "--out-dir", (dir / "demo").string()});
        CHECK(demo.code == cli::kOk);
        CHECK(demo.out.find("4 first, 1 delayed, 1 no consensus") != std::string::npos);
        CHECK(demo.out.find("Guiding Feedback.1") != std::string::npos);
        CHECK(demo.out.find("extraneous: \"Student responses\"") != std::string::npos);
        CHECK(demo.out.find("first attempt:\n    Codebook:") != std::string::npos);
        CHECK(std::filesystem::exists(dir / "demo/decisions.csv"));
    }
}
