// SPDX-License-Identifier: Apache-2.0
#include "test_support.hpp"

#include "coder_consensus/errors.hpp"

#include <doctest.h>

#include <fstream>

using namespace coder_consensus;
using cc_test::dict;

namespace {
const Codebook& cb() { return builtin_codebook(); }
} // namespace

TEST_SUITE("normalize_label") {
    TEST_CASE("examples") {
        CHECK(normalize_label("Guiding Feedback.1") == "guiding feedback");
        CHECK(normalize_label("Guiding Feedback.1.2") == "guiding feedback");
        CHECK(normalize_label("  Time   Management ") == "time management");
        CHECK(normalize_label("Understanding / Engagement-Tutor") == "understanding/engagement-tutor");
        CHECK(normalize_label("Technical or Logistics") == "technical or logistics");
        CHECK(normalize_label("Version 2.0") == "version 2");
        CHECK(normalize_label("") == "");
    }

    TEST_CASE("idempotent on random strings") {
        std::mt19937 rng(11);
        const std::string alphabet = "aB .1/-_ \t0Zz.9";
        for (int i = 0; i < 5000; ++i) {
            std::string s;
            auto len = rng() % 20;
            for (std::size_t k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
            auto once = normalize_label(s);
            CHECK(normalize_label(once) == once);
        }
    }
}

TEST_SUITE("aliases") {
    TEST_CASE("default aliases resolve observed variants") {
        LabelResolver r(cb());
        CHECK(r.resolve("Tutor questioning") == cb().index_of("Understanding/Engagement-Tutor"));
        CHECK(r.resolve("Technical/Logistics") == cb().index_of("Technical or Logistics"));
        CHECK(r.resolve("prior knowledge") == cb().index_of("Aligning to Prior Knowledge"));
        CHECK_FALSE(r.resolve("Student responses").has_value());
        CHECK(r.unused_aliases().empty());
    }

    TEST_CASE("aliases targeting other codebooks are reported, not fatal") {
        Codebook small("v", {{"A", "", {}}});
        LabelResolver r(small);
        CHECK_FALSE(r.unused_aliases().empty());
        CHECK(r.resolve("a.3") == 0u);
    }

    TEST_CASE("alias file merges over defaults") {
        cc_test::TempDir dir("alias");
        {
            std::ofstream f(dir / "aliases.json");
            f << R"({"aliases": {"Praise": "Encouragement", "Tutor questioning": "Instruction"}})";
        }
        auto table = load_alias_file(dir / "aliases.json");
        LabelResolver r(cb(), table);
        CHECK(r.resolve("praise") == cb().index_of("Encouragement"));
        CHECK(r.resolve("Tutor questioning") == cb().index_of("Instruction"));
        CHECK(r.resolve("Technical/Logistics") == cb().index_of("Technical or Logistics"));
        {
            std::ofstream f(dir / "bad.json");
            f << R"({"aliases": ["x"]})";
        }
        CHECK_THROWS_AS(load_alias_file(dir / "bad.json"), Error);
    }
}

TEST_SUITE("extract_codes") {
    LabelResolver resolver(cb());

    TEST_CASE("clean dictionary after reasoning") {
        auto r = extract_codes("The tutor greets. Code: " + dict(cb(), {"Greeting"}), cb(), resolver);
        CHECK(r.parse_status == ParseStatus::clean);
        CHECK(r.complete());
        CHECK(r.assignment == cc_test::assignment(cb(), {"Greeting"}));
    }

    TEST_CASE("no braces") {
        auto r = extract_codes("I think this is a greeting.", cb(), resolver);
        CHECK(r.parse_status == ParseStatus::failed);
        CHECK(r.missing_labels.size() == 8);
    }

    TEST_CASE("partial dictionary") {
        auto r = extract_codes("{'Greeting': 1, 'Instruction': 0}", cb(), resolver);
        CHECK(r.parse_status == ParseStatus::partial);
        CHECK(r.missing_labels.size() == 6);
        CHECK(r.assignment.values[0] == CodeValue::present);
        CHECK(r.assignment.values[2] == CodeValue::missing);
    }

    TEST_CASE("unquoted keys and JSON booleans as malformed") {
        auto r = extract_codes("{Greeting: 1, Instruction: true}", cb(), resolver);
        CHECK(r.assignment.values[0] == CodeValue::present);
        CHECK(r.malformed_labels == std::vector<std::string>{"Instruction"});
    }

    TEST_CASE("junk after a quoted value is malformed") {
        auto r = extract_codes("{'Greeting': \"1 \"x, 'Instruction': '0', 'Encouragement': ' 1 '}", cb(), resolver);
        CHECK(r.assignment.values[0] == CodeValue::missing);
        CHECK(r.malformed_labels == std::vector<std::string>{"Greeting"});
        CHECK(r.assignment.values[1] == CodeValue::absent);
        CHECK(r.assignment.values[cb().index_of("Encouragement").value()] == CodeValue::present);
    }

    TEST_CASE("duplicate keys: last wins and conflict flagged") {
        auto merged = merge_duplicates({{"a", "1"}, {"b", "0"}, {"a", "0"}, {"a", "0"}});
        REQUIRE(merged.entries.size() == 2);
        CHECK(merged.entries[0] == std::pair<std::string, std::string>{"a", "0"});
        CHECK(merged.duplicates == 2);
        CHECK(merged.conflicts == std::vector<std::string>{"a"});
    }

    TEST_CASE("never throws on arbitrary bytes") {
        std::mt19937 rng(3);
        for (int i = 0; i < 2000; ++i) {
            std::string s;
            auto len = rng() % 200;
            for (std::size_t k = 0; k < len; ++k) s += static_cast<char>(rng() % 256);
            if (i % 3 == 0) s = "{" + s;
            if (i % 5 == 0) s += "}";
            CHECK_NOTHROW(extract_codes(s, cb(), resolver));
        }
    }
}

TEST_SUITE("extract_with_retry") {
    LabelResolver resolver(cb());

    TEST_CASE("complete first pass does not re-prompt") {
        int calls = 0;
        auto out = extract_with_retry(dict(cb()), [&] { ++calls; return std::string{}; }, cb(), resolver);
        CHECK(calls == 0);
        CHECK_FALSE(out.result.retried);
        CHECK_FALSE(out.first_raw_text.has_value());
    }

    TEST_CASE("incomplete first pass re-prompts once and keeps the retry") {
        int calls = 0;
        auto out = extract_with_retry("{'Greeting': 1}", [&] { ++calls; return std::string("{'Instruction': 1}"); },
                                      cb(), resolver);
        CHECK(calls == 1);
        CHECK(out.result.retried);
        CHECK(out.first_raw_text == "{'Greeting': 1}");
        CHECK(out.result.assignment.values[0] == CodeValue::missing);
        CHECK(out.result.assignment.values[1] == CodeValue::present);
        CHECK(out.result.missing_labels.size() == 7);
    }

    TEST_CASE("transport failure on the retry keeps the first pass") {
        try {
            extract_with_retry("{'Greeting': 1}", []() -> std::string { throw TransportError("down", 3); }, cb(),
                               resolver);
            FAIL("expected RetryTransportError");
        } catch (const RetryTransportError& e) {
            CHECK(e.first_pass().assignment.values[0] == CodeValue::present);
            CHECK(e.attempts() == 3);
        }
    }
}
