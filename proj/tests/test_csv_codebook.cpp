// SPDX-License-Identifier: Apache-2.0
#include "test_support.hpp"

#include "coder_consensus/csv.hpp"
#include "coder_consensus/errors.hpp"

#include <doctest.h>

using namespace coder_consensus;
using cc_test::TempDir;

TEST_SUITE("csv") {
    TEST_CASE("quoted fields, escapes and embedded newlines") {
        auto rows = csv::parse("a,b\n\"x, y\",\"say \"\"hi\"\"\"\n\"multi\nline\",z\n");
        REQUIRE(rows.size() == 3);
        CHECK(rows[1].fields == std::vector<std::string>{"x, y", "say \"hi\""});
        CHECK(rows[2].fields[0] == "multi\nline");
        CHECK(rows[2].line == 3);
    }

    TEST_CASE("BOM, CRLF and blank lines") {
        auto rows = csv::parse("\xEF\xBB\xBFh1,h2\r\n\r\n1,2\r\n");
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].fields[0] == "h1");
        CHECK(rows[1].fields == std::vector<std::string>{"1", "2"});
        CHECK(rows[1].line == 3);
    }

    TEST_CASE("empty trailing field is kept") {
        auto rows = csv::parse("a,,\n");
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].fields.size() == 3);
    }

    TEST_CASE("unterminated quote") {
        CHECK_THROWS_AS(csv::parse("a,\"open\n"), ParseError);
    }

    TEST_CASE("format round trip") {
        std::vector<std::string> fields{"plain", "with,comma", "with \"quote\"", "line\nbreak", ""};
        auto rows = csv::parse(csv::format_row(fields));
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].fields == fields);
    }
}

TEST_SUITE("codebook") {
    TEST_CASE("builtin codebook order") {
        const auto& cb = builtin_codebook();
        REQUIRE(cb.size() == 8);
        CHECK(cb[0].name == "Greeting");
        CHECK(cb[7].name == "Time Management");
        CHECK(cb.names() == std::vector<std::string>{"Greeting", "Instruction", "Guiding Feedback",
                                                     "Aligning to Prior Knowledge", "Understanding/Engagement-Tutor",
                                                     "Technical or Logistics", "Encouragement", "Time Management"});
        for (const auto& c : cb.categories()) {
            CHECK_FALSE(c.definition.empty());
            CHECK_FALSE(c.examples.empty());
        }
        CHECK(load_codebook("builtin") == cb);
    }

    TEST_CASE("minimal codebook file") {
        auto cb = parse_codebook(R"({"version": "v1", "category": [{"name": "A", "definition": "a", "examples": []}]})");
        REQUIRE(cb.size() == 1);
        CHECK(cb[0].name == "A");
        CHECK(cb.version() == "v1");
    }

    TEST_CASE("duplicate names are rejected, including after normalization") {
        CHECK_THROWS_AS(parse_codebook(R"({"version": "v", "category": [{"name": "A", "definition": ""},
                                                                        {"name": "A", "definition": ""}]})"),
                        ValidationError);
        CHECK_THROWS_AS(Codebook("v", {{"Time Management", "", {}}, {"time  management", "", {}}}), ValidationError);
    }

    TEST_CASE("parse errors carry line and field") {
        try {
            parse_codebook("{\n  \"version\": \"v\",\n  \"category\": [\n    {\"name\": }\n  ]\n}", "cb.json");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 4);
            CHECK(e.file() == "cb.json");
        }
        try {
            parse_codebook(R"({"version": "v", "category": [{"definition": "x"}]})");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.field().find("name") != std::string::npos);
        }
    }

    TEST_CASE("serialize round trip") {
        const auto& cb = builtin_codebook();
        CHECK(parse_codebook(serialize_codebook(cb)) == cb);
    }

    TEST_CASE("index_of falls back to normalized names") {
        const auto& cb = builtin_codebook();
        CHECK(cb.index_of("Guiding Feedback") == 2u);
        CHECK(cb.index_of("guiding  FEEDBACK") == 2u);
        CHECK_FALSE(cb.index_of("Praise").has_value());
    }

    TEST_CASE("code values and rendering") {
        CHECK(to_cell(CodeValue::missing) == "missing");
        CHECK(code_value_from_cell("1") == CodeValue::present);
        CHECK_FALSE(code_value_from_cell("yes").has_value());
        const auto& cb = builtin_codebook();
        auto a = cc_test::assignment(cb, {"Greeting"});
        CHECK(render_assignment(cb, a).rfind("{'Greeting': 1, 'Instruction': 0", 0) == 0);
        CHECK(a.at(cb, "Greeting") == CodeValue::present);
        CHECK_FALSE(a.has_missing());
    }
}

TEST_SUITE("transcript") {
    TEST_CASE("ids follow row order") {
        auto segs = parse_transcript("segment_id,transcript_id,speaker,text\n,t,Tutor,a\n,t,Tutor,b\n,t,Student,c\n");
        REQUIRE(segs.size() == 3);
        CHECK(segs[0].id == 0);
        CHECK(segs[2].id == 2);
        CHECK(segs[2].speaker == "Student");
    }

    TEST_CASE("speaker prefix is split off the text") {
        auto segs = parse_transcript("segment_id,transcript_id,speaker,text\n0,t,,\"Tutor: What's good, XX?\"\n");
        REQUIRE(segs.size() == 1);
        CHECK(segs[0].speaker == "Tutor");
        CHECK(segs[0].text == "What's good, XX?");
        CHECK(segs[0].display() == "Tutor: What's good, XX?");
    }

    TEST_CASE("a colon inside ordinary prose is not a speaker") {
        auto segs =
            parse_transcript("segment_id,transcript_id,speaker,text\n0,t,,\"the ratio is 3:4 here\"\n"
                             "1,t,,\"so what we need to do now is this: factor\"\n");
        CHECK(segs[0].speaker.empty());
        CHECK(segs[1].speaker.empty());
    }

    TEST_CASE("empty text cites the row") {
        try {
            parse_transcript("segment_id,transcript_id,speaker,text\n0,t,Tutor,fine\n1,t,Tutor,\n");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("row 2") != std::string::npos);
            CHECK(e.line() == 3);
        }
    }

    TEST_CASE("empty file and missing column") {
        CHECK_THROWS_AS(parse_transcript(""), ParseError);
        CHECK_THROWS_AS(parse_transcript("segment_id,speaker,text\n0,T,x\n"), ParseError);
    }

    TEST_CASE("declared ids must match the ordinal") {
        CHECK_THROWS_AS(parse_transcript("segment_id,transcript_id,speaker,text\n5,t,T,x\n"), ParseError);
    }

    TEST_CASE("fixture file and serialization round trip") {
        auto segs = load_transcript(cc_test::fixture("transcript.csv"));
        REQUIRE(segs.size() == 10);
        CHECK(segs[5].transcript_id == "session-b");
        CHECK(parse_transcript(serialize_transcript(segs)) == segs);
    }
}

TEST_SUITE("ground truth") {
    const auto& cb = builtin_codebook();
    const std::string header =
        "segment_id,Greeting,Instruction,Guiding Feedback,Aligning to Prior Knowledge,Understanding/Engagement-Tutor,"
        "Technical or Logistics,Encouragement,Time Management\n";

    TEST_CASE("fixture loads") {
        auto segs = load_transcript(cc_test::fixture("transcript.csv"));
        auto truth = load_ground_truth(cc_test::fixture("ground_truth.csv"), cb, segs);
        REQUIRE(truth.size() == 10);
        CHECK(truth[3].assignment.at(cb, "Aligning to Prior Knowledge") == CodeValue::present);
        CHECK(truth[3].assignment.source == AssignmentSource::human);
        CHECK(parse_ground_truth(serialize_ground_truth(cb, truth), cb, segs) == truth);
    }

    TEST_CASE("missing segment is named") {
        auto segs = cc_test::make_segments(2);
        try {
            parse_ground_truth(header + "0,1,0,0,0,0,0,0,0\n", cb, segs);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("segment 1") != std::string::npos);
        }
    }

    TEST_CASE("non-binary cell") {
        auto segs = cc_test::make_segments(1);
        try {
            parse_ground_truth(header + "0,1,0,2,0,0,0,0,0\n", cb, segs);
            FAIL("expected error");
        } catch (const ParseError& e) {
            CHECK(e.field() == "Guiding Feedback");
            CHECK(e.line() == 2);
        }
    }

    TEST_CASE("unknown and missing columns") {
        auto segs = cc_test::make_segments(1);
        CHECK_THROWS_WITH_AS(parse_ground_truth("segment_id,Greeting,Praise\n0,1,0\n", cb, segs),
                             doctest::Contains("Praise"), ParseError);
        CHECK_THROWS_AS(parse_ground_truth("segment_id,Greeting\n0,1\n", cb, segs), ParseError);
    }

    TEST_CASE("duplicate and unknown segment rows") {
        auto segs = cc_test::make_segments(1);
        CHECK_THROWS_AS(parse_ground_truth(header + "0,1,0,0,0,0,0,0,0\n0,1,0,0,0,0,0,0,0\n", cb, segs), ParseError);
        CHECK_THROWS_AS(parse_ground_truth(header + "4,1,0,0,0,0,0,0,0\n", cb, segs), ParseError);
    }

    TEST_CASE("file read errors") {
        TempDir dir("gt");
        CHECK_THROWS_AS(load_ground_truth(dir / "nope.csv", cb, {}), Error);
    }
}
