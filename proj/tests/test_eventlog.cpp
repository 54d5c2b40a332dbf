#include <sstream>

#include "doctest.h"
#include "pmrl/eventlog.hpp"
#include "test_helpers.hpp"

using namespace pmrl;
using testutil::catch_message;

TEST_CASE("parse_table reads a delimited table with a header") {
    std::istringstream in("case,activity,resource\nc1,A,r1\nc1,B,r2\n");
    EventTable t = parse_table(in, ',', true, "<test>");
    CHECK(t.n_columns() == 3);
    CHECK(t.column_names == std::vector<std::string>{"case", "activity", "resource"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0] == std::vector<std::string>{"c1", "A", "r1"});
    CHECK(t.rows[1][1] == "B");
}

TEST_CASE("parse_table names columns when there is no header") {
    std::istringstream in("c1;A;r1\nc2;B;r2\n");
    EventTable t = parse_table(in, ';', false, "<test>");
    CHECK(t.column_names == std::vector<std::string>{"col_0", "col_1", "col_2"});
    CHECK(t.rows.size() == 2);
}

TEST_CASE("parse_table skips blank lines and strips carriage returns") {
    std::istringstream in("case,activity,resource\r\n\nc1,A,r1\r\n\n\nc1,B,r1\n");
    EventTable t = parse_table(in, ',', true, "<test>");
    CHECK(t.rows.size() == 2);
    CHECK(t.rows[1] == std::vector<std::string>{"c1", "B", "r1"});
}

TEST_CASE("parse_table rejects ragged rows naming the line") {
    std::istringstream in("case,activity,resource\nc1,A,r1\nc1,B\n");
    const std::string msg = catch_message<std::runtime_error>(
        [&] { parse_table(in, ',', true, "<test>"); });
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("expected 3") != std::string::npos);
}

TEST_CASE("parse_table requires at least three columns") {
    std::istringstream in("case,activity\nc1,A\n");
    CHECK_THROWS_AS(parse_table(in, ',', true, "<test>"), std::runtime_error);
}

TEST_CASE("load_table errors on a missing file") {
    CHECK_THROWS_AS(load_table("/nonexistent/path/table.csv"), std::runtime_error);
}

TEST_CASE("write_table and load_table round-trip") {
    testutil::TempDir dir("eventlog");
    EventTable t;
    t.column_names = {"case", "activity", "resource"};
    t.rows = {{"c1", "A", "r1"}, {"c2", "B", "r2"}};
    const std::string path = dir.file("t.csv");
    write_table(t, path);
    EventTable back = load_table(path);
    CHECK(back.column_names == t.column_names);
    CHECK(back.rows == t.rows);
}

TEST_CASE("write_table refuses values containing the delimiter") {
    testutil::TempDir dir("eventlog");
    EventTable t;
    t.column_names = {"case", "activity", "resource"};
    t.rows = {{"c,1", "A", "r1"}};
    CHECK_THROWS_AS(write_table(t, dir.file("bad.csv")), std::runtime_error);
}

TEST_CASE("validate_mapping rejects out-of-range and duplicate columns") {
    ColumnMapping m;
    m.case_col = 5;
    const std::string msg =
        catch_message<std::invalid_argument>([&] { validate_mapping(m, 3); });
    CHECK(msg.find("out of range") != std::string::npos);

    ColumnMapping dup;
    dup.case_col = 1;
    dup.activity_col = 1;
    dup.resource_col = 2;
    CHECK_THROWS_AS(validate_mapping(dup, 3), std::invalid_argument);

    ColumnMapping ts;
    ts.timestamp_col = 9;
    CHECK_THROWS_AS(validate_mapping(ts, 3), std::invalid_argument);

    CHECK_NOTHROW(validate_mapping(ColumnMapping{}, 3));
}

TEST_CASE("build_log groups cases in first-appearance order") {
    EventTable t;
    t.column_names = {"case", "activity", "resource"};
    t.rows = {{"c2", "A", "r"}, {"c1", "X", "r"}, {"c2", "B", "r"}, {"c1", "Y", "r"}};
    EventLog log = build_log(t, ColumnMapping{});
    REQUIRE(log.traces.size() == 2);
    CHECK(log.traces[0].case_id == "c2");
    CHECK(log.traces[1].case_id == "c1");
    REQUIRE(log.traces[0].events.size() == 2);
    CHECK(log.traces[0].events[0].activity == "A");
    CHECK(log.traces[0].events[1].activity == "B");
    // alphabet scans grouped traces, so c2's events precede c1's
    CHECK(log.alphabet == std::vector<std::string>{"A", "B", "X", "Y"});
}

TEST_CASE("build_log sorts by a mapped timestamp column, stably") {
    EventTable t;
    t.column_names = {"case", "activity", "resource", "ts"};
    t.rows = {{"c1", "B", "r", "2"},
              {"c1", "A", "r", "1"},
              {"c1", "C", "r", "2"},
              {"c1", "D", "r", "0"}};
    ColumnMapping m;
    m.timestamp_col = 3;
    EventLog log = build_log(t, m);
    REQUIRE(log.traces.size() == 1);
    std::vector<std::string> order;
    for (const auto& ev : log.traces[0].events) order.push_back(ev.activity);
    // D(0), A(1), then B before C: both stamped 2, row order preserved
    CHECK(order == std::vector<std::string>{"D", "A", "B", "C"});
}

TEST_CASE("synthetic tables are deterministic per seed") {
    SynthSpec spec;
    spec.n_cases = 20;
    spec.sequence = {"A", "B", "C"};
    spec.n_noise_columns = 2;
    spec.noise_rate = 0.3;
    EventTable a = generate_synthetic_table(spec, 42);
    EventTable b = generate_synthetic_table(spec, 42);
    CHECK(a.rows == b.rows);
    EventTable c = generate_synthetic_table(spec, 43);
    CHECK(a.rows != c.rows);
}

TEST_CASE("zero-noise synthetic tables emit the planted sequence per case") {
    SynthSpec spec;
    spec.n_cases = 7;
    spec.sequence = {"A", "B", "C", "D"};
    spec.noise_rate = 0.0;
    EventTable t = generate_synthetic_table(spec, 1);
    CHECK(t.column_names == std::vector<std::string>{"case", "activity", "resource"});
    REQUIRE(t.rows.size() == 7 * 4);
    EventLog log = build_log(t, planted_mapping());
    REQUIRE(log.traces.size() == 7);
    for (const auto& trace : log.traces) {
        REQUIRE(trace.events.size() == 4);
        CHECK(trace.events[0].activity == "A");
        CHECK(trace.events[3].activity == "D");
    }
}

TEST_CASE("noise swaps stay inside the ground-truth alphabet") {
    SynthSpec spec;
    spec.n_cases = 30;
    spec.sequence = {"A", "B", "C"};
    spec.noise_rate = 1.0;
    EventTable t = generate_synthetic_table(spec, 9);
    for (const auto& row : t.rows) {
        const std::string& a = row[1];
        CHECK((a == "A" || a == "B" || a == "C"));
    }
}

TEST_CASE("branch probabilities keep at least one event per case") {
    SynthSpec spec;
    spec.n_cases = 5;
    spec.sequence = {"A", "B"};
    spec.branch_probs = {0.0, 0.0};
    EventTable t = generate_synthetic_table(spec, 3);
    REQUIRE(t.rows.size() == 5);
    for (const auto& row : t.rows) CHECK(row[1] == "A");
}

TEST_CASE("the synthetic generator validates its spec") {
    SynthSpec spec;
    spec.sequence = {"A"};
    spec.n_cases = 0;
    CHECK_THROWS_AS(generate_synthetic_table(spec, 1), std::invalid_argument);

    spec.n_cases = 1;
    spec.sequence.clear();
    CHECK_THROWS_AS(generate_synthetic_table(spec, 1), std::invalid_argument);

    spec.sequence = {"A", "B"};
    spec.branch_probs = {0.5};
    CHECK_THROWS_AS(generate_synthetic_table(spec, 1), std::invalid_argument);

    spec.branch_probs = {0.5, 1.5};
    CHECK_THROWS_AS(generate_synthetic_table(spec, 1), std::invalid_argument);

    spec.branch_probs.clear();
    spec.noise_rate = 1.5;
    CHECK_THROWS_AS(generate_synthetic_table(spec, 1), std::invalid_argument);
}
