#include "doctest.h"
#include "pmrl/conformance.hpp"
#include "test_helpers.hpp"

using namespace pmrl;
using testutil::make_log;

namespace {

ProcessModel chain_model(const std::vector<std::string>& alphabet,
                         const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
    ProcessModel m;
    m.alphabet = alphabet;
    for (auto [s, d] : edges) m.edges.push_back({s, d, 1.0});
    m.threshold = 0.5;
    return m;
}

}  // namespace

TEST_CASE("trace fitness counts matched adjacent pairs") {
    ProcessModel m = chain_model({"A", "B", "C"}, {{0, 1}});
    EventLog log = make_log({{"A", "B", "C"}});
    CHECK(trace_fitness(log.traces[0], m) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("single-event traces are perfectly fit") {
    ProcessModel m = chain_model({"A"}, {});
    EventLog log = make_log({{"A"}});
    CHECK(trace_fitness(log.traces[0], m) == 1.0);
}

TEST_CASE("empty traces are rejected") {
    ProcessModel m = chain_model({"A"}, {});
    Trace empty;
    empty.case_id = "x";
    CHECK_THROWS_AS(trace_fitness(empty, m), std::invalid_argument);
}

TEST_CASE("activities outside the model alphabet never match") {
    ProcessModel m = chain_model({"A", "B"}, {{0, 1}});
    EventLog log = make_log({{"A", "Z"}});
    CHECK(trace_fitness(log.traces[0], m) == 0.0);
}

TEST_CASE("log fitness weights traces by their pair counts") {
    ProcessModel m = chain_model({"A", "B", "C", "D"}, {{0, 1}});
    // t0: 1 of 1 pair matched; t1: 1 of 3 matched
    EventLog log = make_log({{"A", "B"}, {"A", "B", "C", "D"}});
    FitnessReport r = log_fitness(log, m);
    CHECK(r.log_fitness == doctest::Approx(0.5).epsilon(1e-12));  // (1+1)/(1+3)
    REQUIRE(r.per_trace.size() == 2);
    CHECK(r.per_trace[0].fitness == 1.0);
    CHECK(r.per_trace[1].fitness == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(r.per_trace[1].matched == 1);
    CHECK(r.per_trace[1].total == 3);
    CHECK_FALSE(r.vacuous);
}

TEST_CASE("single-event-only logs score one with zero pairs") {
    ProcessModel m = chain_model({"A"}, {});
    EventLog log = make_log({{"A"}, {"A"}});
    FitnessReport r = log_fitness(log, m);
    CHECK(r.log_fitness == 1.0);
    CHECK_FALSE(r.vacuous);
}

TEST_CASE("an empty log reports vacuous perfect fitness") {
    ProcessModel m = chain_model({"A"}, {});
    EventLog log;
    FitnessReport r = log_fitness(log, m);
    CHECK(r.log_fitness == 1.0);
    CHECK(r.vacuous);
}

TEST_CASE("an edgeless model scores zero on multi-event traces") {
    ProcessModel m = chain_model({"A", "B"}, {});
    EventLog log = make_log({{"A", "B"}, {"B", "A"}});
    FitnessReport r = log_fitness(log, m);
    CHECK(r.log_fitness == 0.0);
}

TEST_CASE("format_fitness_report renders one row per trace") {
    ProcessModel m = chain_model({"A", "B"}, {{0, 1}});
    EventLog log = make_log({{"A", "B"}});
    const std::string text = format_fitness_report(log_fitness(log, m));
    CHECK(text.find("case_id,trace_fitness,matched,total") != std::string::npos);
    CHECK(text.find("t0,1.000000,1,1") != std::string::npos);
}

TEST_CASE("fitness never increases as the threshold rises") {
    SynthSpec spec;
    spec.n_cases = 25;
    spec.sequence = {"A", "B", "C", "D"};
    spec.noise_rate = 0.25;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        EventTable table = generate_synthetic_table(spec, seed);
        EventLog log = build_log(table, planted_mapping());
        DependencyMatrix dep = dependency_matrix(directly_follows_counts(log));
        double prev = 2.0;
        for (int k = 1; k <= 10; ++k) {
            const double threshold = 0.1 * k;
            FitnessReport r = log_fitness(log, discover_model(dep, threshold, ColumnMapping{}));
            CHECK(r.log_fitness <= prev + 1e-15);
            prev = r.log_fitness;
        }
    }
}
