#include <filesystem>

#include "doctest.h"
#include "pmrl/cli.hpp"
#include "pmrl/conformance.hpp"
#include "pmrl/discovery.hpp"
#include "test_helpers.hpp"

using namespace pmrl;

namespace {

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("pmrl");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("the schema rejects unknown configuration keys") {
    KeyValueConfig cfg;
    cfg.set("train.epochs", "2");
    CHECK_NOTHROW(cfg.require_known(config_schema()));
    cfg.set("train.bogus", "1");
    CHECK(testutil::catch_message<std::invalid_argument>([&] {
              cfg.require_known(config_schema());
          }).find("train.bogus") != std::string::npos);
}

TEST_CASE("training configuration reads defaults and overrides") {
    KeyValueConfig empty;
    const TrainingConfig defaults = training_config_from(empty);
    CHECK(defaults.epochs == 10);
    CHECK(defaults.trials == 50);
    CHECK(defaults.strategy == ReplayStrategy::dered);
    CHECK(defaults.profile == NetProfile::reduced);
    CHECK(defaults.gamma == 0.9);

    KeyValueConfig cfg;
    cfg.set("train.epochs", "3");
    cfg.set("replay.strategy", "uniform");
    cfg.set("env.roles", "permuted");
    cfg.set("env.reward_mode", "fitness_only");
    cfg.set("train.chain_within_episode", "true");
    const TrainingConfig tc = training_config_from(cfg);
    CHECK(tc.epochs == 3);
    CHECK(tc.strategy == ReplayStrategy::uniform);
    CHECK(tc.roles == RoleAssignment::permuted);
    CHECK(tc.reward_mode == RewardMode::fitness_only);
    CHECK(tc.chain_within_episode);

    KeyValueConfig bad;
    bad.set("env.roles", "diagonal");
    CHECK_THROWS_AS(training_config_from(bad), std::invalid_argument);
    KeyValueConfig out_of_range;
    out_of_range.set("train.gamma", "2.0");
    CHECK_THROWS_AS(training_config_from(out_of_range), std::invalid_argument);
}

TEST_CASE("synthetic specs parse lists") {
    KeyValueConfig empty;
    const SynthSpec defaults = synth_spec_from(empty);
    CHECK(defaults.n_cases == 200);
    CHECK(defaults.sequence == std::vector<std::string>{"A", "B", "C", "D", "E", "F"});
    CHECK(defaults.n_noise_columns == 3);
    CHECK(defaults.noise_rate == 0.1);

    KeyValueConfig cfg;
    cfg.set("synth.sequence", "X,Y,Z");
    cfg.set("synth.branch_probs", "1.0,0.5,1.0");
    cfg.set("synth.cases", "7");
    const SynthSpec spec = synth_spec_from(cfg);
    CHECK(spec.sequence == std::vector<std::string>{"X", "Y", "Z"});
    CHECK(spec.branch_probs == std::vector<double>{1.0, 0.5, 1.0});
    CHECK(spec.n_cases == 7);
}

TEST_CASE("usage errors exit with code one") {
    CHECK(run({}) == 1);
    CHECK(run({"--nonsense"}) == 1);
    CHECK(run({"synth", "--set", "no_equals_sign"}) == 1);
    CHECK(run({"synth", "--set", "synth.unknown=1"}) == 1);
}

TEST_CASE("synth, discover and check chain together") {
    testutil::TempDir dir("cli_chain");
    const std::string table = dir.file("events.csv");
    const std::string model = dir.file("model.dot");

    REQUIRE(run({"synth", "--out", table, "--seed", "11", "--set", "synth.cases=20",
                 "--set", "synth.noise_rate=0"}) == 0);
    REQUIRE(std::filesystem::exists(table));

    const std::string twin = dir.file("twin.csv");
    REQUIRE(run({"synth", "--out", twin, "--seed", "11", "--set", "synth.cases=20",
                 "--set", "synth.noise_rate=0"}) == 0);
    CHECK(testutil::slurp(table) == testutil::slurp(twin));

    REQUIRE(run({"discover", "--table", table, "--threshold", "0.5", "--out", model}) == 0);
    const ProcessModel m = load_dot(model);
    CHECK(m.alphabet.size() == 6);
    CHECK(m.edges.size() == 5);  // noise-free A..F chain

    CHECK(run({"check", "--table", table, "--model", model}) == 0);
    const std::string report = dir.file("report.csv");
    CHECK(run({"check", "--table", table, "--model", model, "--out", report}) == 0);
    CHECK(testutil::slurp(report).find("case_id,trace_fitness,matched,total") !=
          std::string::npos);
}

TEST_CASE("bad column mappings are usage errors, missing files are runtime errors") {
    testutil::TempDir dir("cli_errors");
    const std::string table = dir.file("events.csv");
    REQUIRE(run({"synth", "--out", table, "--set", "synth.cases=5"}) == 0);

    CHECK(run({"discover", "--table", table, "--case-col", "9"}) == 1);
    CHECK(run({"discover", "--table", dir.file("absent.csv")}) == 2);
    CHECK(run({"check", "--table", table, "--model", dir.file("absent.dot")}) == 2);
}

TEST_CASE("train writes a run directory honoring overrides") {
    testutil::TempDir dir("cli_train");
    const std::string out = dir.file("run");
    REQUIRE(run({"train", "--out", out, "--seed", "4",
                 "--set", "train.epochs=1",
                 "--set", "train.trials=2",
                 "--set", "train.batch_size=2",
                 "--set", "net.profile=probe",
                 "--set", "env.grid_start=0.5",
                 "--set", "env.grid_stop=0.5",
                 "--set", "env.grid_step=0.5",
                 "--set", "env.max_alphabet=8",
                 "--set", "synth.cases=6",
                 "--set", "synth.sequence=A,B,C",
                 "--set", "synth.noise_columns=0"}) == 0);

    namespace fs = std::filesystem;
    REQUIRE(fs::exists(fs::path(out) / "metrics.csv"));
    REQUIRE(fs::exists(fs::path(out) / "config.snapshot"));
    REQUIRE(fs::exists(fs::path(out) / "checkpoint.bin"));

    const std::string metrics = testutil::slurp((fs::path(out) / "metrics.csv").string());
    CHECK(metrics.find("epoch,total_score") != std::string::npos);
    // one epoch: header plus one row
    CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 2);

    const std::string snapshot = testutil::slurp((fs::path(out) / "config.snapshot").string());
    CHECK(snapshot.find("train.epochs = 1") != std::string::npos);
    CHECK(snapshot.find("train.seed = 4") != std::string::npos);
    CHECK(snapshot.find("net.profile = probe") != std::string::npos);
}

TEST_CASE("config files feed train and the command line wins") {
    testutil::TempDir dir("cli_config");
    const std::string cfg_path = dir.file("train.cfg");
    {
        std::ofstream f(cfg_path);
        f << "# tiny run\n"
          << "train.epochs = 5\n"
          << "train.trials = 2\n"
          << "train.batch_size = 2\n"
          << "net.profile = probe\n"
          << "env.grid_start = 0.5\n"
          << "env.grid_stop = 0.5\n"
          << "env.grid_step = 0.5\n"
          << "env.max_alphabet = 8\n"
          << "synth.cases = 6\n"
          << "synth.sequence = A,B,C\n"
          << "synth.noise_columns = 0\n";
    }
    const std::string out = dir.file("run");
    REQUIRE(run({"train", "--config", cfg_path, "--out", out,
                 "--set", "train.epochs=1"}) == 0);
    const std::string metrics =
        testutil::slurp((std::filesystem::path(out) / "metrics.csv").string());
    CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 2);

    CHECK(run({"train", "--config", dir.file("absent.cfg")}) == 2);
}

TEST_CASE("synthetic generation respects the explicit seed flag") {
    testutil::TempDir dir("cli_seed");
    const std::string a = dir.file("a.csv");
    const std::string b = dir.file("b.csv");
    REQUIRE(run({"synth", "--out", a, "--seed", "3", "--set", "synth.cases=10"}) == 0);
    REQUIRE(run({"synth", "--out", b, "--seed", "4", "--set", "synth.cases=10"}) == 0);
    CHECK(testutil::slurp(a) != testutil::slurp(b));
}
