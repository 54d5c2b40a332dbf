#include <filesystem>

#include "doctest.h"
#include "pmrl/cli.hpp"
#include "pmrl/config.hpp"
#include "pmrl/trainer.hpp"
#include "test_helpers.hpp"

using namespace pmrl;

namespace {

// Small planted table: one deterministic 3-activity flow plus one noise column.
EventTable tiny_table() {
    SynthSpec spec;
    spec.n_cases = 12;
    spec.sequence = {"A", "B", "C"};
    spec.n_noise_columns = 2;
    spec.noise_rate = 0.0;
    return generate_synthetic_table(spec, 5);
}

TrainingConfig tiny_config() {
    TrainingConfig tc;
    tc.epochs = 2;
    tc.trials = 3;
    tc.batch_size = 2;
    tc.buffer_capacity = 64;
    tc.profile = NetProfile::probe;
    tc.max_alphabet = 8;
    tc.grid_start = 0.5;
    tc.grid_stop = 0.5;
    tc.grid_step = 0.5;
    tc.learning_rate = 1e-3;
    tc.best_models = 3;
    tc.seed = 9;
    return tc;
}

}  // namespace

TEST_CASE("enum names round-trip and reject strangers") {
    CHECK(parse_replay_strategy("dered") == ReplayStrategy::dered);
    CHECK(parse_replay_strategy("uniform") == ReplayStrategy::uniform);
    CHECK(parse_replay_strategy("prioritized") == ReplayStrategy::prioritized);
    CHECK(replay_strategy_name(ReplayStrategy::dered) == "dered");
    CHECK_THROWS_AS(parse_replay_strategy("random"), std::invalid_argument);

    CHECK(parse_net_profile("probe") == NetProfile::probe);
    CHECK(net_profile_name(NetProfile::full) == "full");
    CHECK_THROWS_AS(parse_net_profile("tiny"), std::invalid_argument);

    CHECK(parse_precision("f32") == Precision::f32);
    CHECK(precision_name(Precision::f64) == "f64");
    CHECK_THROWS_AS(parse_precision("f16"), std::invalid_argument);
}

TEST_CASE("epsilon decays linearly over the first seventy percent of steps") {
    EpsilonSchedule s;
    CHECK(s.value(0, 1000) == 1.0);
    CHECK(s.value(350, 1000) == doctest::Approx(0.525).epsilon(1e-12));
    CHECK(s.value(700, 1000) == 0.05);
    CHECK(s.value(999, 1000) == 0.05);
    double prev = 2.0;
    for (std::size_t step = 0; step < 1000; ++step) {
        const double v = s.value(step, 1000);
        CHECK(v <= prev);
        prev = v;
    }
    EpsilonSchedule bad;
    bad.start = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = EpsilonSchedule{};
    bad.decay_fraction = -0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("greedy selection takes the highest value, lowest index on ties") {
    ActionSpace space = build_action_space(3, {0.2, 0.5, 0.8});
    REQUIRE(space.size() == 3);
    Rng rng(1);
    CHECK(select_action({0.1, 0.9, 0.3}, 0.0, space, rng) == 1);
    CHECK(select_action({0.5, 0.5, 0.1}, 0.0, space, rng) == 0);
    CHECK_THROWS_AS(select_action({0.1, 0.9, 0.3}, -0.1, space, rng), std::invalid_argument);
    CHECK_THROWS_AS(select_action({0.1, 0.9, 0.3}, 1.1, space, rng), std::invalid_argument);
}

TEST_CASE("full exploration is near-uniform over the action space") {
    ActionSpace space = build_action_space(4, {0.1, 0.9});
    REQUIRE(space.size() == 8);
    Rng rng(33);
    std::vector<std::size_t> counts(space.size(), 0);
    const std::size_t draws = 10000;
    for (std::size_t i = 0; i < draws; ++i) {
        counts[select_action(std::vector<double>(space.size(), 0.0), 1.0, space, rng)]++;
    }
    for (std::size_t c : counts) {
        CHECK(c > 1150);
        CHECK(c < 1350);
    }
}

TEST_CASE("the exploration branch never asks for q values") {
    ActionSpace space = build_action_space(3, {0.5});
    Rng rng(2);
    bool asked = false;
    auto provider = [&] {
        asked = true;
        return std::vector<double>(space.size(), 0.0);
    };
    for (int i = 0; i < 50; ++i) select_action_lazy(provider, 1.0, space, rng);
    CHECK_FALSE(asked);
    select_action_lazy(provider, 0.0, space, rng);
    CHECK(asked);
}

TEST_CASE("train batches stack tensors in order") {
    ActionSpace space = build_action_space(3, {0.5});
    EventTable table = tiny_table();
    EnvConfig env;
    env.encode_side = 8;
    env.max_alphabet = 8;
    StepOutcome out = env_step(table, space.actions[0], env);
    std::vector<Experience> exps;
    for (std::size_t i = 0; i < 3; ++i) {
        Experience e;
        e.state = out.next_state;
        e.next_state = out.next_state;
        e.action_index = i;
        e.reward = 0.1 * static_cast<double>(i);
        e.terminal = true;
        exps.push_back(e);
    }
    TrainBatch batch = make_train_batch(exps);
    CHECK(batch.batch == 3);
    CHECK(batch.side == 8);
    CHECK(batch.states.size() == 3 * 8 * 8 * 3);
    CHECK(batch.actions == std::vector<std::size_t>{0, 1, 2});
    CHECK(batch.rewards[2] == doctest::Approx(0.2));
    CHECK(batch.terminal == std::vector<std::uint8_t>{1, 1, 1});
    CHECK_THROWS_AS(make_train_batch({}), std::invalid_argument);
}

TEST_CASE("metric rows print six decimal places under a fixed header") {
    EpochMetrics m;
    m.epoch = 0;
    m.total_score = 1.5;
    m.avg_fitness = 0.25;
    m.count_ge_threshold = 4;
    m.epsilon = 1.0;
    m.mean_loss = 0.125;
    CHECK(format_metrics_csv({m}) ==
          "epoch,total_score,avg_fitness,count_ge_threshold,epsilon,mean_loss\n"
          "0,1.500000,0.250000,4,1.000000,0.125000\n");
}

TEST_CASE("a tiny run produces consistent metrics") {
    const EventTable table = tiny_table();
    const TrainingConfig tc = tiny_config();
    const RunReport report = train(table, tc);

    CHECK(report.n_actions == 10);  // C(5,3) triples, single threshold
    REQUIRE(report.epochs.size() == 2);
    for (const EpochMetrics& m : report.epochs) {
        CHECK(m.trial_fitness.size() == 3);
        CHECK(m.count_ge_threshold <= 3);
        double sum = 0.0;
        for (double f : m.trial_fitness) {
            CHECK(f >= 0.0);
            CHECK(f <= 1.0);
            sum += f;
        }
        CHECK(m.avg_fitness == doctest::Approx(sum / 3.0).epsilon(1e-9));
    }
    CHECK(report.epochs[0].epoch == 0);
    CHECK(report.epochs[1].epoch == 1);
    CHECK(report.epochs[0].epsilon == 1.0);

    REQUIRE(!report.best.empty());
    CHECK(report.best.size() <= 3);
    for (std::size_t i = 1; i < report.best.size(); ++i) {
        CHECK(report.best[i - 1].fitness >= report.best[i].fitness);
    }
    for (std::size_t i = 0; i < report.best.size(); ++i) {
        for (std::size_t j = i + 1; j < report.best.size(); ++j) {
            CHECK(report.best[i].action.index != report.best[j].action.index);
        }
    }
    CHECK(report.final_params.cfg.n_actions == 10);
}

TEST_CASE("runs with too few trials to fill a batch report zero loss") {
    TrainingConfig tc = tiny_config();
    tc.batch_size = 50;  // never reached by 2 epochs x 3 trials
    const RunReport report = train(tiny_table(), tc);
    for (const EpochMetrics& m : report.epochs) CHECK(m.mean_loss == 0.0);
}

TEST_CASE("identical seeds reproduce the metrics byte for byte") {
    const EventTable table = tiny_table();
    TrainingConfig tc = tiny_config();
    const RunReport a = train(table, tc);
    const RunReport b = train(table, tc);
    CHECK(format_metrics_csv(a.epochs) == format_metrics_csv(b.epochs));
    tc.seed = 10;
    const RunReport c = train(table, tc);
    // a different seed explores differently; scores may agree but the csv rarely does
    CHECK(format_metrics_csv(a.epochs).size() == format_metrics_csv(c.epochs).size());
}

TEST_CASE("every replay strategy completes a run") {
    const EventTable table = tiny_table();
    for (ReplayStrategy s :
         {ReplayStrategy::uniform, ReplayStrategy::prioritized, ReplayStrategy::dered}) {
        TrainingConfig tc = tiny_config();
        tc.strategy = s;
        tc.distortion_lambda = s == ReplayStrategy::dered ? 0.3 : 0.0;
        const RunReport report = train(table, tc);
        CHECK(report.epochs.size() == 2);
    }
}

TEST_CASE("float32 runs complete and stay in range") {
    TrainingConfig tc = tiny_config();
    tc.precision = Precision::f32;
    const RunReport report = train(tiny_table(), tc);
    for (const EpochMetrics& m : report.epochs) {
        CHECK(m.avg_fitness >= 0.0);
        CHECK(m.avg_fitness <= 1.0);
    }
}

TEST_CASE("chained episodes mark only the last trial terminal") {
    TrainingConfig tc = tiny_config();
    tc.chain_within_episode = true;
    const RunReport report = train(tiny_table(), tc);
    CHECK(report.epochs.size() == 2);
}

TEST_CASE("config validation refuses out-of-range settings") {
    TrainingConfig tc = tiny_config();
    tc.epochs = 0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = tiny_config();
    tc.gamma = 1.5;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = tiny_config();
    tc.balance = -0.2;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = tiny_config();
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = tiny_config();
    tc.min_fitness = 1.2;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
}

TEST_CASE("config snapshots parse back into the same configuration") {
    TrainingConfig tc = tiny_config();
    tc.strategy = ReplayStrategy::prioritized;
    tc.distortion_lambda = 0.25;
    tc.learning_rate = 0.004;
    const std::string text = config_snapshot_text(tc);
    CHECK(text.find("train.epochs = 2") != std::string::npos);
    CHECK(text.find("replay.strategy = prioritized") != std::string::npos);
    CHECK(text.find("net.profile = probe") != std::string::npos);

    const KeyValueConfig cfg = KeyValueConfig::from_string(text, "snapshot");
    const TrainingConfig back = training_config_from(cfg);
    CHECK(back.epochs == tc.epochs);
    CHECK(back.trials == tc.trials);
    CHECK(back.strategy == tc.strategy);
    CHECK(back.distortion_lambda == tc.distortion_lambda);
    CHECK(back.learning_rate == tc.learning_rate);
    CHECK(back.grid_start == tc.grid_start);
    CHECK(back.profile == tc.profile);
    CHECK(back.seed == tc.seed);
}

TEST_CASE("reports land on disk as a complete run directory") {
    testutil::TempDir dir("trainer_report");
    const EventTable table = tiny_table();
    const TrainingConfig tc = tiny_config();
    RunReport report = train(table, tc);
    const std::string out = dir.file("run");
    write_report(report, out);

    namespace fs = std::filesystem;
    CHECK(fs::exists(fs::path(out) / "config.snapshot"));
    CHECK(fs::exists(fs::path(out) / "metrics.csv"));
    CHECK(fs::exists(fs::path(out) / "checkpoint.bin"));
    CHECK(testutil::slurp((fs::path(out) / "metrics.csv").string()) ==
          format_metrics_csv(report.epochs));

    auto [params, opt] = load_checkpoint((fs::path(out) / "checkpoint.bin").string(),
                                         report.final_params.cfg);
    CHECK(params.cfg.n_actions == report.n_actions);

    REQUIRE(!report.best.empty());
    const std::string dot =
        testutil::slurp((fs::path(out) / "models" / "best_1.dot").string());
    const ProcessModel model = parse_dot(dot);
    CHECK(model.alphabet.size() == report.best[0].model.alphabet.size());
    CHECK(model.edges.size() == report.best[0].model.edges.size());
}
