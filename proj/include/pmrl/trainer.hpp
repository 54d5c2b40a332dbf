#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pmrl/eventlog.hpp"
#include "pmrl/qnet.hpp"
#include "pmrl/replay.hpp"
#include "pmrl/rl_env.hpp"
#include "pmrl/rng.hpp"

namespace pmrl {

enum class ReplayStrategy { uniform, prioritized, dered };

ReplayStrategy parse_replay_strategy(const std::string& name);
std::string replay_strategy_name(ReplayStrategy strategy);

enum class NetProfile { full, reduced, probe };

NetProfile parse_net_profile(const std::string& name);
std::string net_profile_name(NetProfile profile);

enum class Precision { f64, f32 };

Precision parse_precision(const std::string& name);
std::string precision_name(Precision precision);

struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    double decay_fraction = 0.7;

    void validate() const;
    // Linear from start to end over the first decay_fraction of total steps,
    // then flat. step is 0-based.
    double value(std::size_t step, std::size_t total_steps) const;
};

struct TrainingConfig {
    std::size_t epochs = 10;
    std::size_t trials = 50;
    double min_fitness = 0.7;
    double gamma = 0.9;
    EpsilonSchedule epsilon;
    ReplayStrategy strategy = ReplayStrategy::dered;
    double balance = 0.5;
    double distortion_lambda = 0.0;
    DistortionMode distortion_mode = DistortionMode::ratio_draw;
    double per_alpha = 0.6;
    double per_beta_start = 0.4;
    double per_beta_end = 1.0;
    std::size_t batch_size = 32;
    std::size_t buffer_capacity = 10000;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    std::size_t sync_every_steps = 0;  // 0 syncs the target once per epoch
    std::uint64_t seed = 1;
    RewardMode reward_mode = RewardMode::fitness_plus_std;
    double grid_start = 0.01;
    double grid_stop = 1.0;
    double grid_step = 0.01;
    RoleAssignment roles = RoleAssignment::canonical;
    NetProfile profile = NetProfile::reduced;
    Precision precision = Precision::f64;
    std::size_t max_alphabet = 128;
    std::size_t best_models = 5;
    double pi_tradeoff = 0.0;  // accepted and recorded; no effect on training
    bool chain_within_episode = false;

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double total_score = 0.0;
    double avg_fitness = 0.0;
    std::size_t count_ge_threshold = 0;
    double epsilon = 0.0;  // schedule value at the epoch's first trial
    double mean_loss = 0.0;
    std::vector<double> trial_fitness;
};

struct BestModel {
    std::size_t epoch = 0;
    std::size_t trial = 0;
    Action action;
    double fitness = 0.0;
    ProcessModel model;
};

struct RunReport {
    TrainingConfig config;
    std::size_t n_actions = 0;
    std::vector<EpochMetrics> epochs;
    std::vector<BestModel> best;  // fitness descending, ties to earlier epoch then trial
    double wall_seconds = 0.0;
    NetParams<double> final_params;
    OptState<double> final_opt;
};

std::size_t select_action(const std::vector<double>& q_values, double epsilon,
                          const ActionSpace& space, Rng& rng);

// The provider runs only on the greedy branch, so a fully random policy never
// pays for a forward pass.
std::size_t select_action_lazy(const std::function<std::vector<double>()>& q_provider,
                               double epsilon, const ActionSpace& space, Rng& rng);

TrainBatch make_train_batch(const std::vector<Experience>& experiences);

RunReport train(const EventTable& table, const TrainingConfig& config);

std::string format_metrics_csv(const std::vector<EpochMetrics>& epochs);
std::string config_snapshot_text(const TrainingConfig& config);

void write_report(const RunReport& report, const std::string& out_dir);

}  // namespace pmrl
