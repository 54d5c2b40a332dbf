#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pmrl/conformance.hpp"
#include "pmrl/discovery.hpp"
#include "pmrl/eventlog.hpp"

namespace pmrl {

struct Action {
    double threshold = 0.0;
    std::size_t case_col = 0;
    std::size_t activity_col = 0;
    std::size_t resource_col = 0;
    std::size_t index = 0;
};

// canonical assigns case/activity/resource to the sorted columns i<j<k of each
// combination; permuted enumerates every ordered assignment of distinct columns.
enum class RoleAssignment { canonical, permuted };

struct ActionSpace {
    std::vector<Action> actions;  // grid value ascending outer, column tuple inner
    std::vector<double> param_grid;
    std::size_t n_columns = 0;
    RoleAssignment roles = RoleAssignment::canonical;

    std::size_t size() const { return actions.size(); }
    const Action& decode(std::size_t index) const;
    std::size_t index_of(const Action& action) const;
};

std::vector<double> make_grid(double start, double stop, double step);

ActionSpace build_action_space(std::size_t n_columns, std::vector<double> grid,
                               RoleAssignment roles = RoleAssignment::canonical);

enum class RewardMode { fitness_only, fitness_plus_std, matrix_mean_plus_std };

RewardMode parse_reward_mode(const std::string& name);
std::string reward_mode_name(RewardMode mode);

struct EnvConfig {
    double min_fitness = 0.7;
    RewardMode reward_mode = RewardMode::fitness_plus_std;
    std::size_t encode_side = 128;   // state tensor is encode_side^2 x 3
    std::size_t max_alphabet = 128;  // activities kept when the alphabet is larger
};

struct EnvState {
    DependencyMatrix dep;
    DirectlyFollowsMatrix df;
    std::size_t side = 0;
    std::vector<double> tensor;  // row-major (row, col, channel)
};

inline std::size_t state_index(std::size_t side, std::size_t r, std::size_t c, std::size_t ch) {
    return (r * side + c) * 3 + ch;
}

EnvState initial_state(std::size_t side);

// Channel 0 carries dependency values, channels 1 and 2 row- and
// column-normalized counts. Oversized alphabets keep the most frequent
// activities, ties resolved toward earlier alphabet entries.
std::vector<double> encode_state(const DependencyMatrix& dep, const DirectlyFollowsMatrix& df,
                                 std::size_t side, std::size_t max_alphabet);

EnvState make_state(DependencyMatrix dep, DirectlyFollowsMatrix df, const EnvConfig& config);

// Population statistics over every cell of the dependency matrix.
double matrix_mean(const DependencyMatrix& dep);
double matrix_std(const DependencyMatrix& dep);

double compute_reward(double fitness, const DependencyMatrix& dep, RewardMode mode);

struct StepOutcome {
    EnvState next_state;
    double fitness = 0.0;
    double reward = 0.0;
    bool success = false;  // fitness strictly above min_fitness
    ProcessModel model;
};

// Pure function of (table, action, config): applies the action's column
// mapping and threshold, scores the discovered model, encodes the next state.
StepOutcome env_step(const EventTable& table, const Action& action, const EnvConfig& config);

}  // namespace pmrl
