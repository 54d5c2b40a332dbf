#include "pmrl/rl_env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pmrl {

const Action& ActionSpace::decode(std::size_t index) const {
    if (index >= actions.size()) {
        throw std::invalid_argument("action index " + std::to_string(index) +
                                    " out of range for space of " +
                                    std::to_string(actions.size()));
    }
    return actions[index];
}

std::size_t ActionSpace::index_of(const Action& action) const {
    std::size_t grid_pos = param_grid.size();
    for (std::size_t g = 0; g < param_grid.size(); ++g) {
        if (param_grid[g] == action.threshold) {
            grid_pos = g;
            break;
        }
    }
    if (grid_pos == param_grid.size()) {
        throw std::invalid_argument("index_of: threshold not on the parameter grid");
    }
    const std::size_t tuples = actions.size() / param_grid.size();
    const std::size_t base = grid_pos * tuples;
    for (std::size_t t = 0; t < tuples; ++t) {
        const Action& a = actions[base + t];
        if (a.case_col == action.case_col && a.activity_col == action.activity_col &&
            a.resource_col == action.resource_col) {
            return base + t;
        }
    }
    throw std::invalid_argument("index_of: column tuple not in the action space");
}

std::vector<double> make_grid(double start, double stop, double step) {
    if (step <= 0.0) throw std::invalid_argument("make_grid: step must be positive");
    if (start > stop) throw std::invalid_argument("make_grid: start must not exceed stop");
    std::vector<double> grid;
    // snap away accumulated float drift so clean decimal steps stay clean
    auto snap = [](double v) { return std::round(v * 1e12) / 1e12; };
    const std::size_t n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) grid.push_back(snap(start + static_cast<double>(i) * step));
    if (grid.front() < 0.0 || grid.back() > 1.0) {
        throw std::invalid_argument("make_grid: thresholds must stay in [0, 1]");
    }
    return grid;
}

ActionSpace build_action_space(std::size_t n_columns, std::vector<double> grid,
                               RoleAssignment roles) {
    if (n_columns < 3) {
        throw std::invalid_argument("build_action_space: need at least 3 columns");
    }
    if (grid.empty()) throw std::invalid_argument("build_action_space: empty parameter grid");
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (grid[g] < 0.0 || grid[g] > 1.0) {
            throw std::invalid_argument("build_action_space: grid values must be in [0, 1]");
        }
        if (g > 0 && grid[g] <= grid[g - 1]) {
            throw std::invalid_argument("build_action_space: grid must be strictly ascending");
        }
    }

    std::vector<std::array<std::size_t, 3>> tuples;  // {case, activity, resource}
    if (roles == RoleAssignment::canonical) {
        for (std::size_t i = 0; i < n_columns; ++i)
            for (std::size_t j = i + 1; j < n_columns; ++j)
                for (std::size_t k = j + 1; k < n_columns; ++k)
                    tuples.push_back({i, j, k});
    } else {
        for (std::size_t i = 0; i < n_columns; ++i)
            for (std::size_t j = 0; j < n_columns; ++j)
                for (std::size_t k = 0; k < n_columns; ++k)
                    if (i != j && i != k && j != k) tuples.push_back({i, j, k});
    }

    ActionSpace space;
    space.param_grid = std::move(grid);
    space.n_columns = n_columns;
    space.roles = roles;
    space.actions.reserve(space.param_grid.size() * tuples.size());
    std::size_t index = 0;
    for (double threshold : space.param_grid) {
        for (const auto& t : tuples) {
            space.actions.push_back(Action{threshold, t[0], t[1], t[2], index});
            ++index;
        }
    }
    return space;
}

RewardMode parse_reward_mode(const std::string& name) {
    if (name == "fitness_only") return RewardMode::fitness_only;
    if (name == "fitness_plus_std") return RewardMode::fitness_plus_std;
    if (name == "matrix_mean_plus_std") return RewardMode::matrix_mean_plus_std;
    throw std::invalid_argument("unknown reward mode: " + name);
}

std::string reward_mode_name(RewardMode mode) {
    switch (mode) {
        case RewardMode::fitness_only: return "fitness_only";
        case RewardMode::fitness_plus_std: return "fitness_plus_std";
        case RewardMode::matrix_mean_plus_std: return "matrix_mean_plus_std";
    }
    throw std::invalid_argument("unknown reward mode");
}

EnvState initial_state(std::size_t side) {
    EnvState state;
    state.side = side;
    state.tensor.assign(side * side * 3, 0.0);
    return state;
}

std::vector<double> encode_state(const DependencyMatrix& dep, const DirectlyFollowsMatrix& df,
                                 std::size_t side, std::size_t max_alphabet) {
    if (dep.size() != df.size()) {
        throw std::invalid_argument("encode_state: dependency and count matrices disagree");
    }
    std::vector<double> tensor(side * side * 3, 0.0);
    const std::size_t n = dep.size();
    const std::size_t cap = std::min(side, max_alphabet);

    std::vector<std::size_t> keep;
    if (n <= cap) {
        keep.resize(n);
        std::iota(keep.begin(), keep.end(), 0);
    } else {
        std::vector<std::uint64_t> freq(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                freq[i] += df.at(i, j);
                freq[i] += df.at(j, i);
            }
        }
        keep.resize(n);
        std::iota(keep.begin(), keep.end(), 0);
        std::stable_sort(keep.begin(), keep.end(),
                         [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });
        keep.resize(cap);
        std::sort(keep.begin(), keep.end());
    }

    const std::size_t m = keep.size();
    std::vector<double> row_sum(m, 0.0), col_sum(m, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
            const double v = static_cast<double>(df.at(keep[r], keep[c]));
            row_sum[r] += v;
            col_sum[c] += v;
        }
    }
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
            const double count = static_cast<double>(df.at(keep[r], keep[c]));
            tensor[state_index(side, r, c, 0)] = dep.at(keep[r], keep[c]);
            if (row_sum[r] > 0.0) tensor[state_index(side, r, c, 1)] = count / row_sum[r];
            if (col_sum[c] > 0.0) tensor[state_index(side, r, c, 2)] = count / col_sum[c];
        }
    }
    return tensor;
}

EnvState make_state(DependencyMatrix dep, DirectlyFollowsMatrix df, const EnvConfig& config) {
    EnvState state;
    state.side = config.encode_side;
    state.tensor = encode_state(dep, df, config.encode_side, config.max_alphabet);
    state.dep = std::move(dep);
    state.df = std::move(df);
    return state;
}

double matrix_mean(const DependencyMatrix& dep) {
    if (dep.dep.empty()) return 0.0;
    return std::accumulate(dep.dep.begin(), dep.dep.end(), 0.0) /
           static_cast<double>(dep.dep.size());
}

double matrix_std(const DependencyMatrix& dep) {
    if (dep.dep.empty()) return 0.0;
    const double mean = matrix_mean(dep);
    double acc = 0.0;
    for (double v : dep.dep) acc += (v - mean) * (v - mean);
    return std::sqrt(acc / static_cast<double>(dep.dep.size()));
}

double compute_reward(double fitness, const DependencyMatrix& dep, RewardMode mode) {
    switch (mode) {
        case RewardMode::fitness_only: return fitness;
        case RewardMode::fitness_plus_std: return fitness + matrix_std(dep);
        case RewardMode::matrix_mean_plus_std: return matrix_mean(dep) + matrix_std(dep);
    }
    throw std::invalid_argument("unknown reward mode");
}

StepOutcome env_step(const EventTable& table, const Action& action, const EnvConfig& config) {
    if (action.threshold < 0.0 || action.threshold > 1.0) {
        throw std::invalid_argument("env_step: threshold must be in [0, 1]");
    }
    ColumnMapping mapping{action.case_col, action.activity_col, action.resource_col, std::nullopt};
    validate_mapping(mapping, table.n_columns());

    EventLog log = build_log(table, mapping);
    DirectlyFollowsMatrix df = directly_follows_counts(log);
    DependencyMatrix dep = dependency_matrix(df);

    StepOutcome out;
    out.model = discover_model(dep, action.threshold, mapping);
    out.fitness = log_fitness(log, out.model).log_fitness;
    out.reward = compute_reward(out.fitness, dep, config.reward_mode);
    out.success = out.fitness > config.min_fitness;
    out.next_state = make_state(std::move(dep), std::move(df), config);
    return out;
}

}  // namespace pmrl
