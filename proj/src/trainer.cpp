#include "pmrl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <utility>

namespace pmrl {

ReplayStrategy parse_replay_strategy(const std::string& name) {
    if (name == "uniform") return ReplayStrategy::uniform;
    if (name == "prioritized") return ReplayStrategy::prioritized;
    if (name == "dered") return ReplayStrategy::dered;
    throw std::invalid_argument("unknown replay strategy '" + name +
                                "' (expected uniform, prioritized or dered)");
}

std::string replay_strategy_name(ReplayStrategy strategy) {
    switch (strategy) {
        case ReplayStrategy::uniform: return "uniform";
        case ReplayStrategy::prioritized: return "prioritized";
        case ReplayStrategy::dered: return "dered";
    }
    throw std::invalid_argument("unknown replay strategy value");
}

NetProfile parse_net_profile(const std::string& name) {
    if (name == "full") return NetProfile::full;
    if (name == "reduced") return NetProfile::reduced;
    if (name == "probe") return NetProfile::probe;
    throw std::invalid_argument("unknown network profile '" + name +
                                "' (expected full, reduced or probe)");
}

std::string net_profile_name(NetProfile profile) {
    switch (profile) {
        case NetProfile::full: return "full";
        case NetProfile::reduced: return "reduced";
        case NetProfile::probe: return "probe";
    }
    throw std::invalid_argument("unknown network profile value");
}

Precision parse_precision(const std::string& name) {
    if (name == "f64") return Precision::f64;
    if (name == "f32") return Precision::f32;
    throw std::invalid_argument("unknown precision '" + name + "' (expected f64 or f32)");
}

std::string precision_name(Precision precision) {
    return precision == Precision::f64 ? "f64" : "f32";
}

void EpsilonSchedule::validate() const {
    if (start < 0.0 || start > 1.0 || end < 0.0 || end > 1.0) {
        throw std::invalid_argument("epsilon schedule: values must lie in [0, 1]");
    }
    if (decay_fraction < 0.0 || decay_fraction > 1.0) {
        throw std::invalid_argument("epsilon schedule: decay fraction must lie in [0, 1]");
    }
}

double EpsilonSchedule::value(std::size_t step, std::size_t total_steps) const {
    const std::size_t decay_steps =
        static_cast<std::size_t>(decay_fraction * static_cast<double>(total_steps) + 0.5);
    if (decay_steps == 0 || step >= decay_steps) return end;
    const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
    return start + (end - start) * frac;
}

void TrainingConfig::validate() const {
    if (epochs == 0) throw std::invalid_argument("train: epochs must be at least 1");
    if (trials == 0) throw std::invalid_argument("train: trials must be at least 1");
    if (min_fitness < 0.0 || min_fitness > 1.0) {
        throw std::invalid_argument("train: min_fitness must lie in [0, 1]");
    }
    if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("train: gamma must lie in [0, 1]");
    epsilon.validate();
    if (balance < 0.0 || balance > 1.0) {
        throw std::invalid_argument("train: balance must lie in [0, 1]");
    }
    if (distortion_lambda < 0.0 || distortion_lambda > 1.0) {
        throw std::invalid_argument("train: distortion_lambda must lie in [0, 1]");
    }
    if (per_alpha < 0.0) throw std::invalid_argument("train: per_alpha must be non-negative");
    if (per_beta_start < 0.0 || per_beta_end < 0.0) {
        throw std::invalid_argument("train: per_beta values must be non-negative");
    }
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be at least 1");
    if (buffer_capacity == 0) {
        throw std::invalid_argument("train: buffer_capacity must be at least 1");
    }
    if (learning_rate <= 0.0) throw std::invalid_argument("train: learning_rate must be positive");
    if (max_alphabet == 0) throw std::invalid_argument("train: max_alphabet must be at least 1");
}

std::size_t select_action(const std::vector<double>& q_values, double epsilon,
                          const ActionSpace& space, Rng& rng) {
    if (q_values.size() != space.size()) {
        throw std::invalid_argument("select_action: q-value count must match the action space");
    }
    return select_action_lazy([&]() { return q_values; }, epsilon, space, rng);
}

std::size_t select_action_lazy(const std::function<std::vector<double>()>& q_provider,
                               double epsilon, const ActionSpace& space, Rng& rng) {
    if (epsilon < 0.0 || epsilon > 1.0) {
        throw std::invalid_argument("select_action: epsilon must lie in [0, 1]");
    }
    if (space.size() == 0) throw std::invalid_argument("select_action: empty action space");
    if (rng.uniform() < epsilon) return rng.uniform_index(space.size());
    const std::vector<double> q = q_provider();
    if (q.size() != space.size()) {
        throw std::invalid_argument("select_action: q-value count must match the action space");
    }
    return argmax_index(q.data(), q.size());
}

TrainBatch make_train_batch(const std::vector<Experience>& experiences) {
    if (experiences.empty()) throw std::invalid_argument("make_train_batch: empty batch");
    TrainBatch tb;
    tb.batch = experiences.size();
    tb.side = experiences.front().state.side;
    const std::size_t n = tb.side * tb.side * 3;
    tb.states.reserve(tb.batch * n);
    tb.next_states.reserve(tb.batch * n);
    tb.actions.reserve(tb.batch);
    tb.rewards.reserve(tb.batch);
    tb.terminal.reserve(tb.batch);
    for (const Experience& e : experiences) {
        if (e.state.tensor.size() != n || e.next_state.tensor.size() != n) {
            throw std::invalid_argument("make_train_batch: state tensor sizes differ");
        }
        tb.states.insert(tb.states.end(), e.state.tensor.begin(), e.state.tensor.end());
        tb.next_states.insert(tb.next_states.end(), e.next_state.tensor.begin(),
                              e.next_state.tensor.end());
        tb.actions.push_back(e.action_index);
        tb.rewards.push_back(e.reward);
        tb.terminal.push_back(e.terminal ? 1 : 0);
    }
    return tb;
}

namespace {

// Replay only ever consumes the tensor; dropping the matrices keeps buffer
// memory bounded by the tensor size regardless of alphabet blowups.
EnvState compact_state(EnvState s) {
    s.dep = DependencyMatrix{};
    s.df = DirectlyFollowsMatrix{};
    return s;
}

void consider_best(std::vector<BestModel>& best, std::size_t cap, std::size_t epoch,
                   std::size_t trial, const Action& action, double fitness,
                   const ProcessModel& model) {
    if (cap == 0) return;
    for (const BestModel& b : best) {
        if (b.action.index == action.index) return;
    }
    // a full list only admits strictly better fitness; an equal newcomer is
    // later and loses the tie
    if (best.size() >= cap && fitness <= best.back().fitness) return;
    BestModel cand;
    cand.epoch = epoch;
    cand.trial = trial;
    cand.action = action;
    cand.fitness = fitness;
    cand.model = model;
    auto pos = std::find_if(best.begin(), best.end(), [&](const BestModel& b) {
        if (b.fitness != cand.fitness) return b.fitness < cand.fitness;
        if (b.epoch != cand.epoch) return b.epoch > cand.epoch;
        return b.trial > cand.trial;
    });
    best.insert(pos, std::move(cand));
    if (best.size() > cap) best.pop_back();
}

template <class T>
RunReport train_impl(const EventTable& table, const TrainingConfig& config) {
    config.validate();
    if (table.n_columns() < 3) {
        throw std::invalid_argument("train: table needs at least 3 columns");
    }
    const auto t_start = std::chrono::steady_clock::now();

    ActionSpace space = build_action_space(
        table.n_columns(), make_grid(config.grid_start, config.grid_stop, config.grid_step),
        config.roles);

    NetworkConfig net_cfg;
    switch (config.profile) {
        case NetProfile::full: net_cfg = full_network(space.size()); break;
        case NetProfile::reduced: net_cfg = reduced_network(space.size()); break;
        case NetProfile::probe: net_cfg = probe_network(space.size()); break;
    }

    EnvConfig env_cfg;
    env_cfg.min_fitness = config.min_fitness;
    env_cfg.reward_mode = config.reward_mode;
    env_cfg.encode_side = net_cfg.input_side;
    env_cfg.max_alphabet = config.max_alphabet;

    Rng root(config.seed);
    Rng rng_init = root.child("net-init");
    Rng rng_select = root.child("action-select");
    Rng rng_sample = root.child("batch-sample");
    Rng rng_distort = root.child("batch-distort");

    NetParams<T> policy = init_params<T>(net_cfg, rng_init);
    NetParams<T> target = make_params<T>(net_cfg);
    sync_target(policy, target);
    OptState<T> opt =
        make_opt_state(policy, config.learning_rate, config.adam_beta1, config.adam_beta2);

    RingBuffer single(config.buffer_capacity);
    DualReplayBuffer dual(config.buffer_capacity, config.min_fitness);
    PrioritizedBuffer per(config.buffer_capacity, config.per_alpha, config.per_beta_start);

    const std::size_t total_steps = config.epochs * config.trials;
    std::size_t global_step = 0;

    RunReport report;
    report.config = config;
    report.n_actions = space.size();
    std::vector<BestModel> best;

    for (std::size_t e = 0; e < config.epochs; ++e) {
        EnvState state = initial_state(net_cfg.input_side);
        EpochMetrics met;
        met.epoch = e;
        met.epsilon = config.epsilon.value(global_step, total_steps);
        double loss_sum = 0.0;
        std::size_t loss_n = 0;

        for (std::size_t t = 0; t < config.trials; ++t) {
            const double eps = config.epsilon.value(global_step, total_steps);
            auto q_provider = [&]() {
                std::vector<T> in(state.tensor.size());
                for (std::size_t i = 0; i < in.size(); ++i) {
                    in[i] = static_cast<T>(state.tensor[i]);
                }
                const std::vector<T> q = forward(policy, in, 1, Mode::infer);
                return std::vector<double>(q.begin(), q.end());
            };
            const std::size_t a = select_action_lazy(q_provider, eps, space, rng_select);

            StepOutcome outcome = env_step(table, space.actions[a], env_cfg);

            met.total_score += outcome.reward;
            met.trial_fitness.push_back(outcome.fitness);
            if (outcome.fitness >= config.min_fitness) ++met.count_ge_threshold;
            consider_best(best, config.best_models, e, t, space.actions[a], outcome.fitness,
                          outcome.model);

            Experience exp;
            exp.state = compact_state(std::move(state));
            exp.action_index = a;
            exp.reward = outcome.reward;
            exp.next_state = compact_state(outcome.next_state);
            exp.fitness = outcome.fitness;
            exp.success = outcome.success;
            exp.terminal = !config.chain_within_episode || t + 1 == config.trials;
            state = std::move(outcome.next_state);

            switch (config.strategy) {
                case ReplayStrategy::uniform: single.push(std::move(exp)); break;
                case ReplayStrategy::dered: store_experience(dual, std::move(exp)); break;
                case ReplayStrategy::prioritized: per.push(std::move(exp)); break;
            }

            const std::size_t stored = config.strategy == ReplayStrategy::uniform
                                           ? single.size()
                                           : config.strategy == ReplayStrategy::dered
                                                 ? dual.total_size()
                                                 : per.size();
            if (stored >= config.batch_size) {
                std::vector<Experience> batch;
                std::vector<double> is_weights;
                std::vector<std::size_t> per_indices;
                if (config.strategy == ReplayStrategy::uniform) {
                    batch = sample_uniform(single, config.batch_size, rng_sample);
                } else if (config.strategy == ReplayStrategy::dered) {
                    batch = sample_dered(dual, config.batch_size, config.balance, rng_sample);
                    const DistortionConfig dc{config.distortion_lambda, config.distortion_mode};
                    distort_batch(batch, dc, space, rng_distort);
                } else {
                    const double frac = total_steps > 1 ? static_cast<double>(global_step) /
                                                              static_cast<double>(total_steps - 1)
                                                        : 1.0;
                    per.beta = config.per_beta_start +
                               (config.per_beta_end - config.per_beta_start) *
                                   std::min(1.0, frac);
                    PrioritizedSample ps =
                        sample_prioritized(per, config.batch_size, rng_sample);
                    batch = std::move(ps.batch);
                    per_indices = std::move(ps.indices);
                    is_weights = std::move(ps.weights);
                }
                const TrainBatch tb = make_train_batch(batch);
                const TrainStepResult res =
                    train_step(policy, opt, target, tb, config.gamma,
                               is_weights.empty() ? nullptr : &is_weights);
                if (!per_indices.empty()) per.update_priorities(per_indices, res.abs_td);
                loss_sum += res.loss;
                ++loss_n;
            }

            ++global_step;
            if (config.sync_every_steps > 0 && global_step % config.sync_every_steps == 0) {
                sync_target(policy, target);
            }
        }

        if (config.sync_every_steps == 0) sync_target(policy, target);
        met.avg_fitness =
            met.trial_fitness.empty()
                ? 0.0
                : std::accumulate(met.trial_fitness.begin(), met.trial_fitness.end(), 0.0) /
                      static_cast<double>(met.trial_fitness.size());
        met.mean_loss = loss_n > 0 ? loss_sum / static_cast<double>(loss_n) : 0.0;
        report.epochs.push_back(std::move(met));
    }

    report.best = std::move(best);
    report.final_params = convert_params<double>(policy);
    report.final_opt = convert_opt<double>(opt);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

}  // namespace

RunReport train(const EventTable& table, const TrainingConfig& config) {
    if (config.precision == Precision::f32) return train_impl<float>(table, config);
    return train_impl<double>(table, config);
}

std::string format_metrics_csv(const std::vector<EpochMetrics>& epochs) {
    std::string out = "epoch,total_score,avg_fitness,count_ge_threshold,epsilon,mean_loss\n";
    char buf[192];
    for (const EpochMetrics& m : epochs) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%zu,%.6f,%.6f\n", m.epoch, m.total_score,
                      m.avg_fitness, m.count_ge_threshold, m.epsilon, m.mean_loss);
        out += buf;
    }
    return out;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    for (int prec = 6; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

}  // namespace

std::string config_snapshot_text(const TrainingConfig& config) {
    std::string out;
    auto put = [&](const std::string& key, const std::string& value) {
        out += key;
        out += " = ";
        out += value;
        out += "\n";
    };
    put("train.epochs", std::to_string(config.epochs));
    put("train.trials", std::to_string(config.trials));
    put("train.gamma", fmt_double(config.gamma));
    put("train.seed", std::to_string(config.seed));
    put("train.batch_size", std::to_string(config.batch_size));
    put("train.buffer_capacity", std::to_string(config.buffer_capacity));
    put("train.learning_rate", fmt_double(config.learning_rate));
    put("train.adam_beta1", fmt_double(config.adam_beta1));
    put("train.adam_beta2", fmt_double(config.adam_beta2));
    put("train.sync_every_steps", std::to_string(config.sync_every_steps));
    put("train.epsilon_start", fmt_double(config.epsilon.start));
    put("train.epsilon_end", fmt_double(config.epsilon.end));
    put("train.epsilon_decay_fraction", fmt_double(config.epsilon.decay_fraction));
    put("train.best_models", std::to_string(config.best_models));
    put("train.pi_tradeoff", fmt_double(config.pi_tradeoff));
    put("train.chain_within_episode", config.chain_within_episode ? "true" : "false");
    put("train.precision", precision_name(config.precision));
    put("env.min_fitness", fmt_double(config.min_fitness));
    put("env.reward_mode", reward_mode_name(config.reward_mode));
    put("env.grid_start", fmt_double(config.grid_start));
    put("env.grid_stop", fmt_double(config.grid_stop));
    put("env.grid_step", fmt_double(config.grid_step));
    put("env.roles", config.roles == RoleAssignment::canonical ? "canonical" : "permuted");
    put("env.max_alphabet", std::to_string(config.max_alphabet));
    put("replay.strategy", replay_strategy_name(config.strategy));
    put("replay.balance", fmt_double(config.balance));
    put("replay.distortion_lambda", fmt_double(config.distortion_lambda));
    put("replay.distortion_mode", distortion_mode_name(config.distortion_mode));
    put("replay.per_alpha", fmt_double(config.per_alpha));
    put("replay.per_beta_start", fmt_double(config.per_beta_start));
    put("replay.per_beta_end", fmt_double(config.per_beta_end));
    put("net.profile", net_profile_name(config.profile));
    return out;
}

void write_report(const RunReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "models", ec);
    if (ec) {
        throw std::runtime_error("write_report: cannot create " + out_dir + ": " + ec.message());
    }
    auto write_file = [](const fs::path& p, const std::string& content) {
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error("write_report: cannot open " + p.string());
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) throw std::runtime_error("write_report: write failed for " + p.string());
    };
    write_file(fs::path(out_dir) / "config.snapshot", config_snapshot_text(report.config));
    write_file(fs::path(out_dir) / "metrics.csv", format_metrics_csv(report.epochs));
    save_checkpoint(report.final_params, report.final_opt,
                    (fs::path(out_dir) / "checkpoint.bin").string());
    for (std::size_t i = 0; i < report.best.size(); ++i) {
        write_file(fs::path(out_dir) / "models" / ("best_" + std::to_string(i + 1) + ".dot"),
                   export_dot(report.best[i].model));
    }
}

}  // namespace pmrl
