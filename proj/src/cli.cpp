#include "pmrl/cli.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "pmrl/conformance.hpp"
#include "pmrl/discovery.hpp"
#include "pmrl/rl_env.hpp"

namespace pmrl {

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        std::size_t b = 0, e = item.size();
        while (b < e && std::isspace(static_cast<unsigned char>(item[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(item[e - 1]))) --e;
        out.push_back(item.substr(b, e - b));
    }
    return out;
}

}  // namespace

std::vector<std::string> config_schema() {
    return {
        "data.path",
        "data.delimiter",
        "data.has_header",
        "synth.cases",
        "synth.sequence",
        "synth.branch_probs",
        "synth.noise_columns",
        "synth.noise_rate",
        "synth.resource_pool",
        "synth.noise_pool",
        "synth.seed",
        "out.dir",
        "train.epochs",
        "train.trials",
        "train.gamma",
        "train.seed",
        "train.batch_size",
        "train.buffer_capacity",
        "train.learning_rate",
        "train.adam_beta1",
        "train.adam_beta2",
        "train.sync_every_steps",
        "train.epsilon_start",
        "train.epsilon_end",
        "train.epsilon_decay_fraction",
        "train.best_models",
        "train.pi_tradeoff",
        "train.chain_within_episode",
        "train.precision",
        "env.min_fitness",
        "env.reward_mode",
        "env.grid_start",
        "env.grid_stop",
        "env.grid_step",
        "env.roles",
        "env.max_alphabet",
        "replay.strategy",
        "replay.balance",
        "replay.distortion_lambda",
        "replay.distortion_mode",
        "replay.per_alpha",
        "replay.per_beta_start",
        "replay.per_beta_end",
        "net.profile",
    };
}

TrainingConfig training_config_from(const KeyValueConfig& cfg) {
    TrainingConfig tc;
    tc.epochs = cfg.get_size("train.epochs", tc.epochs);
    tc.trials = cfg.get_size("train.trials", tc.trials);
    tc.gamma = cfg.get_double("train.gamma", tc.gamma);
    tc.seed = cfg.get_u64("train.seed", tc.seed);
    tc.batch_size = cfg.get_size("train.batch_size", tc.batch_size);
    tc.buffer_capacity = cfg.get_size("train.buffer_capacity", tc.buffer_capacity);
    tc.learning_rate = cfg.get_double("train.learning_rate", tc.learning_rate);
    tc.adam_beta1 = cfg.get_double("train.adam_beta1", tc.adam_beta1);
    tc.adam_beta2 = cfg.get_double("train.adam_beta2", tc.adam_beta2);
    tc.sync_every_steps = cfg.get_size("train.sync_every_steps", tc.sync_every_steps);
    tc.epsilon.start = cfg.get_double("train.epsilon_start", tc.epsilon.start);
    tc.epsilon.end = cfg.get_double("train.epsilon_end", tc.epsilon.end);
    tc.epsilon.decay_fraction =
        cfg.get_double("train.epsilon_decay_fraction", tc.epsilon.decay_fraction);
    tc.best_models = cfg.get_size("train.best_models", tc.best_models);
    tc.pi_tradeoff = cfg.get_double("train.pi_tradeoff", tc.pi_tradeoff);
    tc.chain_within_episode =
        cfg.get_bool("train.chain_within_episode", tc.chain_within_episode);
    tc.precision = parse_precision(cfg.get_string("train.precision", precision_name(tc.precision)));
    tc.min_fitness = cfg.get_double("env.min_fitness", tc.min_fitness);
    tc.reward_mode = parse_reward_mode(cfg.get_string("env.reward_mode", reward_mode_name(tc.reward_mode)));
    tc.grid_start = cfg.get_double("env.grid_start", tc.grid_start);
    tc.grid_stop = cfg.get_double("env.grid_stop", tc.grid_stop);
    tc.grid_step = cfg.get_double("env.grid_step", tc.grid_step);
    const std::string roles = cfg.get_string("env.roles", "canonical");
    if (roles == "canonical") {
        tc.roles = RoleAssignment::canonical;
    } else if (roles == "permuted") {
        tc.roles = RoleAssignment::permuted;
    } else {
        throw std::invalid_argument("config key 'env.roles': expected canonical or permuted, got '" +
                                    roles + "'");
    }
    tc.max_alphabet = cfg.get_size("env.max_alphabet", tc.max_alphabet);
    tc.strategy = parse_replay_strategy(cfg.get_string("replay.strategy", replay_strategy_name(tc.strategy)));
    tc.balance = cfg.get_double("replay.balance", tc.balance);
    tc.distortion_lambda = cfg.get_double("replay.distortion_lambda", tc.distortion_lambda);
    tc.distortion_mode = parse_distortion_mode(
        cfg.get_string("replay.distortion_mode", distortion_mode_name(tc.distortion_mode)));
    tc.per_alpha = cfg.get_double("replay.per_alpha", tc.per_alpha);
    tc.per_beta_start = cfg.get_double("replay.per_beta_start", tc.per_beta_start);
    tc.per_beta_end = cfg.get_double("replay.per_beta_end", tc.per_beta_end);
    tc.profile = parse_net_profile(cfg.get_string("net.profile", net_profile_name(tc.profile)));
    tc.validate();
    return tc;
}

SynthSpec synth_spec_from(const KeyValueConfig& cfg) {
    SynthSpec spec;
    spec.n_cases = cfg.get_size("synth.cases", 200);
    spec.sequence = split_list(cfg.get_string("synth.sequence", "A,B,C,D,E,F"));
    const std::string probs = cfg.get_string("synth.branch_probs", "");
    if (!probs.empty()) {
        for (const std::string& p : split_list(probs)) {
            try {
                spec.branch_probs.push_back(std::stod(p));
            } catch (const std::exception&) {
                throw std::invalid_argument("config key 'synth.branch_probs': bad number '" + p +
                                            "'");
            }
        }
    }
    spec.n_noise_columns = cfg.get_size("synth.noise_columns", 3);
    spec.noise_rate = cfg.get_double("synth.noise_rate", 0.1);
    spec.resource_pool = cfg.get_size("synth.resource_pool", spec.resource_pool);
    spec.noise_pool = cfg.get_size("synth.noise_pool", spec.noise_pool);
    return spec;
}

namespace {

struct CommonTableArgs {
    std::string table_path;
    std::string delimiter = ",";
    bool no_header = false;
    std::size_t case_col = 0;
    std::size_t activity_col = 1;
    std::size_t resource_col = 2;
    int timestamp_col = -1;
};

char delimiter_char(const std::string& d) {
    if (d == "\\t" || d == "tab") return '\t';
    if (d.size() != 1) {
        throw std::invalid_argument("delimiter must be a single character (or 'tab')");
    }
    return d[0];
}

ColumnMapping mapping_of(const CommonTableArgs& args) {
    ColumnMapping m;
    m.case_col = args.case_col;
    m.activity_col = args.activity_col;
    m.resource_col = args.resource_col;
    if (args.timestamp_col >= 0) m.timestamp_col = static_cast<std::size_t>(args.timestamp_col);
    return m;
}

void add_table_options(CLI::App* cmd, CommonTableArgs& args) {
    cmd->add_option("--table", args.table_path, "event table file")->required();
    cmd->add_option("--delimiter", args.delimiter, "field delimiter (default ,)");
    cmd->add_flag("--no-header", args.no_header, "table has no header row");
    cmd->add_option("--case-col", args.case_col, "case id column (default 0)");
    cmd->add_option("--activity-col", args.activity_col, "activity column (default 1)");
    cmd->add_option("--resource-col", args.resource_col, "resource column (default 2)");
    cmd->add_option("--timestamp-col", args.timestamp_col,
                    "timestamp column, -1 for row order (default)");
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("write failed for " + path);
}

KeyValueConfig merge_config(const std::string& config_path,
                            const std::vector<std::string>& overrides,
                            const std::optional<std::uint64_t>& seed,
                            const std::string& out_dir) {
    KeyValueConfig cfg =
        config_path.empty() ? KeyValueConfig{} : KeyValueConfig::from_file(config_path);
    for (const std::string& kv : overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        }
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.set("train.seed", std::to_string(*seed));
    if (!out_dir.empty()) cfg.set("out.dir", out_dir);
    cfg.require_known(config_schema());
    return cfg;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::optional<std::uint64_t>& seed, const std::string& out_dir) {
    const KeyValueConfig cfg = merge_config(config_path, overrides, seed, out_dir);
    const TrainingConfig tc = training_config_from(cfg);

    EventTable table;
    if (cfg.has("data.path")) {
        table = load_table(cfg.get_string("data.path", ""),
                           delimiter_char(cfg.get_string("data.delimiter", ",")),
                           cfg.get_bool("data.has_header", true));
    } else {
        table = generate_synthetic_table(synth_spec_from(cfg), cfg.get_u64("synth.seed", tc.seed));
    }

    const RunReport report = train(table, tc);
    const std::string dir = cfg.get_string("out.dir", "run");
    write_report(report, dir);

    const EpochMetrics& last = report.epochs.back();
    std::printf("actions %zu\n", report.n_actions);
    std::printf("epochs %zu\n", report.epochs.size());
    std::printf("final_avg_fitness %.6f\n", last.avg_fitness);
    std::printf("final_count_ge_threshold %zu/%zu\n", last.count_ge_threshold, tc.trials);
    std::printf("out %s\n", dir.c_str());
    return 0;
}

int cmd_discover(const CommonTableArgs& args, double threshold, const std::string& out_path) {
    const EventTable table =
        load_table(args.table_path, delimiter_char(args.delimiter), !args.no_header);
    const ColumnMapping mapping = mapping_of(args);
    validate_mapping(mapping, table.n_columns());
    const EventLog log = build_log(table, mapping);
    const DirectlyFollowsMatrix df = directly_follows_counts(log);
    const DependencyMatrix dep = dependency_matrix(df);
    const ProcessModel model = discover_model(dep, threshold, mapping);
    write_text_file(out_path, export_dot(model));
    const FitnessReport report = log_fitness(log, model);
    std::printf("fitness %.6f\n", report.log_fitness);
    return 0;
}

int cmd_check(const CommonTableArgs& args, const std::string& model_path,
              const std::string& out_path) {
    const EventTable table =
        load_table(args.table_path, delimiter_char(args.delimiter), !args.no_header);
    const ColumnMapping mapping = mapping_of(args);
    validate_mapping(mapping, table.n_columns());
    const EventLog log = build_log(table, mapping);
    const ProcessModel model = load_dot(model_path);
    const FitnessReport report = log_fitness(log, model);
    if (!out_path.empty()) write_text_file(out_path, format_fitness_report(report));
    std::printf("log_fitness %.6f\n", report.log_fitness);
    if (report.vacuous) std::printf("vacuous true\n");
    return 0;
}

int cmd_synth(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::optional<std::uint64_t>& seed, const std::string& out_path) {
    KeyValueConfig cfg = merge_config(config_path, overrides, std::nullopt, "");
    const SynthSpec spec = synth_spec_from(cfg);
    if (spec.n_cases == 0) throw std::invalid_argument("synth.cases must be at least 1");
    const std::uint64_t synth_seed = seed ? *seed : cfg.get_u64("synth.seed", 1);
    const EventTable table = generate_synthetic_table(spec, synth_seed);
    write_table(table, out_path, delimiter_char(cfg.get_string("data.delimiter", ",")));
    std::printf("rows %zu\n", table.rows.size());
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"multi-perspective process model discovery"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out_arg;

    CLI::App* train_cmd = app.add_subcommand("train", "run the discovery agent");
    train_cmd->add_option("--config", config_path, "key = value config file");
    train_cmd->add_option("--set", overrides, "override a config key (key=value)");
    train_cmd->add_option("--seed", seed, "training seed override");
    train_cmd->add_option("--out", out_arg, "run directory override");

    CommonTableArgs disc_args;
    double threshold = 0.5;
    std::string disc_out = "model.dot";
    CLI::App* discover_cmd = app.add_subcommand("discover", "discover one model from a table");
    add_table_options(discover_cmd, disc_args);
    discover_cmd->add_option("--threshold", threshold, "dependency threshold (default 0.5)");
    discover_cmd->add_option("--out", disc_out, "output DOT path (default model.dot)");

    CommonTableArgs check_args;
    std::string model_path;
    std::string check_out;
    CLI::App* check_cmd = app.add_subcommand("check", "replay a log against a DOT model");
    add_table_options(check_cmd, check_args);
    check_cmd->add_option("--model", model_path, "DOT model file")->required();
    check_cmd->add_option("--out", check_out, "per-trace fitness report path");

    std::string synth_config;
    std::vector<std::string> synth_overrides;
    std::optional<std::uint64_t> synth_seed;
    std::string synth_out = "synthetic.csv";
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic event table");
    synth_cmd->add_option("--config", synth_config, "key = value config file");
    synth_cmd->add_option("--set", synth_overrides, "override a config key (key=value)");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");
    synth_cmd->add_option("--out", synth_out, "output table path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(config_path, overrides, seed, out_arg);
        if (discover_cmd->parsed()) return cmd_discover(disc_args, threshold, disc_out);
        if (check_cmd->parsed()) return cmd_check(check_args, model_path, check_out);
        if (synth_cmd->parsed()) {
            return cmd_synth(synth_config, synth_overrides, synth_seed, synth_out);
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}

}  // namespace pmrl
