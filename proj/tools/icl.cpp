// icl: verify | train | sweep --config <path> --out <dir> [--jobs N] [--override key=value ...]

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icl/commands.hpp"

namespace {

struct Args {
    std::string config_path;
    std::string out_dir = "out";
    std::size_t jobs = 1;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Args& args) {
    cmd->add_option("--config", args.config_path, "Experiment config file")->required();
    cmd->add_option("--out", args.out_dir, "Output root directory")->capture_default_str();
    cmd->add_option("--jobs", args.jobs, "Parallel runs or sweep cells")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--override", args.overrides, "Config setting key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonlinear-attention in-context learning laboratory"};
    app.require_subcommand(1);
    Args args;
    auto* verify = app.add_subcommand("verify", "Run the property checks for a config");
    auto* train = app.add_subcommand("train", "Train `training.runs` models and write per-run CSVs");
    auto* sweep = app.add_subcommand("sweep", "Train one model per sweep cell and write a long CSV");
    for (auto* cmd : {verify, train, sweep}) add_common(cmd, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? icl::kExitOk : icl::kExitUsage;
    }

    icl::ExperimentConfig config;
    try {
        config = icl::load_config(args.config_path);
        icl::apply_overrides(config, args.overrides);
    } catch (const icl::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return icl::kExitUsage;
    }

    icl::CommandOptions opt;
    opt.out_root = args.out_dir;
    opt.jobs = args.jobs;
    try {
        if (verify->parsed()) return icl::cmd_verify(config, opt);
        if (train->parsed()) return icl::cmd_train(config, opt);
        return icl::cmd_sweep(config, opt);
    } catch (const icl::ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return icl::kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return icl::kExitFailure;
    }
}
