#include "cli/commands.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace degensemi;

int main(int argc, char** argv) {
    CLI::App app{"Resolvent and semigroup verification for degenerate elliptic operators"};
    app.require_subcommand(1);

    std::string config_path, out_dir, seed_text, suite = "all";
    int jobs = 1;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "INI configuration file")->required();
        sub->add_option("--out", out_dir, "output directory (DEGENSEMI_OUT overrides)");
        sub->add_option("--seed", seed_text, "hexadecimal seed, e.g. F001");
        sub->add_option("--jobs", jobs, "worker threads")->check(CLI::Range(1, 1024));
    };
    auto* oracle = app.add_subcommand("oracle", "half-line oracle sweep");
    auto* verify = app.add_subcommand("verify", "estimate sweeps");
    auto* evolve = app.add_subcommand("evolve", "time-evolution snapshots");
    for (auto* s : {oracle, verify, evolve}) common(s);
    verify->add_option("suite", suite, "oned | tensor | perturb | freeze | corners | all")
        ->check(CLI::IsMember({"oned", "tensor", "perturb", "freeze", "corners", "all"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::kPass : cli::kUsage;
    }

    try {
        cli::Context ctx;
        ctx.config = cli::load_config(config_path);
        ctx.seed = seed_text.empty() ? ctx.config.sweep.seed : cli::parse_seed(seed_text);
        ctx.jobs = jobs;
        std::string dir = ctx.config.output.dir;
        if (!out_dir.empty()) dir = out_dir;
        if (const char* env = std::getenv("DEGENSEMI_OUT"); env && *env) dir = env;
        ctx.out = dir;
        std::filesystem::create_directories(ctx.out);

        if (*oracle) return cli::cmd_oracle(ctx);
        if (*verify) return cli::cmd_verify(ctx, suite);
        return cli::cmd_evolve(ctx);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return cli::kUsage;
    } catch (const PreconditionError& e) {
        std::cerr << "precondition: " << e.what() << "\n";
        return cli::kUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << " (diagnostic " << e.diagnostic() << ")\n";
        return cli::kNumericalFail;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "output error: " << e.what() << "\n";
        return cli::kUsage;
    }
}
