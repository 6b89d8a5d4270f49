#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "schrodlab/config.hpp"
#include "schrodlab/errors.hpp"
#include "schrodlab/runner.hpp"

namespace {

struct Flags {
    std::string config;
    std::string output_dir;
    int threads = 1;
    bool no_cache = false;
    std::uint64_t seed = 0;
};

void add_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--output-dir", f.output_dir, "Output directory (overrides output.dir)");
    cmd->add_option("--threads", f.threads, "Stages run concurrently")->check(CLI::PositiveNumber);
    cmd->add_flag("--no-cache", f.no_cache, "Recompute the eigenbasis and leave the cache untouched");
    cmd->add_option("--seed", f.seed, "Overrides the config seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical laboratory for H = -Laplacian + V: spectral inequalities, lifting, heat control"};
    app.require_subcommand(1);
    Flags flags;
    struct Command {
        const char* name;
        const char* help;
    };
    const Command commands[] = {
        {"eig", "Compute the eigenbasis and refresh the cache"},
        {"specineq", "Sensor mask, density check and worst-case ratio at the basis cutoff"},
        {"lift-check", "Sandwich and doubling checks on lifted fields"},
        {"observability", "Observability constant, interpolation and telescoping reports"},
        {"control", "Penalized HUM null control"},
        {"sweep", "Exponent sweep over lambda, mu or delta"},
        {"run", "Every stage the config asks for"},
    };
    for (const Command& c : commands) add_flags(app.add_subcommand(c.name, c.help), flags);

    CLI11_PARSE(app, argc, argv);
    const std::string name = app.get_subcommands().front()->get_name();
    try {
        const schrodlab::ExperimentConfig config = schrodlab::load_config(flags.config);
        std::vector<schrodlab::Stage> stages;
        if (name == "run")
            stages = schrodlab::configured_stages(config);
        else
            stages = {schrodlab::Stage::eig, schrodlab::stage_from_string(name)};
        schrodlab::RunOptions opts;
        if (!flags.output_dir.empty()) opts.output_dir = flags.output_dir;
        opts.threads = flags.threads;
        opts.use_cache = !flags.no_cache;
        if (app.get_subcommands().front()->count("--seed")) opts.seed = flags.seed;
        const schrodlab::ExperimentReport rep = schrodlab::run_experiment(config, stages, opts);
        std::cout << "wrote " << rep.files.size() << " files to " << rep.output_dir.string() << "\n";
        for (const auto& [stage, summary] : rep.report["stages"].items())
            std::cout << stage << ": " << summary.dump() << "\n";
    } catch (const schrodlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
