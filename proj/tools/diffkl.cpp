#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "diffkl/config.hpp"
#include "diffkl/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exponential-integrator diffusion sampler: KL verification suites and sweeps"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string dump;
    unsigned long long seed_override = 0;
    std::size_t workers = 0;

    for (const char* name : {"verify-identities", "verify-localization", "kl-exact", "girsanov", "sweep"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "experiment config file")->required();
        sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
        sub->add_option("--seed-override", seed_override, "replace the config seed");
        sub->add_option("--dump-samples", dump, "dump sampler output")->check(CLI::IsMember({"none", "csv", "raw"}));
        sub->add_option("--workers", workers, "worker threads (results do not depend on it)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    diffkl::ExperimentConfig cfg;
    try {
        cfg = diffkl::load_config(config_path);
        if (cfg.command != *diffkl::parse_command(command)) {
            throw diffkl::ConfigError("command", 0,
                                      "config is for '" + std::string(diffkl::to_string(cfg.command)) +
                                          "' but subcommand '" + command + "' was given");
        }
        auto* sub = app.get_subcommands().front();
        if (sub->count("--seed-override")) cfg.seed = seed_override;
        if (sub->count("--out")) cfg.output_dir = out_dir;
        if (sub->count("--workers")) {
            if (workers < 1) throw diffkl::ConfigError("--workers", 0, "must be at least 1");
            cfg.workers = workers;
        }
        if (sub->count("--dump-samples")) {
            cfg.dump = dump == "csv" ? diffkl::SampleDump::csv
                     : dump == "raw" ? diffkl::SampleDump::raw
                                     : diffkl::SampleDump::none;
        }
    } catch (const diffkl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        const auto record = diffkl::run_experiment(cfg);
        for (const auto& r : record.results) {
            if (!r.passed) std::cerr << "check failed: " << r.quantity << " = " << r.value << '\n';
        }
        std::cout << command << ": " << record.results.size() << " results written to " << cfg.output_dir << " ("
                  << record.wall_seconds << " s)\n";
        return record.passed ? 0 : kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << '\n';
        return kExitNumerical;
    }
}
