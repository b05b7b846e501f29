#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "rydcrit/config.hpp"
#include "rydcrit/errors.hpp"
#include "rydcrit/parallel.hpp"
#include "rydcrit/pipeline.hpp"

namespace {

int exit_code(rydcrit::ErrorKind kind) {
    using rydcrit::ErrorKind;
    switch (kind) {
        case ErrorKind::Config: return 2;
        case ErrorKind::Capacity: return 3;
        case ErrorKind::Convergence:
        case ErrorKind::Integration: return 4;
        case ErrorKind::BootstrapInstability: return 5;
        default: return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rydberg-array criticality experiments: gap scans, ramps, state preparation, snapshot analysis"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    int jobs = 0;
    bool plot_data = false;
    std::string snapshots;

    struct Command {
        const char* name;
        const char* help;
        rydcrit::RunReport (*run)(const rydcrit::ExperimentConfig&, const rydcrit::RunOptions&);
    };
    const Command commands[] = {
        {"gap-scan", "Lowest gap versus detuning", rydcrit::run_gap_scan},
        {"ramp", "Synthesize the detuning ramp", rydcrit::run_ramp},
        {"prepare", "Evolve along the ramp and draw snapshots", rydcrit::run_prepare},
        {"kz", "Sweep-rate scan of the susceptibility peak", rydcrit::run_kz},
        {"analyze", "Correlators, fits and bootstrap errors", rydcrit::run_analyze},
        {"pipeline", "All stages in sequence", rydcrit::run_pipeline},
    };
    const Command* selected = nullptr;
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_path, "Experiment config (YAML)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Override the config's master seed");
        sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
        sub->add_option("--jobs", jobs, "Worker thread cap (0 = all cores)")->check(CLI::NonNegativeNumber);
        sub->add_flag("--plot-data", plot_data, "Also write plot_data.csv");
        if (std::string(c.name) == "analyze")
            sub->add_option("--snapshots", snapshots, "Analyze an existing snapshot file")->check(CLI::ExistingFile);
        sub->callback([&selected, &c] { selected = &c; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        rydcrit::ExperimentConfig config = rydcrit::load_config(config_path);
        if (seed) config.seed = *seed;
        rydcrit::set_max_threads(jobs);
        rydcrit::RunOptions options;
        options.out_dir = out_dir;
        options.plot_data = plot_data;
        if (!snapshots.empty()) options.snapshots = snapshots;
        const rydcrit::RunReport report = selected->run(config, options);
        std::cout << report.command << ": " << report.files.size() << " files in " << out_dir << " (config "
                  << report.config_hash.substr(0, 12) << ")\n";
        return 0;
    } catch (const rydcrit::Error& e) {
        std::cerr << "error [" << rydcrit::to_string(e.kind()) << "]: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
