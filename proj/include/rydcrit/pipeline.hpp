#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rydcrit/config.hpp"

namespace rydcrit {

inline constexpr const char* kToolVersion = "1.0.0";

struct RunOptions {
    std::filesystem::path out_dir = "out";
    /// Also write plot_data.csv (long format: dataset,series,x,y).
    bool plot_data = false;
    /// Analyze these snapshots instead of preparing new ones.
    std::optional<std::filesystem::path> snapshots;
};

struct RunReport {
    std::string command;
    std::string config_hash;
    /// Output files relative to the output directory, manifest excluded.
    std::vector<std::string> files;
    nlohmann::json summary;
};

/// Each command writes its artifacts and prerequisites into `out_dir` along
/// with manifest.json (config hash, seeds, file digests, wall time). Every
/// other file is a deterministic function of the config. Library errors are
/// re-raised with the failing stage named.
RunReport run_gap_scan(const ExperimentConfig& config, const RunOptions& options);
RunReport run_ramp(const ExperimentConfig& config, const RunOptions& options);
RunReport run_prepare(const ExperimentConfig& config, const RunOptions& options);
RunReport run_analyze(const ExperimentConfig& config, const RunOptions& options);
RunReport run_kz(const ExperimentConfig& config, const RunOptions& options);
/// Gap scan, ramp, preparation, analysis and (when enabled) the rate scan.
RunReport run_pipeline(const ExperimentConfig& config, const RunOptions& options);

/// Seeds of the independent random streams used by the pipeline.
struct PipelineSeeds {
    std::uint64_t trajectories, sampling, detection, holes, disorder, bootstrap;
    static PipelineSeeds from_master(std::uint64_t master);
    nlohmann::json to_json() const;
};

}  // namespace rydcrit
