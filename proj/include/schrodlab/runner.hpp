#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "schrodlab/config.hpp"

namespace schrodlab {

enum class Stage { eig, specineq, sweep, lift, observability, control };

std::string to_string(Stage stage);
/// Accepts the stage names and the CLI spelling "lift-check".
Stage stage_from_string(const std::string& name);

/// eig and specineq always; sweep, lift, observability and control when the
/// config has the matching section (observability for `heat`).
std::vector<Stage> configured_stages(const ExperimentConfig& config);

struct RunOptions {
    /// Overrides output.dir.
    std::optional<std::filesystem::path> output_dir;
    int threads = 1;
    bool use_cache = true;
    /// Overrides the experiment seed.
    std::optional<std::uint64_t> seed;
    /// Defaults to SCHRODLAB_CACHE_DIR, then <output dir>/cache.
    std::optional<std::filesystem::path> cache_dir;
};

struct ExperimentReport {
    /// Written as report.json: config echo, per-stage summaries and fits,
    /// and the list of emitted files. Identical for identical (config, seed).
    nlohmann::json report;
    /// Written as run_log.json: timings, cache use, thread count.
    nlohmann::json run_log;
    std::filesystem::path output_dir;
    std::vector<std::string> files;
};

/// Builds the eigenbasis (through the cache unless disabled), then runs the
/// requested stages, in parallel when threads > 1. Files are written after
/// all stages finish. Stage failures are rethrown as std::runtime_error
/// naming the experiment and stage; ConfigError passes through.
ExperimentReport run_experiment(const ExperimentConfig& config, const std::vector<Stage>& stages,
                                const RunOptions& options = {});

}  // namespace schrodlab
