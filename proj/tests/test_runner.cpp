#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "schrodlab/config.hpp"
#include "schrodlab/errors.hpp"
#include "schrodlab/runner.hpp"

using namespace schrodlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const json kSmall = {
    {"name", "small"},
    {"seed", 3},
    {"domain", {{"dim", 1}, {"half_width", 8.0}, {"points_per_axis", 257}}},
    {"basis", {{"count", 20}}},
    {"sensor", {{"kind", "thick_periodic"}, {"delta", 0.5}}},
    {"sweep", {{"variable", "lambda"}, {"values", {3.0, 8.0, 15.0, 35.0}}}},
    {"lift", {{"rho", 0.1}, {"s_max", 0.4}, {"s_points", 33}, {"lambda", 15.0}, {"samples", 5},
              {"doubling_lambdas", {10.0, 20.0}}, {"calibration_samples", 3}, {"validation_samples", 3}}},
    {"heat", {{"T", 1.0}, {"samples", 10}, {"density", {{"m_max", 6}}}}},
    {"control", {{"initial", "random"}}},
};

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("schrodlab_runner_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Every emitted file except the cache and the run log, by name.
std::map<std::string, std::string> outputs(const fs::path& dir) {
    std::map<std::string, std::string> m;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "run_log.json") m[e.path().filename().string()] = slurp(e.path());
    return m;
}

ExperimentReport run_small(const fs::path& dir, int threads, std::optional<std::uint64_t> seed = {}, bool cache = true) {
    RunOptions o;
    o.output_dir = dir;
    o.threads = threads;
    o.seed = seed;
    o.use_cache = cache;
    o.cache_dir = dir.parent_path() / (dir.filename().string() + "_cache");
    const ExperimentConfig c = parse_config(kSmall);
    return run_experiment(c, configured_stages(c), o);
}

}  // namespace

TEST(Runner, ConfiguredStages) {
    EXPECT_EQ(configured_stages(parse_config(json::object())), (std::vector<Stage>{Stage::eig, Stage::specineq}));
    EXPECT_EQ(configured_stages(parse_config(kSmall)).size(), 6u);
    EXPECT_EQ(stage_from_string("lift-check"), Stage::lift);
    EXPECT_THROW(stage_from_string("nope"), std::invalid_argument);
}

TEST(Runner, EmitsEveryStageFile) {
    const fs::path dir = scratch("files");
    const ExperimentReport r = run_small(dir, 1);
    for (const char* f : {"eigenvalues.csv", "mask.rle", "density.csv", "specineq.csv", "sweep.csv", "fit.json",
                          "lift_sandwich.csv", "lift_doubling.csv", "interpolation.csv", "density_sequence.csv",
                          "telescoping.csv", "control_samples.csv", "control_residuals.csv", "control.json",
                          "report.json", "run_log.json"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(r.report["config"]["seed"], 3);
    EXPECT_TRUE(r.report["stages"].contains("control"));
    const json log = json::parse(slurp(dir / "run_log.json"));
    EXPECT_TRUE(log.contains("timings_seconds"));
}

TEST(Runner, RerunsAreByteIdenticalAcrossThreadCounts) {
    const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
    run_small(a, 1);
    run_small(b, 1);
    run_small(c, 3, {}, false);
    const auto oa = outputs(a);
    EXPECT_GE(oa.size(), 15u);
    EXPECT_EQ(oa, outputs(b));
    EXPECT_EQ(oa, outputs(c));
}

TEST(Runner, CacheHitOnSecondRun) {
    const fs::path dir = scratch("cache");
    run_small(dir, 1);
    const ExperimentReport second = run_small(dir, 1);
    EXPECT_EQ(second.run_log["cache"]["hit"], true);
    const ExperimentReport off = run_small(dir, 1, {}, false);
    EXPECT_EQ(off.run_log["cache"]["enabled"], false);
}

TEST(Runner, SeedOverrideChangesRandomOutputsOnly) {
    const fs::path a = scratch("seed_a"), b = scratch("seed_b");
    run_small(a, 1);
    const ExperimentReport r = run_small(b, 1, 99);
    EXPECT_EQ(r.report["config"]["seed"], 99);
    const auto oa = outputs(a), ob = outputs(b);
    EXPECT_EQ(oa.at("eigenvalues.csv"), ob.at("eigenvalues.csv"));
    EXPECT_NE(oa.at("lift_sandwich.csv"), ob.at("lift_sandwich.csv"));
    EXPECT_NE(oa.at("control_samples.csv"), ob.at("control_samples.csv"));
}

TEST(Runner, StageFailureNamesExperimentAndStage) {
    // Bypasses config validation so the failure surfaces inside the stage.
    ExperimentConfig c = parse_config(kSmall);
    c.sweep->values = {5.0, 10.0};
    RunOptions o;
    o.output_dir = scratch("fail");
    o.use_cache = false;
    try {
        run_experiment(c, {Stage::eig, Stage::sweep}, o);
        FAIL() << "expected a stage failure";
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("experiment 'small'"), std::string::npos) << msg;
        EXPECT_NE(msg.find("stage sweep"), std::string::npos) << msg;
    }
}
