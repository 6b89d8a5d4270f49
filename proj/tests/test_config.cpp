#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "schrodlab/config.hpp"
#include "schrodlab/errors.hpp"

using namespace schrodlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Parses doc and returns the ConfigError message, or "" when it parsed.
std::string error_of(const json& doc) {
    try {
        parse_config(doc);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

void expect_error(const json& doc, const std::string& path) {
    const std::string msg = error_of(doc);
    EXPECT_EQ(msg.rfind(path + ":", 0), 0u) << "expected error at " << path << ", got '" << msg << "' for " << doc.dump();
}

json load_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

// Walks `value` alongside the schema node and reports keys the schema does
// not declare.
void check_against_schema(const json& value, const json& schema, const std::string& path) {
    if (!value.is_object()) return;
    ASSERT_TRUE(schema.contains("properties")) << path;
    for (const auto& [k, v] : value.items()) {
        const std::string here = path.empty() ? k : path + "." + k;
        ASSERT_TRUE(schema["properties"].contains(k)) << "schema lacks " << here;
        check_against_schema(v, schema["properties"][k], here);
    }
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
    const ExperimentConfig c = parse_config(json::object());
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.domain.dim, 1);
    EXPECT_EQ(c.domain.points_per_axis, 1025);
    EXPECT_DOUBLE_EQ(c.domain.half_width, 12.0);
    EXPECT_EQ(c.potential.kind, PotentialKind::polynomial_radial);
    EXPECT_TRUE(c.basis.request() == EigenRequest::below(60.0));
    EXPECT_EQ(c.sensor.kind, SensorKind::thick_periodic);
    EXPECT_EQ(c.sensor_seed(), 1u);
    EXPECT_FALSE(c.sweep || c.lift || c.heat || c.control);
    EXPECT_TRUE(c.output.csv() && c.output.json());
}

TEST(Config, SensorSeedFallsBackToExperimentSeed) {
    EXPECT_EQ(parse_config({{"seed", 9}}).sensor_seed(), 9u);
    EXPECT_EQ(parse_config({{"seed", 9}, {"sensor", {{"seed", 4}}}}).sensor_seed(), 4u);
}

TEST(Config, ErrorsNameTheField) {
    expect_error({{"sensor", {{"sigma", 1.2}}}}, "sensor.sigma");
    expect_error({{"sensor", {{"delta", 0.0}}}}, "sensor.delta");
    expect_error({{"sensor", {{"kind", "hexagonal"}}}}, "sensor.kind");
    expect_error({{"sensor", {{"colour", 1}}}}, "sensor.colour");
    expect_error({{"domain", {{"dim", 3}}}}, "domain.dim");
    expect_error({{"domain", {{"points_per_axis", "many"}}}}, "domain.points_per_axis");
    expect_error({{"domain", {{"points_per_axis", 2.5}}}}, "domain.points_per_axis");
    expect_error({{"seed", -1}}, "seed");
    expect_error({{"extra", true}}, "extra");
    expect_error({{"basis", {{"count", 10}, {"lambda_max", 5.0}}}}, "basis");
    expect_error({{"potential", {{"beta1", -2.0}}}}, "potential.beta1");
    expect_error({{"potential", {{"params", {{"bogus", 1}}}}}}, "potential.params.bogus");
    expect_error({{"sweep", {{"values", json::array()}}}}, "sweep.values");
    expect_error({{"sweep", {{"values", {1.0, -2.0}}}}}, "sweep.values[1]");
    expect_error({{"sweep", {{"values", {1.0, 2.0, 4.0, 8.0}}}}}, "sweep.values");
    expect_error({{"sweep", {{"variable", "mu"}, {"values", {1.0, 20.0}}}}}, "sweep.values");
    expect_error({{"lift", {{"s_points", 80}}}}, "lift.s_points");
    expect_error({{"lift", {{"s_points", 21}}}}, "lift.s_points");
    expect_error({{"lift", {{"s_points", 41}, {"doubling_lambdas", {10.0}}}}}, "lift.s_points");
    expect_error({{"heat", {{"tau", 1.0}}}}, "heat.tau");
    expect_error({{"heat", {{"density", {{"alpha", 1.0}}}}}}, "heat.density.alpha");
    expect_error({{"control", {{"initial", "zero"}}}}, "control.initial");
    expect_error({{"output", {{"formats", {"xml"}}}}}, "output.formats[0]");
}

TEST(Config, TimeIntervalsAreValidated) {
    expect_error({{"heat", {{"J_intervals", {{0.5, 0.2}}}}}}, "heat.J_intervals");
    expect_error({{"heat", {{"T", 1.0}, {"J_intervals", {{0.0, 2.0}}}}}}, "heat.J_intervals");
    expect_error({{"heat", {{"J_intervals", {{0.0, 0.5}, {0.4, 0.8}}}}}}, "heat.J_intervals");
    expect_error({{"heat", {{"J_intervals", {{0.0}}}}}}, "heat.J_intervals[0]");
    const ExperimentConfig c = parse_config({{"heat", {{"T", 2.0}, {"J_intervals", {{0.0, 0.5}, {1.0, 1.5}}}}}});
    EXPECT_DOUBLE_EQ(c.heat->time_set().measure(), 1.0);
}

TEST(Config, CrossFieldChecks) {
    expect_error({{"domain", {{"half_width", 8.0}, {"points_per_axis", 257}}}, {"sensor", {{"L", 0.01}}}}, "sensor.L");
    expect_error({{"potential", {{"kind", "tabulated"}, {"params", {{"table", {1.0, 2.0}}}}}}}, "potential.params.table");
    expect_error({{"sweep", {{"variable", "mu"}, {"values", {4.0, 8.0, 16.0, 32.0}}}}, {"sensor", {{"kind", "density_random"}, {"sigma", 0.3}}}},
                 "sweep.variable");
}

TEST(Config, RoundTripThroughJson) {
    const json rich = {
        {"name", "rt"},
        {"seed", 42},
        {"domain", {{"dim", 2}, {"half_width", 3.0}, {"points_per_axis", 33}}},
        {"potential", {{"kind", "polynomial_aniso"}, {"beta1", 2.0}, {"beta2", 4.0}, {"params", {{"coefficients", {1.0, 0.5}}}}}},
        {"basis", {{"count", 12}, {"method", "dense"}}},
        {"sensor", {{"kind", "density_random"}, {"delta", 0.3}, {"sigma", 0.25}, {"seed", 5}}},
        {"sweep", {{"variable", "delta"}, {"values", {0.1, 0.2}}, {"lambda", 20.0}}},
        {"lift", {{"rho", 0.05}, {"s_max", 0.4}, {"doubling_lambdas", {10.0, 20.0}}}},
        {"heat", {{"T", 2.0}, {"J_intervals", {{0.25, 0.75}, {1.0, 2.0}}}, {"t", 0.5}, {"density", {{"k1", 1.5}}}}},
        {"control", {{"epsilon", 1e-6}, {"initial", "ground"}}},
        {"output", {{"dir", "o"}, {"formats", {"csv"}}}},
    };
    for (const json& doc : {json::object(), rich}) {
        const json once = to_json(parse_config(doc));
        const json twice = to_json(parse_config(once));
        EXPECT_EQ(once.dump(), twice.dump());
    }
}

TEST(Config, SchemaDeclaresEveryEmittedField) {
    const json schema = load_json(fs::path(SCHRODLAB_SOURCE_DIR) / "docs/config.schema.json");
    for (const auto& entry : fs::directory_iterator(fs::path(SCHRODLAB_SOURCE_DIR) / "configs")) {
        SCOPED_TRACE(entry.path().string());
        const json raw = load_json(entry.path());
        check_against_schema(raw, schema, "");
        check_against_schema(to_json(parse_config(raw)), schema, "");
    }
}

TEST(Config, LoadConfigReportsIoAndSyntaxErrors) {
    const fs::path dir = fs::temp_directory_path() / "schrodlab_config";
    fs::create_directories(dir);
    EXPECT_THROW(load_config(dir / "absent.json"), ConfigError);
    std::ofstream(dir / "broken.json") << "{\"seed\": ";
    EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
}
