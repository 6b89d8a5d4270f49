#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "schrodlab/domain.hpp"
#include "schrodlab/heatctrl.hpp"
#include "schrodlab/schrodinger.hpp"
#include "schrodlab/sensor.hpp"

namespace schrodlab {

struct DomainConfig {
    int dim = 1;
    double half_width = 12.0;
    int points_per_axis = 1025;
};

struct BasisConfig {
    /// Exactly one of lambda_max and count is used; lambda_max wins when
    /// both are absent (default 60).
    std::optional<double> lambda_max;
    std::optional<int> count;
    EigenMethod method = EigenMethod::automatic;

    EigenRequest request() const;
};

struct SensorConfig {
    SensorKind kind = SensorKind::thick_periodic;
    double delta = 0.5;
    double sigma = 0.0;
    double L = 1.0;
    /// Falls back to the experiment seed.
    std::optional<std::uint64_t> seed;
    ThickPattern pattern = ThickPattern::left_slab;
};

enum class SweepVariable { lambda, mu, delta };

struct SweepConfig {
    SweepVariable variable = SweepVariable::lambda;
    std::vector<double> values;
    /// Spectral level for a delta sweep; defaults to the basis cutoff.
    std::optional<double> lambda;
};

struct LiftConfig {
    double rho = 0.1;
    double s_max = 0.4;
    int s_points = 81;
    /// Level of the random elements checked by the sandwich bounds.
    double lambda = 30.0;
    int samples = 50;
    /// Levels for the doubling calibration; empty skips it.
    std::vector<double> doubling_lambdas;
    int calibration_samples = 10;
    int validation_samples = 10;
};

struct DensityConfig {
    double k = 0.0;
    double k1 = 1.0;
    double alpha = 2.0;
    int m_max = 8;
    /// Telescoping prefactor scale.
    double a = 0.05;
};

struct HeatConfig {
    double T = 1.0;
    std::vector<Interval> J{{0.0, 1.0}};
    int nodes_per_interval = 32;
    double tau = 0.5;
    /// Interpolation time; defaults to T / 2.
    std::optional<double> t;
    /// Defaults to the potential's beta1.
    std::optional<double> beta1;
    /// Mode cutoff; defaults to the basis cutoff.
    std::optional<double> cutoff;
    int samples = 100;
    std::optional<DensityConfig> density;

    TimeSet time_set() const;
};

enum class InitialDatum { random, ground };

struct ControlConfig {
    double epsilon = 1e-8;
    int max_iter = 500;
    double tol = 1e-12;
    InitialDatum initial = InitialDatum::random;
};

struct OutputConfig {
    std::filesystem::path dir = "out";
    std::vector<std::string> formats{"csv", "json"};

    bool csv() const;
    bool json() const;
};

/// One experiment. Optional sections are the stages `run` executes.
struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 1;
    DomainConfig domain;
    Potential potential = Potential::polynomial_radial(2.0);
    BasisConfig basis;
    SensorConfig sensor;
    std::optional<SweepConfig> sweep;
    std::optional<LiftConfig> lift;
    std::optional<HeatConfig> heat;
    std::optional<ControlConfig> control;
    OutputConfig output;

    std::uint64_t sensor_seed() const { return sensor.seed.value_or(seed); }
};

/// Validates every field before returning. Throws ConfigError naming the
/// dotted field path, e.g. "sensor.sigma", for a wrong type, an
/// out-of-range value or an unknown field.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every field, defaults filled in. parse_config(to_json(c)) == c.
nlohmann::json to_json(const ExperimentConfig& config);

std::string to_string(SweepVariable v);
std::string to_string(InitialDatum v);
std::string to_string(EigenMethod m);

}  // namespace schrodlab
