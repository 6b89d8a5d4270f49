#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "schrodlab/fit.hpp"
#include "schrodlab/schrodinger.hpp"
#include "schrodlab/sensor.hpp"

namespace schrodlab {

struct Interval {
    double a = 0.0;
    double b = 0.0;

    double length() const noexcept { return b - a; }
};

/// Measurable time set J in [0, T] as sorted disjoint intervals.
struct TimeSet {
    double T = 1.0;
    std::vector<Interval> intervals;
    /// Sample nodes per interval for the emitted control (endpoints included).
    int nodes_per_interval = 32;

    /// Throws unless T > 0, intervals are nonempty, sorted, disjoint, inside
    /// [0, T], and nodes_per_interval >= 2.
    static TimeSet make(double T, std::vector<Interval> intervals, int nodes_per_interval = 32);

    double measure() const noexcept;
    /// |J intersect (lo, hi)|.
    double measure_in(double lo, double hi) const noexcept;
    /// J intersect (lo, hi) as intervals.
    std::vector<Interval> clip(double lo, double hi) const;
    /// Uniform nodes on every interval, in time order.
    std::vector<double> nodes() const;
};

/// int_a^b e^{-mu t} dt, stable for mu near 0 and for large |mu|.
double exp_integral(double mu, double a, double b);
/// ln of the same integral; finite whenever b > a.
double log_exp_integral(double mu, double a, double b);

/// Heat evolution restricted to the eigenbasis modes with lambda <= cutoff,
/// observed through a sensor mask.
struct HeatModel {
    BasisPtr basis;
    SensorSet sensor;
    Eigen::Index modes = 0;
    Eigen::VectorXd lambdas;
    /// Gram matrix of the modes over the sensor.
    Eigen::MatrixXd gram;

    /// ||u||^2_{L^2(Omega)} for coefficients c.
    double observed_norm2(const Eigen::VectorXd& c) const { return c.dot(gram * c); }
    /// Coefficients of a spectral element on the model modes; throws when the
    /// element carries modes above the cutoff.
    Eigen::VectorXd coefficients(const SpectralElement& u) const;
    SpectralElement element(const Eigen::VectorXd& c) const;
};

HeatModel heat_model(const BasisPtr& basis, const SensorSet& sensor, double cutoff);

/// alpha_k e^{-lambda_k t}.
SpectralElement evolve(const SpectralElement& u, double t);
/// Largest grid value of V^-, for the energy estimate ||u(t)|| <= e^{t sup V^-} ||u0||.
double negative_part_sup(const Field& potential_values);

struct DensitySequence {
    double k = 0.0;
    double k1 = 1.0;
    double alpha = 2.0;
    /// k_1, ..., k_{m_max + 1}; k_{m+1} = k + alpha^{-m} (k1 - k).
    std::vector<double> values;

    double km(int m) const { return values.at(static_cast<std::size_t>(m - 1)); }
};

/// Throws unless k < k1, alpha > 1 and m_max >= 1.
DensitySequence density_sequence(double k, double k1, double alpha, int m_max);

struct DensityCheck {
    int m = 0;
    double lo = 0.0;  // k_{m+1}
    double hi = 0.0;  // k_m
    double measure = 0.0;
    double required = 0.0;  // (k_m - k_{m+1}) / 3
    bool ok = false;
};

/// |J intersect (k_{m+1}, k_m)| >= (k_m - k_{m+1}) / 3 for m = 1..m_max.
/// Throws when k1 > T.
std::vector<DensityCheck> validate_density(const DensitySequence& seq, const TimeSet& J);

/// sigma1 = sigma/beta1 + 1/2 and sigma2 = 1/2 - sigma/beta1; throws unless
/// sigma2 > 0. Thick sensors use sigma = 0.
struct DecayExponents {
    double sigma1 = 0.5;
    double sigma2 = 0.5;
};
DecayExponents decay_exponents(const SensorSet& sensor, double beta1);

/// ||u(t)|| <= 2 K ||u(t)||_Omega^{1-tau} ||u(0)||^tau with the smallest K
/// valid for every sampled initial datum.
struct InterpolationReport {
    double t = 0.0;
    double tau = 0.0;
    DecayExponents exponents;
    std::vector<double> k_samples;
    double k_min = 0.0;  // max of k_samples
    /// (tau t)^{-sigma1/sigma2}.
    double trend = 0.0;
};

InterpolationReport interpolation_check(const HeatModel& model, const std::vector<SpectralElement>& initial, double t,
                                        double tau, double beta1);
/// Random unit initial data on the model modes.
InterpolationReport interpolation_check(const HeatModel& model, int samples, std::uint64_t seed, double t, double tau,
                                        double beta1);

/// Best constant in ||u(T)||^2 <= C int_J ||u(t)||^2_Omega dt over the model
/// span, as the largest generalized eigenvalue of (diag e^{-2 lambda T}, B)
/// with B_kl = G_kl int_J e^{-(lambda_k + lambda_l) t} dt. The pair is
/// diagonally rescaled in log space first, so large lambda T neither
/// overflows nor underflows.
struct Observability {
    /// +infinity when the rescaled B has an eigenvalue <= 1e-12.
    double c_obs = 0.0;
    /// Initial coefficients attaining c_obs (unit norm); empty when infinite.
    Eigen::VectorXd maximizer;
    bool finite() const noexcept;
};

Observability observability_constant(const HeatModel& model, const TimeSet& J);

/// ||u(T)||^2 / int_J ||u(t)||^2_Omega for given initial coefficients, from
/// the same closed-form time integrals.
double observability_ratio(const HeatModel& model, const TimeSet& J, const Eigen::VectorXd& c);

/// C_obs against delta for one sensor family; fit of ln ln C_obs against
/// ln ln(1/delta) (samples with C_obs <= 1, infinite C_obs or delta >= 1 are
/// excluded from the fit).
struct ObservabilitySample {
    double delta = 0.0;
    double sigma = 0.0;
    double c_obs = 0.0;
    bool excluded = false;
};

struct ObservabilitySweep {
    std::vector<ObservabilitySample> samples;
    std::optional<LinearFit> fit;  // absent with fewer than 2 usable samples
    double predicted_slope = 0.0;  // 1 / sigma2
};

ObservabilitySweep observability_sweep(const BasisPtr& basis, const CubeLattice& lattice, SensorKind kind,
                                       double sigma, std::uint64_t seed, ThickPattern pattern,
                                       const std::vector<double>& deltas, double cutoff, const TimeSet& J,
                                       double beta1);

struct ControlOptions {
    double epsilon = 1e-8;
    int max_iter = 500;
    /// CG stops when ||r|| <= tol ||b||.
    double tol = 1e-12;
};

/// Penalized HUM: (Lambda + eps I) z = -e^{-TH} u0 by conjugate gradients,
/// Lambda_kl = G_kl int_J e^{-(lambda_k + lambda_l)(T - t)} dt, and
/// f(t) = 1_Omega e^{-(T - t)H} z on J.
struct ControlResult {
    Eigen::VectorXd z;
    std::vector<double> times;          // sample nodes in J
    std::vector<std::size_t> support;   // grid nodes of Omega
    Eigen::MatrixXd samples;            // f at support x times
    double epsilon = 0.0;
    int iterations = 0;
    std::vector<double> residual_history;  // ||r_i|| / ||b||

    double u0_norm = 0.0;
    double free_norm = 0.0;          // ||e^{-TH} u0||
    double cost = 0.0;               // ||f||_{L^2(Omega x J)} = sqrt(z' Lambda z)
    double model_residual = 0.0;     // eps ||z|| / ||u0||
    /// ||u(T)|| / ||u0|| from Gauss-Kronrod quadrature of the modal Duhamel
    /// integrals, independent of the closed-form Gramian.
    double terminal_residual = 0.0;

    /// cost <= sqrt(C_obs(T - J)) ||u0||, where C_obs(T - J) is the
    /// observability constant of the time-reversed set.
    double cost_upper = 0.0;
    /// cost >= (||e^{-TH}u0|| - eps ||z||) / sqrt(lambda_max(Lambda)).
    double cost_lower = 0.0;
    bool bounds_hold() const noexcept;
};

/// Throws ConvergenceError (carrying the residual history) when CG misses
/// tol within max_iter.
ControlResult hum_control(const HeatModel& model, const TimeSet& J, const SpectralElement& u0,
                          const ControlOptions& options = {});

/// f at one sample time as a full grid field (zero off the support).
Field control_field(const ControlResult& result, const Grid& grid, std::size_t time_index);

/// Telescoping step: with P_m = exp(-a (k_m - k_{m+1})^{-sigma1/sigma2} (ln 1/delta)^{1/sigma2}),
///   D_m = P_m ||u(k_m)|| - P_{m+1} ||u(k_{m+1})|| <= C int_{J cap (k_{m+1}, k_m)} ||u(t)||_Omega dt.
struct TelescopingTerm {
    int m = 0;
    double km = 0.0;
    double km1 = 0.0;
    double prefactor = 0.0;  // P_m
    double norm = 0.0;       // ||u(k_m)||
    double difference = 0.0; // D_m
    double integral = 0.0;
    /// C * integral - D_m with the fitted C.
    double margin = 0.0;
};

struct TelescopingTrace {
    std::vector<TelescopingTerm> terms;
    DecayExponents exponents;
    /// Smallest C with D_m <= C I_m for every m (0 when every D_m <= 0).
    double c_fit = 0.0;
    /// P_1 ||u(k_1)|| - P_{M+1} ||u(k_{M+1})|| against c_fit * sum I_m.
    double summed_lhs = 0.0;
    double summed_rhs = 0.0;
    bool holds = false;
};

/// Needs 0 < delta < 1 (the sensor's delta), a > 0 and a valid density
/// sequence for J. The time integrals use adaptive Gauss-Kronrod.
TelescopingTrace telescoping_trace(const HeatModel& model, const TimeSet& J, const SpectralElement& u0,
                                   const DensitySequence& seq, double a, double beta1);

}  // namespace schrodlab
