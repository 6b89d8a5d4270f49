#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "schrodlab/fit.hpp"
#include "schrodlab/schrodinger.hpp"
#include "schrodlab/sensor.hpp"

namespace schrodlab {

/// G[k,l] = <phi_k, phi_l> over the sensor nodes, for the modes with
/// lambda_k <= cutoff.
struct GramMatrix {
    double cutoff = 0.0;
    Eigen::MatrixXd g;

    Eigen::Index modes() const noexcept { return g.rows(); }
};

/// Throws when the cutoff exceeds the basis cutoff, when no mode lies at or
/// below it, or when the mask belongs to another grid.
GramMatrix gram(const BasisPtr& basis, const Mask& mask, double cutoff);
GramMatrix gram(const BasisPtr& basis, const SensorSet& sensor, double cutoff);

/// Eigenvalues of G below this count as zero.
inline constexpr double gram_jitter = 1e-12;

struct WorstCase {
    /// 1 / sqrt(lambda_min(G)); +infinity when lambda_min <= gram_jitter.
    double ratio = 0.0;
    double lambda_min = 0.0;
    /// Unit coefficient vector attaining the ratio.
    Eigen::VectorXd minimizer;
    bool finite() const noexcept { return std::isfinite(ratio); }
};

/// Best constant C with ||phi|| <= C ||phi||_Omega over the span of the Gram
/// matrix's modes.
WorstCase worst_case(const GramMatrix& gram);
WorstCase worst_case(const Eigen::MatrixXd& g);
double worst_case_ratio(const GramMatrix& gram);

struct SweepSample {
    double var = 0.0;  // lambda, mu or delta
    Eigen::Index n_modes = 0;
    double lambda_min_gram = 0.0;
    double ratio = 0.0;
    /// Left out of the fit: infinite ratio, or ratio <= 1 where the double
    /// log is undefined.
    bool excluded = false;
};

struct ExponentFit {
    std::vector<SweepSample> samples;
    LinearFit fit;
    /// sigma/beta1 + beta2/(2 beta1) for the lambda sweep.
    std::optional<double> theta_star;
    /// sigma/beta1 + 1/2, reported when V = |x|^beta1.
    std::optional<double> theta_star_sharp;

    double theta_hat() const noexcept { return fit.slope; }
};

/// Fit of ln ln(ratio) against ln lambda. Needs at least 4 lambdas, all
/// positive and within the basis cutoff, spanning at least a factor 10, and
/// at least 4 finite samples with ratio > 1.
ExponentFit lambda_sweep(const BasisPtr& basis, const SensorSet& sensor, const std::vector<double>& lambdas,
                         const Potential& potential);

/// Fit of ln(ratio) against sqrt(mu). The sensor must be a thick set and the
/// mus positive.
ExponentFit mu_sweep(const BasisPtr& basis, const SensorSet& sensor, const std::vector<double>& mus);

struct DeltaSweep {
    std::vector<SweepSample> samples;  // ascending delta
    /// ln(ratio) against ln(1/delta).
    LinearFit fit;
    bool monotone = true;  // ratio nonincreasing in delta
};

/// Builds the sensor family for each delta (same kind, sigma, seed and
/// pattern), checks that it is nested, and fits ln(ratio) against ln(1/delta).
DeltaSweep delta_sweep(const BasisPtr& basis, const CubeLattice& lattice, double lambda,
                       const std::vector<double>& deltas, SensorKind kind, double sigma, std::uint64_t seed,
                       ThickPattern pattern = ThickPattern::left_slab);

/// Sensor from (kind, delta, sigma, seed, pattern).
SensorSet make_sensor(const Grid& grid, const CubeLattice& lattice, SensorKind kind, double delta, double sigma,
                      std::uint64_t seed, ThickPattern pattern);

}  // namespace schrodlab
