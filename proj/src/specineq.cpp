#include "schrodlab/specineq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace schrodlab {

using Eigen::Index;

GramMatrix gram(const BasisPtr& basis, const Mask& mask, double cutoff) {
    if (mask.size() != basis->grid().size()) throw std::invalid_argument("sensor mask belongs to another grid");
    if (cutoff > basis->cutoff()) {
        throw std::invalid_argument("gram cutoff " + std::to_string(cutoff) + " exceeds basis cutoff " +
                                    std::to_string(basis->cutoff()));
    }
    const Index k = basis->count_below(cutoff);
    if (k == 0) throw std::invalid_argument("no eigenvalues at or below " + std::to_string(cutoff));

    std::vector<Index> rows;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) rows.push_back(static_cast<Index>(i));
    }
    Eigen::MatrixXd phi(static_cast<Index>(rows.size()), k);
    for (Index r = 0; r < phi.rows(); ++r) phi.row(r) = basis->eigenvectors().row(rows[static_cast<std::size_t>(r)]).head(k);

    GramMatrix out;
    out.cutoff = cutoff;
    out.g = Eigen::MatrixXd::Zero(k, k);
    out.g.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose(), basis->grid().cell_volume());
    out.g = out.g.selfadjointView<Eigen::Lower>();
    return out;
}

GramMatrix gram(const BasisPtr& basis, const SensorSet& sensor, double cutoff) {
    if (!(sensor.grid == basis->grid())) throw std::invalid_argument("sensor belongs to another grid");
    return gram(basis, sensor.mask, cutoff);
}

WorstCase worst_case(const Eigen::MatrixXd& g) {
    if (g.rows() == 0 || g.rows() != g.cols()) throw std::invalid_argument("gram matrix must be square and nonempty");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    WorstCase w;
    w.lambda_min = es.eigenvalues()[0];
    w.minimizer = es.eigenvectors().col(0);
    w.ratio = w.lambda_min > gram_jitter ? 1.0 / std::sqrt(w.lambda_min) : std::numeric_limits<double>::infinity();
    return w;
}

WorstCase worst_case(const GramMatrix& gram) {
    return worst_case(gram.g);
}

double worst_case_ratio(const GramMatrix& gram) {
    return worst_case(gram).ratio;
}

namespace {

// Samples for each level from one Gram matrix at the largest level; the
// modes are sorted, so lower levels are leading principal blocks.
std::vector<SweepSample> sweep(const BasisPtr& basis, const Mask& mask, const std::vector<double>& levels) {
    const double top = *std::max_element(levels.begin(), levels.end());
    const GramMatrix full = gram(basis, mask, top);
    std::vector<SweepSample> out;
    for (double level : levels) {
        SweepSample s;
        s.var = level;
        s.n_modes = basis->count_below(level);
        if (s.n_modes == 0) throw std::invalid_argument("no eigenvalues at or below " + std::to_string(level));
        const WorstCase w = worst_case(Eigen::MatrixXd(full.g.topLeftCorner(s.n_modes, s.n_modes)));
        s.lambda_min_gram = w.lambda_min;
        s.ratio = w.ratio;
        out.push_back(s);
    }
    return out;
}

LinearFit fit_samples(std::vector<SweepSample>& samples, double (*fx)(double), double (*fy)(double)) {
    std::vector<double> x, y;
    for (auto& s : samples) {
        s.excluded = !std::isfinite(s.ratio) || !std::isfinite(fy(s.ratio));
        if (s.excluded) continue;
        x.push_back(fx(s.var));
        y.push_back(fy(s.ratio));
    }
    if (x.size() < 4) {
        throw std::invalid_argument("only " + std::to_string(x.size()) +
                                    " usable samples (need 4); the sensor may be too sparse for these levels");
    }
    return linear_fit(x, y);
}

double loglog(double r) {
    return r > 1.0 ? std::log(std::log(r)) : std::numeric_limits<double>::quiet_NaN();
}
double log_(double r) {
    return std::log(r);
}
double sqrt_(double v) {
    return std::sqrt(v);
}

}  // namespace

ExponentFit lambda_sweep(const BasisPtr& basis, const SensorSet& sensor, const std::vector<double>& lambdas,
                         const Potential& potential) {
    if (lambdas.size() < 4) throw std::invalid_argument("lambda sweep needs at least 4 values");
    const auto [lo, hi] = std::minmax_element(lambdas.begin(), lambdas.end());
    if (!(*lo > 0.0)) throw std::invalid_argument("lambda values must be positive");
    if (*hi < 10.0 * *lo) throw std::invalid_argument("lambda values must span at least a decade");
    if (!(sensor.grid == basis->grid())) throw std::invalid_argument("sensor belongs to another grid");

    ExponentFit out;
    out.samples = sweep(basis, sensor.mask, lambdas);
    out.fit = fit_samples(out.samples, [](double l) { return std::log(l); }, loglog);
    const double sigma = sensor.kind == SensorKind::thick_periodic ? 0.0 : sensor.sigma;
    if (potential.kind != PotentialKind::bounded_well && potential.kind != PotentialKind::tabulated) {
        out.theta_star = sigma / potential.beta1 + potential.beta2 / (2.0 * potential.beta1);
        if (potential.kind == PotentialKind::polynomial_radial) out.theta_star_sharp = sigma / potential.beta1 + 0.5;
    }
    return out;
}

ExponentFit mu_sweep(const BasisPtr& basis, const SensorSet& sensor, const std::vector<double>& mus) {
    if (sensor.kind != SensorKind::thick_periodic) throw std::invalid_argument("mu sweep requires a thick sensor set");
    if (mus.size() < 4) throw std::invalid_argument("mu sweep needs at least 4 values");
    for (double mu : mus) {
        if (!(mu > 0.0)) throw std::invalid_argument("mu values must be positive");
    }
    if (!(sensor.grid == basis->grid())) throw std::invalid_argument("sensor belongs to another grid");
    ExponentFit out;
    out.samples = sweep(basis, sensor.mask, mus);
    out.fit = fit_samples(out.samples, sqrt_, log_);
    return out;
}

SensorSet make_sensor(const Grid& grid, const CubeLattice& lattice, SensorKind kind, double delta, double sigma,
                      std::uint64_t seed, ThickPattern pattern) {
    switch (kind) {
        case SensorKind::decaying_balls: return decaying_ball_set(grid, lattice, delta, sigma);
        case SensorKind::density_random: return density_random_set(grid, lattice, delta, sigma, seed);
        case SensorKind::thick_periodic: return thick_periodic_set(grid, lattice, delta, pattern);
    }
    throw std::invalid_argument("unknown sensor kind");
}

DeltaSweep delta_sweep(const BasisPtr& basis, const CubeLattice& lattice, double lambda,
                       const std::vector<double>& deltas, SensorKind kind, double sigma, std::uint64_t seed,
                       ThickPattern pattern) {
    if (deltas.size() < 2) throw std::invalid_argument("delta sweep needs at least 2 values");
    std::vector<double> sorted = deltas;
    std::sort(sorted.begin(), sorted.end());

    DeltaSweep out;
    Mask previous;
    std::vector<double> x, y;
    for (double delta : sorted) {
        const SensorSet s = make_sensor(basis->grid(), lattice, kind, delta, sigma, seed, pattern);
        if (!previous.empty()) {
            for (std::size_t i = 0; i < previous.size(); ++i) {
                if (previous[i] && !s.mask[i]) {
                    throw std::invalid_argument("sensor family is not nested at delta " + std::to_string(delta));
                }
            }
        }
        previous = s.mask;
        const WorstCase w = worst_case(gram(basis, s.mask, lambda));
        SweepSample sample;
        sample.var = delta;
        sample.n_modes = basis->count_below(lambda);
        sample.lambda_min_gram = w.lambda_min;
        sample.ratio = w.ratio;
        sample.excluded = !w.finite();
        if (!out.samples.empty() && w.ratio > out.samples.back().ratio) out.monotone = false;
        out.samples.push_back(sample);
        if (!sample.excluded) {
            x.push_back(std::log(1.0 / delta));
            y.push_back(std::log(w.ratio));
        }
    }
    if (x.size() < 2) throw std::invalid_argument("fewer than 2 finite ratios in delta sweep");
    out.fit = linear_fit(x, y);
    return out;
}

}  // namespace schrodlab
