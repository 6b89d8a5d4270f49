#include "schrodlab/heatctrl.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "schrodlab/errors.hpp"
#include "schrodlab/specineq.hpp"

namespace schrodlab {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double>& logs) {
    double top = -inf;
    for (double v : logs) top = std::max(top, v);
    if (!std::isfinite(top)) return top;
    double s = 0.0;
    for (double v : logs) s += std::exp(v - top);
    return top + std::log(s);
}

// ln int_J e^{-mu t} dt over every interval of J.
double log_time_integral(double mu, const std::vector<Interval>& intervals) {
    std::vector<double> logs;
    logs.reserve(intervals.size());
    for (const Interval& iv : intervals) logs.push_back(log_exp_integral(mu, iv.a, iv.b));
    return log_sum_exp(logs);
}

double time_integral(double mu, const std::vector<Interval>& intervals) {
    double s = 0.0;
    for (const Interval& iv : intervals) s += exp_integral(mu, iv.a, iv.b);
    return s;
}

std::vector<Interval> reversed(const TimeSet& J) {
    std::vector<Interval> out;
    out.reserve(J.intervals.size());
    for (auto it = J.intervals.rbegin(); it != J.intervals.rend(); ++it) out.push_back({J.T - it->b, J.T - it->a});
    return out;
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    if (b <= a) return 0.0;
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    return GK::integrate(f, a, b, 12, tol);
}

// Observability of the pair (diag e^{-2 lambda T}, B) with B built from the
// Gram matrix and the interval list.
Observability observability(const HeatModel& model, double T, const std::vector<Interval>& intervals) {
    const Eigen::Index n = model.modes;
    const Eigen::MatrixXd& g = model.gram;
    Eigen::VectorXd log_ikk(n);
    Eigen::VectorXd log_bkk(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        if (!(g(k, k) > 0.0)) return {inf, {}};
        log_ikk[k] = log_time_integral(2.0 * model.lambdas[k], intervals);
        log_bkk[k] = std::log(g(k, k)) + log_ikk[k];
    }
    Eigen::MatrixXd b(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        b(k, k) = 1.0;
        for (Eigen::Index l = 0; l < k; ++l) {
            const double li = log_time_integral(model.lambdas[k] + model.lambdas[l], intervals);
            const double v =
                g(k, l) / std::sqrt(g(k, k) * g(l, l)) * std::exp(li - 0.5 * (log_ikk[k] + log_ikk[l]));
            b(k, l) = v;
            b(l, k) = v;
        }
    }
    Eigen::VectorXd sqrt_a(n);
    for (Eigen::Index k = 0; k < n; ++k) sqrt_a[k] = std::exp(0.5 * (-2.0 * model.lambdas[k] * T - log_bkk[k]));

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(b);
    if (eb.info() != Eigen::Success) throw std::runtime_error("observability: eigensolver failed on B");
    if (eb.eigenvalues()[0] <= gram_jitter) return {inf, {}};
    const Eigen::MatrixXd& q = eb.eigenvectors();
    const Eigen::MatrixXd binv = q * eb.eigenvalues().cwiseInverse().asDiagonal() * q.transpose();
    const Eigen::MatrixXd m = sqrt_a.asDiagonal() * binv * sqrt_a.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m);
    if (em.info() != Eigen::Success) throw std::runtime_error("observability: eigensolver failed");
    Observability out;
    out.c_obs = em.eigenvalues()[n - 1];
    const Eigen::VectorXd y = binv * (sqrt_a.asDiagonal() * em.eigenvectors().col(n - 1));
    // c = D^{-1} y with D_k = sqrt(B_kk), normalized in log space.
    Eigen::VectorXd logc(n);
    for (Eigen::Index k = 0; k < n; ++k) logc[k] = std::log(std::abs(y[k])) - 0.5 * log_bkk[k];
    const double top = logc.maxCoeff();
    out.maximizer.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) out.maximizer[k] = std::copysign(std::exp(logc[k] - top), y[k]);
    out.maximizer.normalize();
    return out;
}

Eigen::MatrixXd control_gramian(const HeatModel& model, const std::vector<Interval>& reversed_intervals) {
    const Eigen::Index n = model.modes;
    Eigen::MatrixXd lam(n, n);
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index l = 0; l <= k; ++l) {
            const double v = model.gram(k, l) * time_integral(model.lambdas[k] + model.lambdas[l], reversed_intervals);
            lam(k, l) = v;
            lam(l, k) = v;
        }
    return lam;
}

}  // namespace

TimeSet TimeSet::make(double T, std::vector<Interval> intervals, int nodes_per_interval) {
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("TimeSet: T must be positive");
    if (intervals.empty()) throw std::invalid_argument("TimeSet: J needs at least one interval");
    if (nodes_per_interval < 2) throw std::invalid_argument("TimeSet: nodes_per_interval must be >= 2");
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const Interval& iv = intervals[i];
        if (!(iv.a < iv.b)) throw std::invalid_argument("TimeSet: interval " + std::to_string(i) + " is empty");
        if (iv.a < 0.0 || iv.b > T)
            throw std::invalid_argument("TimeSet: interval " + std::to_string(i) + " leaves [0, T]");
        if (i > 0 && iv.a < intervals[i - 1].b)
            throw std::invalid_argument("TimeSet: intervals must be sorted and disjoint");
    }
    TimeSet out;
    out.T = T;
    out.intervals = std::move(intervals);
    out.nodes_per_interval = nodes_per_interval;
    return out;
}

double TimeSet::measure() const noexcept {
    double s = 0.0;
    for (const Interval& iv : intervals) s += iv.length();
    return s;
}

double TimeSet::measure_in(double lo, double hi) const noexcept {
    double s = 0.0;
    for (const Interval& iv : clip(lo, hi)) s += iv.length();
    return s;
}

std::vector<Interval> TimeSet::clip(double lo, double hi) const {
    std::vector<Interval> out;
    for (const Interval& iv : intervals) {
        const double a = std::max(iv.a, lo);
        const double b = std::min(iv.b, hi);
        if (b > a) out.push_back({a, b});
    }
    return out;
}

std::vector<double> TimeSet::nodes() const {
    std::vector<double> out;
    out.reserve(intervals.size() * static_cast<std::size_t>(nodes_per_interval));
    for (const Interval& iv : intervals)
        for (int i = 0; i < nodes_per_interval; ++i)
            out.push_back(i + 1 == nodes_per_interval ? iv.b : iv.a + i * iv.length() / (nodes_per_interval - 1));
    return out;
}

double exp_integral(double mu, double a, double b) {
    if (b < a) throw std::invalid_argument("exp_integral: b < a");
    const double len = b - a;
    if (len == 0.0) return 0.0;
    if (mu == 0.0) return len;
    return std::exp(-mu * a) * (-std::expm1(-mu * len) / mu);
}

double log_exp_integral(double mu, double a, double b) {
    if (b < a) throw std::invalid_argument("log_exp_integral: b < a");
    const double len = b - a;
    if (len == 0.0) return -inf;
    if (mu == 0.0) return std::log(len);
    const double m = std::abs(mu);
    // int_0^len e^{-mu t} = (1 - e^{-m len}) / m, times e^{m len} when mu < 0.
    double v = std::log(-std::expm1(-m * len)) - std::log(m);
    if (mu < 0.0) v += m * len;
    return v - mu * a;
}

Eigen::VectorXd HeatModel::coefficients(const SpectralElement& u) const {
    if (!u.basis || u.basis->grid() != basis->grid() || u.basis->size() != basis->size())
        throw std::invalid_argument("HeatModel: element belongs to another basis");
    if (u.alpha.size() < modes) throw std::invalid_argument("HeatModel: element has too few coefficients");
    for (Eigen::Index k = modes; k < u.alpha.size(); ++k)
        if (u.alpha[k] != 0.0) throw std::invalid_argument("HeatModel: element carries modes above the cutoff");
    return u.alpha.head(modes);
}

SpectralElement HeatModel::element(const Eigen::VectorXd& c) const {
    if (c.size() != modes) throw std::invalid_argument("HeatModel: coefficient count differs from the model");
    SpectralElement out{basis, Eigen::VectorXd::Zero(basis->size())};
    out.alpha.head(modes) = c;
    return out;
}

HeatModel heat_model(const BasisPtr& basis, const SensorSet& sensor, double cutoff) {
    const GramMatrix g = gram(basis, sensor, cutoff);
    HeatModel out;
    out.basis = basis;
    out.sensor = sensor;
    out.modes = g.modes();
    out.lambdas = basis->eigenvalues().head(out.modes);
    out.gram = g.g;
    return out;
}

SpectralElement evolve(const SpectralElement& u, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("evolve: t must be >= 0");
    if (!u.basis) throw std::invalid_argument("evolve: element has no basis");
    SpectralElement out = u;
    const Eigen::VectorXd& lam = u.basis->eigenvalues();
    for (Eigen::Index k = 0; k < out.alpha.size(); ++k) out.alpha[k] *= std::exp(-lam[k] * t);
    return out;
}

double negative_part_sup(const Field& potential_values) {
    if (potential_values.size() == 0) return 0.0;
    return std::max(0.0, -potential_values.minCoeff());
}

DensitySequence density_sequence(double k, double k1, double alpha, int m_max) {
    if (!(k < k1)) throw std::invalid_argument("density_sequence: need k < k1");
    if (!(alpha > 1.0) || !std::isfinite(alpha)) throw std::invalid_argument("density_sequence: need alpha > 1");
    if (m_max < 1) throw std::invalid_argument("density_sequence: need m_max >= 1");
    DensitySequence out{k, k1, alpha, {}};
    out.values.reserve(static_cast<std::size_t>(m_max) + 1);
    out.values.push_back(k1);
    for (int m = 1; m <= m_max; ++m) out.values.push_back(k + std::pow(alpha, -m) * (k1 - k));
    return out;
}

std::vector<DensityCheck> validate_density(const DensitySequence& seq, const TimeSet& J) {
    if (seq.values.size() < 2) throw std::invalid_argument("validate_density: sequence too short");
    if (seq.k1 > J.T) throw std::invalid_argument("validate_density: k1 exceeds T");
    std::vector<DensityCheck> out;
    for (std::size_t i = 0; i + 1 < seq.values.size(); ++i) {
        DensityCheck c;
        c.m = static_cast<int>(i) + 1;
        c.hi = seq.values[i];
        c.lo = seq.values[i + 1];
        c.measure = J.measure_in(c.lo, c.hi);
        c.required = (c.hi - c.lo) / 3.0;
        c.ok = c.measure + 1e-12 * (c.hi - c.lo) >= c.required;
        out.push_back(c);
    }
    return out;
}

DecayExponents decay_exponents(const SensorSet& sensor, double beta1) {
    if (!(beta1 > 0.0)) throw std::invalid_argument("decay_exponents: beta1 must be positive");
    const double sigma = sensor.kind == SensorKind::thick_periodic ? 0.0 : sensor.sigma;
    DecayExponents e{sigma / beta1 + 0.5, 0.5 - sigma / beta1};
    if (!(e.sigma2 > 0.0)) throw std::invalid_argument("sigma2 = 1/2 - sigma/beta1 must be positive");
    return e;
}

InterpolationReport interpolation_check(const HeatModel& model, const std::vector<SpectralElement>& initial, double t,
                                        double tau, double beta1) {
    if (!(t > 0.0)) throw std::invalid_argument("interpolation_check: t must be positive");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("interpolation_check: tau must lie in (0, 1)");
    if (initial.empty()) throw std::invalid_argument("interpolation_check: no initial data");
    InterpolationReport out;
    out.t = t;
    out.tau = tau;
    out.exponents = decay_exponents(model.sensor, beta1);
    out.trend = std::pow(tau * t, -out.exponents.sigma1 / out.exponents.sigma2);
    const Eigen::VectorXd decay = (-model.lambdas.array() * t).exp();
    for (const SpectralElement& u0 : initial) {
        const Eigen::VectorXd c = model.coefficients(u0);
        const double n0 = c.norm();
        if (n0 == 0.0) throw std::invalid_argument("interpolation_check: zero initial datum");
        const Eigen::VectorXd ct = decay.cwiseProduct(c);
        const double obs = std::sqrt(std::max(0.0, model.observed_norm2(ct)));
        const double k = obs > 0.0 ? ct.norm() / (2.0 * std::pow(obs, 1.0 - tau) * std::pow(n0, tau)) : inf;
        out.k_samples.push_back(k);
        out.k_min = std::max(out.k_min, k);
    }
    return out;
}

InterpolationReport interpolation_check(const HeatModel& model, int samples, std::uint64_t seed, double t, double tau,
                                        double beta1) {
    if (samples < 1) throw std::invalid_argument("interpolation_check: samples must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<SpectralElement> initial;
    const double top = model.lambdas[model.modes - 1];
    for (int i = 0; i < samples; ++i) initial.push_back(random_unit_element(model.basis, top, rng));
    return interpolation_check(model, initial, t, tau, beta1);
}

bool Observability::finite() const noexcept { return std::isfinite(c_obs); }

Observability observability_constant(const HeatModel& model, const TimeSet& J) {
    return observability(model, J.T, J.intervals);
}

double observability_ratio(const HeatModel& model, const TimeSet& J, const Eigen::VectorXd& c) {
    if (c.size() != model.modes) throw std::invalid_argument("observability_ratio: coefficient count differs");
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index k = 0; k < model.modes; ++k) {
        num += c[k] * c[k] * std::exp(-2.0 * model.lambdas[k] * J.T);
        for (Eigen::Index l = 0; l < model.modes; ++l)
            den += c[k] * c[l] * model.gram(k, l) * time_integral(model.lambdas[k] + model.lambdas[l], J.intervals);
    }
    return den > 0.0 ? num / den : inf;
}

ObservabilitySweep observability_sweep(const BasisPtr& basis, const CubeLattice& lattice, SensorKind kind,
                                       double sigma, std::uint64_t seed, ThickPattern pattern,
                                       const std::vector<double>& deltas, double cutoff, const TimeSet& J,
                                       double beta1) {
    if (deltas.empty()) throw std::invalid_argument("observability_sweep: no deltas");
    ObservabilitySweep out;
    std::vector<double> x;
    std::vector<double> y;
    for (double delta : deltas) {
        const SensorSet sensor = make_sensor(basis->grid(), lattice, kind, delta, sigma, seed, pattern);
        if (out.samples.empty()) out.predicted_slope = 1.0 / decay_exponents(sensor, beta1).sigma2;
        const Observability obs = observability_constant(heat_model(basis, sensor, cutoff), J);
        ObservabilitySample s{delta, sensor.kind == SensorKind::thick_periodic ? 0.0 : sigma, obs.c_obs, false};
        s.excluded = !obs.finite() || obs.c_obs <= 1.0 || delta >= 1.0;
        if (!s.excluded) {
            x.push_back(std::log(std::log(1.0 / delta)));
            y.push_back(std::log(std::log(obs.c_obs)));
        }
        out.samples.push_back(s);
    }
    if (x.size() >= 2) {
        const bool constant_x = std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
        if (!constant_x) out.fit = linear_fit(x, y);
    }
    return out;
}

bool ControlResult::bounds_hold() const noexcept {
    const double slack = 1e-9;
    return cost <= cost_upper * (1.0 + slack) && cost >= cost_lower * (1.0 - slack) - 1e-300;
}

ControlResult hum_control(const HeatModel& model, const TimeSet& J, const SpectralElement& u0,
                          const ControlOptions& options) {
    if (!(options.epsilon > 0.0)) throw std::invalid_argument("hum_control: epsilon must be positive");
    if (options.max_iter < 1) throw std::invalid_argument("hum_control: max_iter must be >= 1");
    if (!(options.tol > 0.0)) throw std::invalid_argument("hum_control: tol must be positive");
    const Eigen::VectorXd c0 = model.coefficients(u0);
    const Eigen::Index n = model.modes;
    const std::vector<Interval> rev = reversed(J);
    const Eigen::MatrixXd lam = control_gramian(model, rev);
    const Eigen::VectorXd free = (-model.lambdas.array() * J.T).exp().matrix().cwiseProduct(c0);
    const Eigen::VectorXd rhs = -free;

    ControlResult out;
    out.epsilon = options.epsilon;
    out.u0_norm = c0.norm();
    out.free_norm = free.norm();
    out.z = Eigen::VectorXd::Zero(n);

    // Conjugate gradients on (Lambda + eps I) z = rhs.
    const double bnorm = rhs.norm();
    if (bnorm > 0.0) {
        Eigen::VectorXd r = rhs;
        Eigen::VectorXd p = r;
        double rr = r.squaredNorm();
        bool converged = false;
        for (int it = 1; it <= options.max_iter; ++it) {
            const Eigen::VectorXd ap = lam * p + options.epsilon * p;
            const double alpha = rr / p.dot(ap);
            out.z += alpha * p;
            r -= alpha * ap;
            const double rr_new = r.squaredNorm();
            out.iterations = it;
            out.residual_history.push_back(std::sqrt(rr_new) / bnorm);
            if (std::sqrt(rr_new) <= options.tol * bnorm) {
                converged = true;
                break;
            }
            p = r + (rr_new / rr) * p;
            rr = rr_new;
        }
        if (!converged)
            throw ConvergenceError("hum_control: CG did not reach tol in " + std::to_string(options.max_iter) +
                                       " iterations",
                                   out.residual_history);
    }

    // Control samples on the sensor nodes.
    out.times = J.nodes();
    for (std::size_t i = 0; i < model.sensor.mask.size(); ++i)
        if (model.sensor.mask[i]) out.support.push_back(i);
    Eigen::MatrixXd phi(static_cast<Eigen::Index>(out.support.size()), n);
    for (std::size_t r = 0; r < out.support.size(); ++r)
        for (Eigen::Index k = 0; k < n; ++k)
            phi(static_cast<Eigen::Index>(r), k) = model.basis->mode(k)[static_cast<Eigen::Index>(out.support[r])];
    Eigen::MatrixXd coeff(n, static_cast<Eigen::Index>(out.times.size()));
    for (std::size_t j = 0; j < out.times.size(); ++j)
        coeff.col(static_cast<Eigen::Index>(j)) =
            (-model.lambdas.array() * (J.T - out.times[j])).exp().matrix().cwiseProduct(out.z);
    out.samples = phi * coeff;

    out.cost = std::sqrt(std::max(0.0, out.z.dot(lam * out.z)));
    if (out.u0_norm > 0.0) out.model_residual = options.epsilon * out.z.norm() / out.u0_norm;

    // Forward check: u_k(T) = e^{-lambda_k T} c0_k + int_J e^{-lambda_k (T - t)} (G z(t))_k dt.
    if (out.u0_norm > 0.0) {
        Eigen::VectorXd terminal = free;
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto f = [&](double t) {
                double s = 0.0;
                for (Eigen::Index l = 0; l < n; ++l)
                    s += model.gram(k, l) * out.z[l] * std::exp(-(model.lambdas[k] + model.lambdas[l]) * (J.T - t));
                return s;
            };
            for (const Interval& iv : J.intervals) terminal[k] += integrate(f, iv.a, iv.b, 1e-13);
        }
        out.terminal_residual = terminal.norm() / out.u0_norm;
    }

    const Observability rev_obs = observability(model, J.T, rev);
    out.cost_upper = std::sqrt(rev_obs.c_obs) * out.u0_norm;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> el(lam, Eigen::EigenvaluesOnly);
    const double lam_max = std::max(0.0, el.eigenvalues()[n - 1]);
    const double gap = out.free_norm - options.epsilon * out.z.norm();
    out.cost_lower = lam_max > 0.0 ? std::max(0.0, gap) / std::sqrt(lam_max) : 0.0;
    return out;
}

Field control_field(const ControlResult& result, const Grid& grid, std::size_t time_index) {
    if (time_index >= result.times.size()) throw std::invalid_argument("control_field: time index out of range");
    Field f = Field::Zero(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t r = 0; r < result.support.size(); ++r) {
        if (result.support[r] >= grid.size()) throw std::invalid_argument("control_field: grid does not match");
        f[static_cast<Eigen::Index>(result.support[r])] =
            result.samples(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(time_index));
    }
    return f;
}

TelescopingTrace telescoping_trace(const HeatModel& model, const TimeSet& J, const SpectralElement& u0,
                                   const DensitySequence& seq, double a, double beta1) {
    if (!(a > 0.0)) throw std::invalid_argument("telescoping_trace: a must be positive");
    const double delta = model.sensor.delta;
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("telescoping_trace: sensor delta must lie in (0, 1)");
    TelescopingTrace out;
    out.exponents = decay_exponents(model.sensor, beta1);
    for (const DensityCheck& c : validate_density(seq, J))
        if (!c.ok)
            throw std::invalid_argument("telescoping_trace: density condition fails at m = " + std::to_string(c.m));

    const Eigen::VectorXd c = model.coefficients(u0);
    const double ratio = out.exponents.sigma1 / out.exponents.sigma2;
    const double log_term = std::pow(std::log(1.0 / delta), 1.0 / out.exponents.sigma2);
    // P_m uses the gap k_m - k_{m+1} = alpha^{-m} (alpha - 1) (k1 - k).
    const auto prefactor = [&](int m) {
        const double gap = std::pow(seq.alpha, -m) * (seq.alpha - 1.0) * (seq.k1 - seq.k);
        return std::exp(-a * std::pow(gap, -ratio) * log_term);
    };
    const auto norm_at = [&](double t) { return (-model.lambdas.array() * t).exp().matrix().cwiseProduct(c).norm(); };
    const auto observed_at = [&](double t) {
        const Eigen::VectorXd ct = (-model.lambdas.array() * t).exp().matrix().cwiseProduct(c);
        return std::sqrt(std::max(0.0, model.observed_norm2(ct)));
    };

    const int mmax = static_cast<int>(seq.values.size()) - 1;
    bool unbounded = false;
    double isum = 0.0;
    for (int m = 1; m <= mmax; ++m) {
        TelescopingTerm t;
        t.m = m;
        t.km = seq.km(m);
        t.km1 = seq.km(m + 1);
        t.prefactor = prefactor(m);
        t.norm = norm_at(t.km);
        t.difference = t.prefactor * t.norm - prefactor(m + 1) * norm_at(t.km1);
        for (const Interval& iv : J.clip(t.km1, t.km)) t.integral += integrate(observed_at, iv.a, iv.b, 1e-11);
        if (t.difference > 0.0) {
            if (t.integral > 0.0)
                out.c_fit = std::max(out.c_fit, t.difference / t.integral);
            else
                unbounded = true;
        }
        isum += t.integral;
        out.summed_lhs += t.difference;
        out.terms.push_back(t);
    }
    if (unbounded) out.c_fit = inf;
    for (TelescopingTerm& t : out.terms) t.margin = unbounded ? inf : out.c_fit * t.integral - t.difference;
    out.summed_rhs = unbounded ? inf : out.c_fit * isum;
    out.holds = out.summed_lhs <= out.summed_rhs + 1e-12 * std::abs(out.summed_lhs);
    return out;
}

}  // namespace schrodlab
