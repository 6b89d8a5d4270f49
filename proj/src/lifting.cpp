#include "schrodlab/lifting.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "schrodlab/errors.hpp"

namespace schrodlab {

using Eigen::Index;

double s_profile(double lambda, double s) {
    if (std::abs(lambda) < 1e-8) {
        const double ls2 = lambda * s * s;
        return s * (1.0 + ls2 / 6.0 * (1.0 + ls2 / 20.0));
    }
    if (lambda > 0.0) {
        const double q = std::sqrt(lambda);
        return std::sinh(q * s) / q;
    }
    const double q = std::sqrt(-lambda);
    return std::sin(q * s) / q;
}

double s_profile_derivative(double lambda, double s) {
    if (std::abs(lambda) < 1e-8) {
        const double ls2 = lambda * s * s;
        return 1.0 + ls2 / 2.0 * (1.0 + ls2 / 12.0);
    }
    if (lambda > 0.0) return std::cosh(std::sqrt(lambda) * s);
    return std::cos(std::sqrt(-lambda) * s);
}

int Axis::find(double x) const noexcept {
    const double k = (x - lo) / spacing();
    const double i = std::round(k);
    if (std::abs(k - i) > 1e-6 || i < 0 || i > points - 1) return -1;
    return static_cast<int>(i);
}

std::size_t TensorGrid::size() const noexcept {
    std::size_t n = 1;
    for (const auto& a : axes) n *= static_cast<std::size_t>(a.points);
    return n;
}

std::size_t TensorGrid::stride(int axis) const noexcept {
    std::size_t s = 1;
    for (int a = 0; a < axis; ++a) s *= static_cast<std::size_t>(axes[static_cast<std::size_t>(a)].points);
    return s;
}

std::vector<int> TensorGrid::unravel(std::size_t idx) const {
    std::vector<int> out(axes.size());
    for (std::size_t a = 0; a < axes.size(); ++a) {
        const auto p = static_cast<std::size_t>(axes[a].points);
        out[a] = static_cast<int>(idx % p);
        idx /= p;
    }
    return out;
}

double TensorGrid::coordinate(std::size_t idx, int axis) const {
    const auto& a = axes[static_cast<std::size_t>(axis)];
    return a.node(static_cast<int>((idx / stride(axis)) % static_cast<std::size_t>(a.points)));
}

bool TensorGrid::on_boundary(std::size_t idx) const {
    for (std::size_t a = 0; a < axes.size(); ++a) {
        const auto p = static_cast<std::size_t>(axes[a].points);
        const auto i = idx % p;
        if (i == 0 || i == p - 1) return true;
        idx /= p;
    }
    return false;
}

double TensorGrid::cell_volume() const noexcept {
    double v = 1.0;
    for (const auto& a : axes) v *= a.spacing();
    return v;
}

void TensorGrid::validate() const {
    if (axes.empty()) throw std::invalid_argument("tensor grid has no axes");
    for (const auto& a : axes) {
        if (a.points < 3 || !(a.hi > a.lo)) throw std::invalid_argument("each axis needs lo < hi and at least 3 points");
    }
    if (base_dim < 1 || base_dim > dim() || base_dim > 2) throw std::invalid_argument("base_dim must be 1 or 2");
}

TensorGrid tensor_grid(const Grid& grid) {
    TensorGrid t;
    t.base_dim = grid.dim();
    for (int a = 0; a < grid.dim(); ++a) t.axes.push_back({-grid.half_width(), grid.half_width(), grid.points_per_axis()});
    return t;
}

namespace {

// s value of node j, exactly symmetric with s = 0 at the middle node.
double s_value(const Axis& s_axis, Index j) {
    return static_cast<double>(j - (s_axis.points - 1) / 2) * s_axis.spacing();
}

// Number of s spacings in `half`; throws unless it is a whole number that
// fits in the s grid.
Index s_steps(const LiftedField& f, double half) {
    const double k = half / f.s_spacing();
    const double m = std::round(k);
    if (!(half >= 0.0) || std::abs(k - m) > 1e-6) {
        throw std::invalid_argument("s window half-width must be a multiple of the s spacing");
    }
    if (m > static_cast<double>(f.s_zero())) throw std::invalid_argument("s window exceeds s_max");
    return static_cast<Index>(m);
}

std::vector<std::uint8_t> ball(const Grid& grid, double radius) {
    std::vector<std::uint8_t> in(grid.size(), 1);
    if (std::isinf(radius)) return in;
    for (std::size_t i = 0; i < grid.size(); ++i) in[i] = grid.radius(i) <= radius * (1.0 + 1e-12) + 1e-12;
    return in;
}

double trapezoid_weight(Index j, Index lo, Index hi, double ds) {
    return (j == lo || j == hi) ? 0.5 * ds : ds;
}

}  // namespace

double LiftedField::top_eigenvalue() const {
    for (Index k = base.alpha.size() - 1; k >= 0; --k) {
        if (base.alpha[k] != 0.0) return base.basis->eigenvalues()[k];
    }
    throw std::invalid_argument("lifted element is zero");
}

BoxField LiftedField::as_box() const {
    BoxField b;
    b.grid = tensor_grid(base.basis->grid());
    b.grid.axes.push_back(s_axis);
    b.values = Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
    return b;
}

LiftedField lift(const SpectralElement& element, double s_max, int s_points) {
    if (s_points < 3 || s_points % 2 == 0) throw std::invalid_argument("s_points must be odd and at least 3");
    if (!(s_max > 0.0)) throw std::invalid_argument("s_max must be positive");
    const Index k = element.alpha.size();
    if (k == 0 || k > element.basis->size()) throw std::invalid_argument("element has no modes in the basis");

    LiftedField f;
    f.base = element;
    f.s_axis = {-s_max, s_max, s_points};
    f.rho = s_max / 4.0;
    const auto& lam = element.basis->eigenvalues();
    Eigen::MatrixXd coef(k, s_points);
    for (Index j = 0; j < s_points; ++j) {
        const double s = s_value(f.s_axis, j);
        for (Index m = 0; m < k; ++m) coef(m, j) = element.alpha[m] * s_profile(lam[m], s);
    }
    f.values = element.basis->eigenvectors().leftCols(k) * coef;
    return f;
}

double lift_residual(const LiftedField& f) {
    const Index k = f.base.alpha.size();
    const auto& lam = f.base.basis->eigenvalues();
    const double ds2 = f.s_spacing() * f.s_spacing();
    const Index p = f.s_axis.points;
    Eigen::MatrixXd coef(k, p - 2);
    for (Index j = 1; j < p - 1; ++j) {
        const double s0 = s_value(f.s_axis, j - 1), s1 = s_value(f.s_axis, j), s2 = s_value(f.s_axis, j + 1);
        for (Index m = 0; m < k; ++m) {
            const double lap = (s_profile(lam[m], s2) - 2.0 * s_profile(lam[m], s1) + s_profile(lam[m], s0)) / ds2;
            coef(m, j - 1) = f.base.alpha[m] * (lam[m] * s_profile(lam[m], s1) - lap);
        }
    }
    return (f.base.basis->eigenvectors().leftCols(k) * coef).cwiseAbs().maxCoeff();
}

double lifted_l2_norm2(const LiftedField& f, double half, double radius) {
    const Index m = s_steps(f, half);
    const Grid& grid = f.base.basis->grid();
    const auto in = ball(grid, radius);
    const Index lo = f.s_zero() - m, hi = f.s_zero() + m;
    if (m == 0) return 0.0;
    double total = 0.0;
    for (Index j = lo; j <= hi; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (in[i]) col += f.values(static_cast<Index>(i), j) * f.values(static_cast<Index>(i), j);
        }
        total += trapezoid_weight(j, lo, hi, f.s_spacing()) * col;
    }
    return total * grid.cell_volume();
}

double lifted_h1_norm2(const LiftedField& f, double half, double radius) {
    const Index m = s_steps(f, half);
    const Grid& grid = f.base.basis->grid();
    const auto in = ball(grid, radius);
    const Index lo = f.s_zero() - m, hi = f.s_zero() + m;
    if (m == 0) return 0.0;
    const Index p = f.s_axis.points;
    const double ds = f.s_spacing();
    double total = 0.0;
    for (Index j = lo; j <= hi; ++j) {
        const Field col = f.values.col(j);
        const Field dens = h1_density(grid, col);
        Field ds_col;
        if (j == 0) {
            ds_col = (f.values.col(1) - f.values.col(0)) / ds;
        } else if (j == p - 1) {
            ds_col = (f.values.col(p - 1) - f.values.col(p - 2)) / ds;
        } else {
            ds_col = (f.values.col(j + 1) - f.values.col(j - 1)) / (2.0 * ds);
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (in[i]) sum += dens[static_cast<Index>(i)] + ds_col[static_cast<Index>(i)] * ds_col[static_cast<Index>(i)];
        }
        total += trapezoid_weight(j, lo, hi, ds) * sum;
    }
    return total * grid.cell_volume();
}

SandwichReport sandwich_check(const LiftedField& f, double rho) {
    return sandwich_check(f, rho, f.top_eigenvalue());
}

SandwichReport sandwich_check(const LiftedField& f, double rho, double lambda) {
    if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
    if (lambda < f.top_eigenvalue() - 1e-12 * std::max(1.0, std::abs(lambda))) {
        throw std::invalid_argument("lambda lies below the top eigenvalue of the element");
    }
    const double phi2 = f.base.alpha.squaredNorm();
    const double l = std::max(lambda, 0.0);
    SandwichReport r;
    r.rho = rho;
    r.lambda = lambda;
    r.lower = 2.0 * rho * phi2;
    r.middle = lifted_h1_norm2(f, rho);
    r.upper = 2.0 * rho * (1.0 + rho * rho * (1.0 + l) / 3.0) * std::exp(2.0 * rho * std::sqrt(l)) * phi2;
    return r;
}

double DoublingReport::c1_needed() const noexcept {
    return r1 / (1.0 + lambda);
}

double DoublingReport::c2_needed() const noexcept {
    return r2 / std::exp(9.0 * rho * std::sqrt(std::max(lambda, 0.0)));
}

DoublingReport doubling_checks(const LiftedField& f, double rho, double decay_r) {
    return doubling_checks(f, rho, decay_r, f.top_eigenvalue());
}

DoublingReport doubling_checks(const LiftedField& f, double rho, double decay_r, double lambda) {
    if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
    if (!(decay_r > 0.0)) throw std::invalid_argument("decay radius must be positive");
    if (4.0 * rho > f.s_axis.hi * (1.0 + 1e-12)) throw std::invalid_argument("s_max must be at least 4 rho");
    DoublingReport d;
    d.lambda = lambda;
    d.rho = rho;
    d.decay_radius = decay_r;
    const double inner_l2 = lifted_l2_norm2(f, rho, 2.0 * decay_r);
    const double inner_h1 = lifted_h1_norm2(f, rho / 2.0, decay_r);
    if (!(inner_l2 > 0.0) || !(inner_h1 > 0.0)) throw std::invalid_argument("lifted field vanishes on the ball");
    d.r1 = lifted_h1_norm2(f, rho / 2.0) / inner_l2;
    d.r2 = lifted_h1_norm2(f, 4.0 * rho) / inner_h1;
    return d;
}

DoublingCalibration calibrate_doubling(const BasisPtr& basis, const std::vector<double>& lambdas, double rho,
                                       int calibration_samples, int validation_samples, std::uint64_t seed,
                                       int s_points) {
    if (lambdas.empty() || calibration_samples < 1 || validation_samples < 1) {
        throw std::invalid_argument("doubling calibration needs lambdas and samples");
    }
    DoublingCalibration out;
    out.lambdas = lambdas;
    std::mt19937_64 rng(seed);
    std::vector<double> val1(lambdas.size(), 0.0), val2(lambdas.size(), 0.0);
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
        const double lambda = lambdas[li];
        const double r = decay_radius(basis, lambda, 0.5, 16, seed + li);
        out.decay_radii.push_back(r);
        double c1 = 0.0, c2 = 0.0;
        for (int k = 0; k < calibration_samples + validation_samples; ++k) {
            const auto f = lift(random_unit_element(basis, lambda, rng), 4.0 * rho, s_points);
            const auto d = doubling_checks(f, rho, r, lambda);
            if (k < calibration_samples) {
                c1 = std::max(c1, d.c1_needed());
                c2 = std::max(c2, d.c2_needed());
            } else {
                val1[li] = std::max(val1[li], d.c1_needed());
                val2[li] = std::max(val2[li], d.c2_needed());
            }
        }
        out.c1_by_lambda.push_back(c1);
        out.c2_by_lambda.push_back(c2);
    }
    out.c1 = *std::max_element(out.c1_by_lambda.begin(), out.c1_by_lambda.end());
    out.c2 = *std::max_element(out.c2_by_lambda.begin(), out.c2_by_lambda.end());
    out.validation_c1_ratio = *std::max_element(val1.begin(), val1.end()) / out.c1;
    out.validation_c2_ratio = *std::max_element(val2.begin(), val2.end()) / out.c2;
    return out;
}

PotentialFn potential_fn(const Potential& potential, int dim) {
    if (potential.kind == PotentialKind::tabulated) {
        throw std::invalid_argument("tabulated potentials cannot be evaluated off the grid");
    }
    return [potential, dim](const Point& x) { return potential.at(x, dim); };
}

bool Multiplier::within_bounds() const {
    for (Index i = 0; i < scaled.size(); ++i) {
        if (!(scaled[i] > 0.0) || scaled[i] > 1.0 + 1e-10) return false;
        if (std::log(scaled[i]) < -2.0 * log_w2 - 1e-9) return false;
    }
    return true;
}

namespace {

Point base_point(const TensorGrid& g, std::size_t idx) {
    Point x{0.0, 0.0};
    for (int a = 0; a < g.base_dim; ++a) x[static_cast<std::size_t>(a)] = g.coordinate(idx, a);
    return x;
}

std::string describe(const TensorGrid& g, std::size_t idx) {
    std::ostringstream os;
    os << '(';
    for (int a = 0; a < g.dim(); ++a) os << (a ? ", " : "") << g.coordinate(idx, a);
    os << ')';
    return os.str();
}

}  // namespace

Multiplier positive_multiplier(const TensorGrid& region, const Potential& potential, double C0) {
    return positive_multiplier(region, potential_fn(potential, region.base_dim), C0);
}

Multiplier positive_multiplier(const TensorGrid& region, const PotentialFn& potential, double C0) {
    region.validate();
    if (!(C0 > 0.0) || !std::isfinite(C0)) throw std::invalid_argument("C0 must be positive");
    const std::size_t n = region.size();
    const int d = region.dim();

    std::vector<double> q(n);
    double worst = 0.0;
    std::size_t worst_at = 0;
    for (std::size_t i = 0; i < n; ++i) {
        q[i] = potential(base_point(region, i)) + C0;
        if (1.0 - q[i] > worst) {
            worst = 1.0 - q[i];
            worst_at = i;
        }
    }
    if (worst > 1e-12) {
        throw std::invalid_argument("V + C0 = " + std::to_string(q[worst_at]) + " < 1 at " + describe(region, worst_at));
    }

    std::vector<Index> unknown(n, -1);
    Index m = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!region.on_boundary(i)) unknown[i] = m++;
    }

    Multiplier out;
    out.region = region;
    out.C0 = C0;
    out.log_w2 = 40.0 * region.base_dim * std::sqrt(2.0 * C0);
    out.scaled = Eigen::VectorXd::Ones(static_cast<Index>(n));
    if (m == 0) return out;

    // Boundary value 1; the true multiplier is w2 times this solution.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(m) * static_cast<std::size_t>(2 * d + 1));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    for (std::size_t i = 0; i < n; ++i) {
        const Index r = unknown[i];
        if (r < 0) continue;
        double diag = q[i];
        for (int a = 0; a < d; ++a) {
            const double w = 1.0 / (region.axes[static_cast<std::size_t>(a)].spacing() *
                                    region.axes[static_cast<std::size_t>(a)].spacing());
            diag += 2.0 * w;
            const std::size_t st = region.stride(a);
            for (const std::size_t j : {i - st, i + st}) {
                if (unknown[j] >= 0) {
                    trip.emplace_back(r, unknown[j], -w);
                } else {
                    rhs[r] += w;
                }
            }
        }
        trip.emplace_back(r, r, diag);
    }
    Eigen::SparseMatrix<double> A(m, m);
    A.setFromTriplets(trip.begin(), trip.end());

    Eigen::VectorXd sol;
    if (d <= 2) {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
        if (ldlt.info() != Eigen::Success) throw ConvergenceError("multiplier factorization failed", {});
        sol = ldlt.solve(rhs);
    } else {
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg(A);
        cg.setTolerance(1e-13);
        cg.setMaxIterations(static_cast<Index>(20 * std::sqrt(static_cast<double>(m))) + 1000);
        sol = cg.solve(rhs);
        if (cg.info() != Eigen::Success) {
            throw ConvergenceError("multiplier CG did not converge in " + std::to_string(cg.iterations()) + " iterations",
                                   {cg.error()});
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (unknown[i] >= 0) out.scaled[static_cast<Index>(i)] = sol[unknown[i]];
    }

    // Bounds e^{-L} <= w <= e^{L} with w = e^{L} * scaled.
    double worst_excess = 0.0;
    worst_at = n;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = out.scaled[static_cast<Index>(i)];
        double excess;
        if (!(s > 0.0)) {
            excess = std::numeric_limits<double>::infinity();
        } else {
            excess = std::max(std::log(s), -2.0 * out.log_w2 - std::log(s));
        }
        if (excess > worst_excess) {
            worst_excess = excess;
            worst_at = i;
        }
    }
    if (worst_excess > 1e-10) {
        throw std::runtime_error("multiplier leaves [e^-L, e^L], L = " + std::to_string(out.log_w2) + ", at " +
                                 describe(region, worst_at) + " (w/w2 = " +
                                 std::to_string(out.scaled[static_cast<Index>(worst_at)]) +
                                 "); the region grid is too coarse or V + C0 exceeds 2 C0");
    }
    return out;
}

BoxField divergence_form_field(const LiftedField& f, const Multiplier& w) {
    const TensorGrid& region = w.region;
    const Grid& grid = f.base.basis->grid();
    const int n = grid.dim();
    if (region.base_dim != n || region.dim() != n + 2) {
        throw std::invalid_argument("multiplier region must have the basis dimension plus s and t axes");
    }
    if (w.scaled.size() != static_cast<Index>(region.size())) throw std::invalid_argument("multiplier size mismatch");

    auto offset = [](const Axis& outer, const Axis& inner, const char* name) {
        const int lo = outer.find(inner.lo);
        const int hi = outer.find(inner.hi);
        if (lo < 0 || hi < 0 || hi - lo != inner.points - 1) {
            throw std::invalid_argument(std::string("multiplier ") + name + " axis does not sit on the lifted nodes");
        }
        return lo;
    };
    const Axis gaxis{-grid.half_width(), grid.half_width(), grid.points_per_axis()};
    std::array<int, 2> xoff{0, 0};
    for (int a = 0; a < n; ++a) xoff[static_cast<std::size_t>(a)] = offset(gaxis, region.axes[static_cast<std::size_t>(a)], "x");
    const int soff = offset(f.s_axis, region.axes[static_cast<std::size_t>(n)], "s");

    BoxField out;
    out.grid = region;
    out.values.resize(static_cast<Index>(region.size()));
    const double sq = std::sqrt(w.C0);
    for (std::size_t i = 0; i < region.size(); ++i) {
        const auto u = region.unravel(i);
        const std::size_t gi = grid.index(xoff[0] + u[0], n > 1 ? xoff[1] + u[1] : 0);
        const double t = region.coordinate(i, n + 1);
        const double phi = f.values(static_cast<Index>(gi), soff + u[static_cast<std::size_t>(n)]);
        out.values[static_cast<Index>(i)] = std::exp(sq * t) * phi / w.scaled[static_cast<Index>(i)];
    }
    return out;
}

DivergenceResidual divergence_residual(const BoxField& field, const Eigen::VectorXd& w) {
    const TensorGrid& g = field.grid;
    if (field.values.size() != static_cast<Index>(g.size()) || w.size() != field.values.size()) {
        throw std::invalid_argument("field and weight sizes must match the grid");
    }
    DivergenceResidual r;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.on_boundary(i)) continue;
        const auto ii = static_cast<Index>(i);
        double sum = 0.0, mag = 0.0;
        for (int a = 0; a < g.dim(); ++a) {
            const double h2 = g.axes[static_cast<std::size_t>(a)].spacing() * g.axes[static_cast<std::size_t>(a)].spacing();
            const auto st = static_cast<Index>(g.stride(a));
            const double up = 0.5 * (w[ii] * w[ii] + w[ii + st] * w[ii + st]) * (field.values[ii + st] - field.values[ii]) / h2;
            const double dn = 0.5 * (w[ii] * w[ii] + w[ii - st] * w[ii - st]) * (field.values[ii] - field.values[ii - st]) / h2;
            sum += up - dn;
            mag += std::abs(up) + std::abs(dn);
        }
        r.residual = std::max(r.residual, std::abs(sum));
        r.scale = std::max(r.scale, mag);
    }
    return r;
}

namespace {

void check_center(const TensorGrid& g, std::span<const double> center, double reach) {
    if (static_cast<int>(center.size()) != g.dim()) throw std::invalid_argument("center has the wrong dimension");
    for (int a = 0; a < g.dim(); ++a) {
        const auto& ax = g.axes[static_cast<std::size_t>(a)];
        const double tol = 1e-9 * ax.spacing();
        if (center[static_cast<std::size_t>(a)] - reach < ax.lo - tol || center[static_cast<std::size_t>(a)] + reach > ax.hi + tol) {
            throw std::invalid_argument("ball or cube leaves the field domain");
        }
    }
}

double distance(const TensorGrid& g, std::size_t idx, std::span<const double> center) {
    double d2 = 0.0;
    for (int a = 0; a < g.dim(); ++a) {
        const double dx = g.coordinate(idx, a) - center[static_cast<std::size_t>(a)];
        d2 += dx * dx;
    }
    return std::sqrt(d2);
}

double ball_sup(const BoxField& f, std::span<const double> center, double r) {
    double widen = 0.0;
    for (const auto& a : f.grid.axes) widen = std::max(widen, a.spacing());
    for (int attempt = 0; attempt < 2; ++attempt) {
        const double radius = r + attempt * widen;
        bool any = false;
        double sup = 0.0;
        for (std::size_t i = 0; i < f.grid.size(); ++i) {
            if (distance(f.grid, i, center) <= radius * (1.0 + 1e-12) + 1e-12) {
                any = true;
                sup = std::max(sup, std::abs(f.values[static_cast<Index>(i)]));
            }
        }
        if (any) return sup;
    }
    throw std::invalid_argument("ball holds no grid node");
}

}  // namespace

double doubling_index(const BoxField& field, std::span<const double> center, double r) {
    if (!(r > 0.0)) throw std::invalid_argument("radius must be positive");
    if (field.values.size() != static_cast<Index>(field.grid.size())) throw std::invalid_argument("field size mismatch");
    check_center(field.grid, center, 2.0 * r);
    const double inner = ball_sup(field, center, r);
    if (!(inner > 0.0)) throw std::runtime_error("field vanishes on the ball; the doubling index is undefined");
    return std::log(ball_sup(field, center, 2.0 * r) / inner);
}

GammaValue three_ball_gamma(double e_measure, double C1, double C2, int content_dim) {
    if (!(e_measure > 0.0)) throw std::invalid_argument("|E| must be positive");
    if (!(C1 > 0.0) || !(C2 > 0.0)) throw std::invalid_argument("C1 and C2 must be positive");
    if (content_dim < 1) throw std::invalid_argument("content dimension must be positive");
    const double q = std::ldexp(1.0, content_dim);
    auto formula = [&](double c1, bool& clamped) {
        const double l = std::log(c1 * q / e_measure);
        clamped = l <= 0.0;
        return clamped ? 1.0 : 1.0 / (l / C2 + 1.0);
    };
    GammaValue g;
    bool relaxed_clamped = false;
    g.gamma = formula(C1, g.clamped);
    g.gamma_relaxed = formula(2.0 * C1, relaxed_clamped);
    return g;
}

double ThreeBallData::c2_needed(double C1) const {
    if (sup_q == 0.0) return std::numeric_limits<double>::infinity();
    if (l2_e == 0.0) return 0.0;
    const double ratio = sup_q / sup_2q;
    const double q = std::sqrt(2.0 / e_measure) * l2_e / sup_2q;
    if (q >= ratio) return std::numeric_limits<double>::infinity();
    // q < ratio <= 1: need gamma <= ln(ratio) / ln(q).
    const double gmax = std::log(ratio) / std::log(q);
    const double l = std::log(C1 * std::ldexp(1.0, content_dim) / e_measure);
    if (!(gmax > 0.0) || !(l > 0.0)) return 0.0;
    return l / (1.0 / gmax - 1.0);
}

ThreeBallData three_ball_data(const BoxField& W, int s_axis, std::span<const double> center, double r,
                              const std::vector<std::uint8_t>& e_mask) {
    const TensorGrid& g = W.grid;
    const int d = g.dim();
    if (s_axis < 0 || s_axis >= d || d < 2) throw std::invalid_argument("s axis out of range");
    if (!(r > 0.0)) throw std::invalid_argument("cube half-side must be positive");
    if (W.values.size() != static_cast<Index>(g.size())) throw std::invalid_argument("field size mismatch");
    check_center(g, center, 2.0 * r);
    const int js = g.axes[static_cast<std::size_t>(s_axis)].find(center[static_cast<std::size_t>(s_axis)]);
    if (js < 0) throw std::invalid_argument("center s coordinate is not a grid node");

    std::size_t slice_size = 1;
    for (int a = 0; a < d; ++a) {
        if (a != s_axis) slice_size *= static_cast<std::size_t>(g.axes[static_cast<std::size_t>(a)].points);
    }
    if (e_mask.size() != slice_size) throw std::invalid_argument("E mask does not match the s slice");

    // |grad W|^2 in coordinates scaled by 1/r (Q has side 2).
    auto grad2 = [&](std::size_t i) {
        const auto u = g.unravel(i);
        const auto ii = static_cast<Index>(i);
        double sum = 0.0;
        for (int a = 0; a < d; ++a) {
            const auto& ax = g.axes[static_cast<std::size_t>(a)];
            const auto st = static_cast<Index>(g.stride(a));
            const int k = u[static_cast<std::size_t>(a)];
            double der;
            if (k == 0) {
                der = (W.values[ii + st] - W.values[ii]) / ax.spacing();
            } else if (k == ax.points - 1) {
                der = (W.values[ii] - W.values[ii - st]) / ax.spacing();
            } else {
                der = (W.values[ii + st] - W.values[ii - st]) / (2.0 * ax.spacing());
            }
            sum += der * der;
        }
        return sum * r * r;
    };
    auto in_cube = [&](std::size_t i, double half) {
        for (int a = 0; a < d; ++a) {
            const double tol = 1e-9 * g.axes[static_cast<std::size_t>(a)].spacing();
            if (std::abs(g.coordinate(i, a) - center[static_cast<std::size_t>(a)]) > half + tol) return false;
        }
        return true;
    };

    ThreeBallData out;
    out.content_dim = d - 1;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!in_cube(i, 2.0 * r)) continue;
        const double v = grad2(i);
        out.sup_2q = std::max(out.sup_2q, v);
        if (in_cube(i, r)) out.sup_q = std::max(out.sup_q, v);
    }
    out.sup_q = std::sqrt(out.sup_q);
    out.sup_2q = std::sqrt(out.sup_2q);

    double cell = 1.0;
    for (int a = 0; a < d; ++a) {
        if (a != s_axis) cell *= g.axes[static_cast<std::size_t>(a)].spacing() / r;
    }
    const std::size_t s_stride = g.stride(s_axis);
    const auto s_points = static_cast<std::size_t>(g.axes[static_cast<std::size_t>(s_axis)].points);
    std::size_t count = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < slice_size; ++k) {
        if (!e_mask[k]) continue;
        // Insert the s index into the slice index.
        const std::size_t low = k % s_stride, high = k / s_stride;
        const std::size_t i = low + s_stride * (static_cast<std::size_t>(js) + s_points * high);
        for (int a = 0; a < d; ++a) {
            if (a == s_axis) continue;
            const double tol = 1e-9 * g.axes[static_cast<std::size_t>(a)].spacing();
            if (std::abs(g.coordinate(i, a) - center[static_cast<std::size_t>(a)]) > 0.5 * r + tol) {
                throw std::invalid_argument("E must lie in Q/2");
            }
        }
        ++count;
        sum += grad2(i);
    }
    if (count == 0) throw std::invalid_argument("E is empty");
    out.e_measure = static_cast<double>(count) * cell;
    out.l2_e = std::sqrt(sum * cell);
    return out;
}

ThreeBallReport three_ball_check(const ThreeBallData& data, double C1, double C2) {
    ThreeBallReport r;
    r.data = data;
    r.gamma = three_ball_gamma(data.e_measure, C1, C2, data.content_dim);
    const double g = r.gamma.gamma;
    r.lhs = data.sup_q;
    r.rhs = std::pow(2.0 / data.e_measure, g / 2.0) * std::pow(data.l2_e, g) * std::pow(data.sup_2q, 1.0 - g);
    if (r.lhs == 0.0) {
        r.margin = std::numeric_limits<double>::infinity();
        r.holds = true;
        return r;
    }
    if (data.l2_e == 0.0) {
        r.degenerate = true;
        r.margin = -std::numeric_limits<double>::infinity();
        r.holds = false;
        return r;
    }
    r.margin = std::log(r.rhs) - std::log(r.lhs);
    r.holds = r.lhs <= r.rhs * (1.0 + 1e-12);
    return r;
}

ThreeBallProtocol three_ball_protocol(const BasisPtr& basis, const PotentialFn& potential, const Mask& sensor,
                                      const ThreeBallSetup& setup, int calibration_fields, int validation_fields,
                                      std::uint64_t seed) {
    const Grid& grid = basis->grid();
    const int n = grid.dim();
    if (sensor.size() != grid.size()) throw std::invalid_argument("sensor mask belongs to another grid");
    if (calibration_fields < 1 || validation_fields < 1) throw std::invalid_argument("protocol needs fields");
    if (!(setup.r > 0.0) || !(setup.safety > 0.0) || !(setup.C1 > 0.0)) {
        throw std::invalid_argument("r, safety and C1 must be positive");
    }

    // x axes: grid nodes covering [c - 2r, c + 2r], snapped outward.
    const Axis gaxis{-grid.half_width(), grid.half_width(), grid.points_per_axis()};
    const int reach = static_cast<int>(std::ceil(2.0 * setup.r / grid.spacing() - 1e-9));
    TensorGrid region;
    region.base_dim = n;
    std::array<int, 2> lo{0, 0};
    for (int a = 0; a < n; ++a) {
        const int c = gaxis.find(setup.center[static_cast<std::size_t>(a)]);
        if (c < 0) throw std::invalid_argument("protocol center must be a grid node");
        if (c - reach < 0 || c + reach > grid.points_per_axis() - 1) throw std::invalid_argument("2Q leaves the grid");
        lo[static_cast<std::size_t>(a)] = c - reach;
        region.axes.push_back({gaxis.node(c - reach), gaxis.node(c + reach), 2 * reach + 1});
    }
    const double s_max = 2.0 * setup.r;
    region.axes.push_back({-s_max, s_max, setup.s_points});
    region.axes.push_back({-s_max, s_max, setup.t_points});
    const Multiplier w = positive_multiplier(region, potential, setup.C0);

    // E on the s = 0 slice: sensor nodes with |x - c|, |t| <= r/2.
    TensorGrid slice = region;
    slice.axes.erase(slice.axes.begin() + n);
    std::vector<std::uint8_t> e(slice.size(), 0);
    for (std::size_t k = 0; k < slice.size(); ++k) {
        const auto u = slice.unravel(k);
        const std::size_t gi = grid.index(lo[0] + u[0], n > 1 ? lo[1] + u[1] : 0);
        bool inside = sensor[gi] != 0;
        for (int a = 0; a < slice.dim() && inside; ++a) {
            const double c = a < n ? setup.center[static_cast<std::size_t>(a)] : 0.0;
            inside = std::abs(slice.coordinate(k, a) - c) <= 0.5 * setup.r + 1e-9 * slice.axes[static_cast<std::size_t>(a)].spacing();
        }
        e[k] = inside;
    }

    std::vector<double> center(static_cast<std::size_t>(n + 2), 0.0);
    for (int a = 0; a < n; ++a) center[static_cast<std::size_t>(a)] = setup.center[static_cast<std::size_t>(a)];

    std::mt19937_64 rng(seed);
    auto sample = [&] {
        const auto f = lift(random_unit_element(basis, setup.lambda, rng), s_max, setup.s_points);
        return three_ball_data(divergence_form_field(f, w), n, center, setup.r, e);
    };

    ThreeBallProtocol out;
    out.C1 = setup.C1;
    double c2 = std::numeric_limits<double>::infinity();
    for (int k = 0; k < calibration_fields; ++k) {
        out.calibration.push_back(sample());
        c2 = std::min(c2, out.calibration.back().c2_needed(setup.C1));
    }
    if (!(c2 > 0.0)) throw std::runtime_error("a calibration field admits no C2 for this C1");
    out.C2 = std::isinf(c2) ? c2 : setup.safety * c2;
    for (int k = 0; k < validation_fields; ++k) {
        out.validation.push_back(three_ball_check(sample(), out.C1, out.C2));
        out.held += out.validation.back().holds;
    }
    return out;
}

}  // namespace schrodlab
