#include "schrodlab/domain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "schrodlab/hash.hpp"

namespace schrodlab {

Grid::Grid(int dim, double half_width, int n)
    : dim_(dim), half_width_(half_width), n_(n), spacing_(2.0 * half_width / (n - 1)) {}

Grid Grid::build(int dim, double half_width, int points_per_axis) {
    if (dim != 1 && dim != 2) {
        throw std::invalid_argument("unsupported dimension " + std::to_string(dim) +
                                    " (only 1 and 2 are supported)");
    }
    if (!(half_width > 0.0) || !std::isfinite(half_width)) {
        throw std::invalid_argument("half_width must be positive");
    }
    if (points_per_axis < 3) {
        throw std::invalid_argument("points_per_axis must be at least 3");
    }
    return Grid(dim, half_width, points_per_axis);
}

std::size_t Grid::size() const noexcept {
    return dim_ == 1 ? static_cast<std::size_t>(n_)
                     : static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
}

double Grid::cell_volume() const noexcept {
    return dim_ == 1 ? spacing_ : spacing_ * spacing_;
}

std::array<int, 2> Grid::unravel(std::size_t idx) const noexcept {
    const auto n = static_cast<std::size_t>(n_);
    return {static_cast<int>(idx % n), static_cast<int>(idx / n)};
}

Point Grid::point(std::size_t idx) const noexcept {
    const auto ij = unravel(idx);
    return {coordinate(ij[0]), dim_ == 2 ? coordinate(ij[1]) : 0.0};
}

double Grid::radius(std::size_t idx) const noexcept {
    const auto p = point(idx);
    return std::hypot(p[0], p[1]);
}

bool Grid::on_boundary(std::size_t idx) const noexcept {
    const auto ij = unravel(idx);
    const auto edge = [this](int i) { return i == 0 || i == n_ - 1; };
    return edge(ij[0]) || (dim_ == 2 && edge(ij[1]));
}

std::uint64_t Grid::hash() const noexcept {
    return Fnv1a{}.str("grid").u64(static_cast<std::uint64_t>(dim_)).f64(half_width_)
        .u64(static_cast<std::uint64_t>(n_)).value();
}

double quadrature_norm(const Grid& grid, const Field& values) {
    if (static_cast<std::size_t>(values.size()) != grid.size()) {
        throw std::invalid_argument("field size does not match grid");
    }
    return std::sqrt(values.squaredNorm() * grid.cell_volume());
}

double quadrature_norm(const Grid& grid, const Field& values, const Mask& mask) {
    if (static_cast<std::size_t>(values.size()) != grid.size() || mask.size() != grid.size()) {
        throw std::invalid_argument("field or mask size does not match grid");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) sum += values[static_cast<Eigen::Index>(i)] * values[static_cast<Eigen::Index>(i)];
    }
    return std::sqrt(sum * grid.cell_volume());
}

namespace {

double axis_derivative(const Grid& grid, const Field& f, int i, int j, int axis) {
    const int n = grid.points_per_axis();
    const double h = grid.spacing();
    const int pos = axis == 0 ? i : j;
    auto at = [&](int p) {
        return axis == 0 ? f[static_cast<Eigen::Index>(grid.index(p, j))]
                         : f[static_cast<Eigen::Index>(grid.index(i, p))];
    };
    if (pos == 0) return (at(1) - at(0)) / h;
    if (pos == n - 1) return (at(n - 1) - at(n - 2)) / h;
    return (at(pos + 1) - at(pos - 1)) / (2.0 * h);
}

Field gradient_sq(const Grid& grid, const Field& f) {
    Field g(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        const auto ij = grid.unravel(idx);
        double s = 0.0;
        for (int axis = 0; axis < grid.dim(); ++axis) {
            const double d = axis_derivative(grid, f, ij[0], ij[1], axis);
            s += d * d;
        }
        g[static_cast<Eigen::Index>(idx)] = s;
    }
    return g;
}

}  // namespace

Field h1_density(const Grid& grid, const Field& values) {
    if (static_cast<std::size_t>(values.size()) != grid.size()) {
        throw std::invalid_argument("field size does not match grid");
    }
    Field d = gradient_sq(grid, values);
    d += values.cwiseAbs2();
    return d;
}

double Cube::index_norm(int dim) const noexcept {
    return dim == 1 ? std::abs(static_cast<double>(j[0])) : std::hypot(j[0], j[1]);
}

CubeLattice cube_lattice(const Grid& grid, double side) {
    const double a = grid.half_width();
    const double h = grid.spacing();
    if (!(side > 0.0) || !std::isfinite(side)) throw std::invalid_argument("cube side must be positive");
    const int n = grid.points_per_axis();
    const int cubes_per_axis = std::max(1, static_cast<int>(std::ceil(2.0 * a / side - 1e-9)));
    const int j_offset = static_cast<int>(std::floor(a / side + 1e-9));

    CubeLattice lattice;
    lattice.side_ = side;

    // Face m sits at -a + m*side, snapped to the nearest grid plane. The last
    // face is the box face itself.
    std::vector<int> face(static_cast<std::size_t>(cubes_per_axis) + 1);
    for (int m = 0; m <= cubes_per_axis; ++m) {
        if (m == cubes_per_axis) {
            face[static_cast<std::size_t>(m)] = n - 1;
            break;
        }
        const double exact = m * side / h;
        const int snapped = std::clamp(static_cast<int>(std::lround(exact)), 0, n - 1);
        lattice.max_snap_offset_ = std::max(lattice.max_snap_offset_, std::abs(exact - snapped) * h);
        face[static_cast<std::size_t>(m)] = snapped;
    }
    for (int m = 0; m < cubes_per_axis; ++m) {
        if (face[static_cast<std::size_t>(m) + 1] <= face[static_cast<std::size_t>(m)]) {
            throw std::invalid_argument("cube side is smaller than the grid spacing");
        }
    }
    if (lattice.max_snap_offset_ < 1e-9 * h) lattice.max_snap_offset_ = 0.0;
    const bool remainder = std::abs(cubes_per_axis * side - 2.0 * a) > 1e-9 * side;

    // Axis position -> cube slot along that axis.
    std::vector<int> slot(static_cast<std::size_t>(n));
    for (int m = 0; m < cubes_per_axis; ++m) {
        const int hi = (m + 1 == cubes_per_axis) ? n : face[static_cast<std::size_t>(m) + 1];
        for (int i = face[static_cast<std::size_t>(m)]; i < hi; ++i) slot[static_cast<std::size_t>(i)] = m;
    }

    const int dim = grid.dim();
    const int per_axis_y = dim == 2 ? cubes_per_axis : 1;
    for (int my = 0; my < per_axis_y; ++my) {
        for (int mx = 0; mx < cubes_per_axis; ++mx) {
            Cube c;
            c.j = {mx - j_offset, dim == 2 ? my - j_offset : 0};
            const int ms[2] = {mx, my};
            for (int axis = 0; axis < dim; ++axis) {
                const int m = ms[axis];
                c.lower[static_cast<std::size_t>(axis)] = grid.coordinate(face[static_cast<std::size_t>(m)]);
                c.upper[static_cast<std::size_t>(axis)] =
                    (m + 1 == cubes_per_axis && remainder)
                        ? grid.coordinate(face[static_cast<std::size_t>(m)]) + side
                        : grid.coordinate(face[static_cast<std::size_t>(m) + 1]);
                c.center[static_cast<std::size_t>(axis)] =
                    0.5 * (c.lower[static_cast<std::size_t>(axis)] + c.upper[static_cast<std::size_t>(axis)]);
                if (m + 1 == cubes_per_axis && remainder) c.partial = true;
            }
            lattice.cubes_.push_back(std::move(c));
        }
    }

    lattice.owner_.assign(grid.size(), 0);
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        const auto ij = grid.unravel(idx);
        const int sx = slot[static_cast<std::size_t>(ij[0])];
        const int sy = dim == 2 ? slot[static_cast<std::size_t>(ij[1])] : 0;
        const int owner = sx + sy * cubes_per_axis;
        lattice.owner_[idx] = owner;
        lattice.cubes_[static_cast<std::size_t>(owner)].points.push_back(idx);
    }
    return lattice;
}

std::string to_string(PotentialKind kind) {
    switch (kind) {
        case PotentialKind::polynomial_radial: return "polynomial_radial";
        case PotentialKind::polynomial_aniso: return "polynomial_aniso";
        case PotentialKind::bounded_well: return "bounded_well";
        case PotentialKind::tabulated: return "tabulated";
    }
    return "unknown";
}

PotentialKind potential_kind_from_string(const std::string& name) {
    if (name == "polynomial_radial") return PotentialKind::polynomial_radial;
    if (name == "polynomial_aniso") return PotentialKind::polynomial_aniso;
    if (name == "bounded_well") return PotentialKind::bounded_well;
    if (name == "tabulated") return PotentialKind::tabulated;
    throw std::invalid_argument("unknown potential kind '" + name + "'");
}

Potential Potential::polynomial_radial(double beta1) {
    Potential p;
    p.kind = PotentialKind::polynomial_radial;
    p.beta1 = beta1;
    p.beta2 = beta1;
    p.c1 = 1.0;
    p.c2 = beta1 + 1.0;
    p.C0 = 0.0;
    p.R = 1.0;
    return p;
}

Potential Potential::bounded_well(double depth, double width) {
    Potential p;
    p.kind = PotentialKind::bounded_well;
    p.depth = depth;
    p.width = width;
    p.C0 = std::abs(depth);
    return p;
}

AssumptionClass Potential::default_assumption() const noexcept {
    return kind == PotentialKind::bounded_well ? AssumptionClass::bounded : AssumptionClass::growth;
}

double Potential::at(const Point& x, int dim) const {
    switch (kind) {
        case PotentialKind::polynomial_radial: {
            const double r = dim == 1 ? std::abs(x[0]) : std::hypot(x[0], x[1]);
            return std::pow(r, beta1);
        }
        case PotentialKind::polynomial_aniso: {
            double v = 0.0;
            for (int axis = 0; axis < dim; ++axis) {
                const double w = static_cast<std::size_t>(axis) < coefficients.size()
                                     ? coefficients[static_cast<std::size_t>(axis)]
                                     : 1.0;
                v += w * std::pow(std::abs(x[static_cast<std::size_t>(axis)]), beta1);
            }
            return v;
        }
        case PotentialKind::bounded_well: {
            if (depth == 0.0) return 0.0;
            const double r = dim == 1 ? std::abs(x[0]) : std::hypot(x[0], x[1]);
            const double c = std::cosh(r / width);
            return -depth / (c * c);
        }
        case PotentialKind::tabulated:
            throw std::invalid_argument("tabulated potential has no pointwise evaluation");
    }
    return 0.0;
}

std::uint64_t Potential::hash() const noexcept {
    Fnv1a h;
    h.str("potential").str(to_string(kind)).f64(beta1).f64(beta2).f64(c1).f64(c2).f64(C0).f64(R);
    switch (kind) {
        case PotentialKind::polynomial_aniso: h.f64s(coefficients); break;
        case PotentialKind::bounded_well: h.f64(depth).f64(width); break;
        case PotentialKind::tabulated: h.f64s(table); break;
        default: break;
    }
    return h.value();
}

Field eval_potential(const Potential& potential, const Grid& grid) {
    Field v(static_cast<Eigen::Index>(grid.size()));
    if (potential.kind == PotentialKind::tabulated) {
        if (potential.table.size() != grid.size()) {
            throw std::invalid_argument("tabulated potential has " + std::to_string(potential.table.size()) +
                                        " values, grid has " + std::to_string(grid.size()) + " nodes");
        }
        for (std::size_t i = 0; i < grid.size(); ++i) v[static_cast<Eigen::Index>(i)] = potential.table[i];
        return v;
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = potential.at(grid.point(i), grid.dim());
    }
    return v;
}

AssumptionReport verify_assumption(const Potential& potential, const Grid& grid) {
    return verify_assumption(potential, grid, potential.default_assumption());
}

AssumptionReport verify_assumption(const Potential& potential, const Grid& grid,
                                   AssumptionClass assumption) {
    const Field v = eval_potential(potential, grid);
    AssumptionReport report;
    report.assumption = assumption;
    report.points_checked = grid.size();

    auto record = [&](std::size_t idx, double lhs, double rhs, const char* check) {
        // Relative slack so that equality cases (V = |x|^beta1 against the
        // same expression) do not fail on rounding.
        const double tol = 1e-12 * std::max({1.0, std::abs(lhs), std::abs(rhs)});
        if (lhs <= rhs + tol) return;
        report.pass = false;
        ++report.violations;
        if (!report.worst || lhs - rhs > report.worst->lhs - report.worst->rhs) {
            report.worst = AssumptionViolation{idx, grid.point(idx), lhs, rhs, check};
        }
    };

    if (assumption == AssumptionClass::bounded) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            record(i, std::abs(v[static_cast<Eigen::Index>(i)]), potential.C0, "sup");
        }
        return report;
    }

    const Field dv_sq = gradient_sq(grid, v);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double r = grid.radius(i);
        const double vi = v[static_cast<Eigen::Index>(i)];
        record(i, potential.c1 * std::pow(r, potential.beta1) - potential.C0, vi, "growth");
        const double bound = potential.c2 * std::pow(r + 1.0, potential.beta2);
        const double dv = r >= potential.R ? std::sqrt(dv_sq[static_cast<Eigen::Index>(i)]) : 0.0;
        record(i, std::abs(vi) + dv, bound, "bound");
    }
    return report;
}

}  // namespace schrodlab
