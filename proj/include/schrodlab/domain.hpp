#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace schrodlab {

/// Values sampled at every node of a Grid, x-index fastest.
using Field = Eigen::VectorXd;

/// Boolean indicator on the nodes of a Grid (0 or 1 per node).
using Mask = std::vector<std::uint8_t>;

using Point = std::array<double, 2>;

/// Uniform tensor grid on the symmetric box [-half_width, half_width]^dim,
/// dim in {1, 2}. Node coordinates are -half_width + i * spacing.
class Grid {
public:
    /// 1D three-node grid on [-1, 1]; use build() for anything real.
    Grid() = default;
    static Grid build(int dim, double half_width, int points_per_axis);

    int dim() const noexcept { return dim_; }
    double half_width() const noexcept { return half_width_; }
    int points_per_axis() const noexcept { return n_; }
    double spacing() const noexcept { return spacing_; }
    std::size_t size() const noexcept;
    /// Quadrature weight of each node, spacing^dim.
    double cell_volume() const noexcept;

    double coordinate(int i) const noexcept { return -half_width_ + i * spacing_; }
    std::size_t index(int i, int j = 0) const noexcept {
        return static_cast<std::size_t>(i) + static_cast<std::size_t>(j) * static_cast<std::size_t>(n_);
    }
    std::array<int, 2> unravel(std::size_t idx) const noexcept;
    Point point(std::size_t idx) const noexcept;
    double radius(std::size_t idx) const noexcept;
    bool on_boundary(std::size_t idx) const noexcept;

    /// Hash of (dim, half_width, points_per_axis); identifies the grid in
    /// cache and mask files.
    std::uint64_t hash() const noexcept;

    bool operator==(const Grid&) const = default;

private:
    Grid(int dim, double half_width, int n);

    int dim_ = 1;
    double half_width_ = 1.0;
    int n_ = 3;
    double spacing_ = 1.0;
};

/// sqrt(sum over masked nodes of values^2 * spacing^dim). An all-false mask
/// gives 0.
double quadrature_norm(const Grid& grid, const Field& values);
double quadrature_norm(const Grid& grid, const Field& values, const Mask& mask);

/// Centered-difference gradient magnitude squared plus value squared at each
/// node (one-sided differences on the box faces). Summing it against the
/// quadrature weight gives the discrete H^1 norm squared.
Field h1_density(const Grid& grid, const Field& values);

/// Cube Lambda_L(j) of the lattice, with faces snapped to grid planes.
struct Cube {
    std::array<int, 2> j{0, 0};
    Point lower{0.0, 0.0};
    Point upper{0.0, 0.0};
    Point center{0.0, 0.0};
    /// Grid nodes owned by the cube (half-open on the upper faces, except
    /// that the last cube along an axis also owns the box face).
    std::vector<std::size_t> points;
    /// True when the cube sticks out of the box (side does not divide 2a, or
    /// side exceeds the box).
    bool partial = false;

    /// Euclidean norm of the integer index j.
    double index_norm(int dim) const noexcept;
};

/// Partition of the grid box into cubes of side L.
///
/// The lattice is anchored at the lower box corner: cube faces sit at
/// -half_width + m*L, and the cube whose lower face is at m*L - half_width
/// gets index j = m - floor(half_width / L). When half_width is a multiple
/// of L this makes cube j equal to [jL, (j+1)L)^dim, i.e. the centered cubes
/// j + (-L/2, L/2)^dim shifted by L/2 so that the box is tiled exactly. For
/// [-2, 2] with L = 1 the indices are {-2, -1, 0, 1}.
class CubeLattice {
public:
    double side() const noexcept { return side_; }
    const std::vector<Cube>& cubes() const noexcept { return cubes_; }
    /// Cube position in cubes() for every grid node.
    const std::vector<int>& owner() const noexcept { return owner_; }
    /// Largest distance between a requested face position and the grid
    /// plane it was snapped to.
    double max_snap_offset() const noexcept { return max_snap_offset_; }
    bool snapped() const noexcept { return max_snap_offset_ > 0.0; }

    friend CubeLattice cube_lattice(const Grid& grid, double side);

private:
    double side_ = 1.0;
    std::vector<Cube> cubes_;
    std::vector<int> owner_;
    double max_snap_offset_ = 0.0;
};

CubeLattice cube_lattice(const Grid& grid, double side);

enum class PotentialKind { polynomial_radial, polynomial_aniso, bounded_well, tabulated };

enum class AssumptionClass {
    growth,   // polynomial growth with gradient bound
    bounded,  // bounded, vanishing at infinity
};

std::string to_string(PotentialKind kind);
PotentialKind potential_kind_from_string(const std::string& name);

/// Potential V(x) together with the constants used by the growth and
/// boundedness checks.
///
/// - polynomial_radial: V = |x|^beta1
/// - polynomial_aniso:  V = sum_i coefficients[i] * |x_i|^beta1
/// - bounded_well:      V = -depth / cosh^2(|x| / width)  (depth 0 gives V = 0)
/// - tabulated:         V given at every grid node
struct Potential {
    PotentialKind kind = PotentialKind::polynomial_radial;
    double beta1 = 2.0;
    double beta2 = 2.0;
    double c1 = 1.0;
    double c2 = 3.0;
    double C0 = 0.0;
    /// Radius of the ball around the origin where V may fail to be Lipschitz.
    double R = 1.0;

    std::vector<double> coefficients;  // polynomial_aniso, one per axis
    double depth = 2.0;                // bounded_well
    double width = 1.0;                // bounded_well
    std::vector<double> table;         // tabulated, one per grid node

    static Potential polynomial_radial(double beta1);
    static Potential bounded_well(double depth, double width = 1.0);
    static Potential zero() { return bounded_well(0.0); }

    AssumptionClass default_assumption() const noexcept;
    /// Value at an arbitrary point. Not available for tabulated potentials.
    double at(const Point& x, int dim) const;
    std::uint64_t hash() const noexcept;
};

/// V sampled at every grid node.
Field eval_potential(const Potential& potential, const Grid& grid);

struct AssumptionViolation {
    std::size_t index = 0;
    Point x{0.0, 0.0};
    double lhs = 0.0;
    double rhs = 0.0;
    std::string check;  // "growth", "bound" or "sup"
};

struct AssumptionReport {
    AssumptionClass assumption = AssumptionClass::growth;
    bool pass = true;
    std::size_t points_checked = 0;
    std::size_t violations = 0;
    /// Largest lhs - rhs over all failing nodes.
    std::optional<AssumptionViolation> worst;
};

/// Per-node check of the potential constants.
///
/// growth:  c1|x|^beta1 - C0 <= V(x) everywhere, and
///          |V| + |DV| <= c2 (|x|+1)^beta2 for |x| >= R (|DV| by centered
///          differences); inside the R-ball only |V| is bounded.
/// bounded: sup |V| <= C0.
AssumptionReport verify_assumption(const Potential& potential, const Grid& grid);
AssumptionReport verify_assumption(const Potential& potential, const Grid& grid,
                                   AssumptionClass assumption);

}  // namespace schrodlab
