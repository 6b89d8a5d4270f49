#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "schrodlab/domain.hpp"

namespace schrodlab {

enum class SensorKind { decaying_balls, density_random, thick_periodic };
enum class ThickPattern {
    left_slab,    // slab of width delta*L at the low axis-0 edge of every cube
    alternating,  // low-edge slab when j0 + j1 is even, high-edge slab when odd
};

std::string to_string(SensorKind kind);
std::string to_string(ThickPattern pattern);
SensorKind sensor_kind_from_string(const std::string& name);
ThickPattern thick_pattern_from_string(const std::string& name);

/// Sensor region as a mask on a grid, plus the parameters that generated it.
struct SensorSet {
    Grid grid;
    Mask mask;
    SensorKind kind = SensorKind::thick_periodic;
    double delta = 0.5;
    double sigma = 0.0;
    double side = 1.0;
    std::optional<std::uint64_t> seed;
    ThickPattern pattern = ThickPattern::left_slab;
    /// Cubes where the rule could not be met literally: a ball smaller than
    /// the grid (nearest node used instead) or a density above 1 (clamped).
    std::vector<std::array<int, 2>> flagged_cubes;

    std::size_t count() const;
    /// Discrete measure: node count times spacing^dim.
    double measure() const { return static_cast<double>(count()) * grid.cell_volume(); }
};

/// 1 + |j|^sigma with |j| the Euclidean norm of the cube index and 0^sigma
/// taken as 0 (so the cube at the origin always has exponent 1).
double density_exponent(const Cube& cube, int dim, double sigma);

/// Ball of radius delta^(1 + |j|^sigma) * L at every cube center, restricted
/// to the cube. Nodes count as inside when |x - center| <= radius.
SensorSet decaying_ball_set(const Grid& grid, const CubeLattice& lattice, double delta, double sigma);

/// In every cube, the first ceil(delta^(1 + |j|^sigma) * cells) nodes of a
/// seeded random permutation of the cube's nodes. The permutation depends
/// only on (seed, j), so sets built with smaller delta are nested inside
/// sets with larger delta.
SensorSet density_random_set(const Grid& grid, const CubeLattice& lattice, double delta, double sigma,
                             std::uint64_t seed);

/// The same slab of relative width >= delta in every cube (alternating
/// mirrors it in odd cubes). Slabs are ceil(delta * n) node planes wide,
/// with n the cube's own node-plane count along axis 0, so every cube meets
/// delta even when it also owns the box face.
SensorSet thick_periodic_set(const Grid& grid, const CubeLattice& lattice, double delta, ThickPattern pattern);

struct CubeDensity {
    std::array<int, 2> j{0, 0};
    std::size_t cells = 0;
    std::size_t selected = 0;
    double measured = 0.0;
    double required = 0.0;
    bool pass = false;
};

struct DensityReport {
    std::vector<CubeDensity> cubes;
    bool pass = true;
    /// Largest delta' such that measured_j >= delta'^(1 + |j|^sigma) in every
    /// cube (exponent 1 for thick sets).
    double effective_delta = 0.0;
};

/// Per-cube measured density against the rule of the sensor kind. Required
/// density is delta^(1 + |j|^sigma) for random sets and delta for thick sets.
/// Ball sets are checked against their effective delta (see
/// DensityReport::effective_delta), which is what the report is for. A cube
/// passes when measured >= required - 1/cells.
DensityReport verify_density(const SensorSet& sensor, const CubeLattice& lattice);

/// Run-length text format: a header of `key value` lines followed by the
/// alternating run lengths of 0s and 1s in grid order, starting with 0s.
void write_mask_rle(std::ostream& out, const SensorSet& sensor);
/// Reads a mask written by write_mask_rle. Throws std::runtime_error on a
/// malformed file or when the stored grid hash differs from `grid`.
SensorSet read_mask_rle(std::istream& in, const Grid& grid);

}  // namespace schrodlab
