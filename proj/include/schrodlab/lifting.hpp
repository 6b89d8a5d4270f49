#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "schrodlab/schrodinger.hpp"

namespace schrodlab {

/// sinh(sqrt(l) s)/sqrt(l) for l > 0, s for l = 0, sin(sqrt(-l) s)/sqrt(-l)
/// for l < 0. A Taylor series takes over for |l| < 1e-8.
double s_profile(double lambda, double s);
/// Derivative of s_profile in s: cosh, 1 or cos.
double s_profile_derivative(double lambda, double s);

/// Uniform axis with nodes lo + i * (hi - lo) / (points - 1).
struct Axis {
    double lo = -1.0;
    double hi = 1.0;
    int points = 3;

    double spacing() const noexcept { return (hi - lo) / (points - 1); }
    double node(int i) const noexcept { return lo + i * spacing(); }
    /// Index of the node at x, or -1 when x is not within 1e-6 spacings of one.
    int find(double x) const noexcept;
};

/// Tensor-product grid, axis 0 fastest. The first base_dim axes are the
/// spatial x axes; any further axes are ghost variables (s, then t).
struct TensorGrid {
    std::vector<Axis> axes;
    int base_dim = 1;

    int dim() const noexcept { return static_cast<int>(axes.size()); }
    std::size_t size() const noexcept;
    std::size_t stride(int axis) const noexcept;
    std::vector<int> unravel(std::size_t idx) const;
    double coordinate(std::size_t idx, int axis) const;
    bool on_boundary(std::size_t idx) const;
    /// Product of all spacings.
    double cell_volume() const noexcept;
    /// Throws unless every axis has at least 3 points and lo < hi.
    void validate() const;
};

/// The basis grid as a TensorGrid with base_dim = dim.
TensorGrid tensor_grid(const Grid& grid);

struct BoxField {
    TensorGrid grid;
    Eigen::VectorXd values;
};

/// Phi(x, s) = sum_k alpha_k phi_k(x) S_{lambda_k}(s) on grid x s-axis.
struct LiftedField {
    SpectralElement base;
    Axis s_axis;
    /// Row = grid node, column = s node.
    Eigen::MatrixXd values;
    /// Half-width used by the norm comparisons; s_max / 4 by default.
    double rho = 0.0;

    double s_spacing() const noexcept { return s_axis.spacing(); }
    Eigen::Index s_zero() const noexcept { return (s_axis.points - 1) / 2; }
    /// Eigenvalue of the last nonzero coefficient. Throws for the zero element.
    double top_eigenvalue() const;
    BoxField as_box() const;
};

/// s_points must be odd so that s = 0 is a node.
LiftedField lift(const SpectralElement& element, double s_max, int s_points);

/// Largest |(-Delta_{x,s} + V) Phi| over interior nodes, with the discrete
/// s-Laplacian. The x part is applied through the eigenvalues, so only the
/// s discretization contributes.
double lift_residual(const LiftedField& lifted);

/// ||Phi||^2 over {|x| <= radius} x [-half, half], with node sums in x and
/// the trapezoid rule in s. half must be a multiple of the s spacing.
double lifted_l2_norm2(const LiftedField& lifted, double half,
                       double radius = std::numeric_limits<double>::infinity());
/// Same region; adds |grad_x Phi|^2 (h1_density) and |d_s Phi|^2 (centered
/// differences, one-sided at the s ends).
double lifted_h1_norm2(const LiftedField& lifted, double half,
                       double radius = std::numeric_limits<double>::infinity());

/// 2 rho ||phi||^2 <= ||Phi||^2_{H^1(R^n x (-rho, rho))}
///                 <= 2 rho (1 + rho^2 (1 + lambda) / 3) e^{2 rho sqrt(lambda)} ||phi||^2
struct SandwichReport {
    double rho = 0.0;
    double lambda = 0.0;
    double lower = 0.0;
    double middle = 0.0;
    double upper = 0.0;

    double lower_slack() const noexcept { return (middle - lower) / lower; }
    double upper_slack() const noexcept { return (upper - middle) / upper; }
    bool holds(double tol = 1e-6) const noexcept { return lower_slack() >= -tol && upper_slack() >= -tol; }
};

/// lambda defaults to top_eigenvalue() and may not be smaller than it.
SandwichReport sandwich_check(const LiftedField& lifted, double rho);
SandwichReport sandwich_check(const LiftedField& lifted, double rho, double lambda);

/// r1 = ||Phi||^2_{H^1(R^n x (-rho/2, rho/2))} / ||Phi||^2_{L^2(B_{2r} x (-rho, rho))}
/// r2 = ||Phi||^2_{H^1(R^n x (-4 rho, 4 rho))} / ||Phi||^2_{H^1(B_r x (-rho/2, rho/2))}
/// with r the decay radius at threshold 1/2.
struct DoublingReport {
    double lambda = 0.0;
    double rho = 0.0;
    double decay_radius = 0.0;
    double r1 = 0.0;
    double r2 = 0.0;

    double c1_needed() const noexcept;  // r1 / (1 + lambda)
    double c2_needed() const noexcept;  // r2 / e^{9 rho sqrt(lambda)}
};

/// Needs 4 rho <= s_max and rho/2 on the s grid.
DoublingReport doubling_checks(const LiftedField& lifted, double rho, double decay_r);
DoublingReport doubling_checks(const LiftedField& lifted, double rho, double decay_r, double lambda);

/// Constants fitted on a calibration sample, then checked on fresh samples.
struct DoublingCalibration {
    std::vector<double> lambdas;
    std::vector<double> decay_radii;
    /// Largest needed constant per lambda over the calibration sample.
    std::vector<double> c1_by_lambda;
    std::vector<double> c2_by_lambda;
    double c1 = 0.0;  // frozen: max of c1_by_lambda
    double c2 = 0.0;
    /// Largest needed constant over the validation sample, relative to the
    /// frozen one.
    double validation_c1_ratio = 0.0;
    double validation_c2_ratio = 0.0;

    /// Validation stays within `factor` of the frozen constants.
    bool stable(double factor = 2.0) const noexcept {
        return validation_c1_ratio <= factor && validation_c2_ratio <= factor;
    }
};

DoublingCalibration calibrate_doubling(const BasisPtr& basis, const std::vector<double>& lambdas, double rho,
                                       int calibration_samples, int validation_samples, std::uint64_t seed,
                                       int s_points = 161);

/// V as a function of the base point.
using PotentialFn = std::function<double(const Point&)>;
PotentialFn potential_fn(const Potential& potential, int dim);

/// Discrete solution of -Delta w + (V + C0) w = 0 with w = w2 on the region
/// boundary, w2 = e^{40 n sqrt(2 C0)}, n = base_dim. Stored as w / w2 so that
/// large C0 does not overflow.
struct Multiplier {
    TensorGrid region;
    Eigen::VectorXd scaled;  // w / w2, one per region node
    double C0 = 0.0;
    double log_w2 = 0.0;

    /// ln w at node i.
    double log_w(std::size_t i) const { return std::log(scaled[static_cast<Eigen::Index>(i)]) + log_w2; }
    /// e^{-40 n sqrt(2 C0)} <= w <= e^{40 n sqrt(2 C0)} at every node.
    bool within_bounds() const;
};

/// Throws std::invalid_argument when V + C0 < 1 somewhere, ConvergenceError
/// when the linear solve fails, and std::runtime_error naming the worst node
/// when the bounds are violated.
Multiplier positive_multiplier(const TensorGrid& region, const PotentialFn& potential, double C0);
Multiplier positive_multiplier(const TensorGrid& region, const Potential& potential, double C0);

/// Phibar(x, s, t) = e^{sqrt(C0) t} Phi(x, s) / w(x, s, t), computed with the
/// scaled multiplier (w / w2; the equation is invariant under scaling w).
/// The multiplier region must have base_dim + 2 axes whose x and s nodes
/// are nodes of the lifted field.
BoxField divergence_form_field(const LiftedField& lifted, const Multiplier& multiplier);

/// Interior residual of div(w^2 grad u) with face weights (w_i^2 + w_j^2)/2.
/// scale is the largest sum of absolute face-flux terms at a node, so
/// residual / scale measures the cancellation error.
struct DivergenceResidual {
    double residual = 0.0;
    double scale = 0.0;

    double relative() const noexcept { return scale > 0.0 ? residual / scale : 0.0; }
};

DivergenceResidual divergence_residual(const BoxField& field, const Eigen::VectorXd& w);

/// ln(sup_{2B} |u| / sup_B |u|) over the grid nodes in each closed ball. A
/// ball holding no node is widened by one cell. Throws when 2B leaves the
/// grid or u vanishes on B.
double doubling_index(const BoxField& field, std::span<const double> center, double r);

struct GammaValue {
    double gamma = 1.0;
    /// Same formula with 2 C1.
    double gamma_relaxed = 1.0;
    /// The formula gave a value >= 1 and was clamped.
    bool clamped = false;
};

/// gamma = 1 / ((1/C2) ln(C1 |Q| / |E|) + 1), |Q| = 2^content_dim.
GammaValue three_ball_gamma(double e_measure, double C1, double C2, int content_dim);

/// Constant-free part of the three-ball inequality
///   ||grad W||_{L^inf(Q)} <= (2/|E|)^{g/2} ||grad W||^g_{L^2(E)} ||grad W||^{1-g}_{L^inf(2Q)}
/// in coordinates rescaled so that Q has side 2.
struct ThreeBallData {
    double sup_q = 0.0;   // ||grad W||_{L^inf(Q)}
    double sup_2q = 0.0;  // ||grad W||_{L^inf(2Q)}
    double l2_e = 0.0;    // ||grad W||_{L^2(E)}
    double e_measure = 0.0;
    int content_dim = 0;  // dimension of the slice holding E

    /// Largest C2 for which the inequality holds with the given C1; +inf
    /// when it holds for every gamma, 0 when no C2 works.
    double c2_needed(double C1) const;
};

/// W on a tensor grid; E is a mask on the slice {axis s_axis = center} (the
/// grid without that axis, same ordering) and must lie in Q/2. Q is the cube
/// of half-side r around center; 2Q must lie in the grid.
ThreeBallData three_ball_data(const BoxField& W, int s_axis, std::span<const double> center, double r,
                              const std::vector<std::uint8_t>& e_mask);

struct ThreeBallReport {
    ThreeBallData data;
    GammaValue gamma;
    double lhs = 0.0;
    double rhs = 0.0;
    /// ln(rhs / lhs); -inf when grad W vanishes on E.
    double margin = 0.0;
    bool degenerate = false;
    bool holds = false;
};

ThreeBallReport three_ball_check(const ThreeBallData& data, double C1, double C2);

/// Random divergence-form fields Phibar built from unit elements of
/// Ran P_lambda around a base point, with E = sensor x t-range on the s = 0
/// slice inside Q/2.
struct ThreeBallSetup {
    double lambda = 30.0;
    double C0 = 2.0;
    Point center{0.0, 0.0};
    double r = 0.2;      // half-side of Q; the box is 2Q
    int s_points = 41;   // across the s range of 2Q
    int t_points = 33;
    double C1 = 1.0;     // fixed; C2 is calibrated
    /// Frozen C2 = safety * smallest needed C2 over the calibration fields.
    double safety = 0.5;
};

struct ThreeBallProtocol {
    std::vector<ThreeBallData> calibration;
    std::vector<ThreeBallReport> validation;
    double C1 = 0.0;
    double C2 = 0.0;
    int held = 0;

    double hold_rate() const noexcept {
        return validation.empty() ? 0.0 : static_cast<double>(held) / static_cast<double>(validation.size());
    }
};

ThreeBallProtocol three_ball_protocol(const BasisPtr& basis, const PotentialFn& potential, const Mask& sensor,
                                      const ThreeBallSetup& setup, int calibration_fields, int validation_fields,
                                      std::uint64_t seed);

}  // namespace schrodlab
