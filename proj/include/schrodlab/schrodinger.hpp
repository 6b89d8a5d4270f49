#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "schrodlab/domain.hpp"

namespace schrodlab {

/// H = -Laplacian + V on the interior nodes of a grid, Dirichlet on the box
/// faces. Unknowns are the interior nodes in grid order.
struct DiscreteOperator {
    Grid grid;
    Field potential;                       // V at every grid node
    std::uint64_t potential_hash = 0;
    std::vector<std::size_t> interior;     // grid index of each unknown
    std::vector<int> unknown;              // unknown index of each grid node, -1 on the boundary
    Eigen::SparseMatrix<double> matrix;    // lower and upper triangle stored

    Eigen::Index unknowns() const noexcept { return matrix.rows(); }
    double min_potential() const { return potential.minCoeff(); }
    /// Gershgorin lower bound on the spectrum of `matrix`.
    double gershgorin_lower() const;

    /// Restrict a grid field to the unknowns, and extend back with zeros on
    /// the boundary.
    Eigen::VectorXd restrict(const Field& f) const;
    Field extend(const Eigen::VectorXd& u) const;
    /// H applied to a grid field; boundary values are treated as zero and
    /// the result is zero on the boundary.
    Field apply(const Field& f) const;
};

DiscreteOperator assemble(const Grid& grid, const Potential& potential);
DiscreteOperator assemble(const Grid& grid, const Field& potential_values, std::uint64_t potential_hash);

struct EigenRequest {
    enum class Kind { lambda_max, count };
    Kind kind = Kind::lambda_max;
    double value = 0.0;

    static EigenRequest below(double lambda_max) { return {Kind::lambda_max, lambda_max}; }
    static EigenRequest lowest(int count) { return {Kind::count, static_cast<double>(count)}; }
    bool operator==(const EigenRequest&) const = default;
};

enum class EigenMethod {
    automatic,  // tridiagonal in 1D, dense up to dense_limit unknowns, else Lanczos
    dense,
    lanczos,
};

struct EigenOptions {
    EigenMethod method = EigenMethod::automatic;
    Eigen::Index dense_limit = 4096;
    /// Ritz convergence tolerance, relative to the Ritz value of the
    /// shift-inverted operator.
    double ritz_tol = 1e-11;
    int max_restarts = 64;
    Eigen::Index max_krylov = 4000;
    std::uint64_t seed = 0x5eed;
};

/// Eigenpairs of a DiscreteOperator, ascending. Eigenvectors are grid fields
/// (zero on the boundary) normalized so that quadrature_norm(phi_k) = 1. The
/// first entry within 1e-6 (relative) of the largest magnitude is positive.
/// Immutable once built.
class EigenBasis {
public:
    EigenBasis(Grid grid, std::uint64_t potential_hash, EigenRequest request, Eigen::VectorXd eigenvalues,
               Eigen::MatrixXd eigenvectors);

    const Grid& grid() const noexcept { return grid_; }
    std::uint64_t potential_hash() const noexcept { return potential_hash_; }
    const EigenRequest& request() const noexcept { return request_; }
    /// Largest spectral value the basis is complete up to: lambda_max for a
    /// threshold request, the last returned eigenvalue for a count request.
    double cutoff() const noexcept;
    Eigen::Index size() const noexcept { return eigenvalues_.size(); }
    const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
    const Eigen::MatrixXd& eigenvectors() const noexcept { return eigenvectors_; }
    Eigen::Ref<const Eigen::VectorXd> mode(Eigen::Index k) const { return eigenvectors_.col(k); }
    /// Number of eigenvalues <= lambda.
    Eigen::Index count_below(double lambda) const;

private:
    Grid grid_;
    std::uint64_t potential_hash_;
    EigenRequest request_;
    Eigen::VectorXd eigenvalues_;
    Eigen::MatrixXd eigenvectors_;
};

using BasisPtr = std::shared_ptr<const EigenBasis>;

/// All eigenpairs with lambda <= lambda_max, or the lowest `count` extended
/// to the end of a degenerate cluster. Throws ConvergenceError when the
/// iterative path runs out of budget or a residual check fails.
BasisPtr eigensolve(const DiscreteOperator& op, const EigenRequest& request, const EigenOptions& options = {});

/// Largest of ||H phi_k - lambda_k phi_k|| / max(1, |lambda_k|).
double max_relative_residual(const DiscreteOperator& op, const EigenBasis& basis);

/// phi = sum_k alpha_k phi_k with alpha_k = 0 for lambda_k > mu.
struct SpectralElement {
    BasisPtr basis;
    Eigen::VectorXd alpha;

    Field field() const;
    double norm() const { return alpha.norm(); }
};

/// alpha_k = <phi_k, f> for lambda_k <= mu. Throws when mu exceeds the basis
/// cutoff.
SpectralElement project(const BasisPtr& basis, const Field& f, double mu);

/// Uniformly random unit element of span{phi_k : lambda_k <= lambda}.
SpectralElement random_unit_element(const BasisPtr& basis, double lambda, std::mt19937_64& rng);

struct ExteriorMass {
    double l2_frac = 0.0;
    double h1_frac = 0.0;
    /// ||phi||^2_{H^1(|x| >= R)} / ||phi||^2_{L^2}.
    double h1_ext_over_l2 = 0.0;
};

/// Share of the L^2 and H^1 mass carried by the nodes with |x| >= radius.
ExteriorMass exterior_mass(const SpectralElement& element, double radius);
ExteriorMass exterior_mass(const Grid& grid, const Field& phi, double radius);

/// Smallest radius R = k * spacing < half_width such that h1_frac(R) <=
/// threshold for each of `samples` random unit elements of Ran P_lambda.
double decay_radius(const BasisPtr& basis, double lambda, double threshold, int samples, std::uint64_t seed);

}  // namespace schrodlab
