#pragma once

// Backends behind eigensolve(). Vectors live on the interior unknowns and are
// Euclidean-normalized; the caller rescales to grid fields.

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "schrodlab/schrodinger.hpp"

namespace schrodlab::detail {

/// Eigenvalues closer than this are treated as one degenerate cluster.
inline double cluster_tol(double lambda) { return 1e-8 * std::max(1.0, std::abs(lambda)); }

struct EigenPairs {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};

/// Number of eigenvalues of op.matrix strictly below x (Sylvester inertia).
Eigen::Index count_below(const DiscreteOperator& op, double x);

/// Lowest m eigenpairs of a 1D operator via the tridiagonal MRRR solver.
EigenPairs lowest_tridiagonal(const DiscreteOperator& op, Eigen::Index m);

/// Lowest m eigenpairs from the dense symmetric solver.
EigenPairs lowest_dense(const DiscreteOperator& op, Eigen::Index m);

/// Shift-invert Lanczos with full reorthogonalization and deflated restarts.
/// Returns every eigenpair below `limit`; with limit = +inf it instead returns
/// the lowest `m` extended through a degenerate cluster. Completeness is
/// checked against the inertia count.
EigenPairs lanczos(const DiscreteOperator& op, double limit, Eigen::Index m, const EigenOptions& options);

}  // namespace schrodlab::detail
