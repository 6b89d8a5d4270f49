#include "eigensolvers.hpp"

#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <lapacke.h>

#include "schrodlab/errors.hpp"

namespace schrodlab::detail {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

void tridiagonal_parts(const DiscreteOperator& op, VectorXd& d, VectorXd& e) {
    const Index n = op.unknowns();
    d.resize(n);
    e.setZero(std::max<Index>(n, 1));
    for (Index i = 0; i < n; ++i) {
        d[i] = op.matrix.coeff(i, i);
        if (i + 1 < n) e[i] = op.matrix.coeff(i + 1, i);
    }
}

SpMat shifted(const SpMat& a, double x) {
    SpMat id(a.rows(), a.cols());
    id.setIdentity();
    return a - x * id;
}

}  // namespace

Index count_below(const DiscreteOperator& op, double x) {
    const Index n = op.unknowns();
    if (op.grid.dim() == 1) {
        // Sturm sequence of the tridiagonal matrix.
        VectorXd d, e;
        tridiagonal_parts(op, d, e);
        Index negatives = 0;
        double q = 1.0;
        for (Index i = 0; i < n; ++i) {
            const double off = i > 0 ? e[i - 1] * e[i - 1] : 0.0;
            q = d[i] - x - (i > 0 ? off / q : 0.0);
            if (q == 0.0) q = -std::numeric_limits<double>::epsilon() * (std::abs(d[i]) + std::abs(x) + 1.0);
            if (q < 0.0) ++negatives;
        }
        return negatives;
    }
    Eigen::SimplicialLDLT<SpMat> ldlt(shifted(op.matrix, x));
    if (ldlt.info() != Eigen::Success) throw std::runtime_error("inertia factorization failed");
    const VectorXd pivots = ldlt.vectorD();
    Index negatives = 0;
    for (Index i = 0; i < pivots.size(); ++i) {
        if (pivots[i] < 0.0) ++negatives;
    }
    return negatives;
}

EigenPairs lowest_tridiagonal(const DiscreteOperator& op, Index m) {
    const Index n = op.unknowns();
    EigenPairs out;
    if (m <= 0) {
        out.values.resize(0);
        out.vectors.resize(n, 0);
        return out;
    }
    VectorXd d, e;
    tridiagonal_parts(op, d, e);
    VectorXd w(n);
    MatrixXd z(n, m);
    std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(m));
    lapack_int found = 0;
    const lapack_int info =
        LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'I', static_cast<lapack_int>(n), d.data(), e.data(), 0.0, 0.0, 1,
                       static_cast<lapack_int>(m), 0.0, &found, w.data(), z.data(), static_cast<lapack_int>(n),
                       isuppz.data());
    if (info != 0 || found != m) {
        throw ConvergenceError("tridiagonal eigensolver failed (info " + std::to_string(info) + ")", {});
    }
    out.values = w.head(m);
    out.vectors = std::move(z);
    return out;
}

EigenPairs lowest_dense(const DiscreteOperator& op, Index m) {
    const Index n = op.unknowns();
    EigenPairs out;
    if (m <= 0) {
        out.values.resize(0);
        out.vectors.resize(n, 0);
        return out;
    }
    MatrixXd a = MatrixXd(op.matrix);
    VectorXd w(n);
    MatrixXd z(n, m);
    std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(m));
    lapack_int found = 0;
    const lapack_int info =
        LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', static_cast<lapack_int>(n), a.data(),
                       static_cast<lapack_int>(n), 0.0, 0.0, 1, static_cast<lapack_int>(m), 0.0, &found, w.data(),
                       z.data(), static_cast<lapack_int>(n), isuppz.data());
    if (info != 0 || found != m) {
        throw ConvergenceError("dense eigensolver failed (info " + std::to_string(info) + ")", {});
    }
    out.values = w.head(m);
    out.vectors = std::move(z);
    return out;
}

namespace {

// Two passes of classical Gram-Schmidt against the columns of q.
void orthogonalize(VectorXd& w, const MatrixXd& q, Index cols) {
    if (cols == 0) return;
    for (int pass = 0; pass < 2; ++pass) {
        const VectorXd c = q.leftCols(cols).transpose() * w;
        w.noalias() -= q.leftCols(cols) * c;
    }
}

struct Ritz {
    VectorXd theta;  // ascending
    MatrixXd s;
};

Ritz tridiagonal_ritz(const std::vector<double>& alpha, const std::vector<double>& beta) {
    const Index k = static_cast<Index>(alpha.size());
    VectorXd d = Eigen::Map<const VectorXd>(alpha.data(), k);
    VectorXd e = VectorXd::Zero(std::max<Index>(k, 1));
    for (Index i = 0; i + 1 < k; ++i) e[i] = beta[static_cast<std::size_t>(i)];
    Ritz r;
    r.theta.resize(k);
    r.s.resize(k, k);
    std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(k));
    lapack_int found = 0;
    const lapack_int info =
        LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'A', static_cast<lapack_int>(k), d.data(), e.data(), 0.0, 0.0, 0, 0,
                       0.0, &found, r.theta.data(), r.s.data(), static_cast<lapack_int>(k), isuppz.data());
    if (info != 0 || found != k) throw ConvergenceError("Ritz eigensolve failed", {});
    return r;
}

}  // namespace

EigenPairs lanczos(const DiscreteOperator& op, double limit, Index m, const EigenOptions& options) {
    const Index n = op.unknowns();
    const bool by_limit = std::isfinite(limit);
    if (!by_limit && (m < 0 || m > n)) throw std::invalid_argument("eigenpair count exceeds matrix dimension");

    const Index wanted_by_limit = by_limit ? count_below(op, limit) : 0;
    EigenPairs out;
    out.vectors.resize(n, 0);
    out.values.resize(0);
    if ((by_limit && wanted_by_limit == 0) || (!by_limit && m == 0)) return out;

    // Shift strictly below the spectrum so that A - sigma is positive definite.
    const double sigma = std::min(op.min_potential(), op.gershgorin_lower()) - 1.0;
    Eigen::SimplicialLDLT<SpMat> solver(shifted(op.matrix, sigma));
    if (solver.info() != Eigen::Success) throw std::runtime_error("shift-invert factorization failed");

    MatrixXd locked(n, 16);
    std::vector<double> locked_values;
    std::vector<double> residual_log;
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    auto lock_count = [&]() { return static_cast<Index>(locked_values.size()); };
    auto locked_below = [&](double x) {
        Index c = 0;
        for (double v : locked_values) {
            if (v < x) ++c;
        }
        return c;
    };
    // Threshold below which the locked set must be complete.
    auto target = [&]() -> double {
        if (by_limit) return limit;
        if (lock_count() < m) return std::numeric_limits<double>::infinity();
        std::vector<double> sorted = locked_values;
        std::sort(sorted.begin(), sorted.end());
        const double last = sorted[static_cast<std::size_t>(m - 1)];
        return last + cluster_tol(last);
    };
    auto complete = [&]() {
        const double x = target();
        if (!std::isfinite(x)) return false;
        return locked_below(x) == (by_limit ? wanted_by_limit : count_below(op, x));
    };

    int idle_restarts = 0;
    for (int restart = 0; restart < options.max_restarts && !complete(); ++restart) {
        const Index free_dims = n - lock_count();
        if (free_dims <= 0) break;
        const Index kmax = std::min<Index>(options.max_krylov, free_dims);
        const Index need = by_limit ? wanted_by_limit - locked_below(limit) : std::max<Index>(1, m - lock_count());

        MatrixXd v(n, std::min<Index>(kmax, 64));
        VectorXd start(n);
        for (Index i = 0; i < n; ++i) start[i] = normal(rng);
        orthogonalize(start, locked, lock_count());
        v.col(0) = start / start.norm();

        std::vector<double> alpha, beta;
        Ritz ritz;
        Index steps = 0;
        for (Index j = 0; j < kmax; ++j) {
            VectorXd w = solver.solve(v.col(j));
            const double a = v.col(j).dot(w);
            w -= a * v.col(j);
            if (j > 0) w -= beta.back() * v.col(j - 1);
            orthogonalize(w, locked, lock_count());
            orthogonalize(w, v, j + 1);
            const double b = w.norm();
            alpha.push_back(a);
            steps = j + 1;

            const bool breakdown = b <= 1e-13 * std::abs(a);
            const bool last = breakdown || j + 1 == kmax;
            if (!last && (steps < 8 || steps % 8 != 0)) {
                beta.push_back(b);
                if (v.cols() <= j + 1) v.conservativeResize(Eigen::NoChange, std::min<Index>(kmax, 2 * v.cols()));
                v.col(j + 1) = w / b;
                continue;
            }

            ritz = tridiagonal_ritz(alpha, beta);
            // Largest theta is the smallest eigenvalue. Count the leading run
            // of converged Ritz values.
            Index run = 0;
            double run_last_lambda = -std::numeric_limits<double>::infinity();
            for (Index i = steps - 1; i >= 0; --i) {
                const double theta = ritz.theta[i];
                const double estimate = breakdown ? 0.0 : std::abs(b * ritz.s(steps - 1, i));
                if (!(theta > 0.0) || estimate > options.ritz_tol * theta) break;
                ++run;
                run_last_lambda = sigma + 1.0 / theta;
            }
            bool done = last;
            if (by_limit) {
                done = done || (run >= need + 1) || (run > 0 && run_last_lambda >= limit);
            } else {
                done = done || run >= need + 1;
            }
            if (done) {
                const Index before = lock_count();
                for (Index r = 0; r < run; ++r) {
                    const Index i = steps - 1 - r;
                    VectorXd y = v.leftCols(steps) * ritz.s.col(i);
                    orthogonalize(y, locked, lock_count());
                    const double norm = y.norm();
                    if (!(norm > 0.5)) continue;
                    y /= norm;
                    const VectorXd ay = op.matrix * y;
                    const double lambda = y.dot(ay);
                    if (by_limit && lambda >= limit + cluster_tol(limit) && r > 0) break;
                    const double res = (ay - lambda * y).norm() / std::max(1.0, std::abs(lambda));
                    residual_log.push_back(res);
                    if (res > 1e-7) continue;
                    if (locked.cols() <= lock_count()) locked.conservativeResize(Eigen::NoChange, 2 * locked.cols());
                    locked.col(lock_count()) = y;
                    locked_values.push_back(lambda);
                }
                idle_restarts = lock_count() == before ? idle_restarts + 1 : 0;
                break;
            }
            beta.push_back(b);
            if (v.cols() <= j + 1) v.conservativeResize(Eigen::NoChange, std::min<Index>(kmax, 2 * v.cols()));
            v.col(j + 1) = w / b;
        }
        if (idle_restarts >= 3) break;
    }
    if (!complete()) {
        throw ConvergenceError("Lanczos did not find all requested eigenpairs (" + std::to_string(lock_count()) +
                                   " locked)",
                               residual_log);
    }

    // Rayleigh-Ritz on the locked subspace cleans up any mixing inside
    // near-degenerate clusters.
    const Index l = lock_count();
    const MatrixXd q = locked.leftCols(l);
    const MatrixXd h = q.transpose() * (op.matrix * q);
    Eigen::SelfAdjointEigenSolver<MatrixXd> rr(0.5 * (h + h.transpose()));
    const MatrixXd rotated = q * rr.eigenvectors();
    const double cut = target();
    Index keep = 0;
    while (keep < l && rr.eigenvalues()[keep] < cut) ++keep;
    out.values = rr.eigenvalues().head(keep);
    out.vectors = rotated.leftCols(keep);
    return out;
}

}  // namespace schrodlab::detail
