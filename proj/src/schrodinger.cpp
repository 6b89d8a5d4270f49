#include "schrodlab/schrodinger.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "eigensolvers.hpp"
#include "schrodlab/errors.hpp"

namespace schrodlab {

using Eigen::Index;

double DiscreteOperator::gershgorin_lower() const {
    double lower = std::numeric_limits<double>::infinity();
    for (Index col = 0; col < matrix.outerSize(); ++col) {
        double diag = 0.0, off = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(matrix, col); it; ++it) {
            if (it.row() == col) diag = it.value();
            else off += std::abs(it.value());
        }
        lower = std::min(lower, diag - off);
    }
    return lower;
}

Eigen::VectorXd DiscreteOperator::restrict(const Field& f) const {
    if (static_cast<std::size_t>(f.size()) != grid.size()) throw std::invalid_argument("field size does not match grid");
    Eigen::VectorXd u(unknowns());
    for (Index k = 0; k < u.size(); ++k) u[k] = f[static_cast<Index>(interior[static_cast<std::size_t>(k)])];
    return u;
}

Field DiscreteOperator::extend(const Eigen::VectorXd& u) const {
    if (u.size() != unknowns()) throw std::invalid_argument("vector size does not match operator");
    Field f = Field::Zero(static_cast<Index>(grid.size()));
    for (Index k = 0; k < u.size(); ++k) f[static_cast<Index>(interior[static_cast<std::size_t>(k)])] = u[k];
    return f;
}

Field DiscreteOperator::apply(const Field& f) const {
    return extend(matrix * restrict(f));
}

DiscreteOperator assemble(const Grid& grid, const Potential& potential) {
    return assemble(grid, eval_potential(potential, grid), potential.hash());
}

DiscreteOperator assemble(const Grid& grid, const Field& potential_values, std::uint64_t potential_hash) {
    if (static_cast<std::size_t>(potential_values.size()) != grid.size()) {
        throw std::invalid_argument("potential size does not match grid");
    }
    DiscreteOperator op;
    op.grid = grid;
    op.potential = potential_values;
    op.potential_hash = potential_hash;
    op.unknown.assign(grid.size(), -1);
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        if (!grid.on_boundary(idx)) {
            op.unknown[idx] = static_cast<int>(op.interior.size());
            op.interior.push_back(idx);
        }
    }

    const double inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    const int n = grid.points_per_axis();
    const Index m = static_cast<Index>(op.interior.size());
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(m) * (1 + 2 * static_cast<std::size_t>(grid.dim())));
    for (Index k = 0; k < m; ++k) {
        const std::size_t idx = op.interior[static_cast<std::size_t>(k)];
        triplets.emplace_back(k, k, 2.0 * grid.dim() * inv_h2 + potential_values[static_cast<Index>(idx)]);
        const auto ij = grid.unravel(idx);
        for (int axis = 0; axis < grid.dim(); ++axis) {
            for (int step : {-1, 1}) {
                auto nb = ij;
                nb[static_cast<std::size_t>(axis)] += step;
                if (nb[static_cast<std::size_t>(axis)] < 0 || nb[static_cast<std::size_t>(axis)] >= n) continue;
                const int u = op.unknown[grid.index(nb[0], nb[1])];
                if (u >= 0) triplets.emplace_back(k, u, -inv_h2);
            }
        }
    }
    op.matrix.resize(m, m);
    op.matrix.setFromTriplets(triplets.begin(), triplets.end());
    op.matrix.makeCompressed();
    return op;
}

EigenBasis::EigenBasis(Grid grid, std::uint64_t potential_hash, EigenRequest request, Eigen::VectorXd eigenvalues,
                       Eigen::MatrixXd eigenvectors)
    : grid_(std::move(grid)),
      potential_hash_(potential_hash),
      request_(request),
      eigenvalues_(std::move(eigenvalues)),
      eigenvectors_(std::move(eigenvectors)) {
    if (eigenvectors_.cols() != eigenvalues_.size() ||
        static_cast<std::size_t>(eigenvectors_.rows()) != grid_.size()) {
        throw std::invalid_argument("eigenbasis shape does not match grid");
    }
    for (Index k = 1; k < eigenvalues_.size(); ++k) {
        if (eigenvalues_[k] < eigenvalues_[k - 1]) throw std::invalid_argument("eigenvalues must be ascending");
    }
}

double EigenBasis::cutoff() const noexcept {
    if (request_.kind == EigenRequest::Kind::lambda_max) return request_.value;
    return eigenvalues_.size() > 0 ? eigenvalues_[eigenvalues_.size() - 1]
                                   : -std::numeric_limits<double>::infinity();
}

Index EigenBasis::count_below(double lambda) const {
    Index c = 0;
    while (c < eigenvalues_.size() && eigenvalues_[c] <= lambda) ++c;
    return c;
}

BasisPtr eigensolve(const DiscreteOperator& op, const EigenRequest& request, const EigenOptions& options) {
    const Index n = op.unknowns();
    const bool by_limit = request.kind == EigenRequest::Kind::lambda_max;
    if (!std::isfinite(request.value)) throw std::invalid_argument("eigen request must be finite");
    Index m = 0;
    if (!by_limit) {
        if (request.value < 1 || request.value != std::floor(request.value)) {
            throw std::invalid_argument("eigen count must be a positive integer");
        }
        if (request.value > static_cast<double>(n)) {
            throw std::invalid_argument("eigen count " + std::to_string(static_cast<long long>(request.value)) +
                                        " exceeds matrix dimension " + std::to_string(n));
        }
        m = static_cast<Index>(request.value);
    }
    // "lambda_k <= lambda_max" as a strict bound for the inertia count.
    const double limit = by_limit ? std::nextafter(request.value, std::numeric_limits<double>::infinity())
                                  : std::numeric_limits<double>::infinity();

    EigenMethod method = options.method;
    if (method == EigenMethod::automatic) {
        method = (op.grid.dim() == 1 || n <= options.dense_limit) ? EigenMethod::dense : EigenMethod::lanczos;
    }

    detail::EigenPairs pairs;
    if (method == EigenMethod::lanczos) {
        pairs = detail::lanczos(op, limit, m, options);
    } else {
        auto solve = [&](Index count) {
            return op.grid.dim() == 1 ? detail::lowest_tridiagonal(op, count) : detail::lowest_dense(op, count);
        };
        if (by_limit) {
            pairs = solve(detail::count_below(op, limit));
        } else {
            for (;;) {
                pairs = solve(m);
                const double last = pairs.values[m - 1];
                const Index whole = std::min(n, detail::count_below(op, last + detail::cluster_tol(last)));
                if (whole <= m) break;
                m = whole;
            }
        }
    }

    // Grid fields with unit quadrature norm, largest-magnitude entry positive.
    const double scale = 1.0 / std::sqrt(op.grid.cell_volume());
    Eigen::MatrixXd fields(static_cast<Index>(op.grid.size()), pairs.values.size());
    for (Index k = 0; k < pairs.values.size(); ++k) {
        Eigen::VectorXd v = pairs.vectors.col(k);
        // Symmetric modes peak at mirrored nodes with equal magnitude; take
        // the first node within a relative tolerance of the maximum.
        const double peak = v.cwiseAbs().maxCoeff();
        Index arg = 0;
        while (std::abs(v[arg]) < (1.0 - 1e-6) * peak) ++arg;
        if (v[arg] < 0.0) v = -v;
        fields.col(k) = op.extend(v) * scale;
    }
    auto basis = std::make_shared<const EigenBasis>(op.grid, op.potential_hash, request, pairs.values, std::move(fields));

    const double worst = max_relative_residual(op, *basis);
    if (!(worst <= 1e-6)) {
        std::vector<double> residuals;
        for (Index k = 0; k < basis->size(); ++k) {
            const Field r = op.apply(basis->mode(k)) - basis->eigenvalues()[k] * basis->mode(k);
            residuals.push_back(quadrature_norm(op.grid, r) / std::max(1.0, std::abs(basis->eigenvalues()[k])));
        }
        throw ConvergenceError("eigenpair residual check failed", residuals);
    }
    return basis;
}

double max_relative_residual(const DiscreteOperator& op, const EigenBasis& basis) {
    double worst = 0.0;
    for (Index k = 0; k < basis.size(); ++k) {
        const double lambda = basis.eigenvalues()[k];
        const Field r = op.apply(basis.mode(k)) - lambda * basis.mode(k);
        worst = std::max(worst, quadrature_norm(op.grid, r) / std::max(1.0, std::abs(lambda)));
    }
    return worst;
}

Field SpectralElement::field() const {
    return basis->eigenvectors() * alpha;
}

SpectralElement project(const BasisPtr& basis, const Field& f, double mu) {
    if (static_cast<std::size_t>(f.size()) != basis->grid().size()) {
        throw std::invalid_argument("field size does not match grid");
    }
    if (mu > basis->cutoff()) {
        throw std::invalid_argument("projection level " + std::to_string(mu) + " exceeds basis cutoff " +
                                    std::to_string(basis->cutoff()));
    }
    const Index k = basis->count_below(mu);
    SpectralElement e{basis, Eigen::VectorXd::Zero(basis->size())};
    e.alpha.head(k) = basis->eigenvectors().leftCols(k).transpose() * f * basis->grid().cell_volume();
    return e;
}

SpectralElement random_unit_element(const BasisPtr& basis, double lambda, std::mt19937_64& rng) {
    const Index k = basis->count_below(lambda);
    if (k == 0) throw std::invalid_argument("no eigenvalues at or below " + std::to_string(lambda));
    std::normal_distribution<double> normal(0.0, 1.0);
    SpectralElement e{basis, Eigen::VectorXd::Zero(basis->size())};
    for (Index i = 0; i < k; ++i) e.alpha[i] = normal(rng);
    e.alpha /= e.alpha.norm();
    return e;
}

ExteriorMass exterior_mass(const SpectralElement& element, double radius) {
    return exterior_mass(element.basis->grid(), element.field(), radius);
}

ExteriorMass exterior_mass(const Grid& grid, const Field& phi, double radius) {
    const Field h1 = h1_density(grid, phi);
    double l2_total = 0.0, l2_ext = 0.0, h1_total = 0.0, h1_ext = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double p2 = phi[static_cast<Index>(i)] * phi[static_cast<Index>(i)];
        const double d = h1[static_cast<Index>(i)];
        l2_total += p2;
        h1_total += d;
        if (grid.radius(i) >= radius) {
            l2_ext += p2;
            h1_ext += d;
        }
    }
    ExteriorMass m;
    if (l2_total > 0.0) {
        m.l2_frac = l2_ext / l2_total;
        m.h1_ext_over_l2 = h1_ext / l2_total;
    }
    if (h1_total > 0.0) m.h1_frac = h1_ext / h1_total;
    return m;
}

double decay_radius(const BasisPtr& basis, double lambda, double threshold, int samples, std::uint64_t seed) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must lie in (0, 1]");
    if (samples < 1) throw std::invalid_argument("samples must be positive");
    if (lambda > basis->cutoff()) throw std::invalid_argument("lambda exceeds basis cutoff");
    const Grid& grid = basis->grid();
    const double h = grid.spacing();
    // Candidate radii k*h with k*h < half_width.
    const int kmax = static_cast<int>(std::ceil(grid.half_width() / h - 1e-9)) - 1;

    std::vector<int> shell(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        shell[i] = static_cast<int>(std::floor(grid.radius(i) / h + 1e-9));
    }
    const int shells = *std::max_element(shell.begin(), shell.end()) + 1;

    std::mt19937_64 rng(seed);
    int worst = 0;
    for (int s = 0; s < samples; ++s) {
        const Field h1 = h1_density(grid, random_unit_element(basis, lambda, rng).field());
        std::vector<double> mass(static_cast<std::size_t>(shells) + 1, 0.0);
        for (std::size_t i = 0; i < grid.size(); ++i) mass[static_cast<std::size_t>(shell[i])] += h1[static_cast<Index>(i)];
        // mass[k] becomes the H^1 mass at radius >= k*h.
        for (int k = shells - 1; k >= 0; --k) mass[static_cast<std::size_t>(k)] += mass[static_cast<std::size_t>(k) + 1];
        const double total = mass[0];
        int k = 0;
        while (k <= kmax && mass[static_cast<std::size_t>(k)] > threshold * total) ++k;
        if (k > kmax) {
            throw std::runtime_error("no radius inside the box keeps the exterior H^1 share below " +
                                     std::to_string(threshold) + "; increase half_width");
        }
        worst = std::max(worst, k);
    }
    return worst * h;
}

}  // namespace schrodlab
