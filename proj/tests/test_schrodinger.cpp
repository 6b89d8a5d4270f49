#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "schrodlab/errors.hpp"
#include "schrodlab/schrodinger.hpp"

using namespace schrodlab;
using Eigen::Index;

namespace {

// Independent dense reference: Eigen's own symmetric solver on the assembled
// matrix, eigenvalues ascending.
Eigen::VectorXd dense_reference(const DiscreteOperator& op) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(op.matrix), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

double inner(const Grid& g, const Eigen::Ref<const Field>& a, const Eigen::Ref<const Field>& b) {
    return a.dot(b) * g.cell_volume();
}

void expect_basis_invariants(const DiscreteOperator& op, const EigenBasis& basis) {
    const Grid& g = basis.grid();
    for (Index k = 0; k < basis.size(); ++k) {
        EXPECT_NEAR(quadrature_norm(g, basis.mode(k)), 1.0, 1e-10) << k;
        for (Index l = 0; l < k; ++l) EXPECT_LE(std::abs(inner(g, basis.mode(k), basis.mode(l))), 1e-8);
        EXPECT_GE(basis.eigenvalues()[k], op.min_potential() - 1e-9);
    }
    EXPECT_LE(max_relative_residual(op, basis), 1e-6);
}

}  // namespace

TEST(Assemble, SingleInteriorNode) {
    const Grid g = Grid::build(1, 1.0, 3);
    const auto op = assemble(g, Potential::zero());
    ASSERT_EQ(op.unknowns(), 1);
    EXPECT_DOUBLE_EQ(op.matrix.coeff(0, 0), 2.0 / (g.spacing() * g.spacing()));
}

TEST(Assemble, HarmonicDiagonalAndSymmetry) {
    const Grid g = Grid::build(1, 3.0, 13);
    const auto op = assemble(g, Potential::polynomial_radial(2.0));
    const double h2 = g.spacing() * g.spacing();
    for (Index k = 0; k < op.unknowns(); ++k) {
        const double x = g.point(op.interior[static_cast<std::size_t>(k)])[0];
        EXPECT_DOUBLE_EQ(op.matrix.coeff(k, k), 2.0 / h2 + x * x);
    }
    const Eigen::MatrixXd m(op.matrix);
    EXPECT_EQ((m - m.transpose()).norm(), 0.0);
}

TEST(Assemble, TwoDimensionalStencilAndGershgorin) {
    const Grid g = Grid::build(2, 2.0, 9);
    const auto op = assemble(g, Potential::polynomial_radial(2.0));
    EXPECT_EQ(op.unknowns(), 49);
    const Eigen::MatrixXd m(op.matrix);
    EXPECT_EQ((m - m.transpose()).norm(), 0.0);
    EXPECT_GE(op.gershgorin_lower(), op.min_potential() - 1e-12);
    EXPECT_GE(dense_reference(op)[0], op.gershgorin_lower() - 1e-9);
}

TEST(Eigensolve, HarmonicOscillatorSpectrum) {
    const Grid g = Grid::build(1, 12.0, 2049);
    const auto op = assemble(g, Potential::polynomial_radial(2.0));
    const auto basis = eigensolve(op, EigenRequest::lowest(21));
    ASSERT_GE(basis->size(), 21);
    for (Index k = 0; k <= 20; ++k) {
        EXPECT_LT(std::abs(basis->eigenvalues()[k] - (2 * k + 1)) / (2 * k + 1), 1e-3) << k;
    }
    expect_basis_invariants(op, *basis);
}

TEST(Eigensolve, MatchesDenseReference) {
    const Grid g = Grid::build(1, 12.0, 401);
    const auto op = assemble(g, Potential::polynomial_radial(2.0));
    const auto ref = dense_reference(op);
    const auto basis = eigensolve(op, EigenRequest::below(60.0));
    Index expected = 0;
    while (ref[expected] <= 60.0) ++expected;
    ASSERT_EQ(basis->size(), expected);
    for (Index k = 0; k < expected; ++k) EXPECT_NEAR(basis->eigenvalues()[k], ref[k], 1e-9 * (1 + ref[k]));
}

TEST(Eigensolve, DirichletLaplacianClosedForm) {
    // Box of length pi: continuum eigenvalues k^2; the discrete ones are
    // (4/h^2) sin^2(k pi h / (2 pi)).
    const int n = 513;
    const Grid g = Grid::build(1, std::numbers::pi / 2, n);
    const auto op = assemble(g, Potential::zero());
    const auto basis = eigensolve(op, EigenRequest::lowest(10));
    const double h = g.spacing();
    for (Index k = 0; k < 10; ++k) {
        const double m = static_cast<double>(k + 1);
        const double discrete = 4.0 / (h * h) * std::pow(std::sin(m * h / 2.0), 2);
        EXPECT_NEAR(basis->eigenvalues()[k], discrete, 1e-9 * discrete);
        EXPECT_NEAR(basis->eigenvalues()[k], m * m, 1e-3 * m * m);
    }
}

TEST(Eigensolve, PoschlTellerBoundState) {
    const Grid g = Grid::build(1, 20.0, 2049);
    const auto op = assemble(g, Potential::bounded_well(2.0));
    const auto basis = eigensolve(op, EigenRequest::below(0.0));
    ASSERT_EQ(basis->size(), 1);
    EXPECT_LT(std::abs(basis->eigenvalues()[0] + 1.0), 1e-2);
    // Reference: dense solve on the same operator.
    EXPECT_NEAR(basis->eigenvalues()[0], dense_reference(assemble(Grid::build(1, 20.0, 2049), Potential::bounded_well(2.0)))[0],
                1e-9);
}

TEST(Eigensolve, CountRejectsOversizedRequest) {
    const auto op = assemble(Grid::build(1, 1.0, 11), Potential::zero());
    EXPECT_THROW(eigensolve(op, EigenRequest::lowest(10)), std::invalid_argument);
    EXPECT_THROW(eigensolve(op, EigenRequest::lowest(0)), std::invalid_argument);
    EXPECT_EQ(eigensolve(op, EigenRequest::lowest(9))->size(), 9);
}

TEST(Eigensolve, EmptyBelowGroundState) {
    const auto op = assemble(Grid::build(1, 8.0, 257), Potential::polynomial_radial(2.0));
    const auto basis = eigensolve(op, EigenRequest::below(0.5));
    EXPECT_EQ(basis->size(), 0);
    EXPECT_EQ(basis->cutoff(), 0.5);
}

TEST(Eigensolve, TwoDimensionalDegenerateClusters) {
    // 2D harmonic oscillator: eigenvalue 2(k+1) has multiplicity k+1.
    const Grid g = Grid::build(2, 6.0, 49);
    const auto op = assemble(g, Potential::polynomial_radial(2.0));
    const auto ref = dense_reference(op);

    EigenOptions dense;
    dense.method = EigenMethod::dense;
    EigenOptions lanczos;
    lanczos.method = EigenMethod::lanczos;
    const auto a = eigensolve(op, EigenRequest::below(9.0), dense);
    const auto b = eigensolve(op, EigenRequest::below(9.0), lanczos);
    Index expected = 0;
    while (ref[expected] <= 9.0) ++expected;
    ASSERT_EQ(a->size(), expected);
    ASSERT_EQ(b->size(), expected);
    for (Index k = 0; k < expected; ++k) {
        EXPECT_NEAR(a->eigenvalues()[k], ref[k], 1e-9 * (1 + std::abs(ref[k])));
        EXPECT_NEAR(b->eigenvalues()[k], ref[k], 1e-8 * (1 + std::abs(ref[k])));
    }
    expect_basis_invariants(op, *a);
    expect_basis_invariants(op, *b);

    // Lowest 2 ends inside the {lambda_1, lambda_2} pair, which is completed.
    // The square box keeps x <-> y symmetry, so the pair is exactly degenerate.
    for (const auto& opts : {dense, lanczos}) {
        const auto c = eigensolve(op, EigenRequest::lowest(2), opts);
        EXPECT_EQ(c->size(), 3);
        EXPECT_NEAR(c->cutoff(), ref[2], 1e-8);
    }
}

TEST(Eigensolve, LanczosAgreesWithTridiagonalIn1D) {
    const auto op = assemble(Grid::build(1, 20.0, 1025), Potential::bounded_well(2.0));
    EigenOptions lanczos;
    lanczos.method = EigenMethod::lanczos;
    const auto a = eigensolve(op, EigenRequest::below(0.5));
    const auto b = eigensolve(op, EigenRequest::below(0.5), lanczos);
    ASSERT_EQ(a->size(), b->size());
    for (Index k = 0; k < a->size(); ++k) {
        EXPECT_NEAR(a->eigenvalues()[k], b->eigenvalues()[k], 1e-9);
        // Same sign convention, nondegenerate spectrum: same vectors.
        EXPECT_LT((a->mode(k) - b->mode(k)).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Eigensolve, SignConvention) {
    const auto basis = eigensolve(assemble(Grid::build(1, 8.0, 257), Potential::polynomial_radial(2.0)),
                                  EigenRequest::lowest(6));
    for (Index k = 0; k < basis->size(); ++k) {
        const double peak = basis->mode(k).cwiseAbs().maxCoeff();
        Index arg = 0;
        while (std::abs(basis->mode(k)[arg]) < (1.0 - 1e-6) * peak) ++arg;
        EXPECT_GT(basis->mode(k)[arg], 0.0);
    }
}

class HarmonicBasis : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        grid_ = new Grid(Grid::build(1, 12.0, 1025));
        basis_ = new BasisPtr(eigensolve(assemble(*grid_, Potential::polynomial_radial(2.0)), EigenRequest::below(60.0)));
    }
    static void TearDownTestSuite() {
        delete basis_;
        delete grid_;
    }
    static Grid* grid_;
    static BasisPtr* basis_;
};
Grid* HarmonicBasis::grid_ = nullptr;
BasisPtr* HarmonicBasis::basis_ = nullptr;

TEST_F(HarmonicBasis, Parseval) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    const auto& b = *basis_;
    for (int trial = 0; trial < 20; ++trial) {
        SpectralElement e{b, Eigen::VectorXd(b->size())};
        for (auto& v : e.alpha) v = normal(rng);
        const double lhs = std::pow(quadrature_norm(*grid_, e.field()), 2);
        EXPECT_NEAR(lhs, e.alpha.squaredNorm(), 1e-8 * e.alpha.squaredNorm());
    }
}

TEST_F(HarmonicBasis, ProjectionExamples) {
    const auto& b = *basis_;
    const auto p0 = project(b, b->mode(0), 1.5);
    EXPECT_NEAR(p0.alpha[0], 1.0, 1e-10);
    EXPECT_LT(p0.alpha.tail(b->size() - 1).cwiseAbs().maxCoeff(), 1e-10);

    const Field f = b->mode(0) + b->mode(5);
    const auto p = project(b, f, 6.0);  // between lambda_0 = 1 and lambda_5 = 11
    EXPECT_NEAR(p.alpha[0], 1.0, 1e-10);
    EXPECT_LT(p.alpha.tail(b->size() - 1).cwiseAbs().maxCoeff(), 1e-10);

    EXPECT_THROW(project(b, f, 61.0), std::invalid_argument);
}

TEST_F(HarmonicBasis, ProjectionIsIdempotentContraction) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> normal;
    const auto& b = *basis_;
    for (int trial = 0; trial < 10; ++trial) {
        Field f(static_cast<Eigen::Index>(grid_->size()));
        for (auto& v : f) v = normal(rng);
        const double mu = 5.0 + 50.0 * trial / 10.0;
        const auto once = project(b, f, mu);
        const auto twice = project(b, once.field(), mu);
        EXPECT_LE(once.norm(), quadrature_norm(*grid_, f));
        EXPECT_LT((once.alpha - twice.alpha).cwiseAbs().maxCoeff(), 1e-10 * (1 + once.alpha.cwiseAbs().maxCoeff()));
    }
}

TEST_F(HarmonicBasis, GroundStateExteriorMassMatchesGaussianTail) {
    const auto& b = *basis_;
    const SpectralElement ground{b, Eigen::VectorXd::Unit(b->size(), 0)};
    EXPECT_LT(exterior_mass(ground, 6.0).h1_frac, 1e-6);

    // phi_0 ~ e^{-x^2/2}, H^1 density (1 + x^2) e^{-x^2}. Tail integrals:
    //   int_R^inf e^{-x^2} = sqrt(pi)/2 erfc(R)
    //   int_R^inf x^2 e^{-x^2} = R e^{-R^2}/2 + sqrt(pi)/4 erfc(R)
    // and the full-line total is 3 sqrt(pi)/2.
    const double sp = std::sqrt(std::numbers::pi);
    for (double r : {0.5, 1.0, 2.0, 3.0}) {
        const double tail = 2.0 * (sp / 2 * std::erfc(r) + r * std::exp(-r * r) / 2 + sp / 4 * std::erfc(r));
        const double expected = tail / (1.5 * sp);
        // The discrete exterior counts the node at |x| = r with full weight,
        // an O(h) surplus of one density value per side.
        const double h = grid_->spacing();
        const auto m = exterior_mass(ground, r);
        const double h1_slack = 2 * h * (1 + r * r) * std::exp(-r * r) / (1.5 * sp);
        const double l2_slack = 2 * h * std::exp(-r * r) / sp;
        EXPECT_NEAR(m.h1_frac, expected, h1_slack + 1e-4 * expected) << r;
        EXPECT_NEAR(m.l2_frac, std::erfc(r), l2_slack + 1e-4 * std::erfc(r)) << r;
    }
}

TEST_F(HarmonicBasis, ExteriorMassMonotoneInRadius) {
    std::mt19937_64 rng(5);
    const auto& b = *basis_;
    const auto e = random_unit_element(b, 40.0, rng);
    double prev_l2 = 2.0, prev_h1 = 2.0;
    for (double r = 0.0; r < 12.0; r += 0.25) {
        const auto m = exterior_mass(e, r);
        EXPECT_LE(m.l2_frac, prev_l2);
        EXPECT_LE(m.h1_frac, prev_h1);
        prev_l2 = m.l2_frac;
        prev_h1 = m.h1_frac;
    }
    EXPECT_NEAR(exterior_mass(e, 0.0).h1_frac, 1.0, 1e-14);
    EXPECT_LT(exterior_mass(e, 12.0 - grid_->spacing()).h1_frac, 1e-12);
}

TEST_F(HarmonicBasis, DecayRadiusExamples) {
    const auto& b = *basis_;
    EXPECT_EQ(decay_radius(b, 20.0, 1.0, 5, 1), 0.0);
    EXPECT_LT(decay_radius(b, 1.0, 0.99, 5, 1), 0.2);
    double prev = 0.0;
    for (double lambda : {1.0, 9.0, 25.0, 49.0}) {
        const double r = decay_radius(b, lambda, 0.5, 20, 42);
        EXPECT_GE(r, prev) << lambda;
        prev = r;
    }
    EXPECT_THROW(decay_radius(b, 61.0, 0.5, 5, 1), std::invalid_argument);
    EXPECT_THROW(decay_radius(b, 9.0, 0.0, 5, 1), std::invalid_argument);
}

TEST(DecayRadius, ErrorsWhenBoxTooSmall) {
    const auto op = assemble(Grid::build(1, 12.0, 513), Potential::polynomial_radial(2.0));
    const auto basis = eigensolve(op, EigenRequest::below(60.0));
    EXPECT_THROW(decay_radius(basis, 60.0, 1e-30, 5, 1), std::runtime_error);
}
