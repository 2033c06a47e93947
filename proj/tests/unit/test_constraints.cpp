#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace weightscape;
using fixtures::from_vec;
using fixtures::to_mat;
using fixtures::to_vec;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

QuadraticObjective objective(const Matrix& H, const Vector& g) { return {H, g, 0.0}; }

Matrix diag(std::initializer_list<double> v) { return vec(v).asDiagonal(); }

Vector random_unit(Index n, std::mt19937_64& rng) {
    Vector v = fixtures::normal_vector(n, rng);
    return v / v.norm();
}

}  // namespace

// ---------------------------------------------------------------------------
// Projections

TEST(Project, SymmetricPointOnSimplex) {
    EXPECT_TRUE(project(vec({0.6, 0.6}), WeightSpace::D).isApprox(vec({0.5, 0.5}), 1e-15));
}

TEST(Project, BoxClamp) {
    EXPECT_TRUE(project(vec({-0.5, 0.3, 2.0}), WeightSpace::C).isApprox(vec({0.0, 0.3, 1.0}), 1e-15));
}

TEST(Project, SimplexMatchesGridOracle) {
    const Vector v = vec({1.2, 0.4, -0.2});
    // Nearest simplex point minimizes w'w/2 - v'w.
    const oracle::Vec ref = oracle::grid_argmin_simplex(to_mat(Matrix::Identity(3, 3)), to_vec(-v));
    const Vector p = project(v, WeightSpace::D);
    EXPECT_LE((p - from_vec(ref)).norm(), 1e-9);
    EXPECT_TRUE(p.isApprox(vec({0.9, 0.1, 0.0}), 1e-12));
}

TEST(Project, SphereAndHyperplaneAndIdentity) {
    EXPECT_TRUE(project(vec({3.0, 4.0}), WeightSpace::E).isApprox(vec({0.6, 0.8}), 1e-15));
    EXPECT_NEAR(project(vec({3.0, 4.0, -1.0}), WeightSpace::B).sum(), 1.0, 1e-15);
    EXPECT_EQ(project(vec({3.0, -4.0}), WeightSpace::A), vec({3.0, -4.0}));
    EXPECT_THROW(project(Vector::Zero(3), WeightSpace::E), InputError);
}

TEST(Project, IdempotentOnEverySpace) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const Vector v = 2.0 * fixtures::normal_vector(1 + trial % 6, rng);
        for (WeightSpace s : {WeightSpace::A, WeightSpace::B, WeightSpace::C, WeightSpace::D, WeightSpace::E}) {
            const Vector p = project(v, s);
            EXPECT_LE((project(p, s) - p).cwiseAbs().maxCoeff(), 1e-12) << to_string(s);
            EXPECT_TRUE(is_feasible(p, s, 1e-12)) << to_string(s);
        }
    }
}

TEST(Project, SimplexMatchesOracleOnRandomPoints) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const Index n = 2 + trial % 2;
        const Vector v = fixtures::normal_vector(n, rng);
        const oracle::Vec ref = oracle::grid_argmin_simplex(to_mat(Matrix::Identity(n, n)), to_vec(-v));
        EXPECT_LE((project(v, WeightSpace::D) - from_vec(ref)).norm(), 1e-8);
    }
}

// ---------------------------------------------------------------------------
// Spectral decomposition

TEST(Decompose, OrthonormalAscendingAndReconstructs) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 40; ++trial) {
        const Index n = 1 + trial % 7;
        const Matrix H = fixtures::random_spd(n, rng, 0.01, 50.0);
        const SpectralDecomposition d = decompose(H);
        const Matrix& Q = d.eigenvectors;
        EXPECT_LE((Q.transpose() * Q - Matrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LE((Q * d.eigenvalues.asDiagonal() * Q.transpose() - H).cwiseAbs().maxCoeff(),
                  1e-8 * H.cwiseAbs().maxCoeff());
        for (Index i = 1; i < n; ++i) EXPECT_LE(d.eigenvalues(i - 1), d.eigenvalues(i));
        const oracle::Eig ref = oracle::jacobi(to_mat(H));
        for (Index i = 0; i < n; ++i) EXPECT_NEAR(d.eigenvalues(i), ref.values[i], 1e-10 * 50.0);
        const SpectralDecomposition again = decompose(H);
        EXPECT_EQ(again.eigenvalues, d.eigenvalues);
        EXPECT_EQ(again.eigenvectors, d.eigenvectors);
    }
}

// ---------------------------------------------------------------------------
// Equality-constrained closed forms

TEST(EqualityQp, SymmetricHyperplane) {
    const auto r = solve_equality_qp(objective(Matrix::Identity(2, 2), Vector::Zero(2)), true);
    EXPECT_TRUE(r.w.isApprox(vec({0.5, 0.5}), 1e-15));
    ASSERT_TRUE(r.rho0);
}

TEST(EqualityQp, WeightedHyperplane) {
    const auto r = solve_equality_qp(objective(diag({1.0, 4.0}), Vector::Zero(2)), true);
    EXPECT_NEAR(r.w(0), 0.8, 1e-15);
    EXPECT_NEAR(r.w(1), 0.2, 1e-15);
}

TEST(EqualityQp, Unconstrained) {
    const auto r = solve_equality_qp(objective(Matrix::Identity(2, 2), vec({-2.0, 0.0})), false);
    EXPECT_TRUE(r.w.isApprox(vec({2.0, 0.0}), 1e-15));
    EXPECT_FALSE(r.rho0);
}

TEST(EqualityQp, MultiplierSatisfiesStationarity) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const Index n = 2 + trial % 5;
        const Matrix H = fixtures::random_spd(n, rng);
        const Vector g = fixtures::normal_vector(n, rng);
        const auto r = solve_equality_qp(objective(H, g), true);
        const Vector resid = H * r.w + g + *r.rho0 * Vector::Ones(n);
        EXPECT_LE(resid.norm(), 1e-10 * (1.0 + g.norm()));
        EXPECT_NEAR(r.w.sum(), 1.0, 1e-12);
        // Same multiplier from an independent linear solve of the KKT system.
        oracle::Mat K(static_cast<std::size_t>(n + 1), oracle::Vec(static_cast<std::size_t>(n + 1), 0.0));
        oracle::Vec rhs(static_cast<std::size_t>(n + 1), 1.0);
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) K[i][j] = H(i, j);
            K[i][n] = 1.0;
            K[n][i] = 1.0;
            rhs[i] = -g(i);
        }
        const oracle::Vec sol = oracle::solve(K, rhs);
        EXPECT_NEAR(*r.rho0, sol[n], 1e-9 * (1.0 + std::abs(sol[n])));
    }
}

TEST(EqualityQp, RefusesDegenerateQuadratic) {
    Matrix H(2, 2);
    H << 1.0, 1.0, 1.0, 1.0;
    EXPECT_THROW(solve_equality_qp(objective(H, Vector::Zero(2)), true), SingularSystemError);
    EXPECT_THROW(solve_equality_qp(objective(diag({1.0, -1.0}), Vector::Zero(2)), false), SingularSystemError);
    try {
        solve_equality_qp(objective(diag({1e-12, 1.0}), Vector::Zero(2)), false);
        FAIL();
    } catch (const SingularSystemError& e) {
        EXPECT_NEAR(e.lambda_min, 1e-12, 1e-20);
        EXPECT_NEAR(e.lambda_max, 1.0, 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Active-set QP

TEST(InequalityQp, SimplexVertex) {
    const auto r = solve_inequality_qp(objective(Matrix::Identity(2, 2), vec({-4.0, 0.0})), WeightSpace::D);
    EXPECT_TRUE(r.w.isApprox(vec({1.0, 0.0}), 1e-15));
    ASSERT_EQ(r.active_set.size(), 1u);
    EXPECT_EQ(r.active_set[0], 1);  // second coordinate, 0-based
}

TEST(InequalityQp, SimplexCenter) {
    const auto r = solve_inequality_qp(objective(Matrix::Identity(2, 2), vec({-1.0, -1.0})), WeightSpace::D);
    EXPECT_TRUE(r.w.isApprox(vec({0.5, 0.5}), 1e-15));
    EXPECT_TRUE(r.active_set.empty());
}

TEST(InequalityQp, CorrelatedBoxMatchesGridOracle) {
    Matrix H(2, 2);
    H << 2.0, 1.8, 1.8, 2.0;
    const Vector g = vec({-2.0, -1.9});
    const auto r = solve_inequality_qp(objective(H, g), WeightSpace::C);
    const Vector ref = from_vec(oracle::grid_argmin_box(to_mat(H), to_vec(g)));
    EXPECT_LE((r.w - ref).norm(), 1e-4);
}

TEST(InequalityQp, MatchesOraclesOnRandomSmallInstances) {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 60; ++trial) {
        const Index n = 2 + trial % 2;
        const Matrix H = fixtures::random_spd(n, rng, 0.3, 4.0);
        const Vector g = 2.0 * fixtures::normal_vector(n, rng);
        for (WeightSpace s : {WeightSpace::C, WeightSpace::D}) {
            const auto r = solve_inequality_qp(objective(H, g), s);
            const oracle::Vec ref = s == WeightSpace::C ? oracle::grid_argmin_box(to_mat(H), to_vec(g))
                                                        : oracle::grid_argmin_simplex(to_mat(H), to_vec(g));
            EXPECT_LE((r.w - from_vec(ref)).norm(), 1e-4) << "trial " << trial << " space " << to_string(s);
        }
    }
}

TEST(InequalityQp, KktConditionsOnRandomInstances) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const Index n = 2 + trial % 9;
        const Matrix H = fixtures::random_spd(n, rng, 0.05, 10.0);
        const Vector g = 3.0 * fixtures::normal_vector(n, rng);
        for (WeightSpace s : {WeightSpace::C, WeightSpace::D}) {
            const auto r = solve_inequality_qp(objective(H, g), s);
            ASSERT_TRUE(is_feasible(r.w, s, 1e-12));
            const double rho = r.rho0.value_or(0.0);
            const Vector upper = r.upper.size() ? r.upper : Vector::Zero(n);
            const Vector stat = H * r.w + g + rho * Vector::Ones(n) - r.lower + upper;
            EXPECT_LE(stat.norm(), 1e-8 * (1.0 + g.norm()));
            EXPECT_GE(r.lower.minCoeff(), -1e-10);
            if (r.upper.size()) EXPECT_GE(r.upper.minCoeff(), -1e-10);
            for (Index i = 0; i < n; ++i) {
                EXPECT_LE(std::abs(r.lower(i) * r.w(i)), 1e-8);
                EXPECT_LE(std::abs(upper(i) * (1.0 - r.w(i))), 1e-8);
            }
            for (int idx : r.active_set) {
                const double wi = r.w(idx);
                EXPECT_TRUE(wi == 0.0 || wi == 1.0);
            }
        }
    }
}

TEST(InequalityQp, OptimalValuesNest) {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 120; ++trial) {
        const Index n = 2 + trial % 5;
        const Matrix H = fixtures::random_spd(n, rng, 0.1, 6.0);
        const Vector g = 2.0 * fixtures::normal_vector(n, rng);
        const auto obj = objective(H, g);
        const double a = obj.value(solve_equality_qp(obj, false).w);
        const double b = obj.value(solve_equality_qp(obj, true).w);
        const double c = obj.value(solve_inequality_qp(obj, WeightSpace::C).w);
        const double d = obj.value(solve_inequality_qp(obj, WeightSpace::D).w);
        const double slack = 1e-10 * (1.0 + std::abs(a));
        EXPECT_GE(d + slack, c);
        EXPECT_GE(c + slack, a);
        EXPECT_GE(d + slack, b);
        EXPECT_GE(b + slack, a);
    }
}

TEST(InequalityQp, RefusesDegenerateQuadratic) {
    Matrix H(2, 2);
    H << 1.0, 1.0, 1.0, 1.0;
    EXPECT_THROW(solve_inequality_qp(objective(H, vec({-1.0, 0.0})), WeightSpace::D), SingularSystemError);
    EXPECT_THROW(solve_inequality_qp(objective(Matrix::Identity(2, 2), vec({0.0, 0.0})), WeightSpace::A), InputError);
}

TEST(InequalityQp, IterationCapRaises) {
    std::mt19937_64 rng(13);
    int checked = 0;
    for (int trial = 0; trial < 100 && checked < 10; ++trial) {
        const auto obj = objective(fixtures::random_spd(6, rng, 0.05, 10.0), 3.0 * fixtures::normal_vector(6, rng));
        const auto full = solve_inequality_qp(obj, WeightSpace::D);
        if (full.iterations < 2) continue;
        QpOptions opt;
        opt.max_iterations = full.iterations - 1;
        EXPECT_THROW(solve_inequality_qp(obj, WeightSpace::D, opt), ConvergenceError);
        ++checked;
    }
    EXPECT_GT(checked, 0);
}

// ---------------------------------------------------------------------------
// Unit sphere

TEST(UnitNorm, IdentityReturnsNormalizedRightHandSide) {
    const auto r = solve_unit_norm(objective(Matrix::Identity(2, 2), vec({-3.0, -4.0})));
    EXPECT_LE((r.w - vec({0.6, 0.8})).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.nu, -4.0, 1e-10);
}

TEST(UnitNorm, DiagonalMatchesBisectionOracle) {
    const auto r = solve_unit_norm(objective(diag({1.0, 2.0}), vec({-1.0, -1.0})));
    const double nu = oracle::secular_root_bisect({1.0, 2.0}, {1.0, 1.0}, -1e6, 1.0);
    EXPECT_NEAR(r.nu, nu, 1e-10);
    const Vector w = vec({1.0 / (1.0 - nu), 1.0 / (2.0 - nu)});
    EXPECT_LE((r.w - w).norm(), 1e-10);
    EXPECT_NEAR(r.w.norm(), 1.0, 1e-12);
}

TEST(UnitNorm, ZeroRightHandSideIsRejected) {
    EXPECT_THROW(solve_unit_norm(objective(diag({1.0, 2.0}), vec({0.0, 0.0}))), InputError);
}

TEST(UnitNorm, HardCaseReturnsGlobalMinimizer) {
    // b has no component along the lowest eigenvector and is short.
    const auto obj = objective(diag({1.0, 2.0}), vec({0.0, -0.5}));
    const auto r = solve_unit_norm(obj);
    EXPECT_TRUE(r.hard_case);
    EXPECT_NEAR(r.w.norm(), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(r.w(0)), std::sqrt(0.75), 1e-12);
    EXPECT_NEAR(r.w(1), 0.5, 1e-12);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) EXPECT_LE(obj.value(r.w), obj.value(random_unit(2, rng)) + 1e-12);
}

TEST(UnitNorm, GlobalOptimalityOnRandomInstances) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const Index n = 2 + trial % 5;
        const Matrix H = fixtures::random_spd(n, rng, 0.1, 8.0);
        const Vector g = (trial % 3 == 0 ? 0.05 : 3.0) * fixtures::normal_vector(n, rng);
        const auto obj = objective(H, g);
        const auto r = solve_unit_norm(obj);
        EXPECT_NEAR(r.w.norm(), 1.0, 1e-10);
        const SpectralDecomposition dec = decompose(H);
        ASSERT_LT(r.nu, dec.eigenvalues(0));
        const oracle::Vec bt = to_vec(dec.eigenvectors.transpose() * (-g));
        EXPECT_NEAR(oracle::secular(to_vec(dec.eigenvalues), bt, r.nu), 1.0, 1e-10);
        const double v = obj.value(r.w);
        const double slack = 1e-12 * (1.0 + std::abs(v));
        for (Index k = 0; k < n; ++k) {
            EXPECT_LE(v, obj.value(dec.eigenvectors.col(k)) + slack);
            EXPECT_LE(v, obj.value(-dec.eigenvectors.col(k)) + slack);
        }
        for (int i = 0; i < 1000; ++i) EXPECT_LE(v, obj.value(random_unit(n, rng)) + slack);
    }
}

TEST(UnitNorm, RefusesDegenerateQuadratic) {
    EXPECT_THROW(solve_unit_norm(objective(diag({0.0, 1.0}), vec({1.0, 1.0}))), SingularSystemError);
}

// ---------------------------------------------------------------------------
// Interior uniqueness certificate

TEST(InteriorCertificate, EmptyIntervalHoldsVacuously) {
    const auto c = certify_interior_uniqueness(objective(Matrix::Identity(2, 2), vec({-1.0, 0.0})));
    EXPECT_TRUE(c.holds);
}

TEST(InteriorCertificate, DiagonalAgreesWithDenseGrid) {
    const auto c = certify_interior_uniqueness(objective(diag({1.0, 2.0}), vec({-1.0, -1.0})));
    const double grid = oracle::secular_grid_min({1.0, 2.0}, {1.0, 1.0}, 1.0, 2.0);
    EXPECT_EQ(c.holds, grid > 1.0);
    EXPECT_TRUE(c.holds);
    EXPECT_NEAR(c.infimum, 8.0, 1e-9);  // minimum at nu = 1.5
    EXPECT_LE(c.infimum, grid + 1e-9);
}

TEST(InteriorCertificate, TinyRightHandSideFails) {
    const auto c = certify_interior_uniqueness(objective(diag({1.0, 100.0}), vec({-1e-9, -1e-9})));
    const double grid = oracle::secular_grid_min({1.0, 100.0}, {1e-9, 1e-9}, 1.0, 100.0);
    EXPECT_LT(grid, 1.0);
    EXPECT_FALSE(c.holds);
}

TEST(InteriorCertificate, MatchesGridOnRandomInstances) {
    std::mt19937_64 rng(8);
    int agree = 0, decided = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const Index n = 2 + trial % 3;
        const Matrix H = fixtures::random_spd(n, rng, 0.5, 5.0);
        const Vector g = (0.1 + trial % 4) * fixtures::normal_vector(n, rng);
        const auto c = certify_interior_uniqueness(objective(H, g));
        const SpectralDecomposition dec = decompose(H);
        const oracle::Vec lam = to_vec(dec.eigenvalues), bt = to_vec(dec.eigenvectors.transpose() * (-g));
        double grid = std::numeric_limits<double>::infinity();
        for (Index i = 0; i + 1 < n; ++i)
            grid = std::min(grid, oracle::secular_grid_min(lam, bt, lam[i], lam[i + 1]));
        // The exact infimum never exceeds a sampled value.
        EXPECT_LE(c.infimum, grid * (1.0 + 1e-9));
        if (std::abs(grid - 1.0) > 1e-3) {
            ++decided;
            if (c.holds == (grid > 1.0)) ++agree;
        }
    }
    EXPECT_EQ(agree, decided);
}
