#pragma once

#include "support/oracles.hpp"

#include <weightscape/weightscape.hpp>

#include <cstdint>
#include <random>

namespace fixtures {

using weightscape::Index;
using weightscape::Matrix;
using weightscape::Vector;

inline Vector normal_vector(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = z(rng);
    return v;
}

inline Matrix normal_matrix(Index r, Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i) m(i, j) = z(rng);
    return m;
}

// Noisy copies of a common target with per-candidate loadings and biases.
inline weightscape::ForecastPanel random_panel(std::uint64_t seed, Index T, Index S) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> load(0.2, 1.2), bias(-0.3, 0.3), noise(0.3, 1.5);
    weightscape::ForecastPanel p;
    p.y = normal_vector(T, rng).array() + 0.5;
    p.F.resize(T, S);
    for (Index s = 0; s < S; ++s) {
        const double a = load(rng), b = bias(rng), sd = noise(rng);
        p.F.col(s) = a * p.y + sd * normal_vector(T, rng);
        p.F.col(s).array() += b;
    }
    std::vector<int> q(static_cast<std::size_t>(S));
    for (Index s = 0; s < S; ++s) q[static_cast<std::size_t>(s)] = static_cast<int>(1 + s % 4);
    p.q = q;
    return p;
}

// Random SPD matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(Index n, std::mt19937_64& rng, double lo = 0.2, double hi = 5.0) {
    const Matrix Q = normal_matrix(n, n, rng).householderQr().householderQ();
    std::uniform_real_distribution<double> u(lo, hi);
    Vector d(n);
    for (Index i = 0; i < n; ++i) d(i) = u(rng);
    Matrix H = Q * d.asDiagonal() * Q.transpose();
    return 0.5 * (H + H.transpose());
}

inline oracle::Mat to_mat(const Matrix& M) {
    oracle::Mat out(static_cast<std::size_t>(M.rows()), oracle::Vec(static_cast<std::size_t>(M.cols())));
    for (Index i = 0; i < M.rows(); ++i)
        for (Index j = 0; j < M.cols(); ++j) out[i][j] = M(i, j);
    return out;
}

inline oracle::Vec to_vec(const Vector& v) { return oracle::Vec(v.data(), v.data() + v.size()); }

inline Vector from_vec(const oracle::Vec& v) {
    Vector out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = v[i];
    return out;
}

// Regression objective without Eigen products: H = F'F, g = -F'y.
inline std::pair<oracle::Mat, oracle::Vec> naive_regression_objective(const Matrix& F, const Vector& y) {
    const oracle::Mat Fm = to_mat(F), Ft = oracle::transpose(Fm);
    return {oracle::matmul(Ft, Fm), [&] {
                oracle::Vec g = oracle::matvec(Ft, to_vec(y));
                for (double& v : g) v = -v;
                return g;
            }()};
}

inline double naive_ssr(const Matrix& F, const Vector& y, const Vector& w, double intercept = 0.0) {
    double s = 0.0;
    for (Index t = 0; t < F.rows(); ++t) {
        double yh = intercept;
        for (Index j = 0; j < F.cols(); ++j) yh += F(t, j) * w(j);
        s += (y(t) - yh) * (y(t) - yh);
    }
    return s;
}

}  // namespace fixtures
