#pragma once

#include "weightscape/constraints.hpp"
#include "weightscape/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace weightscape {

struct MallowsInputs {
    double sigma2 = 0.0;
    Vector k;
    std::optional<Vector> phi;
};

inline Matrix gram(const Matrix& F) {
    Matrix G = Matrix::Zero(F.cols(), F.cols());
    G.selfadjointView<Eigen::Lower>().rankUpdate(F.transpose());
    return G.selfadjointView<Eigen::Lower>();
}

namespace detail {

// Solves min w'Hw/2 + g'w over the space and packages the result.
inline WeightSolution solve_in_space(const QuadraticObjective& obj, WeightSpace space, const MethodSpec& method) {
    WeightSolution sol;
    sol.space = space;
    sol.method = method;
    switch (space) {
    case WeightSpace::A:
    case WeightSpace::B: {
        EqualityQpResult r = solve_equality_qp(obj, space == WeightSpace::B);
        sol.w = std::move(r.w);
        sol.multipliers.rho0 = r.rho0;
        sol.unique_certified = true;
        break;
    }
    case WeightSpace::C:
    case WeightSpace::D: {
        InequalityQpResult r = solve_inequality_qp(obj, space);
        sol.w = std::move(r.w);
        sol.multipliers.rho0 = r.rho0;
        sol.multipliers.box = std::move(r.lower);
        if (space == WeightSpace::C) sol.multipliers.box_upper = std::move(r.upper);
        sol.active_set = std::move(r.active_set);
        sol.unique_certified = true;
        break;
    }
    case WeightSpace::E: {
        UnitNormResult r = solve_unit_norm(obj);
        sol.w = std::move(r.w);
        sol.multipliers.nu = r.nu;
        sol.unique_certified = !r.hard_case && certify_interior_uniqueness(obj).holds;
        break;
    }
    case WeightSpace::Aprime:
        throw InputError("space Aprime needs a criterion-specific intercept solve");
    }
    return sol;
}

}  // namespace detail

// Half-scale criterion objectives: twice the objective value plus const equals the criterion.

inline QuadraticObjective regression_objective(const Matrix& F, const Vector& y) {
    return {gram(F), -(F.transpose() * y), 0.5 * y.squaredNorm()};
}

inline Vector mallows_psi(const ForecastPanel& panel, const MallowsInputs& in, MallowsVariant variant) {
    const Index S = panel.S();
    if (!(in.sigma2 >= 0.0) || !std::isfinite(in.sigma2)) throw InputError("sigma2 must be finite and >= 0");
    if (in.k.size() != S) throw InputError("dimension mismatch: k length differs from S");
    if ((in.k.array() < 0.0).any() || !in.k.allFinite()) throw InputError("k entries must be finite and >= 0");
    Vector psi = in.sigma2 * in.k - panel.F.transpose() * panel.y;
    if (variant == MallowsVariant::KL) {
        if (!in.phi) throw InputError("KL variant requires phi");
        if (in.phi->size() != S) throw InputError("dimension mismatch: phi length differs from S");
        psi -= *in.phi;
    }
    return psi;
}

inline QuadraticObjective mallows_objective(const ForecastPanel& panel, const MallowsInputs& in,
                                            MallowsVariant variant) {
    return {gram(panel.F), mallows_psi(panel, in, variant), 0.5 * panel.y.squaredNorm()};
}

// ---------------------------------------------------------------------------
// Regression weights: minimize ||y - Fw||^2 over the space.

inline WeightSolution fit_regression(const ForecastPanel& panel, WeightSpace space) {
    validate_panel(panel);
    const QuadraticObjective obj = regression_objective(panel.F, panel.y);
    if (space != WeightSpace::Aprime) return detail::solve_in_space(obj, space, Regression{});
    const Matrix& G = obj.H;
    const Vector c = -obj.g;

    // Free intercept: partial out the constant from the unconstrained fit.
    const Index T = panel.T();
    Matrix Ft(T, panel.S() + 1);
    Ft.col(0).setOnes();
    Ft.rightCols(panel.S()) = panel.F;
    require_strictly_convex_matrix(gram(Ft), "intercept-augmented Gram matrix");
    require_strictly_convex_matrix(G, "Gram matrix F'F");
    Eigen::LLT<Matrix> llt(G);
    const Vector wa = llt.solve(c);
    const Vector u = llt.solve(panel.F.transpose() * Vector::Ones(T));
    const double theta = static_cast<double>(T) - (panel.F * u).sum();
    if (!(theta > 0.0)) throw SingularSystemError("theta = n - 1'F(F'F)^{-1}F'1 is not positive", theta, 0.0);
    const Vector e = panel.y - panel.F * wa;
    const double delta = e.sum() / theta;
    WeightSolution sol;
    sol.w = wa - delta * u;
    sol.intercept = delta;
    sol.space = WeightSpace::Aprime;
    sol.method = Regression{};
    sol.unique_certified = true;
    return sol;
}

// Residual variance of the full model with every candidate, df-corrected.
inline double estimate_sigma2(const ForecastPanel& panel) {
    validate_panel(panel);
    const Index T = panel.T(), S = panel.S();
    if (T <= S) throw InputError("estimate_sigma2 needs T > S");
    const Matrix G = gram(panel.F);
    require_strictly_convex_matrix(G, "Gram matrix F'F");
    const Vector w = G.llt().solve(panel.F.transpose() * panel.y);
    return (panel.y - panel.F * w).squaredNorm() / static_cast<double>(T - S);
}

// Minimizes w'F'Fw + 2w'psi + y'y with psi = sigma2 k - phi - F'y.
inline WeightSolution fit_generalized_mallows(const ForecastPanel& panel, const MallowsInputs& in,
                                              MallowsVariant variant, WeightSpace space) {
    validate_panel(panel);
    if (space == WeightSpace::Aprime) throw InputError("space Aprime is not defined for the Mallows criterion");
    GeneralizedMallows spec{variant, in.sigma2, std::nullopt};
    if (variant == MallowsVariant::KL) spec.phi = in.phi;
    return detail::solve_in_space(mallows_objective(panel, in, variant), space, spec);
}

// f_t^[-t] = (f_t - h_tt y_t) / (1 - h_tt), candidate by candidate.
inline ForecastPanel build_loo_forecasts(const ForecastPanel& panel, const Matrix& hat_diagonals) {
    validate_panel(panel);
    if (hat_diagonals.rows() != panel.T() || hat_diagonals.cols() != panel.S())
        throw InputError("dimension mismatch: hat diagonals must be T x S");
    if ((hat_diagonals.array() >= 1.0).any())
        throw InputError("leverage-one observation: leave-one-out forecast undefined");
    if ((hat_diagonals.array() < 0.0).any()) throw InputError("hat diagonals must be >= 0");
    ForecastPanel out = panel;
    Matrix loo(panel.T(), panel.S());
    for (Index s = 0; s < panel.S(); ++s)
        for (Index t = 0; t < panel.T(); ++t) {
            const double h = hat_diagonals(t, s);
            loo(t, s) = (panel.F(t, s) - h * panel.y(t)) / (1.0 - h);
        }
    out.loo = std::move(loo);
    return out;
}

// Leave-one-out CV: minimize ||y - Fbar w||^2 over the space.
inline WeightSolution fit_cv(const ForecastPanel& panel, WeightSpace space) {
    validate_panel(panel);
    if (!panel.loo) throw InputError("cross-validation needs leave-one-out forecasts");
    if (space == WeightSpace::Aprime) throw InputError("space Aprime is not defined for the CV criterion");
    return detail::solve_in_space(regression_objective(*panel.loo, panel.y), space, CrossValidation{});
}

// ---------------------------------------------------------------------------
// Performance-based weights

// sigma2_s = ||y - f_s||^2 / T.
inline Vector per_model_mse(const ForecastPanel& panel) {
    validate_panel(panel);
    return (panel.F.colwise() - panel.y).colwise().squaredNorm().transpose() / static_cast<double>(panel.T());
}

namespace detail {

inline Vector normalize_log_weights(const Vector& logw) {
    const double m = logw.maxCoeff();
    if (!std::isfinite(m)) throw InputError("every performance weight is zero");
    Vector w = (logw.array() - m).exp().matrix();
    return w / w.sum();
}

}  // namespace detail

// exp(-IC/2) normalized, computed with a max shift.
inline Vector smoothed_ic_weights(const Vector& ic) {
    if (ic.size() < 1 || !ic.allFinite()) throw InputError("information criteria must be finite and nonempty");
    return detail::normalize_log_weights(-0.5 * ic);
}

inline WeightSolution fit_performance(Index T, const Vector& sigma2, const std::vector<int>& q,
                                      const PerformanceFamily& family) {
    const Index S = sigma2.size();
    WeightSolution sol;
    sol.space = WeightSpace::D;
    sol.method = Performance{family};
    sol.unique_certified = true;
    if (const auto* il = std::get_if<InverseLoss>(&family)) {
        if (il->loss.size() < 1 || !il->loss.allFinite() || (il->loss.array() <= 0.0).any())
            throw InputError("inverse-loss weights need strictly positive losses");
        sol.w = il->loss.cwiseInverse();
        sol.w /= sol.w.sum();
        return sol;
    }
    if (S < 1) throw InputError("performance weights need at least one candidate");
    if (static_cast<Index>(q.size()) != S) throw InputError("dimension mismatch: q length differs from S");
    if (!sigma2.allFinite() || (sigma2.array() <= 0.0).any())
        throw InputError("performance weights need every sigma2_s > 0");
    GeneralPerformance p;
    const double Td = static_cast<double>(T);
    if (const auto* gp = std::get_if<GeneralPerformance>(&family)) p = *gp;
    else if (std::holds_alternative<SmoothedAIC>(family)) p = {std::exp(-1.0), 0.0, -Td / 2.0};
    else p = {1.0 / std::sqrt(Td), 0.0, -Td / 2.0};
    if (!(p.a > 0.0) || !(p.b >= 0.0) || !(p.c <= 0.0)) throw InputError("performance family needs a > 0, b >= 0, c <= 0");
    Vector logw(S);
    for (Index s = 0; s < S; ++s) {
        const double qs = q[s];
        double v = qs * std::log(p.a) + p.c * std::log(sigma2(s));
        if (p.b != 0.0) v += p.b * std::log(Td - qs);
        logw(s) = v;
    }
    sol.w = detail::normalize_log_weights(logw);
    return sol;
}

// ---------------------------------------------------------------------------
// Eigenvector of the smallest eigenvalue of M = T^{-1} (y1' - F)'(y1' - F)

struct EigenvectorFit {
    WeightSolution solution;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    int multiplicity = 1;
};

inline Matrix error_moment_matrix(const ForecastPanel& panel) {
    const Matrix E = (-panel.F).colwise() + panel.y;
    return gram(E) / static_cast<double>(panel.T());
}

// First component with magnitude above 1e-12 is made positive.
inline void normalize_sign(Vector& w) {
    for (Index i = 0; i < w.size(); ++i) {
        if (std::abs(w(i)) > 1e-12) {
            if (w(i) < 0.0) w = -w;
            return;
        }
    }
}

inline EigenvectorFit fit_eigenvector_detailed(const ForecastPanel& panel) {
    validate_panel(panel);
    const SpectralDecomposition dec = decompose(error_moment_matrix(panel));
    EigenvectorFit out;
    out.lambda_min = dec.eigenvalues(0);
    out.lambda_max = dec.eigenvalues(dec.eigenvalues.size() - 1);
    const double tol = 1e-9 * std::abs(out.lambda_max);
    out.multiplicity = 0;
    for (Index i = 0; i < dec.eigenvalues.size(); ++i)
        if (dec.eigenvalues(i) - out.lambda_min <= tol) ++out.multiplicity;
    Vector w = dec.eigenvectors.col(0);
    normalize_sign(w);
    out.solution.w = w;
    out.solution.space = WeightSpace::E;
    out.solution.method = Eigenvector{};
    out.solution.multipliers.nu = out.lambda_min;
    out.solution.unique_certified = out.multiplicity == 1;
    return out;
}

inline WeightSolution fit_eigenvector(const ForecastPanel& panel) { return fit_eigenvector_detailed(panel).solution; }

// ---------------------------------------------------------------------------
// Soft-penalized objectives; all are unconstrained and solved in closed form.

inline WeightSolution fit_soft_penalized(const ForecastPanel& panel, const SoftPenalized& params) {
    validate_panel(panel);
    const Index S = panel.S();
    const Vector mu = params.mu.size() == 0 ? Vector::Zero(S) : params.mu;
    const Vector nu = params.nu.size() == 0 ? Vector::Zero(S) : params.nu;
    if (mu.size() != S || nu.size() != S) throw InputError("dimension mismatch: penalty vectors must have length S");
    if (!(params.lambda >= 0.0) || (mu.array() < 0.0).any() || (nu.array() < 0.0).any())
        throw InputError("penalty multipliers must be >= 0");
    Matrix G = gram(panel.F);
    Vector c = panel.F.transpose() * panel.y;
    switch (params.flavor) {
    case PenaltyFlavor::C: c += 0.5 * (mu - nu); break;
    case PenaltyFlavor::D: c -= 0.5 * (params.lambda * Vector::Ones(S) - mu); break;
    case PenaltyFlavor::E: G.diagonal().array() += params.lambda; break;
    }
    require_strictly_convex_matrix(G, "penalized quadratic term");
    WeightSolution sol;
    sol.w = G.llt().solve(c);
    sol.space = WeightSpace::A;
    sol.method = params;
    sol.unique_certified = true;
    return sol;
}

// ---------------------------------------------------------------------------
// Dispatch by method

// k comes from the panel's q; a KL spec without phi uses phi = 0.
inline MallowsInputs mallows_inputs(const ForecastPanel& panel, const GeneralizedMallows& m) {
    if (!panel.q) throw InputError("Mallows criterion needs q (parameter counts) for the k vector");
    if (static_cast<Index>(panel.q->size()) != panel.S()) throw InputError("dimension mismatch: q length differs from S");
    MallowsInputs in;
    in.sigma2 = m.sigma2;
    in.k = Eigen::Map<const Eigen::VectorXi>(panel.q->data(), panel.S()).cast<double>();
    if (m.variant == MallowsVariant::KL) in.phi = m.phi ? *m.phi : Vector::Zero(panel.S());
    return in;
}

inline WeightSolution fit(const ForecastPanel& panel, const MethodSpec& method, WeightSpace space) {
    validate_panel(panel);
    if (const auto* m = std::get_if<GeneralizedMallows>(&method))
        return fit_generalized_mallows(panel, mallows_inputs(panel, *m), m->variant, space);
    if (std::holds_alternative<Regression>(method)) return fit_regression(panel, space);
    if (std::holds_alternative<CrossValidation>(method)) return fit_cv(panel, space);
    if (const auto* p = std::get_if<Performance>(&method)) {
        if (space != WeightSpace::D) throw InputError("performance-based weights live in space D");
        const std::vector<int> q = panel.q ? *panel.q : std::vector<int>(panel.S(), 0);
        return fit_performance(panel.T(), per_model_mse(panel), q, p->family);
    }
    if (std::holds_alternative<Eigenvector>(method)) {
        if (space != WeightSpace::E) throw InputError("eigenvector weights live in space E");
        return fit_eigenvector(panel);
    }
    const auto& sp = std::get<SoftPenalized>(method);
    if (space != WeightSpace::A) throw InputError("soft-penalized weights are unconstrained (space A)");
    return fit_soft_penalized(panel, sp);
}

}  // namespace weightscape
