#pragma once

#include "weightscape/constraints.hpp"
#include "weightscape/estimators.hpp"
#include "weightscape/types.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace weightscape {

// ---------------------------------------------------------------------------
// Fit and forecast quality

inline Vector combined_forecast(const WeightSolution& sol, const Matrix& F) {
    if (sol.w.size() != F.cols()) throw InputError("dimension mismatch: weights and forecast columns");
    Vector yhat = F * sol.w;
    if (sol.intercept) yhat.array() += *sol.intercept;
    return yhat;
}

inline Vector residuals(const WeightSolution& sol, const ForecastPanel& panel) {
    return panel.y - combined_forecast(sol, panel.F);
}

inline double ssr(const WeightSolution& sol, const ForecastPanel& panel) {
    return residuals(sol, panel).squaredNorm();
}

inline double empirical_bias(const WeightSolution& sol, const ForecastPanel& panel) {
    return residuals(sol, panel).mean();
}

inline double msfe(const WeightSolution& sol, const ForecastPanel& test_panel) {
    if (test_panel.T() == 0) throw InputError("empty test panel");
    return residuals(sol, test_panel).squaredNorm() / static_cast<double>(test_panel.T());
}

inline double sparsity_pct(const Vector& w, double zero_tol = kZeroTol) {
    if (w.size() == 0) return 0.0;
    const auto zeros = (w.array().abs() <= zero_tol).count();
    return 100.0 * static_cast<double>(zeros) / static_cast<double>(w.size());
}

// ---------------------------------------------------------------------------
// Variance closed forms and bounds

enum class BoundKind { Exact, Bound };

struct VarianceReport {
    std::string space_method;
    std::optional<double> exact_variance;
    double upper_bound = std::numeric_limits<double>::infinity();
    BoundKind bound_kind = BoundKind::Bound;
};

// Conditional variance of the regression-weight forecast f_next'w given F.
inline VarianceReport conditional_variance(WeightSpace space, const Vector& f_next, const ForecastPanel& panel,
                                           double sigma2) {
    validate_panel(panel);
    if (f_next.size() != panel.S()) throw InputError("dimension mismatch: f_next length differs from S");
    if (space != WeightSpace::A && space != WeightSpace::Aprime && space != WeightSpace::B)
        throw InputError("closed-form variance exists for spaces A, Aprime and B only");
    const Matrix G = gram(panel.F);
    require_strictly_convex_matrix(G, "Gram matrix F'F");
    Eigen::LLT<Matrix> llt(G);
    const Vector Gf = llt.solve(f_next);
    double v = sigma2 * f_next.dot(Gf);
    if (space == WeightSpace::Aprime) {
        const Vector Ft1 = panel.F.transpose() * Vector::Ones(panel.T());
        const double theta = static_cast<double>(panel.T()) - Ft1.dot(llt.solve(Ft1));
        if (!(theta > 0.0)) throw SingularSystemError("theta is not positive", theta, 0.0);
        const double beta = Gf.dot(Ft1);
        v += sigma2 * (1.0 - beta) * (1.0 - beta) / theta;
    } else if (space == WeightSpace::B) {
        const double phi = llt.solve(Vector::Ones(panel.S())).sum();
        const double f1 = Gf.sum();
        v -= sigma2 * f1 * f1 / phi;
    }
    VarianceReport r;
    r.space_method = to_string(space) + "/reg";
    r.exact_variance = v;
    r.bound_kind = BoundKind::Exact;
    return r;
}

inline VarianceReport variance_bound(WeightSpace space, const Vector& f_next, Index S) {
    const double ff = f_next.squaredNorm();
    VarianceReport r;
    r.space_method = to_string(space);
    switch (space) {
    case WeightSpace::C: r.upper_bound = static_cast<double>(S) * ff; break;
    case WeightSpace::D:
    case WeightSpace::E: r.upper_bound = ff; break;
    default: throw InputError("variance bounds exist for spaces C, D and E only");
    }
    return r;
}

// nullopt marks an unbounded MSFE (spaces A, Aprime, B).
inline std::optional<double> msfe_bound(WeightSpace space, double mu_next, const Vector& f_next, Index S,
                                        double sigma2) {
    const double ff = f_next.squaredNorm();
    const double base = sigma2 + 2.0 * mu_next * mu_next;
    switch (space) {
    case WeightSpace::C: return base + 3.0 * static_cast<double>(S) * ff;
    case WeightSpace::D:
    case WeightSpace::E: return base + 3.0 * ff;
    default: return std::nullopt;
    }
}

inline double chebyshev_length(double msfe_estimate, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if (!(msfe_estimate >= 0.0)) throw InputError("msfe estimate must be >= 0");
    return std::sqrt(msfe_estimate / alpha);
}

// ---------------------------------------------------------------------------
// Uniqueness

struct UniquenessReport {
    std::string condition_checked;
    double lambda_min_scaled = 0.0;
    bool holds = false;
    std::optional<int> multiplicity;
    std::string note;
};

namespace detail {

inline double scaled_lambda_min(const Matrix& G, double T, double& lambda_max) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(G / T, Eigen::EigenvaluesOnly);
    lambda_max = es.eigenvalues()(es.eigenvalues().size() - 1);
    return es.eigenvalues()(0);
}

inline bool positive_definite(double lmin, double lmax) { return lmax > 0.0 && lmin > 1e-10 * lmax; }

// Quadratic criterion for the method, or nullopt when the method has none.
inline std::optional<QuadraticObjective> criterion_objective(const MethodSpec& method, const ForecastPanel& panel) {
    if (std::holds_alternative<Regression>(method)) return regression_objective(panel.F, panel.y);
    if (const auto* m = std::get_if<GeneralizedMallows>(&method))
        return mallows_objective(panel, mallows_inputs(panel, *m), m->variant);
    if (std::holds_alternative<CrossValidation>(method)) {
        if (!panel.loo) throw InputError("cross-validation needs leave-one-out forecasts");
        return regression_objective(*panel.loo, panel.y);
    }
    return std::nullopt;
}

}  // namespace detail

inline UniquenessReport check_uniqueness(const MethodSpec& method, WeightSpace space, const ForecastPanel& panel) {
    validate_panel(panel);
    const double T = static_cast<double>(panel.T());
    UniquenessReport r;
    double lmax = 0.0;

    if (std::holds_alternative<Eigenvector>(method)) {
        const EigenvectorFit e = fit_eigenvector_detailed(panel);
        r.condition_checked = "smallest eigenvalue of M is simple; sign fixed by first nonzero component";
        r.lambda_min_scaled = e.lambda_min;
        r.multiplicity = e.multiplicity;
        r.holds = e.multiplicity == 1;
        if (!r.holds) r.note = "smallest eigenvalue has multiplicity " + std::to_string(e.multiplicity);
        return r;
    }
    if (std::holds_alternative<Performance>(method)) {
        r.condition_checked = "closed-form weights";
        r.lambda_min_scaled = std::numeric_limits<double>::quiet_NaN();
        r.holds = true;
        return r;
    }
    if (const auto* sp = std::get_if<SoftPenalized>(&method)) {
        Matrix G = gram(panel.F);
        if (sp->flavor == PenaltyFlavor::E) G.diagonal().array() += sp->lambda;
        r.condition_checked = "lambda_min of the penalized quadratic term / T > 0";
        r.lambda_min_scaled = detail::scaled_lambda_min(G, T, lmax);
        r.holds = detail::positive_definite(r.lambda_min_scaled, lmax);
        return r;
    }

    if (space == WeightSpace::Aprime) {
        if (!std::holds_alternative<Regression>(method))
            throw InputError("space Aprime is defined for regression weights only");
        Matrix Ft(panel.T(), panel.S() + 1);
        Ft.col(0).setOnes();
        Ft.rightCols(panel.S()) = panel.F;
        r.condition_checked = "lambda_min((1,F)'(1,F)/T) > 0";
        r.lambda_min_scaled = detail::scaled_lambda_min(gram(Ft), T, lmax);
        r.holds = detail::positive_definite(r.lambda_min_scaled, lmax);
        return r;
    }

    const QuadraticObjective obj = *detail::criterion_objective(method, panel);
    const bool cv = std::holds_alternative<CrossValidation>(method);
    r.condition_checked = cv ? "lambda_min(Fbar'Fbar/T) > 0" : "lambda_min(F'F/T) > 0";
    r.lambda_min_scaled = detail::scaled_lambda_min(obj.H, T, lmax);
    r.holds = detail::positive_definite(r.lambda_min_scaled, lmax);
    if (space == WeightSpace::E) {
        r.condition_checked += " and f(nu) > 1 between the extreme eigenvalues";
        if (r.holds) {
            if (obj.g.norm() == 0.0) {
                r.holds = false;
                r.note = "right-hand side is zero";
            } else {
                const InteriorCertificate c = certify_interior_uniqueness(obj);
                r.holds = c.holds;
                r.note = c.note;
            }
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Sparsity conditions

struct SparsityReport {
    int zero_count = 0;
    double sparsity_pct = 0.0;
    std::optional<bool> sparsity_forced;
    double gradient_spread = 0.0;  // D: ||g* - mean(g*) 1||_inf
    std::string condition;
};

inline SparsityReport check_sparsity_conditions(const WeightSolution& sol, const ForecastPanel& panel,
                                                const MethodSpec& method) {
    validate_panel(panel);
    if (sol.space != WeightSpace::C && sol.space != WeightSpace::D)
        throw InputError("sparsity conditions apply to spaces C and D only");
    if (sol.w.size() != panel.S()) throw InputError("dimension mismatch: weights and forecast columns");
    SparsityReport r;
    r.zero_count = static_cast<int>((sol.w.array().abs() <= kZeroTol).count());
    r.sparsity_pct = sparsity_pct(sol.w);
    const std::optional<QuadraticObjective> obj = detail::criterion_objective(method, panel);
    if (!obj) {
        r.condition = "no quadratic criterion for this method";
        return r;
    }
    if (sol.space == WeightSpace::D) {
        Vector grad = obj->H * sol.w + obj->g;
        // Regression reports the per-observation gradient of the SSR.
        if (std::holds_alternative<Regression>(method)) grad *= 2.0 / static_cast<double>(panel.T());
        const double spread = (grad.array() - grad.mean()).abs().maxCoeff();
        r.gradient_spread = spread;
        const bool tangent = spread <= 1e-8 * (1.0 + grad.cwiseAbs().maxCoeff());
        r.sparsity_forced = !tangent;
        r.condition = tangent ? "gradient proportional to 1: tangency degeneracy, sparsity not forced"
                              : "gradient not proportional to 1: non-negativity binds, sparsity forced";
    } else {
        require_strictly_convex_matrix(obj->H);
        const Vector center = obj->H.llt().solve(-obj->g);
        const bool outside = (center.array() < 0.0).any() || (center.array() > 1.0).any();
        const bool negative = (center.array() < 0.0).any();
        r.sparsity_forced = outside && negative;
        r.condition = r.sparsity_forced.value()
                          ? "unconstrained minimizer has a negative component: lower bounds bind"
                          : "unconstrained minimizer has no negative component: sparsity not forced";
    }
    return r;
}

// ---------------------------------------------------------------------------
// Shrinkage covariance and serial correlation

inline Matrix shrinkage_covariance(const Matrix& Sigma, const Vector& rho) {
    if (Sigma.rows() != Sigma.cols() || Sigma.rows() != rho.size())
        throw InputError("dimension mismatch: Sigma must be S x S with rho of length S");
    const Vector one = Vector::Ones(rho.size());
    return Sigma - (one * rho.transpose() + rho * one.transpose());
}

// Biased (divide by T) sample autocorrelations of e_t = yhat_t - y_t at lags 1..max_lag.
inline Vector autocorrelation(const Vector& series, int max_lag) {
    const Index T = series.size();
    if (max_lag < 0 || max_lag >= T) throw InputError("max_lag must lie in [0, T)");
    const Vector c = series.array() - series.mean();
    const double c0 = c.squaredNorm();
    if (!(c0 > 0.0)) throw InputError("constant error series has no autocorrelation");
    Vector acf(max_lag);
    for (int k = 1; k <= max_lag; ++k) acf(k - 1) = c.head(T - k).dot(c.tail(T - k)) / c0;
    return acf;
}

inline Vector error_autocorrelation(const WeightSolution& sol, const ForecastPanel& panel, int max_lag) {
    return autocorrelation(-residuals(sol, panel), max_lag);
}

// ---------------------------------------------------------------------------
// Bundle

inline DiagnosticsReport diagnose(const WeightSolution& sol, const ForecastPanel& panel,
                                  const ForecastPanel* test_panel = nullptr, int max_lag = 0) {
    DiagnosticsReport r;
    r.ssr = ssr(sol, panel);
    r.empirical_bias = empirical_bias(sol, panel);
    r.sparsity_pct = sparsity_pct(sol.w);
    if (test_panel) r.msfe = msfe(sol, *test_panel);
    if (max_lag > 0) {
        try {
            r.error_acf = error_autocorrelation(sol, panel, max_lag);
        } catch (const InputError& e) {
            r.notes.emplace_back(e.what());
        }
    }
    if (sol.unique_certified && !*sol.unique_certified) r.notes.emplace_back("uniqueness not certified");
    return r;
}

}  // namespace weightscape
