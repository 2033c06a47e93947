#pragma once

#include "weightscape/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace weightscape {

// Minimize w'Hw/2 + g'w + constant.
struct QuadraticObjective {
    Matrix H;
    Vector g;
    double constant = 0.0;

    Index dim() const { return g.size(); }
    double value(const Vector& w) const { return 0.5 * w.dot(H * w) + g.dot(w) + constant; }
};

struct SpectralDecomposition {
    Vector eigenvalues;   // ascending
    Matrix eigenvectors;  // orthonormal columns
};

namespace detail {

inline void check_objective(const QuadraticObjective& obj) {
    const Index S = obj.g.size();
    if (S < 1) throw InputError("objective has dimension zero");
    if (obj.H.rows() != S || obj.H.cols() != S) throw InputError("objective H and g dimensions disagree");
    if (!obj.H.allFinite() || !obj.g.allFinite()) throw InputError("non-finite entry in objective");
    const double scale = std::max(1.0, obj.H.cwiseAbs().maxCoeff());
    if ((obj.H - obj.H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw InputError("objective H is not symmetric");
}

}  // namespace detail

inline SpectralDecomposition decompose(const Matrix& H) {
    if (H.rows() != H.cols()) throw InputError("decompose needs a square matrix");
    Eigen::SelfAdjointEigenSolver<Matrix> es(H);
    if (es.info() != Eigen::Success) throw ConvergenceError("symmetric eigensolver failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

// Throws unless H is positive definite with lambda_min > 1e-10 * lambda_max.
inline void require_strictly_convex(const Vector& eigenvalues, const std::string& what = "quadratic term") {
    const double lo = eigenvalues(0);
    const double hi = eigenvalues(eigenvalues.size() - 1);
    if (!(hi > 0.0) || !(lo > 1e-10 * hi))
        throw SingularSystemError(what + " is singular or indefinite", lo, hi);
}

inline void require_strictly_convex_matrix(const Matrix& H, const std::string& what = "quadratic term") {
    Eigen::SelfAdjointEigenSolver<Matrix> es(H, Eigen::EigenvaluesOnly);
    require_strictly_convex(es.eigenvalues(), what);
}

// ---------------------------------------------------------------------------
// Projections

// Euclidean projection onto {w >= 0, 1'w = 1} by sorting.
inline Vector project_simplex(const Vector& v) {
    const Index n = v.size();
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, tau = 0.0;
    for (Index j = 0; j < n; ++j) {
        cum += u[j];
        const double t = (cum - 1.0) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0) tau = t;
    }
    return (v.array() - tau).max(0.0).matrix();
}

inline Vector project(const Vector& v, WeightSpace space) {
    if (!v.allFinite()) throw InputError("projection of a non-finite vector");
    switch (space) {
    case WeightSpace::A:
    case WeightSpace::Aprime:
        return v;
    case WeightSpace::B:
        return (v.array() - (v.sum() - 1.0) / static_cast<double>(v.size())).matrix();
    case WeightSpace::C:
        return v.cwiseMax(0.0).cwiseMin(1.0);
    case WeightSpace::D:
        return project_simplex(v);
    case WeightSpace::E: {
        const double n = v.norm();
        if (n == 0.0) throw InputError("projection of the zero vector onto the unit sphere is undefined");
        return v / n;
    }
    }
    return v;
}

// ---------------------------------------------------------------------------
// Equality-constrained closed forms

struct EqualityQpResult {
    Vector w;
    std::optional<double> rho0;
};

// sum_to_one=false: w = -H^{-1} g.  sum_to_one=true: w = -H^{-1}(g + rho 1) with 1'w = 1.
inline EqualityQpResult solve_equality_qp(const QuadraticObjective& obj, bool sum_to_one) {
    detail::check_objective(obj);
    require_strictly_convex_matrix(obj.H);
    Eigen::LLT<Matrix> llt(obj.H);
    if (llt.info() != Eigen::Success) throw SingularSystemError("Cholesky factorization failed", 0.0, 0.0);
    const Vector wa = llt.solve(-obj.g);
    if (!sum_to_one) return {wa, std::nullopt};
    const Vector h1 = llt.solve(Vector::Ones(obj.dim()));
    const double rho = (wa.sum() - 1.0) / h1.sum();
    return {wa - rho * h1, rho};
}

// ---------------------------------------------------------------------------
// Active-set QP over the box [0,1]^S (space C) or the simplex (space D)

struct QpOptions {
    int max_iterations = 0;  // 0 picks 100 + 50 S
};

struct InequalityQpResult {
    Vector w;
    // Stationarity: Hw + g + rho0 1 - lower + upper = 0, the sign used by solve_equality_qp.
    std::optional<double> rho0;
    Vector lower;                // multipliers of w >= 0
    Vector upper;                // multipliers of w <= 1 (C)
    std::vector<int> active_set;
    int iterations = 0;
    double kkt_residual = 0.0;
};

namespace detail {

enum class Bound : unsigned char { Free, Lower, Upper };

// Minimizer of the objective on the face defined by state, plus the face multiplier for D.
inline Vector face_minimizer(const QuadraticObjective& obj, const std::vector<Bound>& state, bool simplex,
                             double& rho) {
    const Index S = obj.dim();
    std::vector<Index> free_idx, upper_idx;
    for (Index i = 0; i < S; ++i) {
        if (state[i] == Bound::Free) free_idx.push_back(i);
        else if (state[i] == Bound::Upper) upper_idx.push_back(i);
    }
    Vector w = Vector::Zero(S);
    for (Index i : upper_idx) w(i) = 1.0;
    rho = 0.0;
    const Index nf = static_cast<Index>(free_idx.size());
    if (nf == 0) return w;
    Matrix Hff(nf, nf);
    Vector rhs(nf);
    for (Index a = 0; a < nf; ++a) {
        rhs(a) = -obj.g(free_idx[a]);
        for (Index u : upper_idx) rhs(a) -= obj.H(free_idx[a], u);
        for (Index b = 0; b < nf; ++b) Hff(a, b) = obj.H(free_idx[a], free_idx[b]);
    }
    Eigen::LLT<Matrix> llt(Hff);
    Vector wf = llt.solve(rhs);
    if (simplex) {
        const Vector h1 = llt.solve(Vector::Ones(nf));
        rho = (1.0 - static_cast<double>(upper_idx.size()) - wf.sum()) / h1.sum();
        wf += rho * h1;
    }
    for (Index a = 0; a < nf; ++a) w(free_idx[a]) = wf(a);
    return w;
}

}  // namespace detail

inline InequalityQpResult solve_inequality_qp(const QuadraticObjective& obj, WeightSpace space,
                                              const QpOptions& opt = {}) {
    using detail::Bound;
    if (space != WeightSpace::C && space != WeightSpace::D)
        throw InputError("inequality QP supports spaces C and D only");
    detail::check_objective(obj);
    require_strictly_convex_matrix(obj.H);
    const bool simplex = space == WeightSpace::D;
    const Index S = obj.dim();
    const int cap = opt.max_iterations > 0 ? opt.max_iterations : static_cast<int>(100 + 50 * S);

    const double scale = 1.0 + obj.g.cwiseAbs().maxCoeff() + obj.H.cwiseAbs().maxCoeff();
    const double mult_tol = 1e-11 * scale;

    // Warm start from the projected unconstrained minimizer.
    Eigen::LLT<Matrix> llt(obj.H);
    Vector w = project(llt.solve(-obj.g), space);
    std::vector<Bound> state(S, Bound::Free);
    for (Index i = 0; i < S; ++i) {
        if (w(i) <= 0.0) {
            state[i] = Bound::Lower;
            w(i) = 0.0;
        } else if (!simplex && w(i) >= 1.0) {
            state[i] = Bound::Upper;
            w(i) = 1.0;
        }
    }
    if (simplex && std::none_of(state.begin(), state.end(), [](Bound b) { return b == Bound::Free; })) {
        state[0] = Bound::Free;
        w(0) = 1.0;
    }

    InequalityQpResult out;
    double rho = 0.0;
    for (int iter = 1; iter <= cap; ++iter) {
        out.iterations = iter;
        const Vector target = detail::face_minimizer(obj, state, simplex, rho);
        const Vector p = target - w;
        const double step_tol = 1e-14 * (1.0 + w.cwiseAbs().maxCoeff());
        if (p.cwiseAbs().maxCoeff() <= step_tol) {
            w = target;
            const Vector r = obj.H * w + obj.g;
            int leave = -1;
            double most_negative = -mult_tol;
            for (Index i = 0; i < S; ++i) {
                double m = 0.0;
                if (state[i] == Bound::Lower) m = r(i) - (simplex ? rho : 0.0);
                else if (state[i] == Bound::Upper) m = -r(i);
                else continue;
                if (m < most_negative) {
                    most_negative = m;
                    leave = static_cast<int>(i);
                }
            }
            if (leave < 0) {
                out.w = w;
                out.lower = Vector::Zero(S);
                out.upper = Vector::Zero(S);
                for (Index i = 0; i < S; ++i) {
                    if (state[i] == Bound::Lower) out.lower(i) = r(i) - (simplex ? rho : 0.0);
                    else if (state[i] == Bound::Upper) out.upper(i) = -r(i);
                    if (state[i] != Bound::Free) out.active_set.push_back(static_cast<int>(i));
                }
                if (simplex) out.rho0 = -rho;
                Vector res = r - out.lower + out.upper;
                if (simplex) res.array() -= rho;
                out.kkt_residual = res.norm();
                return out;
            }
            state[leave] = Bound::Free;
            continue;
        }
        double alpha = 1.0;
        int block = -1;
        Bound block_kind = Bound::Lower;
        for (Index i = 0; i < S; ++i) {
            if (state[i] != Bound::Free) continue;
            if (p(i) < 0.0 && w(i) + p(i) < 0.0) {
                const double a = std::max(0.0, -w(i) / p(i));
                if (a < alpha) {
                    alpha = a;
                    block = static_cast<int>(i);
                    block_kind = Bound::Lower;
                }
            } else if (!simplex && p(i) > 0.0 && w(i) + p(i) > 1.0) {
                const double a = std::max(0.0, (1.0 - w(i)) / p(i));
                if (a < alpha) {
                    alpha = a;
                    block = static_cast<int>(i);
                    block_kind = Bound::Upper;
                }
            }
        }
        w += alpha * p;
        if (block >= 0) {
            state[block] = block_kind;
            w(block) = block_kind == Bound::Lower ? 0.0 : 1.0;
        }
    }
    throw ConvergenceError("active-set QP hit the iteration cap of " + std::to_string(cap) +
                           " (cycling guard)");
}

// ---------------------------------------------------------------------------
// Unit sphere: minimize w'Hw/2 + g'w subject to w'w = 1

struct UnitNormResult {
    Vector w;
    double nu = 0.0;           // stationarity (H - nu I) w = -g
    double secular_residual = 0.0;  // f(nu) - 1
    bool hard_case = false;
    int iterations = 0;
};

namespace detail {

struct Secular {
    const Vector& lambda;
    const Vector& bt2;
    double f(double nu) const {
        double s = 0.0;
        for (Index i = 0; i < lambda.size(); ++i) {
            if (bt2(i) == 0.0) continue;
            const double d = lambda(i) - nu;
            s += bt2(i) / (d * d);
        }
        return s;
    }
    double df(double nu) const {
        double s = 0.0;
        for (Index i = 0; i < lambda.size(); ++i) {
            if (bt2(i) == 0.0) continue;
            const double d = lambda(i) - nu;
            s += 2.0 * bt2(i) / (d * d * d);
        }
        return s;
    }
};

}  // namespace detail

inline UnitNormResult solve_unit_norm(const QuadraticObjective& obj) {
    detail::check_objective(obj);
    const SpectralDecomposition dec = decompose(obj.H);
    require_strictly_convex(dec.eigenvalues);
    const Vector b = -obj.g;
    const double bnorm = b.norm();
    if (bnorm == 0.0) throw InputError("degenerate right-hand side: b = 0 so f(nu) has no root");
    const Vector& lam = dec.eigenvalues;
    const Vector bt = dec.eigenvectors.transpose() * b;
    const Vector bt2 = bt.cwiseProduct(bt);
    const detail::Secular sec{lam, bt2};
    const double lmin = lam(0);

    UnitNormResult out;
    double lo = lmin - bnorm - 1.0;
    double hi = lmin - 1e-9 * (1.0 + std::abs(lmin));
    if (sec.f(hi) < 1.0) {
        // Root, if any, lies in (hi, lmin); push the upper end toward the pole.
        lo = hi;
        hi = lmin;
    }
    double nu = lo + 0.5 * (hi - lo);
    double fv = sec.f(nu);
    for (int it = 0; it < 400; ++it) {
        out.iterations = it + 1;
        if (std::abs(fv - 1.0) <= 1e-13) break;
        if (fv < 1.0) lo = nu;
        else hi = nu;
        // Newton on 1 - 1/sqrt(f), which is nearly linear near the root.
        const double h = 1.0 - 1.0 / std::sqrt(fv);
        const double dh = 0.5 * sec.df(nu) / (fv * std::sqrt(fv));
        double next = nu - h / dh;
        if (!(next > lo && next < hi)) next = lo + 0.5 * (hi - lo);
        if (next == nu || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(nu))) break;
        nu = next;
        fv = sec.f(nu);
    }

    const bool at_pole = !(nu < lmin) || std::abs(fv - 1.0) > 1e-10;
    if (at_pole) {
        // Hard case: b has no component along the lowest eigenspace.
        const double cluster_tol = 1e-12 * std::max(1.0, std::abs(lam(lam.size() - 1)));
        Vector wt = Vector::Zero(lam.size());
        Index first_cluster = 0;
        for (Index i = 0; i < lam.size(); ++i) {
            if (lam(i) - lmin <= cluster_tol) continue;
            wt(i) = bt(i) / (lam(i) - lmin);
        }
        const double n2 = wt.squaredNorm();
        if (n2 > 1.0 + 1e-10) throw ConvergenceError("unit-norm root finding failed to converge");
        wt(first_cluster) = std::sqrt(std::max(0.0, 1.0 - n2));
        out.w = dec.eigenvectors * wt;
        out.w /= out.w.norm();
        out.nu = lmin;
        out.hard_case = true;
        out.secular_residual = 0.0;
        return out;
    }

    Vector wt(lam.size());
    for (Index i = 0; i < lam.size(); ++i) wt(i) = bt(i) / (lam(i) - nu);
    out.w = dec.eigenvectors * wt;
    out.w /= out.w.norm();
    out.nu = nu;
    out.secular_residual = fv - 1.0;
    return out;
}

// ---------------------------------------------------------------------------
// Uniqueness of the sphere solution: f(nu) > 1 on the open spectral interval.

struct InteriorCertificate {
    bool holds = false;
    double infimum = std::numeric_limits<double>::infinity();
    std::string note;
};

inline InteriorCertificate certify_interior_uniqueness(const QuadraticObjective& obj) {
    detail::check_objective(obj);
    const SpectralDecomposition dec = decompose(obj.H);
    const Vector& lam = dec.eigenvalues;
    const Index S = lam.size();
    const double lmin = lam(0), lmax = lam(S - 1);
    const double tol = 1e-12 * std::max(1.0, std::abs(lmax));
    InteriorCertificate out;
    if (lmax - lmin <= tol) {
        out.holds = true;
        out.note = "empty spectral interval";
        return out;
    }
    const Vector bt = dec.eigenvectors.transpose() * (-obj.g);

    // Merge numerically equal eigenvalues; poles are clusters with nonzero weight.
    std::vector<double> loc, weight;
    for (Index i = 0; i < S; ++i) {
        if (!loc.empty() && lam(i) - loc.back() <= tol) {
            weight.back() += bt(i) * bt(i);
        } else {
            loc.push_back(lam(i));
            weight.push_back(bt(i) * bt(i));
        }
    }
    auto f = [&](double nu) {
        double s = 0.0;
        for (std::size_t j = 0; j < loc.size(); ++j)
            if (weight[j] > 0.0) s += weight[j] / ((loc[j] - nu) * (loc[j] - nu));
        return s;
    };
    auto df = [&](double nu) {
        double s = 0.0;
        for (std::size_t j = 0; j < loc.size(); ++j)
            if (weight[j] > 0.0) s += 2.0 * weight[j] / ((loc[j] - nu) * (loc[j] - nu) * (loc[j] - nu));
        return s;
    };

    // Segments between consecutive poles; f is convex on each.
    std::vector<std::size_t> knots{0};
    for (std::size_t j = 1; j + 1 < loc.size(); ++j)
        if (weight[j] > 0.0) knots.push_back(j);
    knots.push_back(loc.size() - 1);

    double inf = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
        const double a = loc[knots[k]], b = loc[knots[k + 1]];
        const bool pole_a = weight[knots[k]] > 0.0, pole_b = weight[knots[k + 1]] > 0.0;
        double nu_star;
        if (!pole_a && df(a) >= 0.0) {
            nu_star = a;
        } else if (!pole_b && df(b) <= 0.0) {
            nu_star = b;
        } else {
            double lo = a, hi = b;
            for (int it = 0; it < 200; ++it) {
                const double mid = lo + 0.5 * (hi - lo);
                if (mid <= lo || mid >= hi) break;
                if (df(mid) < 0.0) lo = mid;
                else hi = mid;
            }
            nu_star = lo + 0.5 * (hi - lo);
        }
        inf = std::min(inf, f(nu_star));
    }
    out.infimum = inf;
    if (std::abs(inf - 1.0) <= 1e-9) {
        out.holds = false;
        out.note = "inconclusive: interior minimum of f is within 1e-9 of 1";
    } else {
        out.holds = inf > 1.0;
        out.note = out.holds ? "f exceeds 1 between the extreme eigenvalues"
                             : "f drops to or below 1 between the extreme eigenvalues";
    }
    return out;
}

}  // namespace weightscape
