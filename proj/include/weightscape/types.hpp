#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace weightscape {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Weights with |w_s| at or below this count as zero.
inline constexpr double kZeroTol = 1e-8;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent caller input.
class InputError : public Error {
public:
    using Error::Error;
};

// Quadratic term is singular, indefinite or too badly conditioned to solve.
class SingularSystemError : public Error {
public:
    SingularSystemError(const std::string& what, double lambda_min, double lambda_max)
        : Error(what + " (lambda_min=" + std::to_string(lambda_min) +
                ", lambda_max=" + std::to_string(lambda_max) + ")"),
          lambda_min(lambda_min), lambda_max(lambda_max) {}
    double lambda_min;
    double lambda_max;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Weight spaces

enum class WeightSpace { A, Aprime, B, C, D, E };

inline constexpr WeightSpace kAllSpaces[] = {WeightSpace::A, WeightSpace::Aprime, WeightSpace::B,
                                             WeightSpace::C, WeightSpace::D,      WeightSpace::E};

inline std::string to_string(WeightSpace s) {
    switch (s) {
    case WeightSpace::A: return "A";
    case WeightSpace::Aprime: return "Aprime";
    case WeightSpace::B: return "B";
    case WeightSpace::C: return "C";
    case WeightSpace::D: return "D";
    case WeightSpace::E: return "E";
    }
    return "?";
}

inline WeightSpace parse_space(std::string_view token) {
    if (token == "A") return WeightSpace::A;
    if (token == "Aprime" || token == "A'" || token == "Ap") return WeightSpace::Aprime;
    if (token == "B") return WeightSpace::B;
    if (token == "C") return WeightSpace::C;
    if (token == "D") return WeightSpace::D;
    if (token == "E") return WeightSpace::E;
    throw InputError("unknown weight space '" + std::string(token) + "'");
}

// Membership test for a weight vector. tol is the slack on each constraint.
inline bool is_feasible(const Vector& w, WeightSpace space, double tol = 1e-10) {
    if (!w.allFinite()) return false;
    switch (space) {
    case WeightSpace::A:
    case WeightSpace::Aprime:
        return true;
    case WeightSpace::B:
        return std::abs(w.sum() - 1.0) <= tol;
    case WeightSpace::C:
        return w.minCoeff() >= -tol && w.maxCoeff() <= 1.0 + tol;
    case WeightSpace::D:
        return w.minCoeff() >= -tol && w.maxCoeff() <= 1.0 + tol && std::abs(w.sum() - 1.0) <= tol;
    case WeightSpace::E:
        return std::abs(w.squaredNorm() - 1.0) <= tol;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Methods

enum class MallowsVariant { Mallows, KL };

struct Regression {};

struct GeneralizedMallows {
    MallowsVariant variant = MallowsVariant::Mallows;
    double sigma2 = 0.0;
    std::optional<Vector> phi;
};

struct CrossValidation {};

struct GeneralPerformance {
    double a = 1.0;
    double b = 0.0;
    double c = 0.0;
};
struct SmoothedAIC {};
struct SmoothedBIC {};
struct InverseLoss {
    Vector loss;
};
using PerformanceFamily = std::variant<GeneralPerformance, SmoothedAIC, SmoothedBIC, InverseLoss>;

struct Performance {
    PerformanceFamily family;
};

struct Eigenvector {};

enum class PenaltyFlavor { C, D, E };

struct SoftPenalized {
    PenaltyFlavor flavor = PenaltyFlavor::E;
    double lambda = 0.0;
    Vector mu;
    Vector nu;
};

using MethodSpec =
    std::variant<Regression, GeneralizedMallows, CrossValidation, Performance, Eigenvector, SoftPenalized>;

inline std::string method_name(const MethodSpec& m) {
    struct V {
        std::string operator()(const Regression&) const { return "reg"; }
        std::string operator()(const GeneralizedMallows& g) const {
            return g.variant == MallowsVariant::KL ? "ma:kl" : "ma";
        }
        std::string operator()(const CrossValidation&) const { return "cv"; }
        std::string operator()(const Performance& p) const {
            struct F {
                std::string operator()(const GeneralPerformance&) const { return "pf:general"; }
                std::string operator()(const SmoothedAIC&) const { return "pf:saic"; }
                std::string operator()(const SmoothedBIC&) const { return "pf:sbic"; }
                std::string operator()(const InverseLoss&) const { return "pf:inverse"; }
            };
            return std::visit(F{}, p.family);
        }
        std::string operator()(const Eigenvector&) const { return "eig"; }
        std::string operator()(const SoftPenalized& s) const {
            switch (s.flavor) {
            case PenaltyFlavor::C: return "soft:C";
            case PenaltyFlavor::D: return "soft:D";
            case PenaltyFlavor::E: return "soft:E";
            }
            return "soft";
        }
    };
    return std::visit(V{}, m);
}

// ---------------------------------------------------------------------------
// Panels and solutions

struct ForecastPanel {
    Vector y;                                  // length T
    Matrix F;                                  // T x S
    std::optional<Matrix> loo;                 // row t = leave-one-out forecasts for t
    std::optional<std::vector<int>> q;         // effective parameter count per candidate
    std::optional<std::vector<std::string>> labels;

    Index T() const { return y.size(); }
    Index S() const { return F.cols(); }
};

inline const ForecastPanel& validate_panel(const ForecastPanel& p) {
    if (p.y.size() < 2) throw InputError("panel needs T >= 2 observations");
    if (p.F.cols() < 1) throw InputError("panel needs at least one candidate forecast");
    if (p.F.rows() != p.y.size())
        throw InputError("dimension mismatch: y has " + std::to_string(p.y.size()) + " rows, F has " +
                         std::to_string(p.F.rows()));
    if (!p.y.allFinite()) throw InputError("non-finite entry in y");
    if (!p.F.allFinite()) throw InputError("non-finite entry in F");
    if (p.loo) {
        if (p.loo->rows() != p.F.rows() || p.loo->cols() != p.F.cols())
            throw InputError("dimension mismatch: loo shape differs from F");
        if (!p.loo->allFinite()) throw InputError("non-finite entry in loo");
    }
    if (p.q) {
        if (static_cast<Index>(p.q->size()) != p.S()) throw InputError("dimension mismatch: q length differs from S");
        for (int v : *p.q)
            if (v < 0 || v > p.T()) throw InputError("q entries must lie in [0, T]");
    }
    if (p.labels && static_cast<Index>(p.labels->size()) != p.S())
        throw InputError("dimension mismatch: labels length differs from S");
    return p;
}

struct Multipliers {
    std::optional<double> rho0;        // sum-to-one multiplier
    std::optional<double> nu;          // unit-norm multiplier
    std::optional<Vector> box;         // lower-bound multipliers
    std::optional<Vector> box_upper;   // upper-bound multipliers (space C only)
};

struct WeightSolution {
    Vector w;
    std::optional<double> intercept;
    Multipliers multipliers;
    std::vector<int> active_set;       // 0-based indices sitting on a bound
    WeightSpace space = WeightSpace::A;
    MethodSpec method = Regression{};
    bool converged = true;
    std::optional<bool> unique_certified;
};

struct DiagnosticsReport {
    double ssr = 0.0;
    double empirical_bias = 0.0;
    std::optional<double> msfe;
    double sparsity_pct = 0.0;
    Vector error_acf;
    std::vector<std::string> notes;
};

}  // namespace weightscape
