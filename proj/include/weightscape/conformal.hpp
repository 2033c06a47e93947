#pragma once

#include "weightscape/diagnostics.hpp"
#include "weightscape/estimators.hpp"
#include "weightscape/simulation.hpp"
#include "weightscape/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace weightscape {

struct Splits {
    std::vector<Index> train;        // fits the candidate models
    std::vector<Index> weight;       // fits the combination weights
    std::vector<Index> calibration;  // conformal residuals
};

// Seeded shuffle split into sizes ceil(T/3), ceil((T - n1)/2) and the remainder.
inline Splits split_indices(Index T, std::uint64_t seed) {
    if (T < 6) throw InputError("split_indices needs T >= 6");
    std::vector<Index> idx(static_cast<std::size_t>(T));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const Index n1 = (T + 2) / 3;
    const Index n2 = (T - n1 + 1) / 2;
    Splits s;
    s.train.assign(idx.begin(), idx.begin() + n1);
    s.weight.assign(idx.begin() + n1, idx.begin() + n1 + n2);
    s.calibration.assign(idx.begin() + n1 + n2, idx.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.weight.begin(), s.weight.end());
    std::sort(s.calibration.begin(), s.calibration.end());
    return s;
}

// k-th smallest residual with k = ceil((n+1)(1-alpha)); +inf when k > n.
inline double conformal_quantile(std::vector<double> residuals, double alpha) {
    if (residuals.empty()) throw InputError("conformal_quantile needs at least one residual");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    const double n = static_cast<double>(residuals.size());
    // The small shift keeps exact products such as 4 * 0.5 from rounding up.
    const double k = std::ceil((n + 1.0) * (1.0 - alpha) - 1e-12 * (n + 1.0));
    if (k > n) return std::numeric_limits<double>::infinity();
    const auto kk = static_cast<std::size_t>(std::max(1.0, k));
    std::nth_element(residuals.begin(), residuals.begin() + static_cast<std::ptrdiff_t>(kk - 1), residuals.end());
    return residuals[kk - 1];
}

// Candidate models: a trainer fits on (X, y) and returns a predictor mapping X to a T x S forecast matrix.
using Predictor = std::function<Matrix(const Matrix&)>;
using Trainer = std::function<Predictor(const Matrix&, const Vector&)>;

inline Trainer group_ols_trainer(std::vector<Group> groups) {
    return [groups = std::move(groups)](const Matrix& X, const Vector& y) -> Predictor {
        CandidateFit fit = fit_candidates(X, y, groups);
        return [fit = std::move(fit)](const Matrix& Xn) { return fit.predict(Xn); };
    };
}

// Blocks of four regressors when d >= 5, otherwise one single-regressor model per column.
inline Trainer default_trainer(Index d) {
    if (d >= 5) return group_ols_trainer(build_candidate_sets(1, d));
    std::vector<Group> groups;
    for (Index j = 0; j < d; ++j) groups.push_back({static_cast<int>(j)});
    return group_ols_trainer(groups);
}

struct SpaceOutcome {
    WeightSpace space = WeightSpace::A;
    double length = std::numeric_limits<double>::infinity();
    std::optional<WeightSolution> solution;
    std::string note;
};

struct SelectionResult {
    WeightSpace chosen = WeightSpace::A;
    std::map<WeightSpace, double> lengths;
    std::vector<SpaceOutcome> outcomes;  // in tie-break order
    Splits splits;
    double alpha = 0.1;
    std::uint64_t seed = 0;
    Predictor predictor;

    const SpaceOutcome& chosen_outcome() const {
        for (const auto& o : outcomes)
            if (o.space == chosen) return o;
        throw Error("chosen space missing from outcomes");
    }
    Vector predict(const Matrix& X) const {
        return combined_forecast(*chosen_outcome().solution, predictor(X));
    }
    double half_length() const { return lengths.at(chosen); }
};

inline int space_rank(WeightSpace s) {
    switch (s) {
    case WeightSpace::A: return 0;
    case WeightSpace::B: return 1;
    case WeightSpace::C: return 2;
    case WeightSpace::D: return 3;
    case WeightSpace::E: return 4;
    case WeightSpace::Aprime: return 5;
    }
    return 6;
}

// Smallest length among fitted outcomes; lengths within 1e-12 relative count as tied and
// the earlier space in A, B, C, D, E, Aprime order wins.
inline WeightSpace argmin_space(const std::vector<SpaceOutcome>& outcomes) {
    const SpaceOutcome* best = nullptr;
    for (const auto& o : outcomes) {
        if (!o.solution) continue;
        if (!best) {
            best = &o;
            continue;
        }
        const double tie = 1e-12 * (1.0 + std::abs(best->length));
        const bool better = o.length < best->length - tie ||
                            (std::abs(o.length - best->length) <= tie && space_rank(o.space) < space_rank(best->space));
        if (better) best = &o;
    }
    if (!best) throw Error("no weight space produced a fit");
    return best->space;
}

inline SelectionResult select_space(const Matrix& X, const Vector& y, const Trainer& trainer,
                                    std::vector<WeightSpace> spaces, double alpha, std::uint64_t seed) {
    if (X.rows() != y.size()) throw InputError("dimension mismatch: X rows and y length");
    if (spaces.empty()) throw InputError("select_space needs at least one space");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    std::sort(spaces.begin(), spaces.end(), [](WeightSpace a, WeightSpace b) { return space_rank(a) < space_rank(b); });
    spaces.erase(std::unique(spaces.begin(), spaces.end()), spaces.end());

    SelectionResult res;
    res.alpha = alpha;
    res.seed = seed;
    res.splits = split_indices(y.size(), seed);
    const Splits& sp = res.splits;
    res.predictor = trainer(X(sp.train, Eigen::all), y(sp.train));
    const ForecastPanel weight_panel{y(sp.weight), res.predictor(X(sp.weight, Eigen::all)), std::nullopt,
                                     std::nullopt, std::nullopt};
    const Matrix F3 = res.predictor(X(sp.calibration, Eigen::all));
    const Vector y3 = y(sp.calibration);

    bool any_fit = false;
    for (WeightSpace s : spaces) {
        SpaceOutcome o;
        o.space = s;
        try {
            WeightSolution w = fit_regression(weight_panel, s);
            const Vector r = (y3 - combined_forecast(w, F3)).cwiseAbs();
            o.length = conformal_quantile(std::vector<double>(r.data(), r.data() + r.size()), alpha);
            o.solution = std::move(w);
            any_fit = true;
        } catch (const Error& e) {
            o.length = std::numeric_limits<double>::infinity();
            o.note = e.what();
        }
        res.lengths[s] = o.length;
        res.outcomes.push_back(std::move(o));
    }
    if (!any_fit) throw Error("every weight space failed to fit");
    res.chosen = argmin_space(res.outcomes);
    return res;
}

}  // namespace weightscape
