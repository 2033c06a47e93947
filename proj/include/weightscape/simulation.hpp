#pragma once

#include "weightscape/diagnostics.hpp"
#include "weightscape/estimators.hpp"
#include "weightscape/format.hpp"
#include "weightscape/types.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace weightscape {

// ---------------------------------------------------------------------------
// Seeding and parallelism

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = splitmix64(base);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return splitmix64(h ^ c);
}

// Worker count: WEIGHTSCAPE_THREADS if set, else hardware concurrency.
inline unsigned worker_count() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("WEIGHTSCAPE_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) n = static_cast<unsigned>(v);
    }
    return n;
}

// Runs fn(i) for i in [0, n); each index is handled by exactly one thread.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    for (auto& th : pool) th.join();
}

// Pairwise summation; the result depends only on the order of values.
inline double pairwise_sum(const double* v, std::size_t n) {
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// ---------------------------------------------------------------------------
// Data generating process

inline Matrix ar_correlation(Index d, double rho = 0.7) {
    Matrix S(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) S(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
    return S;
}

// Case 1: N(0, I); 2: N(0, Sigma); 3: t_2 with scale I; 4: t_2 with scale Sigma. Sigma_ij = 0.7^|i-j|.
inline Matrix generate_regressors(int dgp_case, Index T, Index d, std::mt19937_64& rng) {
    if (dgp_case < 1 || dgp_case > 4) throw InputError("case must be 1..4");
    if (d < 1 || T < 1) throw InputError("generate_regressors needs T >= 1 and d >= 1");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::chi_squared_distribution<double> chi2(2.0);
    const bool correlated = dgp_case == 2 || dgp_case == 4;
    const bool heavy = dgp_case >= 3;
    Matrix L;
    if (correlated) L = ar_correlation(d).llt().matrixL();
    Matrix X(T, d);
    Vector z(d);
    for (Index t = 0; t < T; ++t) {
        for (Index j = 0; j < d; ++j) z(j) = normal(rng);
        Vector x = correlated ? Vector(L * z) : z;
        if (heavy) x *= std::sqrt(2.0 / chi2(rng));
        X.row(t) = x.transpose();
    }
    return X;
}

inline Matrix generate_regressors(int dgp_case, Index T, Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return generate_regressors(dgp_case, T, d, rng);
}

inline Vector one_over_j_beta(Index d) {
    Vector b(d);
    for (Index j = 0; j < d; ++j) b(j) = 1.0 / static_cast<double>(j + 1);
    return b;
}

// ---------------------------------------------------------------------------
// Candidate models

using Group = std::vector<int>;  // 0-based regressor indices

inline std::vector<Group> build_candidate_sets(int set, Index d) {
    if (set < 1 || set > 4) throw InputError("candidate set must be 1..4");
    if (d < 5) throw InputError("candidate sets need d >= 5");
    std::vector<Group> groups;
    auto range = [](Index lo, Index hi) {  // 1-based inclusive
        Group g;
        for (Index j = lo; j <= hi; ++j) g.push_back(static_cast<int>(j - 1));
        return g;
    };
    const Index dd = (set == 2 || set == 4) ? d - 2 : d;
    const Index count = (dd + 3) / 4;
    for (Index s = 1; s <= count; ++s) {
        if (set <= 2) groups.push_back(range(4 * (s - 1) + 1, std::min(4 * s, dd)));
        else groups.push_back(range(s + 2, std::min(s + 4, dd)));
    }
    return groups;
}

struct CandidateFit {
    Matrix F;                    // in-sample forecasts P_s y
    Matrix hat_diagonals;        // diag(P_s)
    std::vector<int> q;          // tr(P_s) = group size
    std::vector<Vector> coefficients;
    std::vector<Group> groups;

    Matrix predict(const Matrix& X) const {
        Matrix out(X.rows(), static_cast<Index>(groups.size()));
        for (std::size_t s = 0; s < groups.size(); ++s)
            out.col(static_cast<Index>(s)) = X(Eigen::all, groups[s]) * coefficients[s];
        return out;
    }
};

// OLS without intercept for each group.
inline CandidateFit fit_candidates(const Matrix& X, const Vector& y, const std::vector<Group>& groups) {
    if (X.rows() != y.size()) throw InputError("dimension mismatch: X rows and y length");
    if (groups.empty()) throw InputError("no candidate groups");
    const Index T = X.rows(), S = static_cast<Index>(groups.size());
    CandidateFit out;
    out.F.resize(T, S);
    out.hat_diagonals.resize(T, S);
    out.groups = groups;
    for (Index s = 0; s < S; ++s) {
        const Group& g = groups[s];
        if (g.empty()) throw InputError("empty candidate group");
        for (int j : g)
            if (j < 0 || j >= X.cols()) throw InputError("candidate group index out of range");
        const Matrix Xs = X(Eigen::all, g);
        const Matrix G = gram(Xs);
        require_strictly_convex_matrix(G, "candidate Gram matrix");
        Eigen::LLT<Matrix> llt(G);
        const Vector b = llt.solve(Xs.transpose() * y);
        out.F.col(s) = Xs * b;
        // Rows of Xs L^{-T} have squared norm x'(Xs'Xs)^{-1}x.
        const Matrix Z = llt.matrixL().solve(Xs.transpose());
        out.hat_diagonals.col(s) = Z.colwise().squaredNorm().transpose();
        out.q.push_back(static_cast<int>(g.size()));
        out.coefficients.push_back(b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scenarios

struct ScenarioSpec {
    int dgp_case = 1;
    int set = 1;
    Index T = 2000;
    Index T_test = 1000;
    Index d = 42;
    Vector beta;  // empty means 1/j
    std::uint64_t seed = 20240601;
    int replications = 20;
};

enum class MethodFamily { Regression, Mallows, CrossValidation, SmoothedAIC, SmoothedBIC, Eigenvector };

struct MethodColumn {
    MethodFamily family;
    WeightSpace space;
    std::string label;
};

inline std::vector<MethodColumn> default_columns(bool with_cv = false) {
    using W = WeightSpace;
    std::vector<MethodColumn> c = {
        {MethodFamily::Regression, W::Aprime, "reg_Aprime"}, {MethodFamily::Regression, W::A, "reg_A"},
        {MethodFamily::Regression, W::B, "reg_B"},           {MethodFamily::Regression, W::C, "reg_C"},
        {MethodFamily::Regression, W::D, "reg_D"},           {MethodFamily::Regression, W::E, "reg_E"},
        {MethodFamily::Mallows, W::A, "ma_A"},               {MethodFamily::Mallows, W::B, "ma_B"},
        {MethodFamily::Mallows, W::C, "ma_C"},               {MethodFamily::Mallows, W::D, "ma_D"},
        {MethodFamily::Mallows, W::E, "ma_E"},               {MethodFamily::SmoothedAIC, W::D, "pf_SAIC"},
        {MethodFamily::SmoothedBIC, W::D, "pf_SBIC"},        {MethodFamily::Eigenvector, W::E, "eig_E"},
    };
    if (with_cv)
        for (W s : {W::A, W::B, W::C, W::D, W::E})
            c.push_back({MethodFamily::CrossValidation, s, "cv_" + to_string(s)});
    return c;
}

inline int column_index(const std::vector<MethodColumn>& cols, MethodFamily f, WeightSpace s) {
    for (std::size_t i = 0; i < cols.size(); ++i)
        if (cols[i].family == f && cols[i].space == s) return static_cast<int>(i);
    return -1;
}

struct CellMetrics {
    bool ok = false;
    std::string error;
    double ssr = 0.0;
    double bias = 0.0;
    double msfe = 0.0;
    double sparsity = 0.0;
    Vector w;
    std::optional<double> intercept;
};

struct ReplicationData {
    Matrix X, X_test;
    Vector y, y_test;
};

inline ReplicationData generate_replication(const ScenarioSpec& spec, int rep) {
    const Vector beta = spec.beta.size() == 0 ? one_over_j_beta(spec.d) : spec.beta;
    if (beta.size() != spec.d) throw InputError("beta length must equal d");
    std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(spec.dgp_case),
                                    static_cast<std::uint64_t>(spec.set), static_cast<std::uint64_t>(rep)));
    ReplicationData r;
    std::normal_distribution<double> normal(0.0, 1.0);
    r.X = generate_regressors(spec.dgp_case, spec.T, spec.d, rng);
    r.y = r.X * beta;
    for (Index t = 0; t < spec.T; ++t) r.y(t) += normal(rng);
    r.X_test = generate_regressors(spec.dgp_case, spec.T_test, spec.d, rng);
    r.y_test = r.X_test * beta;
    for (Index t = 0; t < spec.T_test; ++t) r.y_test(t) += normal(rng);
    return r;
}

inline std::vector<CellMetrics> run_replication(const ScenarioSpec& spec, int rep,
                                                const std::vector<MethodColumn>& columns) {
    const ReplicationData data = generate_replication(spec, rep);
    const std::vector<Group> groups = build_candidate_sets(spec.set, spec.d);
    const CandidateFit cand = fit_candidates(data.X, data.y, groups);

    ForecastPanel train{data.y, cand.F, std::nullopt, cand.q, std::nullopt};
    ForecastPanel test{data.y_test, cand.predict(data.X_test), std::nullopt, std::nullopt, std::nullopt};

    const bool need_cv = std::any_of(columns.begin(), columns.end(),
                                     [](const MethodColumn& c) { return c.family == MethodFamily::CrossValidation; });
    std::optional<ForecastPanel> cv_panel;
    std::string cv_error;
    if (need_cv) {
        try {
            cv_panel = build_loo_forecasts(train, cand.hat_diagonals);
        } catch (const Error& e) {
            cv_error = e.what();
        }
    }
    std::optional<double> sigma2;
    std::string sigma2_error;
    try {
        sigma2 = estimate_sigma2(train);
    } catch (const Error& e) {
        sigma2_error = e.what();
    }
    const Vector k = Eigen::Map<const Eigen::VectorXi>(cand.q.data(), train.S()).cast<double>();
    const Vector mse = per_model_mse(train);

    std::vector<CellMetrics> cells(columns.size());
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const MethodColumn& col = columns[i];
        CellMetrics& cell = cells[i];
        try {
            WeightSolution sol;
            switch (col.family) {
            case MethodFamily::Regression: sol = fit_regression(train, col.space); break;
            case MethodFamily::Mallows:
                if (!sigma2) throw Error(sigma2_error);
                sol = fit_generalized_mallows(train, MallowsInputs{*sigma2, k, std::nullopt}, MallowsVariant::Mallows,
                                              col.space);
                break;
            case MethodFamily::CrossValidation:
                if (!cv_panel) throw Error(cv_error);
                sol = fit_cv(*cv_panel, col.space);
                break;
            case MethodFamily::SmoothedAIC: sol = fit_performance(spec.T, mse, cand.q, SmoothedAIC{}); break;
            case MethodFamily::SmoothedBIC: sol = fit_performance(spec.T, mse, cand.q, SmoothedBIC{}); break;
            case MethodFamily::Eigenvector: sol = fit_eigenvector(train); break;
            }
            cell.ssr = ssr(sol, train);
            cell.bias = empirical_bias(sol, train);
            cell.msfe = msfe(sol, test);
            cell.sparsity = sparsity_pct(sol.w);
            cell.w = sol.w;
            cell.intercept = sol.intercept;
            cell.ok = true;
        } catch (const Error& e) {
            cell.error = e.what();
        }
    }
    return cells;
}

struct ColumnSummary {
    int failures = 0;
    double mean_ssr = 0.0;
    double mean_bias = 0.0;
    double mean_msfe = 0.0;
    double median_msfe = 0.0;
    double mean_sparsity = 0.0;
};

struct ScenarioResult {
    ScenarioSpec spec;
    std::vector<MethodColumn> columns;
    std::vector<std::vector<CellMetrics>> replications;  // [rep][column]
    std::vector<ColumnSummary> summary;                  // [column]
};

inline void summarize(ScenarioResult& r) {
    r.summary.assign(r.columns.size(), {});
    for (std::size_t c = 0; c < r.columns.size(); ++c) {
        std::vector<double> ssr_v, bias_v, msfe_v, sp_v;
        ColumnSummary& s = r.summary[c];
        for (const auto& rep : r.replications) {
            const CellMetrics& m = rep[c];
            if (!m.ok) {
                ++s.failures;
                continue;
            }
            ssr_v.push_back(m.ssr);
            bias_v.push_back(m.bias);
            msfe_v.push_back(m.msfe);
            sp_v.push_back(m.sparsity);
        }
        const double n = static_cast<double>(ssr_v.size());
        if (n == 0) continue;
        s.mean_ssr = pairwise_sum(ssr_v.data(), ssr_v.size()) / n;
        s.mean_bias = pairwise_sum(bias_v.data(), bias_v.size()) / n;
        s.mean_msfe = pairwise_sum(msfe_v.data(), msfe_v.size()) / n;
        s.mean_sparsity = pairwise_sum(sp_v.data(), sp_v.size()) / n;
        s.median_msfe = median(msfe_v);
    }
}

// Runs every (scenario, replication) job in parallel; results land at fixed indices.
inline std::vector<ScenarioResult> run_grid(const std::vector<ScenarioSpec>& specs,
                                            const std::vector<MethodColumn>& columns) {
    std::vector<ScenarioResult> out(specs.size());
    std::vector<std::pair<std::size_t, int>> jobs;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const ScenarioSpec& s = specs[i];
        if (s.T < s.d + 2) throw InputError("scenario needs T >= d + 2");
        if (s.d < 5) throw InputError("scenario needs d >= 5");
        if (s.replications < 1) throw InputError("scenario needs at least one replication");
        out[i].spec = s;
        out[i].columns = columns;
        out[i].replications.resize(static_cast<std::size_t>(s.replications));
        for (int r = 0; r < s.replications; ++r) jobs.emplace_back(i, r);
    }
    parallel_for(jobs.size(), [&](std::size_t j) {
        const auto [i, r] = jobs[j];
        out[i].replications[static_cast<std::size_t>(r)] = run_replication(specs[i], r, columns);
    });
    for (auto& r : out) summarize(r);
    return out;
}

inline ScenarioResult run_scenario(const ScenarioSpec& spec, const std::vector<MethodColumn>& columns) {
    return run_grid({spec}, columns).front();
}

// ---------------------------------------------------------------------------
// Table output

enum class TableFormat { Csv, Markdown };

struct TableMetric {
    std::string name;
    double scale;
    double ColumnSummary::*field;
};

inline const std::vector<TableMetric>& table_metrics() {
    static const std::vector<TableMetric> m = {
        {"ssr", 1e-4, &ColumnSummary::mean_ssr},
        {"bias", 1.0, &ColumnSummary::mean_bias},
        {"msfe", 1.0, &ColumnSummary::mean_msfe},
        {"sparsity", 1.0, &ColumnSummary::mean_sparsity},
    };
    return m;
}

// Table body for one metric: rows are (case, set), columns the method/space labels.
inline std::string render_table(const std::vector<ScenarioResult>& results, const TableMetric& metric,
                                TableFormat format) {
    if (results.empty()) throw InputError("no results to tabulate");
    const auto& cols = results.front().columns;
    std::string out;
    const bool md = format == TableFormat::Markdown;
    const std::string sep = md ? " | " : ",";
    auto row = [&](const std::vector<std::string>& cells) {
        if (md) out += "| ";
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += sep;
            out += cells[i];
        }
        out += md ? " |\n" : "\n";
    };
    std::vector<std::string> header{"case", "set"};
    for (const auto& c : cols) header.push_back(c.label);
    row(header);
    if (md) row(std::vector<std::string>(header.size(), "---"));
    for (const auto& r : results) {
        std::vector<std::string> cells{std::to_string(r.spec.dgp_case), std::to_string(r.spec.set)};
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const ColumnSummary& s = r.summary[c];
            if (s.failures == static_cast<int>(r.replications.size())) cells.emplace_back("failed");
            else cells.push_back(format_double(s.*(metric.field) * metric.scale));
        }
        row(cells);
    }
    return out;
}

// Writes ssr, bias, msfe and sparsity tables; SSR is reported in units of 10^4.
inline std::vector<std::filesystem::path> emit_tables(const std::vector<ScenarioResult>& results, TableFormat format,
                                                      const std::filesystem::path& out_dir) {
    if (results.empty()) throw InputError("no results to tabulate");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::vector<std::filesystem::path> files;
    const char* ext = format == TableFormat::Markdown ? ".md" : ".csv";
    for (const TableMetric& m : table_metrics()) {
        const std::filesystem::path p = out_dir / (m.name + ext);
        std::ofstream f(p, std::ios::binary);
        if (!f) throw Error("cannot write " + p.string());
        f << render_table(results, m, format);
        if (!f) throw Error("failed writing " + p.string());
        files.push_back(p);
    }
    return files;
}

}  // namespace weightscape
