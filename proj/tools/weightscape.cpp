// Command-line front end: combine, simulate, select-space, diagnose.

#include "weightscape/weightscape.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace ws = weightscape;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kSolverFailure = 1;
constexpr int kInputError = 2;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = ws::trim(item); !t.empty()) out.push_back(t);
    return out;
}

std::vector<ws::WeightSpace> parse_spaces(const std::string& s) {
    std::vector<ws::WeightSpace> out;
    for (const auto& t : split_list(s)) out.push_back(ws::parse_space(t));
    if (out.empty()) throw ws::InputError("no weight spaces given");
    return out;
}

struct MethodToken {
    std::string token;
    ws::MethodSpec spec;
};

std::vector<MethodToken> parse_methods(const std::string& s) {
    std::vector<MethodToken> out;
    for (const auto& t : split_list(s)) {
        if (t == "reg") out.push_back({t, ws::Regression{}});
        else if (t == "ma") out.push_back({t, ws::GeneralizedMallows{ws::MallowsVariant::Mallows, 0.0, std::nullopt}});
        else if (t == "ma:kl") out.push_back({t, ws::GeneralizedMallows{ws::MallowsVariant::KL, 0.0, std::nullopt}});
        else if (t == "cv") out.push_back({t, ws::CrossValidation{}});
        else if (t == "pf:saic") out.push_back({t, ws::Performance{ws::SmoothedAIC{}}});
        else if (t == "pf:sbic") out.push_back({t, ws::Performance{ws::SmoothedBIC{}}});
        else if (t == "eig") out.push_back({t, ws::Eigenvector{}});
        else throw ws::InputError("unknown method '" + t + "' (expected reg, ma, ma:kl, cv, pf:saic, pf:sbic, eig)");
    }
    if (out.empty()) throw ws::InputError("no methods given");
    return out;
}

// Spaces a method is evaluated in: performance weights live in D, eigenvector weights in E.
std::vector<ws::WeightSpace> spaces_for(const ws::MethodSpec& m, const std::vector<ws::WeightSpace>& requested,
                                        std::vector<std::string>& skipped, const std::string& token) {
    if (std::holds_alternative<ws::Performance>(m)) return {ws::WeightSpace::D};
    if (std::holds_alternative<ws::Eigenvector>(m)) return {ws::WeightSpace::E};
    std::vector<ws::WeightSpace> out;
    for (auto s : requested) {
        if (s == ws::WeightSpace::Aprime && !std::holds_alternative<ws::Regression>(m)) {
            skipped.push_back(token + "/Aprime: intercept space is defined for regression weights only");
            continue;
        }
        out.push_back(s);
    }
    return out;
}

struct PanelInputs {
    std::string input, meta, loo, test;
};

ws::ForecastPanel load_panel(const PanelInputs& in, std::optional<ws::Vector>& phi) {
    ws::ForecastPanel p = ws::panel_from_csv(ws::read_csv_file(in.input));
    const std::vector<std::string> columns = p.labels.value();
    if (!in.meta.empty()) {
        std::ifstream f(in.meta);
        if (!f) throw ws::InputError("cannot open " + in.meta);
        ws::json m;
        try {
            f >> m;
        } catch (const ws::json::exception& e) {
            throw ws::InputError("malformed metadata JSON: " + std::string(e.what()));
        }
        if (m.contains("q")) p.q = m.at("q").get<std::vector<int>>();
        if (m.contains("labels")) p.labels = m.at("labels").get<std::vector<std::string>>();
        if (m.contains("phi")) phi = ws::vector_from_json(m.at("phi"));
    }
    if (!in.loo.empty()) {
        p.loo = ws::forecasts_from_csv(ws::read_csv_file(in.loo), columns);
    }
    ws::validate_panel(p);
    return p;
}

ws::ForecastPanel load_test_panel(const std::string& path, const ws::ForecastPanel& train) {
    ws::ForecastPanel t = ws::panel_from_csv(ws::read_csv_file(path));
    if (t.S() != train.S()) throw ws::InputError("test panel has a different number of forecast columns");
    return t;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ws::Error("cannot write " + path);
    f << text;
}

std::string file_token(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (c == ':') c = '-';
    return out;
}

// Fills in sigma2 and phi for Mallows tokens.
ws::MethodSpec resolve_method(const MethodToken& t, const ws::ForecastPanel& panel, std::optional<double> sigma2,
                              const std::optional<ws::Vector>& phi) {
    if (auto m = std::get_if<ws::GeneralizedMallows>(&t.spec)) {
        ws::GeneralizedMallows g = *m;
        g.sigma2 = sigma2 ? *sigma2 : ws::estimate_sigma2(panel);
        if (g.variant == ws::MallowsVariant::KL) g.phi = phi ? *phi : ws::Vector::Zero(panel.S());
        return g;
    }
    return t.spec;
}

// ---------------------------------------------------------------------------

struct CombineOptions {
    PanelInputs panel;
    std::string methods = "reg";
    std::string spaces = "A,B,C,D,E";
    std::string out;
    double sigma2 = -1.0;
    int max_lag = 0;
};

int cmd_combine(const CombineOptions& o) {
    std::optional<ws::Vector> phi;
    const ws::ForecastPanel panel = load_panel(o.panel, phi);
    std::optional<ws::ForecastPanel> test;
    if (!o.panel.test.empty()) test = load_test_panel(o.panel.test, panel);
    const auto methods = parse_methods(o.methods);
    const auto spaces = parse_spaces(o.spaces);
    const std::optional<double> sigma2 = o.sigma2 >= 0.0 ? std::optional<double>(o.sigma2) : std::nullopt;

    ws::json results = ws::json::array();
    ws::json failures = ws::json::array();
    std::vector<std::string> skipped;
    std::string summary = "method,space,ssr,empirical_bias,msfe,sparsity_pct,converged\n";
    for (const auto& mt : methods) {
        for (auto space : spaces_for(mt.spec, spaces, skipped, mt.token)) {
            try {
                const ws::MethodSpec method = resolve_method(mt, panel, sigma2, phi);
                const ws::WeightSolution sol = ws::fit(panel, method, space);
                const ws::DiagnosticsReport d = ws::diagnose(sol, panel, test ? &*test : nullptr, o.max_lag);
                ws::json entry{{"method", mt.token}, {"space", ws::to_string(space)},
                               {"solution", ws::to_json(sol)}, {"diagnostics", ws::to_json(d)}};
                if (!o.out.empty())
                    write_text((fs::path(o.out) / (file_token(mt.token) + "_" + ws::to_string(space) + ".json")).string(),
                               ws::dump(entry));
                results.push_back(entry);
                summary += mt.token + "," + ws::to_string(space) + "," + ws::format_double(d.ssr) + "," +
                           ws::format_double(d.empirical_bias) + "," +
                           (d.msfe ? ws::format_double(*d.msfe) : std::string("")) + "," +
                           ws::format_double(d.sparsity_pct) + "," + (sol.converged ? "true" : "false") + "\n";
            } catch (const ws::InputError&) {
                throw;
            } catch (const ws::Error& e) {
                failures.push_back({{"method", mt.token}, {"space", ws::to_string(space)}, {"error", e.what()}});
                std::cerr << "failed " << mt.token << "/" << ws::to_string(space) << ": " << e.what() << "\n";
            }
        }
    }
    for (const auto& s : skipped) std::cerr << "skipped " << s << "\n";
    ws::json doc{{"results", results}, {"failures", failures}};
    if (o.out.empty()) {
        std::cout << ws::dump(doc);
    } else {
        write_text((fs::path(o.out) / "results.json").string(), ws::dump(doc));
        write_text((fs::path(o.out) / "summary.csv").string(), summary);
    }
    return failures.empty() ? kOk : kSolverFailure;
}

// ---------------------------------------------------------------------------

struct SimulateOptions {
    std::string cases = "1,2,3,4";
    std::string sets = "1,2,3,4";
    long T = 2000;
    long T_test = 1000;
    long d = 42;
    int reps = 20;
    std::uint64_t seed = 20240601;
    std::string beta_profile = "one-over-j";
    std::string beta_file;
    std::string out_dir = "simulation";
    std::string format = "csv";
    bool with_cv = false;
};

ws::Vector load_beta(const SimulateOptions& o) {
    if (o.beta_profile == "one-over-j") return ws::one_over_j_beta(o.d);
    if (o.beta_profile == "constant") return ws::Vector::Ones(o.d);
    if (o.beta_profile == "custom-file") {
        if (o.beta_file.empty()) throw ws::InputError("--beta-profile custom-file needs --beta-file");
        std::ifstream f(o.beta_file);
        if (!f) throw ws::InputError("cannot open " + o.beta_file);
        std::vector<double> v;
        std::string tok;
        std::size_t line = 0;
        while (f >> tok) {
            ++line;
            for (const auto& part : split_list(tok)) v.push_back(ws::parse_number(part, line));
        }
        if (static_cast<long>(v.size()) != o.d)
            throw ws::InputError("beta file has " + std::to_string(v.size()) + " values, expected d = " + std::to_string(o.d));
        return Eigen::Map<ws::Vector>(v.data(), static_cast<ws::Index>(v.size()));
    }
    throw ws::InputError("unknown beta profile '" + o.beta_profile + "'");
}

std::vector<int> parse_ints(const std::string& s, int lo, int hi, const char* what) {
    std::vector<int> out;
    for (const auto& t : split_list(s)) {
        const double v = ws::parse_number(t, 0);
        if (v != std::floor(v) || v < lo || v > hi)
            throw ws::InputError(std::string(what) + " must be integers in " + std::to_string(lo) + ".." + std::to_string(hi));
        out.push_back(static_cast<int>(v));
    }
    if (out.empty()) throw ws::InputError(std::string("no ") + what + " given");
    return out;
}

int cmd_simulate(const SimulateOptions& o) {
    if (o.format != "csv" && o.format != "markdown") throw ws::InputError("--format must be csv or markdown");
    const ws::Vector beta = load_beta(o);
    std::vector<ws::ScenarioSpec> specs;
    for (int c : parse_ints(o.cases, 1, 4, "cases"))
        for (int s : parse_ints(o.sets, 1, 4, "sets")) {
            ws::ScenarioSpec sp;
            sp.dgp_case = c;
            sp.set = s;
            sp.T = o.T;
            sp.T_test = o.T_test;
            sp.d = o.d;
            sp.beta = beta;
            sp.seed = o.seed;
            sp.replications = o.reps;
            specs.push_back(sp);
        }
    const auto results = ws::run_grid(specs, ws::default_columns(o.with_cv));
    const auto files = ws::emit_tables(
        results, o.format == "markdown" ? ws::TableFormat::Markdown : ws::TableFormat::Csv, o.out_dir);
    int failed_cells = 0;
    for (const auto& r : results)
        for (std::size_t c = 0; c < r.columns.size(); ++c)
            if (r.summary[c].failures > 0) {
                ++failed_cells;
                std::cerr << "case " << r.spec.dgp_case << " set " << r.spec.set << " " << r.columns[c].label << ": "
                          << r.summary[c].failures << " failed replication(s)\n";
            }
    for (const auto& f : files) std::cout << f.string() << "\n";
    return failed_cells == 0 ? kOk : kSolverFailure;
}

// ---------------------------------------------------------------------------

struct SelectOptions {
    std::string input;
    double alpha = 0.1;
    std::uint64_t seed = 7;
    std::string spaces = "A,B,C,D,E";
    std::string out;
};

int cmd_select_space(const SelectOptions& o) {
    const ws::CsvTable t = ws::read_csv_file(o.input);
    const int yc = ws::column_of(t, "y");
    if (yc < 0) throw ws::InputError("select-space input needs a 'y' column");
    std::vector<ws::Index> xc;
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (static_cast<int>(i) != yc) xc.push_back(static_cast<ws::Index>(i));
    if (xc.empty()) throw ws::InputError("select-space input needs at least one regressor column");
    const ws::Matrix X = t.data(Eigen::all, xc);
    const ws::Vector y = t.data.col(yc);
    if (!X.allFinite() || !y.allFinite()) throw ws::InputError("non-finite entry in select-space input");
    if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw ws::InputError("alpha must lie in (0, 1)");
    const auto res = ws::select_space(X, y, ws::default_trainer(X.cols()), parse_spaces(o.spaces), o.alpha, o.seed);
    write_text(o.out, ws::dump(ws::to_json(res)));
    for (const auto& oc : res.outcomes)
        if (!oc.solution) std::cerr << "space " << ws::to_string(oc.space) << " failed: " << oc.note << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct DiagnoseOptions {
    PanelInputs panel;
    std::string methods = "reg";
    std::string spaces = "A,B,C,D,E";
    std::string out;
    double sigma2 = -1.0;
};

int cmd_diagnose(const DiagnoseOptions& o) {
    std::optional<ws::Vector> phi;
    const ws::ForecastPanel panel = load_panel(o.panel, phi);
    const auto methods = parse_methods(o.methods);
    const auto spaces = parse_spaces(o.spaces);
    const std::optional<double> sigma2 = o.sigma2 >= 0.0 ? std::optional<double>(o.sigma2) : std::nullopt;
    ws::json rows = ws::json::array();
    std::vector<std::string> skipped;
    std::ostringstream human;
    bool failed = false;
    for (const auto& mt : methods) {
        for (auto space : spaces_for(mt.spec, spaces, skipped, mt.token)) {
            ws::json row{{"method", mt.token}, {"space", ws::to_string(space)}};
            try {
                const ws::MethodSpec method = resolve_method(mt, panel, sigma2, phi);
                const ws::UniquenessReport u = ws::check_uniqueness(method, space, panel);
                row["uniqueness"] = ws::to_json(u);
                human << mt.token << "/" << ws::to_string(space) << ": unique=" << (u.holds ? "yes" : "no")
                      << " lambda_min=" << ws::format_double(u.lambda_min_scaled);
                if (u.multiplicity) human << " multiplicity=" << *u.multiplicity;
                if (space == ws::WeightSpace::C || space == ws::WeightSpace::D) {
                    if (u.holds) {
                        const ws::WeightSolution sol = ws::fit(panel, method, space);
                        const ws::SparsityReport sr = ws::check_sparsity_conditions(sol, panel, method);
                        row["sparsity"] = ws::to_json(sr);
                        human << " zeros=" << sr.zero_count << " (" << sr.condition << ")";
                    } else {
                        row["sparsity"] = nullptr;
                    }
                }
                human << "\n";
            } catch (const ws::InputError&) {
                throw;
            } catch (const ws::Error& e) {
                failed = true;
                row["error"] = e.what();
                std::cerr << "failed " << mt.token << "/" << ws::to_string(space) << ": " << e.what() << "\n";
            }
            rows.push_back(row);
        }
    }
    for (const auto& s : skipped) std::cerr << "skipped " << s << "\n";
    const std::string doc = ws::dump(ws::json{{"reports", rows}});
    if (o.out.empty()) {
        std::cout << doc;
        std::cerr << human.str();
    } else {
        write_text(o.out, doc);
        std::cout << human.str();
    }
    return failed ? kSolverFailure : kOk;
}

void add_panel_options(CLI::App* cmd, PanelInputs& p) {
    cmd->add_option("--input", p.input, "Panel CSV (header with column y and forecast columns)")->required();
    cmd->add_option("--meta", p.meta, "Sidecar JSON with q, labels and phi");
    cmd->add_option("--loo", p.loo, "Leave-one-out forecasts CSV with the same forecast columns");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Forecast combination weights over constrained weight spaces"};
    app.set_config("--config", "", "key=value configuration file; flags override it");
    app.require_subcommand(1);

    CombineOptions combine;
    auto* c = app.add_subcommand("combine", "Estimate weights for each method and space");
    add_panel_options(c, combine.panel);
    c->add_option("--test", combine.panel.test, "Test panel CSV for out-of-sample MSFE");
    c->add_option("--methods", combine.methods, "reg,ma,ma:kl,cv,pf:saic,pf:sbic,eig")->capture_default_str();
    c->add_option("--spaces", combine.spaces, "A,Aprime,B,C,D,E")->capture_default_str();
    c->add_option("--out", combine.out, "Output directory (stdout when omitted)");
    c->add_option("--sigma2", combine.sigma2, "Error variance for Mallows (estimated when omitted)");
    c->add_option("--max-lag", combine.max_lag, "Autocorrelation lags of the combination errors");

    SimulateOptions sim;
    auto* s = app.add_subcommand("simulate", "Run the Monte Carlo grid and write tables");
    s->add_option("--cases", sim.cases)->capture_default_str();
    s->add_option("--sets", sim.sets)->capture_default_str();
    s->add_option("--t", sim.T, "Training size")->capture_default_str();
    s->add_option("--t-test", sim.T_test, "Test size")->capture_default_str();
    s->add_option("--d", sim.d, "Number of regressors")->capture_default_str();
    s->add_option("--reps", sim.reps, "Replications per scenario")->capture_default_str();
    s->add_option("--seed", sim.seed)->capture_default_str();
    s->add_option("--beta-profile", sim.beta_profile, "one-over-j, constant or custom-file")->capture_default_str();
    s->add_option("--beta-file", sim.beta_file, "Coefficients for custom-file");
    s->add_option("--out-dir", sim.out_dir)->capture_default_str();
    s->add_option("--format", sim.format, "csv or markdown")->capture_default_str();
    s->add_flag("--with-cv", sim.with_cv, "Add cross-validation columns");

    SelectOptions sel;
    auto* x = app.add_subcommand("select-space", "Pick a weight space by split-conformal interval length");
    x->add_option("--input", sel.input, "CSV with column y and regressor columns")->required();
    x->add_option("--alpha", sel.alpha)->capture_default_str();
    x->add_option("--seed", sel.seed)->capture_default_str();
    x->add_option("--spaces", sel.spaces)->capture_default_str();
    x->add_option("--out", sel.out, "Output JSON file (stdout when omitted)");

    DiagnoseOptions diag;
    auto* g = app.add_subcommand("diagnose", "Uniqueness and sparsity-condition report");
    add_panel_options(g, diag.panel);
    g->add_option("--methods", diag.methods)->capture_default_str();
    g->add_option("--spaces", diag.spaces)->capture_default_str();
    g->add_option("--out", diag.out, "Output JSON file (stdout when omitted)");
    g->add_option("--sigma2", diag.sigma2, "Error variance for Mallows (estimated when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInputError;
    }

    try {
        if (*c) return cmd_combine(combine);
        if (*s) return cmd_simulate(sim);
        if (*x) return cmd_select_space(sel);
        if (*g) return cmd_diagnose(diag);
    } catch (const ws::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kInputError;
    } catch (const ws::json::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kSolverFailure;
    }
    return kInputError;
}
