#pragma once

#include "weightscape/conformal.hpp"
#include "weightscape/diagnostics.hpp"
#include "weightscape/format.hpp"
#include "weightscape/types.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace weightscape {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
    std::vector<std::string> header;
    Matrix data;
};

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r' || s[a] == '"')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r' || s[b - 1] == '"')) --b;
    return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_number(const std::string& s, std::size_t line_no) {
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan" || s == "NaN" || s == "NA") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const char* first = s.data();
    if (!s.empty() && s[0] == '+') ++first;
    const auto res = std::from_chars(first, s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
        throw InputError("malformed number '" + s + "' on line " + std::to_string(line_no));
    return v;
}

inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (t.header.empty()) {
            for (const auto& c : cells) {
                if (c.empty()) throw InputError("empty column name in CSV header");
                double dummy;
                const auto r = std::from_chars(c.data(), c.data() + c.size(), dummy);
                if (r.ec == std::errc() && r.ptr == c.data() + c.size())
                    throw InputError("CSV header row is required (first line looks numeric)");
            }
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw InputError("CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                             " fields, header has " + std::to_string(t.header.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(parse_number(c, line_no));
        rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw InputError("CSV input is empty");
    t.data.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) t.data(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return t;
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path);
    return read_csv(f);
}

inline int column_of(const CsvTable& t, const std::string& name) {
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i] == name) return static_cast<int>(i);
    return -1;
}

// Panel CSV: column y plus one column per candidate forecast, in file order.
inline ForecastPanel panel_from_csv(const CsvTable& t) {
    const int yc = column_of(t, "y");
    if (yc < 0) throw InputError("panel CSV needs a 'y' column");
    ForecastPanel p;
    p.y = t.data.col(yc);
    std::vector<std::string> labels;
    std::vector<Index> cols;
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (static_cast<int>(i) != yc) {
            labels.push_back(t.header[i]);
            cols.push_back(static_cast<Index>(i));
        }
    p.F = t.data(Eigen::all, cols);
    p.labels = labels;
    validate_panel(p);
    return p;
}

// Forecast-only CSV aligned with a panel's labels (used for leave-one-out matrices).
inline Matrix forecasts_from_csv(const CsvTable& t, const std::vector<std::string>& labels) {
    std::vector<Index> cols;
    for (const auto& l : labels) {
        const int c = column_of(t, l);
        if (c < 0) throw InputError("CSV is missing forecast column '" + l + "'");
        cols.push_back(c);
    }
    return t.data(Eigen::all, cols);
}

// ---------------------------------------------------------------------------
// JSON helpers

inline json number(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);  // "inf", "-inf" or "nan"
}

inline double to_number(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    }
    throw InputError("expected a number in JSON");
}

inline json vector_json(const Vector& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
    return a;
}

inline Vector vector_from_json(const json& a) {
    if (!a.is_array()) throw InputError("expected a JSON array");
    Vector v(static_cast<Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = to_number(a[i]);
    return v;
}

inline json optional_number(const std::optional<double>& v) { return v ? number(*v) : json(nullptr); }
inline std::optional<double> optional_from_json(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return to_number(j.at(key));
}

// ---------------------------------------------------------------------------
// Method specs

inline json to_json(const MethodSpec& m) {
    json j;
    j["name"] = method_name(m);
    if (const auto* g = std::get_if<GeneralizedMallows>(&m)) {
        j["sigma2"] = number(g->sigma2);
        if (g->phi) j["phi"] = vector_json(*g->phi);
    } else if (const auto* p = std::get_if<Performance>(&m)) {
        if (const auto* gp = std::get_if<GeneralPerformance>(&p->family)) {
            j["a"] = number(gp->a);
            j["b"] = number(gp->b);
            j["c"] = number(gp->c);
        } else if (const auto* il = std::get_if<InverseLoss>(&p->family)) {
            j["loss"] = vector_json(il->loss);
        }
    } else if (const auto* s = std::get_if<SoftPenalized>(&m)) {
        j["lambda"] = number(s->lambda);
        j["mu"] = vector_json(s->mu);
        j["nu"] = vector_json(s->nu);
    }
    return j;
}

inline MethodSpec method_from_json(const json& j) {
    const std::string name = j.at("name").get<std::string>();
    if (name == "reg") return Regression{};
    if (name == "cv") return CrossValidation{};
    if (name == "eig") return Eigenvector{};
    if (name == "ma" || name == "ma:kl") {
        GeneralizedMallows g;
        g.variant = name == "ma" ? MallowsVariant::Mallows : MallowsVariant::KL;
        g.sigma2 = to_number(j.at("sigma2"));
        if (j.contains("phi")) g.phi = vector_from_json(j.at("phi"));
        return g;
    }
    if (name == "pf:general") return Performance{GeneralPerformance{to_number(j.at("a")), to_number(j.at("b")), to_number(j.at("c"))}};
    if (name == "pf:saic") return Performance{SmoothedAIC{}};
    if (name == "pf:sbic") return Performance{SmoothedBIC{}};
    if (name == "pf:inverse") return Performance{InverseLoss{vector_from_json(j.at("loss"))}};
    if (name.rfind("soft:", 0) == 0) {
        SoftPenalized s;
        const char f = name.back();
        s.flavor = f == 'C' ? PenaltyFlavor::C : f == 'D' ? PenaltyFlavor::D : PenaltyFlavor::E;
        s.lambda = to_number(j.at("lambda"));
        s.mu = vector_from_json(j.at("mu"));
        s.nu = vector_from_json(j.at("nu"));
        return s;
    }
    throw InputError("unknown method '" + name + "'");
}

// ---------------------------------------------------------------------------
// Solutions and reports

inline json to_json(const WeightSolution& s) {
    json j;
    j["weights"] = vector_json(s.w);
    j["intercept"] = optional_number(s.intercept);
    json m = json::object();
    m["rho0"] = optional_number(s.multipliers.rho0);
    m["nu"] = optional_number(s.multipliers.nu);
    m["box"] = s.multipliers.box ? vector_json(*s.multipliers.box) : json(nullptr);
    m["box_upper"] = s.multipliers.box_upper ? vector_json(*s.multipliers.box_upper) : json(nullptr);
    j["multipliers"] = m;
    j["active_set"] = s.active_set;
    j["space"] = to_string(s.space);
    j["method"] = to_json(s.method);
    j["converged"] = s.converged;
    j["unique_certified"] = s.unique_certified ? json(*s.unique_certified) : json(nullptr);
    return j;
}

inline WeightSolution solution_from_json(const json& j) {
    WeightSolution s;
    s.w = vector_from_json(j.at("weights"));
    s.intercept = optional_from_json(j, "intercept");
    const json& m = j.at("multipliers");
    s.multipliers.rho0 = optional_from_json(m, "rho0");
    s.multipliers.nu = optional_from_json(m, "nu");
    if (m.contains("box") && !m.at("box").is_null()) s.multipliers.box = vector_from_json(m.at("box"));
    if (m.contains("box_upper") && !m.at("box_upper").is_null())
        s.multipliers.box_upper = vector_from_json(m.at("box_upper"));
    s.active_set = j.at("active_set").get<std::vector<int>>();
    s.space = parse_space(j.at("space").get<std::string>());
    s.method = method_from_json(j.at("method"));
    s.converged = j.at("converged").get<bool>();
    if (j.contains("unique_certified") && !j.at("unique_certified").is_null())
        s.unique_certified = j.at("unique_certified").get<bool>();
    return s;
}

inline json to_json(const DiagnosticsReport& d) {
    json j;
    j["ssr"] = number(d.ssr);
    j["empirical_bias"] = number(d.empirical_bias);
    j["msfe"] = optional_number(d.msfe);
    j["sparsity_pct"] = number(d.sparsity_pct);
    j["error_acf"] = vector_json(d.error_acf);
    j["notes"] = d.notes;
    return j;
}

inline json to_json(const UniquenessReport& u) {
    json j;
    j["condition_checked"] = u.condition_checked;
    j["lambda_min_scaled"] = number(u.lambda_min_scaled);
    j["holds"] = u.holds;
    j["multiplicity"] = u.multiplicity ? json(*u.multiplicity) : json(nullptr);
    j["note"] = u.note;
    return j;
}

inline json to_json(const SparsityReport& r) {
    json j;
    j["zero_count"] = r.zero_count;
    j["sparsity_pct"] = number(r.sparsity_pct);
    j["sparsity_forced"] = r.sparsity_forced ? json(*r.sparsity_forced) : json(nullptr);
    j["gradient_spread"] = number(r.gradient_spread);
    j["condition"] = r.condition;
    return j;
}

inline json to_json(const SelectionResult& r) {
    json j;
    j["chosen"] = to_string(r.chosen);
    j["alpha"] = number(r.alpha);
    j["seed"] = r.seed;
    json lengths = json::object();
    for (const auto& [s, l] : r.lengths) lengths[to_string(s)] = number(l);
    j["lengths"] = lengths;
    json outcomes = json::array();
    for (const auto& o : r.outcomes) {
        json e;
        e["space"] = to_string(o.space);
        e["length"] = number(o.length);
        e["solution"] = o.solution ? to_json(*o.solution) : json(nullptr);
        e["note"] = o.note;
        outcomes.push_back(e);
    }
    j["outcomes"] = outcomes;
    auto idx = [](const std::vector<Index>& v) {
        std::vector<long long> out(v.begin(), v.end());
        return json(out);
    };
    j["splits"] = {{"train", idx(r.splits.train)}, {"weight", idx(r.splits.weight)},
                   {"calibration", idx(r.splits.calibration)}};
    return j;
}

// Sorted keys, two-space indent, trailing newline.
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace weightscape
