#include "config.hpp"

#include "hlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hlab::cli {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); }

template <class T>
T get(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        invalid(std::string("key '") + key + "': " + e.what());
    }
}

MetricField parse_metric(const SpectralGrid& grid, const json& j) {
    require_keys(j, {"kind", "phi", "diag"}, "metric");
    const std::string kind = get<std::string>(j, "kind", "flat");
    if (kind == "flat") return MetricField::flat(grid);
    if (kind == "conformal") {
        if (!j.contains("phi")) invalid("conformal metric needs 'phi'");
        return MetricField::conformal(grid, parse_expr(j.at("phi"), grid.n()));
    }
    if (kind == "constant") {
        const auto d = parse_doubles(j.at("diag"), "metric.diag");
        if (static_cast<int>(d.size()) != grid.n()) invalid("metric.diag needs n entries");
        std::vector<CField> g;
        for (int i = 0; i < grid.n(); ++i)
            for (int k = 0; k < grid.n(); ++k) g.emplace_back(grid.size(), i == k ? d[static_cast<std::size_t>(i)] : 0.0);
        return MetricField::from_components(grid, std::move(g));
    }
    invalid("unknown metric kind '" + kind + "'");
}

MatC parse_matrix(const json& j, int n) {
    MatC m = MatC::Zero(n, n);
    if (j.contains("diag")) {
        const auto d = parse_doubles(j.at("diag"), "chi.diag");
        if (static_cast<int>(d.size()) != n) invalid("chi.diag needs n entries");
        for (int i = 0; i < n; ++i) m(i, i) = d[static_cast<std::size_t>(i)];
        return m;
    }
    if (!j.contains("matrix")) invalid("constant chi needs 'diag' or 'matrix'");
    const auto& rows = j.at("matrix");
    if (!rows.is_array() || static_cast<int>(rows.size()) != n) invalid("chi.matrix needs n rows");
    for (int i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        if (!r.is_array() || static_cast<int>(r.size()) != n) invalid("chi.matrix rows need n entries");
        for (int k = 0; k < n; ++k) {
            const auto& e = r[static_cast<std::size_t>(k)];
            if (e.is_number()) m(i, k) = e.get<double>();
            else if (e.is_array() && e.size() == 2) m(i, k) = cplx(e[0].get<double>(), e[1].get<double>());
            else invalid("chi.matrix entries are numbers or [re, im] pairs");
        }
    }
    return m;
}

ChiSpec parse_chi(const SpectralGrid& grid, const json& j, Setup& s) {
    require_keys(j, {"kind", "diag", "matrix", "diag_exprs", "omega0", "c"}, "chi");
    const int n = grid.n();
    const std::string kind = get<std::string>(j, "kind", "constant");
    if (kind == "constant") return ChiSpec::make_constant(parse_matrix(j, n));
    if (kind == "z_dependent") {
        if (!j.contains("diag_exprs") || !j.at("diag_exprs").is_array() || static_cast<int>(j.at("diag_exprs").size()) != n)
            invalid("z_dependent chi needs n 'diag_exprs'");
        Form11Field f{n, std::vector<CField>(static_cast<std::size_t>(n * n), CField(grid.size(), cplx(0.0)))};
        for (int i = 0; i < n; ++i) f(i, i) = grid.sample(parse_expr(j.at("diag_exprs")[static_cast<std::size_t>(i)], n));
        return ChiSpec::z_dependent(std::move(f));
    }
    if (kind == "gauduchon") {
        s.omega0.emplace(parse_metric(grid, j.value("omega0", json{{"kind", "flat"}})));
        return ChiSpec::gauduchon(*s.omega0, get<double>(j, "c", 1.0));
    }
    invalid("unknown chi kind '" + kind + "'");
}

Normalization parse_normalization(const json& j) {
    const std::string v = j.get<std::string>();
    if (v == "mean_zero") return Normalization::MeanZero;
    if (v == "sup_zero") return Normalization::SupZero;
    invalid("normalization is mean_zero or sup_zero");
}

SolveOptions parse_tolerances(const json& j) {
    require_keys(j, {"tolerance", "intermediate_tolerance", "initial_step", "min_step", "max_newton", "max_halvings", "gmres_restart",
                     "gmres_tolerance", "gmres_max_iterations", "admissibility"},
                 "tolerances");
    SolveOptions o;
    o.tolerance = get<double>(j, "tolerance", o.tolerance);
    o.intermediate_tolerance = get<double>(j, "intermediate_tolerance", o.intermediate_tolerance);
    o.initial_step = get<double>(j, "initial_step", o.initial_step);
    o.min_step = get<double>(j, "min_step", o.min_step);
    o.max_newton = get<int>(j, "max_newton", o.max_newton);
    o.max_halvings = get<int>(j, "max_halvings", o.max_halvings);
    o.gmres_restart = get<int>(j, "gmres_restart", o.gmres_restart);
    o.gmres_tolerance = get<double>(j, "gmres_tolerance", o.gmres_tolerance);
    o.gmres_max_iterations = get<int>(j, "gmres_max_iterations", o.gmres_max_iterations);
    o.admissibility = get<double>(j, "admissibility", o.admissibility);
    return o;
}

}  // namespace

void require_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    if (!j.is_object()) invalid(std::string(where) + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            invalid(std::string("unknown key '") + key + "' in " + where);
    }
}

std::vector<double> parse_doubles(const json& j, const char* what) {
    if (!j.is_array()) invalid(std::string(what) + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : j) {
        if (!e.is_number()) invalid(std::string(what) + " must be an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

OperatorSpec parse_operator(const json& j, int n) {
    require_keys(j, {"family", "k", "l", "n"}, "operator");
    const std::string fam = get<std::string>(j, "family", "");
    n = get<int>(j, "n", n);
    const int k = get<int>(j, "k", 1), l = get<int>(j, "l", 0);
    try {
        if (fam == "sigmak" || fam == "sigma_k_root") return OperatorSpec::sigma_k_root(n, k);
        if (fam == "quotient" || fam == "sigma_quotient") return OperatorSpec::sigma_quotient(n, k, l);
        if (fam == "sigmak_over_km1" || fam == "sigma_k_over_km1") return OperatorSpec::sigma_k_over_km1(n, k);
        if (fam == "logrho" || fam == "log_rho_k") return OperatorSpec::log_rho_k(n, k);
        if (fam == "arctan" || fam == "sum_arctan") return OperatorSpec::sum_arctan(n);
    } catch (const Error& e) {
        invalid(e.what());
    }
    invalid("unknown operator family '" + fam + "'");
}

json describe(const OperatorSpec& op) {
    static const char* names[] = {"sigma_k_root", "sigma_quotient", "sigma_k_over_km1", "log_rho_k", "sum_arctan"};
    return json{{"family", names[static_cast<int>(op.family)]}, {"n", op.n}, {"k", op.k}, {"l", op.l}, {"name", op.name()},
                {"domain", op.domain.name()}};
}

Expr parse_expr(const json& j, int n) {
    if (j.is_number()) return Expr{j.get<double>(), {}};
    require_keys(j, {"constant", "modes"}, "expression");
    Expr e;
    e.constant = get<double>(j, "constant", 0.0);
    if (j.contains("modes")) {
        if (!j.at("modes").is_array()) invalid("expression modes must be an array");
        for (const auto& m : j.at("modes")) {
            require_keys(m, {"amp", "trig", "k"}, "mode");
            FourierMode fm;
            fm.amp = get<double>(m, "amp", 0.0);
            const std::string trig = get<std::string>(m, "trig", "cos");
            if (trig != "cos" && trig != "sin") invalid("mode trig is cos or sin");
            fm.trig = trig == "cos" ? FourierMode::Trig::Cos : FourierMode::Trig::Sin;
            fm.k = get<std::vector<int>>(m, "k", {});
            if (static_cast<int>(fm.k.size()) != 2 * n) invalid("mode k needs 2n entries (x1, y1, x2, y2, ...)");
            e.modes.push_back(std::move(fm));
        }
    }
    return e;
}

double default_sigma(const OperatorSpec& op) {
    const double lo = sup_boundary(op), hi = sup_interior(op);
    if (!std::isfinite(lo)) return std::isfinite(hi) ? std::min(0.0, hi - 1.0) : 0.0;
    if (!std::isfinite(hi)) return lo + 1.0;
    return 0.5 * (lo + hi);
}

Setup build_setup(const json& j) {
    require_keys(j, {"dimension", "resolution", "operator", "chi", "metric", "psi", "normalization", "tolerances", "sweep", "ubar",
                     "a3_samples", "cns_trials", "structure_samples"},
                 "problem");
    Setup s;
    const int n = get<int>(j, "dimension", 2);
    const int m = get<int>(j, "resolution", 16);
    if (n < 1 || n > 3) invalid("dimension must be 1..3");
    if (m < 2 || m % 2) invalid("resolution must be an even number ≥ 2");
    s.grid = std::make_unique<SpectralGrid>(n, m);
    s.metric.emplace(parse_metric(*s.grid, j.value("metric", json{{"kind", "flat"}})));
    if (!j.contains("operator")) invalid("problem needs 'operator'");
    const OperatorSpec op = parse_operator(j.at("operator"), n);
    if (op.n != n) invalid("operator dimension must match 'dimension'");
    ChiSpec chi = parse_chi(*s.grid, j.value("chi", json{{"kind", "constant"}, {"diag", std::vector<double>(static_cast<std::size_t>(n), 1.0)}}), s);
    const Normalization norm = j.contains("normalization") ? parse_normalization(j.at("normalization")) : Normalization::MeanZero;
    if (j.contains("tolerances")) s.solve = parse_tolerances(j.at("tolerances"));

    const json psi = j.value("psi", json{{"kind", "expression"}, {"expr", default_sigma(op)}});
    require_keys(psi, {"kind", "expr", "u_star"}, "psi");
    const std::string kind = get<std::string>(psi, "kind", "expression");
    if (kind == "expression") {
        if (!psi.contains("expr")) invalid("psi needs 'expr'");
        s.problem.emplace(Problem::create(*s.metric, op, std::move(chi), s.grid->sample_real(parse_expr(psi.at("expr"), n)), norm));
    } else if (kind == "manufactured") {
        if (!psi.contains("u_star")) invalid("manufactured psi needs 'u_star'");
        s.u_star_expr = parse_expr(psi.at("u_star"), n);
        s.u_star = s.grid->sample_real(*s.u_star_expr);
        // a placeholder level that is always admissible, replaced by F(𝔤[u*])
        const RField level(s.grid->size(), default_sigma(op));
        const Problem base = Problem::create(*s.metric, op, std::move(chi), level, norm);
        s.problem.emplace(base.with_psi(manufacture(base, *s.u_star)));
    } else {
        invalid("psi kind is expression or manufactured");
    }
    return s;
}

Setup build_gauduchon(const json& j) {
    require_keys(j, {"dimension", "resolution", "phi", "omega0", "c", "h", "normalization", "tolerances", "a5_samples"}, "gauduchon");
    const int n = get<int>(j, "dimension", 2);
    std::vector<int> kx(static_cast<std::size_t>(2 * n), 0), kh(static_cast<std::size_t>(2 * n), 0);
    kx[0] = 1;
    kh[1] = 1;
    if (n > 1) kh[2] = 1;
    json phi{{"modes", json::array({{{"amp", 0.1}, {"trig", "cos"}, {"k", kx}}})}};
    json h{{"modes", json::array({{{"amp", 0.2}, {"trig", "sin"}, {"k", kh}}})}};
    json p{{"dimension", n},
           {"resolution", get<int>(j, "resolution", 16)},
           {"operator", {{"family", "log_rho_k"}, {"k", n - 1}}},
           {"metric", {{"kind", "conformal"}, {"phi", j.value("phi", phi)}}},
           {"chi", {{"kind", "gauduchon"}, {"omega0", j.value("omega0", json{{"kind", "flat"}})}, {"c", get<double>(j, "c", 1.0)}}},
           {"psi", {{"kind", "expression"}, {"expr", j.value("h", h)}}},
           {"normalization", j.value("normalization", std::string("sup_zero"))}};
    if (j.contains("tolerances")) p["tolerances"] = j.at("tolerances");
    return build_setup(p);
}

}  // namespace hlab::cli
