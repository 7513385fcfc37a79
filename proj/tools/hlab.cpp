// hlab: experiment runner. Every subcommand prints a JSON summary, writes it to
// <out>/summary.json together with CSV tables, and exits 0 on success, 2 on a
// negative verdict and 1 on error.

#include "config.hpp"

#include "hlab/conegeo.hpp"
#include "hlab/errors.hpp"
#include "hlab/estimates.hpp"

#include "CLI11.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>

namespace fs = std::filesystem;
using namespace hlab;
using namespace hlab::cli;

namespace {

struct Globals {
    std::string config;
    std::uint64_t seed = 0x5eed;
    int threads = 1;
    std::string out = "hlab_out";
    bool field = false;  // write field.csv even on large grids
};

// Flags that override keys of the config document.
struct Overrides {
    std::string op;
    int n = 0, k = 0, l = -1, m = 0;
    std::optional<double> sigma;
    std::vector<double> mu;
};

constexpr int kOk = 0, kNegative = 2;

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ConfigInvalid, path + ": " + e.what());
    }
}

void apply_overrides(json& cfg, const Overrides& o, bool level) {
    if (o.n > 0 && (!level || cfg.contains("dimension"))) cfg["dimension"] = o.n;
    if (o.m > 0) cfg["resolution"] = o.m;
    if (!level) return;
    if (!o.op.empty()) cfg["operator"]["family"] = o.op;
    if (o.n > 0) cfg["operator"]["n"] = o.n;
    if (o.k > 0) cfg["operator"]["k"] = o.k;
    if (o.l >= 0) cfg["operator"]["l"] = o.l;
    if (o.sigma) cfg["sigma"] = *o.sigma;
    if (!o.mu.empty()) cfg["mu"] = o.mu;
}

json number(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return nullptr;
    return x > 0 ? "inf" : "-inf";
}

std::ofstream open_out(const Globals& g, const std::string& name) {
    fs::create_directories(g.out);
    std::ofstream f(fs::path(g.out) / name);
    if (!f) throw Error(ErrorCode::InvalidArgument, "cannot write " + (fs::path(g.out) / name).string());
    f << std::setprecision(17);
    return f;
}

void emit(const Globals& g, const json& summary) {
    const std::string text = summary.dump(2);
    open_out(g, "summary.json") << text << '\n';
    std::cout << text << '\n';
}

// ---------------------------------------------------------------- level-set commands

OperatorSpec op_from(const json& cfg) {
    require_keys(cfg, {"operator", "sigma", "mu", "radii", "directions", "escape_directions", "approach", "structure_samples", "cns_trials"},
                 "level-set config");
    if (!cfg.contains("operator")) throw Error(ErrorCode::ConfigInvalid, "an operator is required (--op or config 'operator')");
    const int n = cfg.at("operator").value("n", cfg.value("dimension", 2));
    return parse_operator(cfg.at("operator"), n);
}

LevelSetHandle level_from(const json& cfg, const OperatorSpec& op) {
    const double sigma = cfg.contains("sigma") ? cfg.at("sigma").get<double>() : default_sigma(op);
    return LevelSetHandle::create(op, sigma);
}

std::vector<double> radii_from(const json& cfg, const char* key, double r0, double r1, int count) {
    return cfg.contains(key) ? parse_doubles(cfg.at(key), key) : geometric_ladder(r0, r1, count);
}

std::vector<double> mu_from(const json& cfg, int n) {
    if (!cfg.contains("mu")) throw Error(ErrorCode::ConfigInvalid, "μ is required (--mu or config 'mu')");
    auto mu = parse_doubles(cfg.at("mu"), "mu");
    if (static_cast<int>(mu.size()) != n) throw Error(ErrorCode::ConfigInvalid, "μ needs n entries");
    return mu;
}

// The summary keeps the first few planes; planes.csv has all of them.
json plane_json(const Globals& g, const RankEstimate& r) {
    auto f = open_out(g, "planes.csv");
    const int n = r.planes.empty() ? 0 : static_cast<int>(r.planes.front().normal.size());
    for (int i = 0; i < n; ++i) f << "nu" << i + 1 << ',';
    f << "offset\n";
    json planes = json::array();
    for (const auto& p : r.planes) {
        for (int i = 0; i < n; ++i) f << p.normal[i] << ',';
        f << p.offset << '\n';
        if (planes.size() < 4)
            planes.push_back({{"normal", std::vector<double>(p.normal.data(), p.normal.data() + p.normal.size())}, {"offset", p.offset}});
    }
    return planes;
}

int cmd_rank(const Globals& g, json cfg) {
    const OperatorSpec op = op_from(cfg);
    const auto ls = level_from(cfg, op);
    RankOptions ro;
    ro.seed = g.seed;
    if (cfg.contains("radii")) ro.radii = parse_doubles(cfg.at("radii"), "radii");
    ro.escape_directions = cfg.value("escape_directions", 0);
    const auto r = estimate_rank(ls, ro);
    const auto analytic = analytic_rank(op);
    json s{{"command", "rank"}, {"operator", describe(op)}, {"sigma", ls.sigma}, {"rank", r.rank},
           {"analytic_rank", analytic ? json(*analytic) : json(nullptr)}, {"samples", r.samples},
           {"radius_max", r.radius_max}, {"plane_count", r.planes.size()}, {"planes", plane_json(g, r)}};
    const bool match = !analytic || *analytic == r.rank;
    s["match"] = match;
    emit(g, s);
    return match ? kOk : kNegative;
}

int cmd_cones(const Globals& g, json cfg) {
    const OperatorSpec op = op_from(cfg);
    const auto ls = level_from(cfg, op);
    const auto radii = radii_from(cfg, "radii", 10.0, 1e3, 4);
    const int dirs = cfg.value("directions", 0);
    const auto samples = sample_shells(ls, radii, dirs, g.seed);
    json s{{"command", "cones"}, {"operator", describe(op)}, {"sigma", ls.sigma}, {"radii", radii}, {"samples", samples.size()}};
    int status = kOk;
    std::optional<std::vector<double>> mu;
    if (cfg.contains("mu")) mu = mu_from(cfg, op.n);
    {
        auto f = open_out(g, "shells.csv");
        if (mu) write_shell_csv(f, samples, std::span<const double>(*mu));
        else write_shell_csv(f, samples);
    }
    if (mu) {
        const auto cp = CplusProbe(samples).classify(*mu);
        RankOptions ro;
        ro.seed = g.seed;
        const auto ct = membership_ctilde(estimate_rank(ls, ro), *mu);
        s["mu"] = *mu;
        s["cplus"] = {{"verdict", to_string(cp.kind)}, {"epsilon", cp.epsilon}, {"radius", cp.radius}, {"witness", cp.witness},
                      {"witness_margin", cp.witness_margin}};
        s["ctilde"] = {{"verdict", to_string(ct.kind)}, {"planes_checked", ct.planes_checked}, {"min_slack", number(ct.min_slack)}};
        if (cp.kind == CplusVerdict::Kind::Out || ct.kind == CtildeVerdict::Kind::Out) status = kNegative;
    }
    s["status"] = status;
    emit(g, s);
    return status;
}

int cmd_dichotomy(const Globals& g, json cfg) {
    const OperatorSpec op = op_from(cfg);
    const auto ls = level_from(cfg, op);
    const auto shells = radii_from(cfg, "radii", 10.0, 1e3, 4);
    const int dirs = cfg.value("directions", 0);
    RankOptions ro;
    ro.seed = g.seed;
    const auto rank = estimate_rank(ls, ro);

    std::vector<std::vector<double>> mus{mu_from(cfg, op.n)};
    if (cfg.contains("approach"))
        for (const auto& m : cfg.at("approach")) {
            auto v = parse_doubles(m, "approach");
            if (static_cast<int>(v.size()) != op.n) throw Error(ErrorCode::ConfigInvalid, "approach points need n entries");
            mus.push_back(std::move(v));
        }
    json rows = json::array();
    int status = kOk;
    std::vector<double> eps;
    auto csv = open_out(g, "dichotomy.csv");
    csv << "index,mu,delta,epsilon,violations,samples,branch_one,branch_two\n";
    for (std::size_t i = 0; i < mus.size(); ++i) {
        json row{{"mu", mus[i]}};
        try {
            const auto w = dichotomy_witness(ls, mus[i], shells, dirs, &rank);
            row.update({{"delta", w.delta}, {"epsilon", w.epsilon}, {"violations", w.violations}, {"samples", w.samples_checked},
                        {"branch_one", w.branch_one}, {"branch_two", w.branch_two}, {"radius_max", w.radius_max}});
            csv << i << ",\"" << json(mus[i]).dump() << "\"," << w.delta << ',' << w.epsilon << ',' << w.violations << ','
                << w.samples_checked << ',' << w.branch_one << ',' << w.branch_two << '\n';
            if (w.violations > 0) status = kNegative;
            eps.push_back(w.epsilon);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::HypothesisFailed) throw;
            row["error"] = e.what();
            status = kNegative;
        }
        rows.push_back(row);
    }
    bool decreasing = eps.size() == mus.size();
    for (std::size_t i = 1; decreasing && i < eps.size(); ++i) decreasing = eps[i] < eps[i - 1];
    json s{{"command", "dichotomy"}, {"operator", describe(op)}, {"sigma", ls.sigma}, {"shells", shells}, {"rank", rank.rank},
           {"witnesses", rows}, {"epsilon_decreasing", decreasing}, {"status", status}};
    emit(g, s);
    return status;
}

int cmd_hprofile(const Globals& g, json cfg) {
    const OperatorSpec op = op_from(cfg);
    const auto ls = level_from(cfg, op);
    const auto mu = mu_from(cfg, op.n);
    const auto radii = radii_from(cfg, "radii", 10.0, 1e4, 7);
    RankOptions ro;
    ro.seed = g.seed;
    const auto rank = estimate_rank(ls, ro);
    const auto rows = h_mu_profile(ls, mu, radii, cfg.value("directions", 0), &rank);
    {
        auto f = open_out(g, "profile.csv");
        write_profile_csv(f, rows);
    }
    json table = json::array();
    for (const auto& r : rows)
        table.push_back({{"r", r.r}, {"h", number(r.h)}, {"samples", r.samples}, {"samples_in_branch", r.samples_in_branch}});
    emit(g, {{"command", "hprofile"}, {"operator", describe(op)}, {"sigma", ls.sigma}, {"mu", mu}, {"profile", table}});
    return kOk;
}

// ---------------------------------------------------------------- problem commands

json solution_json(const SolutionReport& r) {
    const auto lmin = *std::min_element(r.lambda_min.begin(), r.lambda_min.end());
    const auto lmax = *std::max_element(r.lambda_max.begin(), r.lambda_max.end());
    return {{"b", r.b},
            {"iterations", r.iterations},
            {"continuity_steps", r.continuity_steps},
            {"t_history", r.t_history},
            {"residual_inf", r.residual_inf},
            {"residual_l2", r.residual_l2},
            {"admissibility_margin", r.admissibility_margin},
            {"lambda_min", lmin},
            {"lambda_max", lmax},
            {"max_dd_u", r.max_dd_u},
            {"max_grad_u", r.max_grad_u},
            {"osc_u", r.osc_u}};
}

void write_history(const Globals& g, const SolutionReport& r, const std::string& name) {
    auto f = open_out(g, name);
    f << "t,residual_inf,residual_l2,step,krylov_iterations\n";
    for (const auto& h : r.history) f << h.t << ',' << h.residual_inf << ',' << h.residual_l2 << ',' << h.step << ',' << h.krylov_iterations << '\n';
}

void write_field(const Globals& g, const SpectralGrid& grid, const SolutionReport& r, const std::string& name) {
    if (!g.field && grid.size() > (1u << 16)) return;
    auto f = open_out(g, name);
    f << "p";
    for (int a = 0; a < grid.n(); ++a) f << ",x" << a + 1 << ",y" << a + 1;
    f << ",u,lambda_min,lambda_max\n";
    for (std::size_t p = 0; p < grid.size(); ++p) {
        f << p;
        for (int a = 0; a < grid.axes(); ++a) f << ',' << grid.coord(p, a);
        f << ',' << r.u[p] << ',' << r.lambda_min[p] << ',' << r.lambda_max[p] << '\n';
    }
}

double max_diff(const RField& a, const RField& b) {
    double e = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) e = std::max(e, std::abs(a[p] - b[p]));
    return e;
}

// u* shifted by the same normalization the solver applies
RField normalized(RField u, Normalization norm) {
    const double shift = norm == Normalization::MeanZero ? std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(u.size())
                                                          : *std::max_element(u.begin(), u.end());
    for (auto& x : u) x -= shift;
    return u;
}

int cmd_solve(const Globals& g, json cfg) {
    Setup s = build_setup(cfg);
    const Problem& pr = *s.problem;
    json out{{"command", "solve"}, {"operator", describe(pr.op())}, {"chi", pr.chi().name()}, {"dimension", pr.n()},
             {"resolution", s.grid->m()}, {"normalization", to_string(pr.normalization())}};

    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = solve(pr, s.solve);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "solve: " << rep.iterations << " Newton steps, " << seconds << " s\n";
    out["solution"] = solution_json(rep);
    if (s.u_star) out["solution"]["error_inf"] = max_diff(rep.u, normalized(*s.u_star, pr.normalization()));
    write_history(g, rep, "history.csv");
    write_field(g, *s.grid, rep, "field.csv");

    if (cfg.contains("sweep")) {
        if (!s.u_star_expr) throw Error(ErrorCode::ConfigInvalid, "a sweep needs a manufactured psi");
        const auto amps = parse_doubles(cfg.at("sweep").at("amplitudes"), "sweep.amplitudes");
        std::vector<SolutionReport> family;
        json rows = json::array();
        for (double a : amps) {
            Expr e = *s.u_star_expr;
            for (auto& m : e.modes) m.amp *= a;
            const RField us = s.grid->sample_real(e);
            const auto r = solve(pr.with_psi(manufacture(pr, us)), s.solve);
            rows.push_back({{"amplitude", a}, {"error_inf", max_diff(r.u, normalized(us, pr.normalization()))},
                            {"residual_inf", r.residual_inf}, {"b", r.b}});
            family.push_back(r);
        }
        const auto est = second_order_report(std::span<const SolutionReport>(family));
        auto f = open_out(g, "estimates.csv");
        f << "amplitude,max_dd_u,max_grad_u,osc_u,ratio_HMW\n";
        for (std::size_t i = 0; i < amps.size(); ++i)
            f << amps[i] << ',' << est.rows[i].max_dd_u << ',' << est.rows[i].max_grad_u << ',' << est.rows[i].osc_u << ','
              << est.rows[i].ratio_HMW << '\n';
        out["sweep"] = {{"solutions", rows},
                        {"ratio_HMW_max", est.ratio_HMW},
                        {"ratio_growth", number(est.ratio_growth)},
                        {"C1_fit", est.C1_fit},
                        {"C2_fit", est.C2_fit},
                        {"fit_points", est.fit_points}};
    }
    emit(g, out);
    return kOk;
}

json subsolution_json(const SubsolutionReport& r) {
    return {{"cplus", {{"in", r.cplus_counts.in}, {"out", r.cplus_counts.out}, {"inconclusive", r.cplus_counts.inconclusive}}},
            {"ctilde", {{"in", r.ctilde_counts.in}, {"out", r.ctilde_counts.out}}},
            {"levels", r.levels},
            {"any_out", r.any_out()},
            {"first_out", r.any_out() ? json(r.first_out) : json(nullptr)}};
}

void write_verdicts(const Globals& g, const SpectralGrid& grid, const SubsolutionReport& r) {
    auto f = open_out(g, "subsolution.csv");
    f << "p";
    for (int a = 0; a < grid.n(); ++a) f << ",x" << a + 1 << ",y" << a + 1;
    f << ",cplus,ctilde\n";
    for (std::size_t p = 0; p < grid.size(); ++p) {
        f << p;
        for (int a = 0; a < grid.axes(); ++a) f << ',' << grid.coord(p, a);
        f << ',' << to_string(r.cplus[p]) << ',' << to_string(r.ctilde[p]) << '\n';
    }
}

int cmd_verify(const Globals& g, json cfg) {
    const bool has_problem = cfg.contains("dimension") || cfg.contains("psi") || cfg.contains("chi") || cfg.contains("ubar");
    std::optional<Setup> setup;
    OperatorSpec op;
    if (has_problem) {
        setup.emplace(build_setup(cfg));
        op = setup->problem->op();
    } else {
        require_keys(cfg, {"operator", "structure_samples", "cns_trials"}, "verify");
        op = op_from(cfg);
    }
    int status = kOk;
    json out{{"command", "verify"}, {"operator", describe(op)}};

    const auto st = check_structure(op, cfg.value("structure_samples", 1000), g.seed);
    const bool structure_ok = st.min_grad_entry > 0.0 && st.midpoint_violations == 0;
    out["structure"] = {{"samples", st.samples}, {"min_grad_entry", st.min_grad_entry}, {"max_hess_eig", st.max_hess_eig},
                        {"max_hess_eig_relative", st.max_hess_eig_relative}, {"midpoint_pairs", st.midpoint_pairs},
                        {"midpoint_violations", st.midpoint_violations}, {"sup_boundary", number(st.sup_boundary)},
                        {"sup_interior_estimate", number(st.sup_interior_estimate)}, {"ok", structure_ok}};
    if (!structure_ok) status = kNegative;

    const auto cns = cns_inequality_check(op, cfg.value("cns_trials", 10000), g.seed, true);
    {
        auto f = open_out(g, "cns.csv");
        f << "trial";
        for (int i = 0; i < op.n; ++i) f << ",lambda" << i + 1;
        f << ",left,right,margin,scale\n";
        for (std::size_t t = 0; t < cns.rows.size(); ++t) {
            f << t;
            for (double l : cns.rows[t].lambda) f << ',' << l;
            f << ',' << cns.rows[t].left << ',' << cns.rows[t].right << ',' << cns.rows[t].margin << ',' << cns.rows[t].scale << '\n';
        }
    }
    out["cns"] = {{"trials", cns.trials}, {"evaluated", cns.evaluated}, {"skipped_degenerate", cns.skipped_degenerate},
                  {"violations", cns.violations}, {"min_margin", cns.min_margin}, {"min_relative_margin", cns.min_relative_margin}};
    if (cns.violations > 0) status = kNegative;

    if (setup) {
        const Problem& pr = *setup->problem;
        const auto a3 = a3_check(chi_function(pr), *setup->metric, cfg.value("a3_samples", 200), g.seed);
        out["a3"] = {{"holds", a3.holds}, {"c0", a3.c0}, {"max_form", a3.max_form}, {"samples", a3.samples}};
        if (cfg.contains("ubar")) {
            const RField ubar = setup->grid->sample_real(parse_expr(cfg.at("ubar"), pr.n()));
            const auto sub = subsolution_check(pr, ubar);
            write_verdicts(g, *setup->grid, sub);
            out["subsolution"] = subsolution_json(sub);
            if (sub.any_out()) status = kNegative;
        }
    }
    out["status"] = status;
    emit(g, out);
    return status;
}

int cmd_gauduchon(const Globals& g, json cfg) {
    Setup s = build_gauduchon(cfg);
    const Problem& pr = *s.problem;
    json out{{"command", "gauduchon"}, {"operator", describe(pr.op())}, {"dimension", pr.n()}, {"resolution", s.grid->m()},
             {"c", pr.chi().c}, {"gradient_dependent", pr.gradient_dependent()}};
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = solve(pr, s.solve);
    std::cerr << "solve: " << rep.iterations << " Newton steps, "
              << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
    out["solution"] = solution_json(rep);
    write_history(g, rep, "history.csv");
    write_field(g, *s.grid, rep, "field.csv");

    const auto a5 = a5_check(pr, rep.u, cfg.value("a5_samples", 0), g.seed);
    out["a5"] = {{"samples", a5.samples}, {"alpha_max", a5.alpha_max}, {"max_ratio", a5.max_ratio}, {"max_left", a5.max_left},
                 {"identity_max_diff", a5.identity_max_diff}, {"max_dropped_term", a5.max_dropped_term},
                 {"tilde_zeta_j", a5.tilde_zeta_j}, {"tilde_bar_zeta_i", a5.tilde_bar_zeta_i}};

    const auto sub = subsolution_check(pr, RField(s.grid->size(), 0.0));
    write_verdicts(g, *s.grid, sub);
    out["subsolution"] = subsolution_json(sub);
    const int status = sub.any_out() ? kNegative : kOk;
    out["status"] = status;
    emit(g, out);
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hlab: fully nonlinear Hessian-type equations on complex tori"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "JSON config file");
    app.add_option("--seed", g.seed, "seed for every random draw");
    app.add_option("--threads", g.threads, "worker threads (1 gives reproducible output)")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "output directory");
    app.add_flag("--field", g.field, "write field.csv on grids above 65536 points");

    Overrides o;
    const auto level_flags = [&o](CLI::App* c) {
        c->add_option("--op", o.op, "operator family: sigmak, quotient, sigmak_over_km1, logrho, arctan");
        c->add_option("--n", o.n, "dimension");
        c->add_option("--k", o.k, "operator index k");
        c->add_option("--l", o.l, "quotient index l");
        c->add_option("--sigma", o.sigma, "level σ");
        c->add_option("--mu", o.mu, "point μ")->expected(1, 8);
    };
    struct Cmd {
        const char* name;
        const char* help;
        int (*run)(const Globals&, json);
        bool level;
    };
    const Cmd cmds[] = {
        {"cones", "boundary samples of a level set and C⁺/C̃⁺ membership of μ", cmd_cones, true},
        {"rank", "rank of the tangent cone at infinity", cmd_rank, true},
        {"dichotomy", "dichotomy witness for μ, optionally along an approach sequence", cmd_dichotomy, true},
        {"hprofile", "h_μ(r) profile table", cmd_hprofile, true},
        {"solve", "continuity method and Newton solve of a problem config", cmd_solve, false},
        {"verify", "structure, CNS, (A3) and subsolution checks", cmd_verify, true},
        {"gauduchon", "the Gauduchon instance with (A5) and subsolution checks", cmd_gauduchon, false},
    };
    std::vector<std::pair<CLI::App*, const Cmd*>> subs;
    for (const auto& c : cmds) {
        auto* sub = app.add_subcommand(c.name, c.help);
        if (c.level) level_flags(sub);
        else {
            sub->add_option("--n", o.n, "dimension");
            sub->add_option("--m", o.m, "grid points per axis");
        }
        subs.emplace_back(sub, &c);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    omp_set_num_threads(g.threads);

    try {
        json cfg = load_config(g.config);
        for (const auto& [sub, c] : subs) {
            if (!sub->parsed()) continue;
            apply_overrides(cfg, o, c->level);
            return c->run(g, std::move(cfg));
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
