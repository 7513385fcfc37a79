// Python bindings. Results come back as dicts of plain values and numpy arrays.

#include "config.hpp"

#include "hlab/conegeo.hpp"
#include "hlab/errors.hpp"
#include "hlab/estimates.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <numeric>

namespace py = pybind11;
using namespace hlab;

namespace {

using Vec = std::vector<double>;

const char* family_name(Family f) {
    switch (f) {
        case Family::SigmaKRoot: return "sigma_k_root";
        case Family::SigmaQuotient: return "sigma_quotient";
        case Family::SigmaKOverKm1: return "sigma_k_over_km1";
        case Family::LogRhoK: return "log_rho_k";
        case Family::SumArctan: return "sum_arctan";
    }
    return "";
}

cli::json to_json(const py::object& obj) {
    if (obj.is_none()) return cli::json::object();
    const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
    return cli::json::parse(text);
}

py::object to_py(const cli::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::array_t<double> to_numpy(const RField& f) { return py::array_t<double>(static_cast<py::ssize_t>(f.size()), f.data()); }

py::dict solution_dict(const SolutionReport& r) {
    py::dict d;
    d["u"] = to_numpy(r.u);
    d["b"] = r.b;
    d["iterations"] = r.iterations;
    d["continuity_steps"] = r.continuity_steps;
    d["residual_inf"] = r.residual_inf;
    d["residual_l2"] = r.residual_l2;
    d["admissibility_margin"] = r.admissibility_margin;
    d["lambda_min"] = to_numpy(r.lambda_min);
    d["lambda_max"] = to_numpy(r.lambda_max);
    d["max_dd_u"] = r.max_dd_u;
    d["max_grad_u"] = r.max_grad_u;
    d["osc_u"] = r.osc_u;
    return d;
}

py::dict counts_dict(const SubsolutionReport& r) {
    py::dict d;
    d["cplus_in"] = r.cplus_counts.in;
    d["cplus_out"] = r.cplus_counts.out;
    d["cplus_inconclusive"] = r.cplus_counts.inconclusive;
    d["ctilde_in"] = r.ctilde_counts.in;
    d["ctilde_out"] = r.ctilde_counts.out;
    d["any_out"] = r.any_out();
    return d;
}

}  // namespace

PYBIND11_MODULE(hlab, m) {
    m.doc() = "Fully nonlinear Hessian-type operators, their level-set cones and a spectral solver on complex tori";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

    py::class_<OperatorSpec>(m, "Operator")
        .def_static("sigma_k_root", &OperatorSpec::sigma_k_root, py::arg("n"), py::arg("k"))
        .def_static("sigma_quotient", &OperatorSpec::sigma_quotient, py::arg("n"), py::arg("k"), py::arg("l"))
        .def_static("sigma_k_over_km1", &OperatorSpec::sigma_k_over_km1, py::arg("n"), py::arg("k"))
        .def_static("log_rho_k", &OperatorSpec::log_rho_k, py::arg("n"), py::arg("k"))
        .def_static("sum_arctan", [](int n) { return OperatorSpec::sum_arctan(n); }, py::arg("n"))
        .def_property_readonly("family", [](const OperatorSpec& op) { return family_name(op.family); })
        .def_readonly("n", &OperatorSpec::n)
        .def_readonly("k", &OperatorSpec::k)
        .def_readonly("l", &OperatorSpec::l)
        .def_property_readonly("domain", [](const OperatorSpec& op) { return op.domain.name(); })
        .def_property_readonly("name", &OperatorSpec::name)
        .def("__repr__", [](const OperatorSpec& op) { return "<Operator " + op.name() + ">"; });

    m.def("value", [](const OperatorSpec& op, const Vec& lambda) { return try_value(op, lambda); }, py::arg("op"), py::arg("lam"),
          "f(λ), or None outside the domain");
    m.def(
        "jet",
        [](const OperatorSpec& op, const Vec& lambda) {
            const auto j = eval_jet(op, std::span<const double>(lambda));
            return py::make_tuple(j.value, j.grad, j.hess);
        },
        py::arg("op"), py::arg("lam"), "(f, ∇f, ∇²f) in the order of the given λ");
    m.def("sigma_all", [](const Vec& lambda) { return sigma_all(std::span<const double>(lambda)); }, py::arg("lam"));
    m.def("rho_k", [](const Vec& lambda, int k) { return rho_k(std::span<const double>(lambda), k); }, py::arg("lam"), py::arg("k"));
    m.def("sup_boundary", &sup_boundary, py::arg("op"));
    m.def("sup_interior", &sup_interior, py::arg("op"));
    m.def("analytic_rank", &analytic_rank, py::arg("op"));

    py::class_<LevelSetHandle>(m, "LevelSet")
        .def(py::init([](const OperatorSpec& op, double sigma) { return LevelSetHandle::create(op, sigma); }), py::arg("op"),
             py::arg("sigma"))
        .def_readonly("op", &LevelSetHandle::op)
        .def_readonly("sigma", &LevelSetHandle::sigma);

    m.def("geometric_ladder", &geometric_ladder, py::arg("r0"), py::arg("r1"), py::arg("count"));
    m.def(
        "estimate_rank",
        [](const LevelSetHandle& ls, std::uint64_t seed, int escape_directions) {
            RankOptions ro;
            ro.seed = seed;
            ro.escape_directions = escape_directions;
            const auto r = estimate_rank(ls, ro);
            py::list planes;
            for (const auto& p : r.planes) planes.append(py::make_tuple(Eigen::VectorXd(p.normal), p.offset));
            py::dict d;
            d["rank"] = r.rank;
            d["samples"] = r.samples;
            d["radius_max"] = r.radius_max;
            d["planes"] = planes;
            return d;
        },
        py::arg("ls"), py::arg("seed") = 0x5eed, py::arg("escape_directions") = 0);
    m.def(
        "membership_cplus",
        [](const LevelSetHandle& ls, const Vec& mu, std::optional<Vec> radii) {
            const Vec r = radii ? *radii : geometric_ladder(10.0, 1e3, 4);
            const auto v = membership_cplus(ls, mu, r);
            py::dict d;
            d["verdict"] = to_string(v.kind);
            d["epsilon"] = v.epsilon;
            d["radius"] = v.radius;
            d["witness"] = v.witness;
            return d;
        },
        py::arg("ls"), py::arg("mu"), py::arg("radii") = py::none());
    m.def(
        "membership_ctilde",
        [](const LevelSetHandle& ls, const Vec& mu) {
            const auto v = membership_ctilde(ls, mu);
            py::dict d;
            d["verdict"] = to_string(v.kind);
            d["planes_checked"] = v.planes_checked;
            d["min_slack"] = v.min_slack;
            return d;
        },
        py::arg("ls"), py::arg("mu"));
    m.def(
        "dichotomy_witness",
        [](const LevelSetHandle& ls, const Vec& mu, std::optional<Vec> shells) {
            const Vec s = shells ? *shells : geometric_ladder(10.0, 1e3, 4);
            const auto w = dichotomy_witness(ls, mu, s);
            py::dict d;
            d["delta"] = w.delta;
            d["epsilon"] = w.epsilon;
            d["violations"] = w.violations;
            d["samples"] = w.samples_checked;
            d["branch_one"] = w.branch_one;
            d["branch_two"] = w.branch_two;
            return d;
        },
        py::arg("ls"), py::arg("mu"), py::arg("shells") = py::none());
    m.def(
        "h_profile",
        [](const LevelSetHandle& ls, const Vec& mu, const Vec& radii) {
            py::list rows;
            for (const auto& r : h_mu_profile(ls, mu, radii)) rows.append(py::make_tuple(r.r, r.h, r.samples, r.samples_in_branch));
            return rows;
        },
        py::arg("ls"), py::arg("mu"), py::arg("radii"), "rows (r, h, samples, samples_in_branch)");
    m.def(
        "cns_check",
        [](const OperatorSpec& op, int trials, std::uint64_t seed) {
            const auto r = cns_inequality_check(op, trials, seed);
            py::dict d;
            d["trials"] = r.trials;
            d["evaluated"] = r.evaluated;
            d["violations"] = r.violations;
            d["min_margin"] = r.min_margin;
            d["min_relative_margin"] = r.min_relative_margin;
            return d;
        },
        py::arg("op"), py::arg("trials") = 1000, py::arg("seed") = 0x5eed);

    m.def(
        "solve",
        [](const py::object& config) {
            const cli::Setup s = cli::build_setup(to_json(config));
            const auto r = solve(*s.problem, s.solve);
            py::dict d = solution_dict(r);
            if (s.u_star) {
                RField us = *s.u_star;
                const double shift = s.problem->normalization() == Normalization::MeanZero
                                         ? std::accumulate(us.begin(), us.end(), 0.0) / static_cast<double>(us.size())
                                         : *std::max_element(us.begin(), us.end());
                double e = 0.0;
                for (std::size_t p = 0; p < us.size(); ++p) e = std::max(e, std::abs(r.u[p] - (us[p] - shift)));
                d["error_inf"] = e;
            }
            return d;
        },
        py::arg("config"), "Solve the problem described by a config dict (same keys as the JSON files)");
    m.def(
        "gauduchon",
        [](const py::object& config, int a5_samples, std::uint64_t seed) {
            const cli::Setup s = cli::build_gauduchon(to_json(config));
            const auto r = solve(*s.problem, s.solve);
            py::dict d = solution_dict(r);
            const auto a5 = a5_check(*s.problem, r.u, a5_samples, seed);
            py::dict a;
            a["identity_max_diff"] = a5.identity_max_diff;
            a["max_dropped_term"] = a5.max_dropped_term;
            a["tilde_zeta_j"] = a5.tilde_zeta_j;
            a["tilde_bar_zeta_i"] = a5.tilde_bar_zeta_i;
            a["max_ratio"] = a5.max_ratio;
            d["a5"] = a;
            d["subsolution"] = counts_dict(subsolution_check(*s.problem, RField(s.grid->size(), 0.0)));
            return d;
        },
        py::arg("config") = py::none(), py::arg("a5_samples") = 0, py::arg("seed") = 0x5eed,
        "The Gauduchon instance with its (A5) and ū = 0 subsolution checks");
    m.def("describe", [](const OperatorSpec& op) { return to_py(cli::describe(op)); }, py::arg("op"));
}
