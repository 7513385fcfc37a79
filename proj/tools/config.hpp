#pragma once

// JSON problem descriptions for the command line tool.

#include "hlab/solver.hpp"

#include "json.hpp"

#include <memory>
#include <optional>

namespace hlab::cli {

using nlohmann::json;

OperatorSpec parse_operator(const json& j, int n);
json describe(const OperatorSpec& op);

/// {"constant": c, "modes": [{"amp", "trig": "cos"|"sin", "k": [2n ints]}]}
Expr parse_expr(const json& j, int n);

/// A level inside (sup over ∂Γ, sup over Γ) when none is given.
double default_sigma(const OperatorSpec& op);

std::vector<double> parse_doubles(const json& j, const char* what);

/// Grid, metrics and the problem they define; the grid must outlive the rest.
struct Setup {
    std::unique_ptr<SpectralGrid> grid;
    std::optional<MetricField> metric;
    std::optional<MetricField> omega0;
    std::optional<Problem> problem;
    std::optional<RField> u_star;     // manufactured solution, when ψ was manufactured
    std::optional<Expr> u_star_expr;
    SolveOptions solve;
};

/// Keys: dimension, resolution, operator, chi, metric, psi, normalization, tolerances.
Setup build_setup(const json& j);
/// Problem of the Gauduchon reduction with defaults for every key.
Setup build_gauduchon(const json& j);

/// Throws ConfigInvalid for keys outside the allowed set.
void require_keys(const json& j, std::initializer_list<const char*> allowed, const char* where);

}  // namespace hlab::cli
