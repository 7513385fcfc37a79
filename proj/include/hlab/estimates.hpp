#pragma once

// Checks of the structural hypotheses and of the second-order bounds on solved
// instances. Nothing here asserts a universal constant; the reports carry the
// observed margins and ratios.

#include "hlab/conegeo.hpp"
#include "hlab/solver.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace hlab {

// ---------------------------------------------------------------- second order

struct EstimateRow {
    double max_dd_u = 0.0;
    double max_grad_u = 0.0;
    double osc_u = 0.0;
    double ratio_HMW = 0.0;  // max_dd_u / (1 + max_grad_u²)
};

struct EstimateReport {
    std::vector<EstimateRow> rows;
    double max_dd_u = 0.0;
    double max_grad_u = 0.0;
    double osc_u = 0.0;
    double ratio_HMW = 0.0;      // max over the family
    double ratio_growth = 0.0;   // max ratio / ratio of the first solution
    double C1_fit = 0.0;         // log max_dd_u ≈ log C1 + C2·osc u
    double C2_fit = 0.0;
    int fit_points = 0;
};

EstimateRow estimate_row(double max_dd_u, double max_grad_u, double osc_u);
/// Family report; the first solution is the reference for ratio_growth. Throws EmptyFamily.
EstimateReport second_order_report(std::span<const SolutionReport> solutions);
EstimateReport second_order_report(std::span<const EstimateRow> rows);

// ---------------------------------------------------------------- CNS inequality

struct CnsSample {
    double left = 0.0;   // −F^{ij̄,kl̄} B_{ij̄} B̄_{kl̄}
    double right = 0.0;  // Σ_{i≠j} (f_i − f_j)/(λ_j − λ_i) |B_{ij̄}|²
    double scale = 0.0;
    double margin() const { return left - right; }
};

/// Second directional difference of F(X) = f(λ(X)) at diag(λ) along B. Throws
/// DegenerateSpectrum when two entries of λ are within 1e-8.
CnsSample cns_sample(const OperatorSpec& op, std::span<const double> lambda, const MatC& B);

struct CnsTrial {
    std::vector<double> lambda;
    double left = 0.0, right = 0.0, margin = 0.0, scale = 0.0;
};

struct CnsReport {
    int trials = 0;
    int evaluated = 0;
    int skipped_degenerate = 0;
    int violations = 0;              // margin < −tolerance·scale
    double min_margin = 0.0;
    double min_relative_margin = 0.0;  // margin / scale
    double tolerance = 1e-7;
    std::vector<CnsTrial> rows;      // kept when requested
};

CnsReport cns_inequality_check(const OperatorSpec& op, int trials, std::uint64_t seed, bool keep_rows = false,
                               double tolerance = 1e-7);

// ---------------------------------------------------------------- (A3)

/// χ_{ij̄} at grid point p as a function of ζ = ∂u.
using ChiFunction = std::function<MatC(std::size_t p, std::span<const cplx> zeta)>;

/// Pointwise χ of a problem, evaluated directly from its specification.
ChiFunction chi_function(const Problem& problem);

struct A3Verdict {
    bool holds = false;
    double c0 = 0.0;         // −max form when it holds, 0 otherwise
    double max_form = 0.0;   // max of Σ χ_{ij̄,ζ_k ζ̄_l} ξ_i ξ̄_j η_k η̄_l over samples
    std::size_t witness_point = 0;
    std::vector<cplx> witness_zeta, witness_xi, witness_eta;
    int samples = 0;
};

/// Samples grid points, ζ in a box and g-orthonormal pairs (ξ, η) with g(ξ, η̄) = 0.
A3Verdict a3_check(const ChiFunction& chi, const MetricField& metric, int samples, std::uint64_t seed,
                   double zeta_box = 1.0, double tolerance = 1e-4);

// ---------------------------------------------------------------- (A5)

struct A5Report {
    int samples = 0;
    int alpha_max = 0;            // α ranges over 1..n − r₀
    double max_ratio = 0.0;       // max over points and α of left/(λ₁ f_α)
    double max_left = 0.0;
    double identity_max_diff = 0.0;  // |direct − reduced| / (1 + |direct|), maximised over points
    double max_dropped_term = 0.0;   // |χ̃_{11̄1̄,ζ₁}| / η₁ in the eigenframe
    double tilde_zeta_j = 0.0;       // max |χ̃_{ij̄,ζ_j}| over i, j
    double tilde_bar_zeta_i = 0.0;   // max |χ̃_{iīī,ζ_i}| over i
};

/// Requires op = LogRhoK(n − 1) and a Gauduchon χ; u is the state (usually a solution).
A5Report a5_check(const Problem& problem, const RField& u, int samples, std::uint64_t seed);

/// Analytic rank where the family is recognised: k for LogRhoK(k), n − k + 1 for SigmaKRoot(k).
std::optional<int> analytic_rank(const OperatorSpec& op);

// ---------------------------------------------------------------- subsolutions

struct SubsolutionOptions {
    int max_levels = 8;           // distinct ψ values are bucketed into at most this many levels
    std::vector<double> radii;    // shells for C^+; empty → geometric_ladder(10, 1e3, 6)
    int directions = 0;           // 0 → sample_shells default
};

struct SubsolutionCounts {
    int in = 0, out = 0, inconclusive = 0;
};

struct SubsolutionReport {
    std::vector<CplusVerdict::Kind> cplus;   // per grid point
    std::vector<CtildeVerdict::Kind> ctilde;
    SubsolutionCounts cplus_counts, ctilde_counts;  // C̃ "equals_rn" counted as in
    std::vector<double> levels;                      // σ used per bucket
    std::size_t first_out = 0;                       // grid point of the first out verdict
    bool any_out() const { return cplus_counts.out > 0 || ctilde_counts.out > 0; }
};

/// μ = λ(𝔤[ū]) per point against C^+_{ψ(z)} and C̃^+_{ψ(z)}. Each bucket of ψ values
/// uses its largest σ.
SubsolutionReport subsolution_check(const Problem& problem, const RField& ubar, const SubsolutionOptions& opts = {});

}  // namespace hlab
