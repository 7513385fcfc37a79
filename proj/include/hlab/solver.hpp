#pragma once

// Continuity method with damped Newton for f(λ(χ[u] + √−1∂∂̄u)) = ψ + b on the
// grid torus, λ taken with respect to the background metric. χ may be constant,
// depend on z, or be the gradient-dependent form built from a second metric ω₀.

#include "hlab/hermgeo.hpp"
#include "hlab/symfun.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hlab {

struct ChiSpec {
    enum class Kind { Constant, ZDependent, Gauduchon };
    Kind kind = Kind::Constant;
    MatC constant;                              // Constant
    Form11Field field;                          // ZDependent
    std::shared_ptr<const MetricField> omega0;  // Gauduchon
    double c = 0.0;                             // Gauduchon

    static ChiSpec make_constant(const MatC& x);
    static ChiSpec z_dependent(Form11Field x);
    static ChiSpec gauduchon(const MetricField& omega0, double c);
    std::string name() const;
};

enum class Normalization { MeanZero, SupZero };

std::string to_string(Normalization n);

class Problem {
public:
    /// Validates χ and requires sup_{∂Γ} f < ψ < sup_Γ f at every point.
    static Problem create(const MetricField& metric, const OperatorSpec& op, ChiSpec chi, RField psi,
                          Normalization normalization = Normalization::MeanZero);
    /// Same data with a new right-hand side.
    Problem with_psi(RField psi) const;

    const SpectralGrid& grid() const { return metric_->grid(); }
    const MetricField& metric() const { return *metric_; }
    const OperatorSpec& op() const { return op_; }
    const ChiSpec& chi() const { return chi_; }
    const RField& psi() const { return psi_; }
    Normalization normalization() const { return normalization_; }
    int n() const { return metric_->n(); }

    /// True when χ depends on ∇u (Gauduchon with c ≠ 0 and n ≥ 3; at n = 2 the torsion sums vanish).
    bool gradient_dependent() const { return gradient_dependent_; }
    /// The part of χ that does not involve u.
    const Form11Field& chi_fixed() const { return chi0_; }
    /// Gradient part of χ for the (1,0) derivatives ∂_i v, zero unless gradient_dependent().
    Form11Field chi_gradient(const std::vector<CField>& dv) const;
    /// Torsion of the background metric (Gauduchon problems only).
    const std::vector<CField>& torsion() const { return torsion_; }
    /// L^{-1} where g = LL* per point.
    const std::vector<CField>& whitening() const { return linv_; }
    const RealSpectral& spectral() const { return *spectral_; }

private:
    Problem() = default;
    std::shared_ptr<const MetricField> metric_;
    OperatorSpec op_;
    ChiSpec chi_;
    RField psi_;
    Normalization normalization_ = Normalization::MeanZero;
    Form11Field chi0_;
    std::vector<CField> torsion_, linv_;
    // gradient part of χ as Σ_p A^p_{ij} ∂_p u + B^p_{ij} ∂_p̄ u, stored at (i·n + j)·n + p
    std::vector<CField> grad_a_, grad_b_;
    bool gradient_dependent_ = false;
    std::shared_ptr<RealSpectral> spectral_;
};

// ---------------------------------------------------------------- Gauduchon χ

/// Torsion part Ẽ_{ij̄} in a unitary frame: T(a,b,c) = T_ab^c, dzeta = ∂_a u.
MatC gauduchon_E_frame(int n, std::span<const cplx> T, std::span<const cplx> dzeta);
/// Ẽ in coordinates at one point, through the Cholesky frame of g.
MatC gauduchon_E(const MatC& g, std::span<const cplx> T, std::span<const cplx> du);
/// χ̃₀ = ⋆ω₀^{n−1}/(n−2)! in coordinates: (n−1)·det(ω₀)/det(g)·g ω₀^{-1} g.
MatC gauduchon_chi_tilde0(const MatC& g, const MatC& omega0);
/// χ = (tr_g χ̃/(n−1)) g − χ̃.
MatC chi_from_tilde(const MatC& g, const MatC& chi_tilde);

/// χ for the form-type equation with data ω₀, c and the function u.
Form11Field build_gauduchon_chi(const MetricField& omega0, const MetricField& metric, const RField& u, double c);

// ---------------------------------------------------------------- evaluation

/// Spectral (1,0) derivatives ∂_i u of a real field.
std::vector<CField> holomorphic_gradient(const RealSpectral& rs, const CField& spec);
/// √−1∂∂̄ of a real field, Hermitian by construction.
Form11Field ddbar_real(const RealSpectral& rs, const CField& spec);

/// 𝔤 = χ[u] + √−1∂∂̄u.
Form11Field assemble_g(const Problem& problem, const RField& u);

struct OperatorField {
    RField F;                 // f(λ(𝔤)) per point
    std::vector<CField> Fij;  // F^{ij̄} = ∂F/∂𝔤_{ij̄}
    RField lambda_min, lambda_max;
    double margin = 0.0;      // min cone margin of λ over the grid
    double g_norm = 0.0;      // max |λ|
};

/// Pointwise F and F^{ij̄}; throws NotAdmissible when λ leaves op.domain somewhere.
OperatorField evaluate_operator(const Problem& problem, const Form11Field& gfrak);

/// Single point: F^{ij̄} for 𝔤 and metric g, as a matrix M(i, j) = F^{ij̄}.
MatC operator_derivative(const OperatorSpec& op, const MatC& gfrak, const MatC& g);
/// Single point value f(λ(g^{-1}𝔤)); nullopt outside the domain.
std::optional<double> operator_value(const OperatorSpec& op, const MatC& gfrak, const MatC& g);

/// F^{ij̄}(∂_j̄∂_i δu + χ-gradient terms) at the state u.
RField linearized_apply(const Problem& problem, const RField& u, const RField& du);

/// ψ := F(𝔤[u*]).
RField manufacture(const Problem& problem, const RField& u_star);

// ---------------------------------------------------------------- solve

struct SolveOptions {
    double tolerance = 1e-10;               // ‖r‖_∞ at t = 1
    double intermediate_tolerance = 1e-7;   // ‖r‖_∞ at t < 1
    double initial_step = 1.0;
    double min_step = 1e-6;
    int max_newton = 50;
    int max_halvings = 30;
    int gmres_restart = 50;
    int gmres_max_iterations = 500;
    double gmres_tolerance = 1e-10;
    double admissibility = -1.0;  // δ_adm; negative → 1e−8·(1 + ‖𝔤‖)
    bool verbose = false;
};

struct NewtonRecord {
    double t = 0.0;
    double residual_inf = 0.0;
    double residual_l2 = 0.0;
    double step = 0.0;          // accepted damping factor, 0 for the first record at each t
    int krylov_iterations = 0;
};

struct SolutionReport {
    RField u;
    double b = 0.0;
    int iterations = 0;         // Newton steps in total
    int continuity_steps = 0;
    std::vector<double> t_history;
    std::vector<NewtonRecord> history;
    RField lambda_min, lambda_max;
    double residual_inf = 0.0;
    double residual_l2 = 0.0;
    double admissibility_margin = 0.0;
    double max_dd_u = 0.0;      // largest |eigenvalue| of √−1∂∂̄u with respect to g
    double max_grad_u = 0.0;    // max (g^{ij̄} ∂_i u ∂_j̄ u)^{1/2}
    double osc_u = 0.0;
    double seconds = 0.0;
};

SolutionReport solve(const Problem& problem, const SolveOptions& opts = {});

/// max |eigenvalue of √−1∂∂̄u wrt g|, max |∂u|_g and osc u for a real field.
struct DerivativeSizes {
    double max_dd = 0.0;
    double max_grad = 0.0;
    double osc = 0.0;
};
DerivativeSizes derivative_sizes(const MetricField& metric, const RField& u);

}  // namespace hlab
