#pragma once

// Hermitian metrics on the grid torus: Chern connection, torsion, curvature,
// eigenvalues of (1,1)-forms and the covariant-derivative commutation rules.
//
// Matrix fields hold n² component fields with G(i,j) = g_{ij̄} in row-major
// order. Tensor components are indexed (i,j,k) → (i·n + j)·n + k and
// (i,j,k,l) → ((i·n + j)·n + k)·n + l.

#include "hlab/grid.hpp"

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace hlab {

using MatC = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

inline int idx3(int n, int i, int j, int k) { return (i * n + j) * n + k; }
inline int idx4(int n, int i, int j, int k, int l) { return ((i * n + j) * n + k) * n + l; }

class MetricField {
public:
    /// Validates Hermitian positive definiteness and caches g^{kl̄}.
    static MetricField from_components(const SpectralGrid& grid, std::vector<CField> g);
    static MetricField flat(const SpectralGrid& grid);
    /// g = e^{φ} δ.
    static MetricField conformal(const SpectralGrid& grid, const Expr& phi);

    const SpectralGrid& grid() const { return *grid_; }
    int n() const { return grid_->n(); }
    const CField& g(int i, int j) const { return g_[static_cast<std::size_t>(i * n() + j)]; }
    /// g^{kl̄}, so that Σ_l g^{kl̄} g_{jl̄} = δ_kj.
    const CField& ginv(int k, int l) const { return ginv_[static_cast<std::size_t>(k * n() + l)]; }
    const std::vector<CField>& components() const { return g_; }
    MatC at(std::size_t p) const;
    double min_eigenvalue() const { return min_eig_; }

private:
    const SpectralGrid* grid_ = nullptr;
    std::vector<CField> g_, ginv_;
    double min_eig_ = 0.0;
};

/// Hermitian matrix per grid point, X(i,j) = X_{ij̄}.
struct Form11Field {
    int n = 0;
    std::vector<CField> X;

    const CField& operator()(int i, int j) const { return X[static_cast<std::size_t>(i * n + j)]; }
    CField& operator()(int i, int j) { return X[static_cast<std::size_t>(i * n + j)]; }
    MatC at(std::size_t p) const;
    double hermitian_defect() const;
};

/// X_{ij̄} = ∂_j̄ ∂_i u, Hermitian-symmetrized.
Form11Field ddbar(const SpectralGrid& grid, const CField& u);

/// Γ_ij^k = g^{kl̄} ∂_i g_{jl̄}; n³ fields.
std::vector<CField> christoffel(const MetricField& metric);
/// T_ij^k = Γ_ij^k − Γ_ji^k.
std::vector<CField> torsion(const std::vector<CField>& gamma, int n);

struct CurvatureResult {
    std::vector<CField> R;    // −g_{ml̄} ∂_j̄ Γ_ik^m
    double cross_check = 0.0;  // max |first − second| over components and points
    double norm = 0.0;         // max |R|
};

/// Both expressions; throws CrossCheckFailed when they differ by more than
/// tolerance·‖R‖ (pass a negative tolerance to skip the check).
CurvatureResult curvature(const MetricField& metric, const std::vector<CField>& gamma, double tolerance = 1e-6);
CurvatureResult curvature(const MetricField& metric, double tolerance = 1e-6);

struct ChernData {
    std::vector<CField> gamma, torsion, curvature;
    double cross_check = 0.0;
};

ChernData chern(const MetricField& metric);

/// Eigenvalues per point, n per point in descending order.
struct EigenField {
    int n = 0;
    std::vector<double> values;
    double operator()(std::size_t p, int i) const { return values[p * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)]; }
};

EigenField eigenvalues_wrt_metric(const Form11Field& X, const MetricField& metric);
/// Single point: eigenvalues of L^{-1} X L^{-*}, g = LL*, descending.
Eigen::VectorXd generalized_eigenvalues(const MatC& X, const MatC& g);

struct CommutationResiduals {
    // u_{ij̄k} − u_{kj̄i} = T_ik^l u_{lj̄}
    // u_{ij̄k} − u_{ikj̄} = −g^{lm̄} R_{kj̄im̄} u_l
    // u_{ij̄kl̄} − u_{ij̄l̄k} = g^{pq̄} R_{kl̄iq̄} u_{pj̄} − g^{pq̄} R_{kl̄pj̄} u_{iq̄}
    // u_{ij̄kl̄} − u_{kl̄ij̄} = g^{pq̄}(R_{kl̄iq̄} u_{pj̄} − R_{ij̄kq̄} u_{pl̄})
    //                        + T_ik^p u_{pj̄l̄} + conj(T_jl^q) u_{iq̄k} − T_ik^p conj(T_jl^q) u_{pq̄}
    std::array<double, 4> residual{};
    std::array<double, 4> scale{};  // max |left-hand side|
    // third rule with the curvature slots ordered R_{pl̄kj̄}; agrees with the
    // rule above only when ∂_p g_{kj̄} is symmetric in (p, k)
    double residual_swapped_slots = 0.0;

    double max() const;
};

CommutationResiduals commutation_residuals(const CField& u, const MetricField& metric);

}  // namespace hlab
