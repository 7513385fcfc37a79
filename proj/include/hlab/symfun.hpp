#pragma once

// Symmetric operator kernels f(λ): values, exact first and second derivatives,
// and membership in the cones on which each operator is elliptic and concave.

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hlab {

inline constexpr int kMaxDim = 16;
inline constexpr int kMaxRhoDim = 8;

/// Eigenvalue tuple, always stored in descending order.
class LambdaVec {
public:
    explicit LambdaVec(std::vector<double> entries);
    LambdaVec(std::initializer_list<double> entries);

    int size() const noexcept { return static_cast<int>(v_.size()); }
    double operator[](int i) const { return v_[static_cast<std::size_t>(i)]; }
    std::span<const double> values() const noexcept { return v_; }
    Eigen::VectorXd to_eigen() const;
    double norm() const;

private:
    std::vector<double> v_;
};

struct ConeSpec {
    enum class Kind { GammaK, PK, GammaN, HalfSpace };

    Kind kind = Kind::GammaN;
    int k = 0;
    // HalfSpace only: {λ : normal·λ > offset}; an empty normal means (1,…,1).
    std::vector<double> normal;
    double offset = 0.0;

    static ConeSpec gamma_k(int k);
    static ConeSpec pk(int k);
    static ConeSpec gamma_n();
    static ConeSpec half_space(std::vector<double> normal = {}, double offset = 0.0);

    std::string name() const;
};

enum class Membership { Inside, Boundary, Outside };

std::string to_string(Membership m);

/// Relative default tolerance 1e-12·(1+|λ|), scaled by degree for σ_j.
Membership cone_contains(const ConeSpec& cone, std::span<const double> lambda,
                         std::optional<double> tol = std::nullopt);
Membership cone_contains(const ConeSpec& cone, const LambdaVec& lambda,
                         std::optional<double> tol = std::nullopt);

/// Degree-one measure of how deep λ sits in the cone: the minimum of the
/// defining quantities (σ_j taken to the power 1/j). Positive iff inside.
double cone_margin(const ConeSpec& cone, std::span<const double> lambda);

enum class Family { SigmaKRoot, SigmaQuotient, SigmaKOverKm1, LogRhoK, SumArctan };

struct OperatorSpec {
    Family family = Family::SigmaKRoot;
    int n = 2;
    int k = 1;
    int l = 0;
    ConeSpec domain;

    static OperatorSpec sigma_k_root(int n, int k);
    static OperatorSpec sigma_quotient(int n, int k, int l);
    static OperatorSpec sigma_k_over_km1(int n, int k);
    static OperatorSpec log_rho_k(int n, int k);
    static OperatorSpec sum_arctan(int n, std::optional<ConeSpec> domain = std::nullopt);

    std::string name() const;
};

struct OperatorJet {
    double value = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
};

/// (σ_0, …, σ_n) by the one-variable-at-a-time recurrence.
std::vector<double> sigma_all(std::span<const double> lambda);
std::vector<double> sigma_all(const LambdaVec& lambda);

/// Product of all k-fold partial sums. Throws DimensionTooLarge for n > 8.
double rho_k(std::span<const double> lambda, int k);
double rho_k(const LambdaVec& lambda, int k);

/// Full jet; throws OutsideDomain unless λ is strictly inside op.domain.
/// The span overload accepts unsorted λ (derivatives follow the given order).
OperatorJet eval_jet(const OperatorSpec& op, std::span<const double> lambda);
OperatorJet eval_jet(const OperatorSpec& op, const LambdaVec& lambda);

/// Value only, or nullopt when λ is not inside the domain. Allocation free.
std::optional<double> try_value(const OperatorSpec& op, std::span<const double> lambda);

/// Gradient only (f_i), in the order of the given λ.
Eigen::VectorXd eval_grad(const OperatorSpec& op, std::span<const double> lambda);

/// sup of f over ∂Γ (closed forms per family, ray probing for custom domains).
double sup_boundary(const OperatorSpec& op);
/// sup of f over Γ; +∞ for the unbounded families.
double sup_interior(const OperatorSpec& op);

struct DiagonalProbe {
    double t = 0.0;
    double value = 0.0;
};

struct StructureReport {
    int samples = 0;
    double min_grad_entry = 0.0;
    double max_hess_eig = 0.0;          // largest eigenvalue seen
    double max_hess_eig_relative = 0.0;  // largest eig / ‖hess‖ seen
    int midpoint_pairs = 0;
    int midpoint_violations = 0;
    std::vector<DiagonalProbe> diagonal;  // f(t·(1,…,1)) for growing t
    double sup_interior_estimate = 0.0;
    double sup_boundary = 0.0;
};

StructureReport check_structure(const OperatorSpec& op, int sample_count, std::uint64_t seed,
                                double box = 10.0);

/// Uniform sample from [-box, box]^n ∩ domain, rejecting points closer than
/// `margin`·(1+|λ|) to the cone boundary.
std::vector<double> sample_inside(const OperatorSpec& op, std::mt19937_64& rng, double box,
                                  double margin = 0.0);

}  // namespace hlab
