#pragma once

// Geometry of the level sets {f > σ} and their asymptotic cones, probed by
// sampling the boundary hypersurface on spherical shells.

#include "hlab/symfun.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace hlab {

struct LevelSetHandle {
    OperatorSpec op;
    double sigma = 0.0;
    LambdaVec anchor{0.0, 0.0};

    /// Checks sup_{∂Γ} f < σ < sup_Γ f. Without an anchor, a point t·(1,…,1)
    /// inside the level set is chosen.
    static LevelSetHandle create(const OperatorSpec& op, double sigma,
                                 std::optional<std::vector<double>> anchor = std::nullopt);
};

struct BoundaryPoint {
    LambdaVec lambda{0.0, 0.0};  // sorted
    Eigen::VectorXd normal;      // same order as lambda
    std::vector<double> coords;  // unsorted, in the coordinates of the ray
    double t = 0.0;
    bool degenerate = false;  // ray left Γ before reaching the level
};

/// First crossing of f = σ along anchor + t·direction. Throws RayStaysInside,
/// or OutsideCone unless allow_degenerate is set.
BoundaryPoint boundary_point(const LevelSetHandle& ls, std::span<const double> direction,
                             double t_max = 1e9, bool allow_degenerate = false);

/// Boundary samples on spheres |λ| = R, one per escape direction per shell.
/// Coordinates are left unsorted; grad holds f_i at each sample.
struct ShellSamples {
    int n = 0;
    std::vector<double> radii;     // the requested ladder
    std::vector<int> shell;        // per sample: index into radii
    std::vector<int> direction;    // per sample: escape direction index
    Eigen::MatrixXd lambda;        // n × samples
    Eigen::MatrixXd grad;          // n × samples

    int size() const { return static_cast<int>(shell.size()); }
};

ShellSamples sample_shells(const LevelSetHandle& ls, std::span<const double> radii, int directions,
                           std::uint64_t seed = 0x5eed);

/// Geometric ladder r0·q^j, count points from r0 to r1 inclusive.
std::vector<double> geometric_ladder(double r0, double r1, int count);

struct NormalCluster {
    std::vector<bool> zero_pattern;
    int nonzero = 0;
    int members = 0;
    Eigen::VectorXd mean_normal;
};

struct AsymptoticPlane {
    Eigen::VectorXd normal;  // unit, entries in the zero pattern set to 0
    double offset = 0.0;     // the half-space is normal·μ > offset
};

struct RankEstimate {
    int rank = 0;
    std::vector<NormalCluster> normal_clusters;  // only patterns whose flagged entries shrink with R
    std::vector<AsymptoticPlane> planes;
    double radius_max = 0.0;
    int samples = 0;
};

struct RankOptions {
    int escape_directions = 0;  // 0 means 512·n
    double zero_threshold = 1e-3;
    std::vector<double> radii{10.0, 1e2, 1e3};
    std::uint64_t seed = 0x5eed;
};

RankEstimate estimate_rank(const LevelSetHandle& ls, const RankOptions& opts = {});

struct CplusVerdict {
    enum class Kind { In, Out, Inconclusive };
    Kind kind = Kind::Inconclusive;
    double epsilon = 0.0;            // In only
    double radius = 0.0;             // In: R; Out: radius of the witness
    std::vector<double> witness;     // Out only
    double witness_margin = 0.0;
    std::vector<double> shell_min_margin;  // per shell, NaN when empty
};

std::string to_string(CplusVerdict::Kind k);

/// Precomputed shell data; each μ query is linear in the sample count.
class CplusProbe {
public:
    explicit CplusProbe(const ShellSamples& samples);
    CplusVerdict classify(std::span<const double> mu, double tol = 1e-9) const;
    /// Σ f_i(μ_i − λ_i) / (Σ f_i + 1) per sample.
    Eigen::VectorXd margins(std::span<const double> mu) const;

private:
    int n_;
    std::vector<double> radii_;
    std::vector<int> shell_;
    Eigen::MatrixXd lambda_;
    Eigen::MatrixXd grad_;
    Eigen::VectorXd sum_f_;
    Eigen::VectorXd f_dot_lambda_;
};

CplusVerdict membership_cplus(const LevelSetHandle& ls, std::span<const double> mu,
                              std::span<const double> radii, int directions = 0);

struct CtildeVerdict {
    enum class Kind { In, Out, EqualsRn };
    Kind kind = Kind::EqualsRn;
    int planes_checked = 0;
    double min_slack = 0.0;  // min over planes of normal·μ − offset
};

std::string to_string(CtildeVerdict::Kind k);

CtildeVerdict membership_ctilde(const RankEstimate& rank, std::span<const double> mu,
                                double tol = 1e-9);
CtildeVerdict membership_ctilde(const LevelSetHandle& ls, std::span<const double> mu);

struct DichotomyWitness {
    double delta = 0.0;
    double epsilon = 0.0;
    double radius_max = 0.0;
    int samples_checked = 0;
    int violations = 0;
    int branch_one = 0;  // samples assigned to f_k ≥ δ Σ f_i
    int branch_two = 0;  // samples assigned to Σ f_i(μ_i − λ_i) ≥ ε Σ f_i
};

struct BranchMargins {
    Eigen::VectorXd m1;  // min_k f_k / Σ f_i
    Eigen::VectorXd m2;  // Σ f_i(μ_i − λ_i) / Σ f_i
};

BranchMargins branch_margins(const ShellSamples& samples, std::span<const double> mu);

/// Throws HypothesisFailed unless μ is in the degenerate-plane cone.
DichotomyWitness dichotomy_witness(const LevelSetHandle& ls, std::span<const double> mu,
                                   std::span<const double> shells, int directions = 0,
                                   const RankEstimate* rank = nullptr);

struct HProfileRow {
    double r = 0.0;
    double h = 0.0;  // NaN when no branch-two sample sits on the shell
    int samples = 0;
    int samples_in_branch = 0;
};

std::vector<HProfileRow> h_mu_profile(const LevelSetHandle& ls, std::span<const double> mu,
                                      std::span<const double> radii, int directions = 0,
                                      const RankEstimate* rank = nullptr);

/// One row per sample: radius, λ, ν, and the two branch margins when μ is given.
void write_shell_csv(std::ostream& os, const ShellSamples& samples,
                     std::optional<std::span<const double>> mu = std::nullopt);
void write_profile_csv(std::ostream& os, const std::vector<HProfileRow>& rows);

}  // namespace hlab
