#include "hlab/symfun.hpp"

#include "hlab/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace hlab {

namespace {

using Buffer = std::array<double, kMaxDim + 1>;

double euclid(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

// σ_0..σ_n of λ with the entries flagged in skip_mask removed. Result in out[0..n].
void sigma_recurrence(std::span<const double> lambda, unsigned skip_mask, Buffer& out) {
    const int n = static_cast<int>(lambda.size());
    out.fill(0.0);
    out[0] = 1.0;
    int used = 0;
    for (int i = 0; i < n; ++i) {
        if (skip_mask & (1u << i)) continue;
        ++used;
        for (int j = used; j >= 1; --j) out[j] += lambda[i] * out[j - 1];
    }
}

void check_dim(std::span<const double> lambda) {
    if (lambda.size() < 1 || lambda.size() > static_cast<std::size_t>(kMaxDim)) {
        throw Error(ErrorCode::DimensionTooLarge,
                    "dimension " + std::to_string(lambda.size()) + " outside [1, 16]");
    }
}

// Each cone is an intersection of finitely many inequalities q(λ) > 0. We
// report the smallest q, scaled to degree one, together with the tolerance
// appropriate for that quantity.
struct Worst {
    double scaled = std::numeric_limits<double>::infinity();  // degree one
    double raw_over_tol = std::numeric_limits<double>::infinity();
};

Worst cone_worst(const ConeSpec& cone, std::span<const double> lambda, double base_tol) {
    const int n = static_cast<int>(lambda.size());
    const double scale = 1.0 + euclid(lambda);
    Worst w;
    auto take = [&](double raw, int degree) {
        const double tol = base_tol * std::pow(scale, degree);
        const double ratio = raw / tol;
        if (ratio < w.raw_over_tol) w.raw_over_tol = ratio;
        const double s = degree == 1 ? raw : std::copysign(std::pow(std::abs(raw), 1.0 / degree), raw);
        if (s < w.scaled) w.scaled = s;
    };
    switch (cone.kind) {
        case ConeSpec::Kind::GammaN:
            for (double v : lambda) take(v, 1);
            break;
        case ConeSpec::Kind::GammaK: {
            Buffer s;
            sigma_recurrence(lambda, 0u, s);
            for (int j = 1; j <= std::min(cone.k, n); ++j) take(s[j], j);
            break;
        }
        case ConeSpec::Kind::PK: {
            if (cone.k >= n) {
                take(std::accumulate(lambda.begin(), lambda.end(), 0.0), 1);
                break;
            }
            // The smallest k-fold partial sum is the sum of the k smallest entries.
            std::array<double, kMaxDim> sorted{};
            std::copy(lambda.begin(), lambda.end(), sorted.begin());
            std::sort(sorted.begin(), sorted.begin() + n);
            double sum = 0.0;
            for (int i = 0; i < cone.k; ++i) sum += sorted[static_cast<std::size_t>(i)];
            take(sum, 1);
            break;
        }
        case ConeSpec::Kind::HalfSpace: {
            double dot = 0.0;
            for (int i = 0; i < n; ++i) {
                const double a = cone.normal.empty() ? 1.0 : cone.normal[static_cast<std::size_t>(i)];
                dot += a * lambda[static_cast<std::size_t>(i)];
            }
            take(dot - cone.offset, 1);
            break;
        }
    }
    return w;
}

struct SigmaJet {
    double value;
    Buffer grad;                              // ∂σ_m/∂λ_i
    std::array<Buffer, kMaxDim> hess;         // ∂²σ_m/∂λ_i∂λ_j
};

// Derivatives of σ_m: ∂σ_m/∂λ_i = σ_{m-1}(λ|i), ∂²σ_m/∂λ_i∂λ_j = σ_{m-2}(λ|ij).
void sigma_jet(std::span<const double> lambda, int m, SigmaJet& out, bool with_hess) {
    const int n = static_cast<int>(lambda.size());
    Buffer s;
    sigma_recurrence(lambda, 0u, s);
    out.value = s[m];
    out.grad.fill(0.0);
    for (int i = 0; i < n; ++i) {
        if (m >= 1) {
            sigma_recurrence(lambda, 1u << i, s);
            out.grad[i] = s[m - 1];
        }
    }
    if (!with_hess) return;
    for (int i = 0; i < n; ++i) {
        out.hess[i].fill(0.0);
    }
    if (m < 2) return;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            sigma_recurrence(lambda, (1u << i) | (1u << j), s);
            out.hess[i][j] = s[m - 2];
            out.hess[j][i] = s[m - 2];
        }
    }
}

void validate_op(const OperatorSpec& op) {
    auto bad = [&](const std::string& why) { throw Error(ErrorCode::InvalidArgument, op.name() + ": " + why); };
    if (op.n < 1 || op.n > kMaxDim) bad("dimension out of range");
    switch (op.family) {
        case Family::SigmaKRoot:
            if (op.k < 1 || op.k > op.n) bad("need 1 <= k <= n");
            break;
        case Family::SigmaQuotient:
            if (op.l < 0 || op.l >= op.k || op.k > op.n) bad("need 0 <= l < k <= n");
            break;
        case Family::SigmaKOverKm1:
            if (op.k < 2 || op.k > op.n) bad("need 1 < k <= n");
            break;
        case Family::LogRhoK:
            if (op.k < 1 || op.k > op.n) bad("need 1 <= k <= n");
            if (op.n > kMaxRhoDim) throw Error(ErrorCode::DimensionTooLarge, "log rho_k needs n <= 8");
            break;
        case Family::SumArctan:
            break;
    }
}

double value_unchecked(const OperatorSpec& op, std::span<const double> lambda) {
    const int n = static_cast<int>(lambda.size());
    switch (op.family) {
        case Family::SigmaKRoot:
        case Family::SigmaQuotient: {
            Buffer s;
            sigma_recurrence(lambda, 0u, s);
            const int l = op.family == Family::SigmaKRoot ? 0 : op.l;
            const int p = op.k - l;
            const double q = s[op.k] / s[l];
            return p == 1 ? q : std::pow(q, 1.0 / p);
        }
        case Family::SigmaKOverKm1: {
            Buffer s;
            sigma_recurrence(lambda, 0u, s);
            return s[op.k] / s[op.k - 1];
        }
        case Family::LogRhoK: {
            double v = 0.0;
            const unsigned full = (1u << n);
            for (unsigned mask = 1; mask < full; ++mask) {
                if (std::popcount(mask) != op.k) continue;
                double sum = 0.0;
                for (int i = 0; i < n; ++i)
                    if (mask & (1u << i)) sum += lambda[static_cast<std::size_t>(i)];
                v += std::log(sum);
            }
            return v;
        }
        case Family::SumArctan: {
            double v = 0.0;
            for (double x : lambda) v += std::atan(x);
            return v;
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

// ---------------------------------------------------------------- LambdaVec

LambdaVec::LambdaVec(std::vector<double> entries) : v_(std::move(entries)) {
    if (v_.size() < 2) throw Error(ErrorCode::InvalidArgument, "LambdaVec needs n >= 2");
    for (double x : v_) {
        if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "LambdaVec entries must be finite");
    }
    std::sort(v_.begin(), v_.end(), std::greater<>());
}

LambdaVec::LambdaVec(std::initializer_list<double> entries) : LambdaVec(std::vector<double>(entries)) {}

Eigen::VectorXd LambdaVec::to_eigen() const {
    return Eigen::Map<const Eigen::VectorXd>(v_.data(), static_cast<Eigen::Index>(v_.size()));
}

double LambdaVec::norm() const { return euclid(v_); }

// ---------------------------------------------------------------- cones

ConeSpec ConeSpec::gamma_k(int k) { return ConeSpec{Kind::GammaK, k, {}, 0.0}; }
ConeSpec ConeSpec::pk(int k) { return ConeSpec{Kind::PK, k, {}, 0.0}; }
ConeSpec ConeSpec::gamma_n() { return ConeSpec{Kind::GammaN, 0, {}, 0.0}; }
ConeSpec ConeSpec::half_space(std::vector<double> normal, double offset) {
    return ConeSpec{Kind::HalfSpace, 0, std::move(normal), offset};
}

std::string ConeSpec::name() const {
    switch (kind) {
        case Kind::GammaK: return "Gamma_" + std::to_string(k);
        case Kind::PK: return "P_" + std::to_string(k);
        case Kind::GammaN: return "Gamma_n";
        case Kind::HalfSpace: return "HalfSpace";
    }
    return "?";
}

std::string to_string(Membership m) {
    switch (m) {
        case Membership::Inside: return "inside";
        case Membership::Boundary: return "boundary";
        case Membership::Outside: return "outside";
    }
    return "?";
}

Membership cone_contains(const ConeSpec& cone, std::span<const double> lambda, std::optional<double> tol) {
    check_dim(lambda);
    const Worst w = cone_worst(cone, lambda, tol.value_or(1e-12));
    if (w.raw_over_tol > 1.0) return Membership::Inside;
    if (w.raw_over_tol >= -1.0) return Membership::Boundary;
    return Membership::Outside;
}

Membership cone_contains(const ConeSpec& cone, const LambdaVec& lambda, std::optional<double> tol) {
    return cone_contains(cone, lambda.values(), tol);
}

double cone_margin(const ConeSpec& cone, std::span<const double> lambda) {
    check_dim(lambda);
    return cone_worst(cone, lambda, 1e-12).scaled;
}

// ---------------------------------------------------------------- operators

OperatorSpec OperatorSpec::sigma_k_root(int n, int k) {
    OperatorSpec op{Family::SigmaKRoot, n, k, 0, ConeSpec::gamma_k(k)};
    validate_op(op);
    return op;
}

OperatorSpec OperatorSpec::sigma_quotient(int n, int k, int l) {
    OperatorSpec op{Family::SigmaQuotient, n, k, l, ConeSpec::gamma_k(k)};
    validate_op(op);
    return op;
}

OperatorSpec OperatorSpec::sigma_k_over_km1(int n, int k) {
    OperatorSpec op{Family::SigmaKOverKm1, n, k, k - 1, ConeSpec::gamma_k(k - 1)};
    validate_op(op);
    return op;
}

OperatorSpec OperatorSpec::log_rho_k(int n, int k) {
    OperatorSpec op{Family::LogRhoK, n, k, 0, ConeSpec::pk(k)};
    validate_op(op);
    return op;
}

OperatorSpec OperatorSpec::sum_arctan(int n, std::optional<ConeSpec> domain) {
    OperatorSpec op{Family::SumArctan, n, 0, 0, domain.value_or(ConeSpec::gamma_n())};
    validate_op(op);
    return op;
}

std::string OperatorSpec::name() const {
    std::ostringstream os;
    switch (family) {
        case Family::SigmaKRoot: os << "sigma_" << k << "^(1/" << k << ")"; break;
        case Family::SigmaQuotient: os << "(sigma_" << k << "/sigma_" << l << ")^(1/" << (k - l) << ")"; break;
        case Family::SigmaKOverKm1: os << "sigma_" << k << "/sigma_" << (k - 1); break;
        case Family::LogRhoK: os << "log rho_" << k; break;
        case Family::SumArctan: os << "sum arctan"; break;
    }
    os << " [n=" << n << "]";
    return os.str();
}

std::vector<double> sigma_all(std::span<const double> lambda) {
    check_dim(lambda);
    Buffer s;
    sigma_recurrence(lambda, 0u, s);
    return {s.begin(), s.begin() + static_cast<std::ptrdiff_t>(lambda.size()) + 1};
}

std::vector<double> sigma_all(const LambdaVec& lambda) { return sigma_all(lambda.values()); }

double rho_k(std::span<const double> lambda, int k) {
    const int n = static_cast<int>(lambda.size());
    if (n > kMaxRhoDim) throw Error(ErrorCode::DimensionTooLarge, "rho_k enumerates subsets only for n <= 8");
    if (k < 1 || k > n) throw Error(ErrorCode::InvalidArgument, "rho_k needs 1 <= k <= n");
    double prod = 1.0;
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        if (std::popcount(mask) != k) continue;
        double sum = 0.0;
        for (int i = 0; i < n; ++i)
            if (mask & (1u << i)) sum += lambda[static_cast<std::size_t>(i)];
        prod *= sum;
    }
    return prod;
}

double rho_k(const LambdaVec& lambda, int k) { return rho_k(lambda.values(), k); }

std::optional<double> try_value(const OperatorSpec& op, std::span<const double> lambda) {
    if (static_cast<int>(lambda.size()) != op.n) return std::nullopt;
    if (cone_contains(op.domain, lambda) != Membership::Inside) return std::nullopt;
    return value_unchecked(op, lambda);
}

OperatorJet eval_jet(const OperatorSpec& op, std::span<const double> lambda) {
    const int n = static_cast<int>(lambda.size());
    if (n != op.n) throw Error(ErrorCode::InvalidArgument, "dimension mismatch for " + op.name());
    if (cone_contains(op.domain, lambda) != Membership::Inside) {
        throw Error(ErrorCode::OutsideDomain, "lambda not inside " + op.domain.name() + " for " + op.name());
    }
    OperatorJet jet;
    jet.grad = Eigen::VectorXd::Zero(n);
    jet.hess = Eigen::MatrixXd::Zero(n, n);

    switch (op.family) {
        case Family::SigmaKRoot:
        case Family::SigmaQuotient:
        case Family::SigmaKOverKm1: {
            const int k = op.k;
            const int l = op.family == Family::SigmaKRoot ? 0 : op.l;
            SigmaJet a{}, b{};
            sigma_jet(lambda, k, a, true);
            sigma_jet(lambda, l, b, true);
            const int p = k - l;
            if (op.family == Family::SigmaKOverKm1 || p == 1) {
                // quotient rule for a/b
                const double q = a.value / b.value;
                jet.value = q;
                for (int i = 0; i < n; ++i) jet.grad(i) = (a.grad[i] - q * b.grad[i]) / b.value;
                for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < n; ++j) {
                        jet.hess(i, j) = (a.hess[i][j] - q * b.hess[i][j] - jet.grad(i) * b.grad[j] -
                                          jet.grad(j) * b.grad[i]) /
                                         b.value;
                    }
                }
                if (l == 0 && k == 1) jet.hess.setZero();  // σ_1 is linear
                break;
            }
            // f = exp(g), g = (log σ_k − log σ_l)/p
            Eigen::VectorXd g(n);
            for (int i = 0; i < n; ++i) g(i) = (a.grad[i] / a.value - b.grad[i] / b.value) / p;
            const double f = std::pow(a.value / b.value, 1.0 / p);
            jet.value = f;
            jet.grad = f * g;
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    const double gij = (a.hess[i][j] / a.value - a.grad[i] * a.grad[j] / (a.value * a.value) -
                                        b.hess[i][j] / b.value + b.grad[i] * b.grad[j] / (b.value * b.value)) /
                                       p;
                    jet.hess(i, j) = f * (gij + g(i) * g(j));
                }
            }
            break;
        }
        case Family::LogRhoK: {
            for (unsigned mask = 1; mask < (1u << n); ++mask) {
                if (std::popcount(mask) != op.k) continue;
                double sum = 0.0;
                for (int i = 0; i < n; ++i)
                    if (mask & (1u << i)) sum += lambda[static_cast<std::size_t>(i)];
                jet.value += std::log(sum);
                const double inv = 1.0 / sum;
                for (int i = 0; i < n; ++i) {
                    if (!(mask & (1u << i))) continue;
                    jet.grad(i) += inv;
                    for (int j = 0; j < n; ++j)
                        if (mask & (1u << j)) jet.hess(i, j) -= inv * inv;
                }
            }
            break;
        }
        case Family::SumArctan: {
            for (int i = 0; i < n; ++i) {
                const double x = lambda[static_cast<std::size_t>(i)];
                const double d = 1.0 + x * x;
                jet.value += std::atan(x);
                jet.grad(i) = 1.0 / d;
                jet.hess(i, i) = -2.0 * x / (d * d);
            }
            break;
        }
    }
    jet.hess = 0.5 * (jet.hess + jet.hess.transpose()).eval();
    return jet;
}

OperatorJet eval_jet(const OperatorSpec& op, const LambdaVec& lambda) { return eval_jet(op, lambda.values()); }

Eigen::VectorXd eval_grad(const OperatorSpec& op, std::span<const double> lambda) {
    const int n = static_cast<int>(lambda.size());
    if (cone_contains(op.domain, lambda) != Membership::Inside) {
        throw Error(ErrorCode::OutsideDomain, "lambda not inside " + op.domain.name() + " for " + op.name());
    }
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
    switch (op.family) {
        case Family::SigmaKRoot:
        case Family::SigmaQuotient:
        case Family::SigmaKOverKm1: {
            const int k = op.k;
            const int l = op.family == Family::SigmaKRoot ? 0 : op.l;
            SigmaJet a{}, b{};
            sigma_jet(lambda, k, a, false);
            sigma_jet(lambda, l, b, false);
            const int p = k - l;
            if (op.family == Family::SigmaKOverKm1 || p == 1) {
                const double q = a.value / b.value;
                for (int i = 0; i < n; ++i) grad(i) = (a.grad[i] - q * b.grad[i]) / b.value;
            } else {
                const double f = std::pow(a.value / b.value, 1.0 / p);
                for (int i = 0; i < n; ++i) grad(i) = f * (a.grad[i] / a.value - b.grad[i] / b.value) / p;
            }
            break;
        }
        case Family::LogRhoK: {
            for (unsigned mask = 1; mask < (1u << n); ++mask) {
                if (std::popcount(mask) != op.k) continue;
                double sum = 0.0;
                for (int i = 0; i < n; ++i)
                    if (mask & (1u << i)) sum += lambda[static_cast<std::size_t>(i)];
                for (int i = 0; i < n; ++i)
                    if (mask & (1u << i)) grad(i) += 1.0 / sum;
            }
            break;
        }
        case Family::SumArctan:
            for (int i = 0; i < n; ++i) {
                const double x = lambda[static_cast<std::size_t>(i)];
                grad(i) = 1.0 / (1.0 + x * x);
            }
            break;
    }
    return grad;
}

// ---------------------------------------------------------------- sups

namespace {

// Largest f value at points just inside ∂Γ, found by lowering points of the
// hyperplane Σλ = 0 along the diagonal until they enter the domain.
double probe_sup_boundary(const OperatorSpec& op) {
    const int n = op.n;
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal;
    const double e = 1.0 / std::sqrt(static_cast<double>(n));
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> y(static_cast<std::size_t>(n)), p(static_cast<std::size_t>(n));
    for (int trial = 0; trial < 256 * n; ++trial) {
        double mean = 0.0;
        for (auto& v : y) {
            v = normal(rng);
            mean += v;
        }
        mean /= n;
        double nrm = 0.0;
        for (auto& v : y) {
            v -= mean;
            nrm += v * v;
        }
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) continue;
        for (double radius : {1e-3, 1.0, 1e3, 1e6}) {
            auto at = [&](double s) {
                for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] / nrm * radius + s * e;
                return cone_contains(op.domain, p) == Membership::Inside;
            };
            double lo = -1e12, hi = 1.0;
            while (!at(hi)) hi *= 2.0;
            if (at(lo)) continue;  // domain contains the whole line: no boundary along it
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                (at(mid) ? hi : lo) = mid;
            }
            at(hi);
            if (auto v = try_value(op, p)) best = std::max(best, *v);
        }
    }
    return best;
}

}  // namespace

double sup_boundary(const OperatorSpec& op) {
    switch (op.family) {
        case Family::SigmaKRoot:
        case Family::SigmaQuotient:
        case Family::SigmaKOverKm1:
            // homogeneous of degree one and vanishing (or → −∞) on ∂Γ; the sup is
            // approached at the vertex
            return 0.0;
        case Family::LogRhoK:
            return -std::numeric_limits<double>::infinity();
        case Family::SumArctan:
            if (op.domain.kind == ConeSpec::Kind::GammaN) return (op.n - 1) * std::numbers::pi / 2.0;
            return probe_sup_boundary(op);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

double sup_interior(const OperatorSpec& op) {
    if (op.family == Family::SumArctan) return op.n * std::numbers::pi / 2.0;
    return std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------- sampling & structure

std::vector<double> sample_inside(const OperatorSpec& op, std::mt19937_64& rng, double box, double margin) {
    std::uniform_real_distribution<double> uni(-box, box);
    std::vector<double> x(static_cast<std::size_t>(op.n)), shifted(static_cast<std::size_t>(op.n));
    for (int attempt = 0; attempt < 10'000'000; ++attempt) {
        for (auto& v : x) v = uni(rng);
        if (cone_contains(op.domain, x) != Membership::Inside) continue;
        if (margin > 0.0) {
            const double d = margin * (1.0 + euclid(x));
            for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = x[i] - d;
            if (cone_contains(op.domain, shifted) != Membership::Inside) continue;
        }
        return x;
    }
    throw Error(ErrorCode::InvalidArgument, "could not sample the domain of " + op.name());
}

StructureReport check_structure(const OperatorSpec& op, int sample_count, std::uint64_t seed, double box) {
    if (sample_count < 1) throw Error(ErrorCode::InvalidArgument, "sample_count must be >= 1");
    std::mt19937_64 rng(seed);
    StructureReport rep;
    rep.samples = sample_count;
    rep.min_grad_entry = std::numeric_limits<double>::infinity();
    rep.max_hess_eig = -std::numeric_limits<double>::infinity();
    rep.max_hess_eig_relative = -std::numeric_limits<double>::infinity();

    std::vector<double> prev;
    double prev_value = 0.0;
    std::vector<double> mid(static_cast<std::size_t>(op.n));
    for (int s = 0; s < sample_count; ++s) {
        auto x = sample_inside(op, rng, box);
        const OperatorJet jet = eval_jet(op, x);
        rep.min_grad_entry = std::min(rep.min_grad_entry, jet.grad.minCoeff());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jet.hess, Eigen::EigenvaluesOnly);
        const double top = es.eigenvalues().maxCoeff();
        const double nrm = es.eigenvalues().cwiseAbs().maxCoeff();
        rep.max_hess_eig = std::max(rep.max_hess_eig, top);
        rep.max_hess_eig_relative = std::max(rep.max_hess_eig_relative, nrm > 0.0 ? top / nrm : 0.0);

        if (!prev.empty()) {
            for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (x[i] + prev[i]);
            if (auto fm = try_value(op, mid)) {
                ++rep.midpoint_pairs;
                const double chord = 0.5 * (jet.value + prev_value);
                const double tol = 1e-12 * (1.0 + std::abs(jet.value) + std::abs(prev_value));
                if (*fm < chord - tol) ++rep.midpoint_violations;
            }
        }
        prev = std::move(x);
        prev_value = jet.value;
    }

    std::vector<double> diag(static_cast<std::size_t>(op.n));
    rep.sup_interior_estimate = -std::numeric_limits<double>::infinity();
    for (int j = -2; j <= 12; ++j) {
        const double t = std::pow(10.0, j);
        std::fill(diag.begin(), diag.end(), t);
        if (auto v = try_value(op, diag)) {
            rep.diagonal.push_back({t, *v});
            rep.sup_interior_estimate = std::max(rep.sup_interior_estimate, *v);
        }
    }
    rep.sup_boundary = sup_boundary(op);
    return rep;
}

}  // namespace hlab
