#include "hlab/conegeo.hpp"

#include "hlab/errors.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <random>

namespace hlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
// margins below this are indistinguishable from zero at the radii we sample
constexpr double kMarginFloor = 1e-12;

using Point = std::array<double, kMaxDim>;

double level_tol(double sigma) { return 1e-11 * (1.0 + std::abs(sigma)); }

// f − σ along base + t·dir, nullopt outside Γ.
class LineProbe {
public:
    LineProbe(const OperatorSpec& op, double sigma, const double* base, const double* dir)
        : op_(op), sigma_(sigma), base_(base), dir_(dir) {}

    std::optional<double> operator()(double t) {
        for (int i = 0; i < op_.n; ++i) p_[static_cast<std::size_t>(i)] = base_[i] + t * dir_[i];
        auto v = try_value(op_, std::span<const double>(p_.data(), static_cast<std::size_t>(op_.n)));
        if (!v) return std::nullopt;
        return *v - sigma_;
    }

    std::span<const double> point() const { return {p_.data(), static_cast<std::size_t>(op_.n)}; }

private:
    const OperatorSpec& op_;
    double sigma_;
    const double* base_;
    const double* dir_;
    Point p_{};
};

struct Crossing {
    double t = 0.0;
    bool degenerate = false;
};

// Given g(t_in) > 0 and t_out not inside the level set, locate the level
// crossing between them. Bisection until both ends lie in Γ, then TOMS 748.
Crossing solve_level(LineProbe& g, double t_in, double t_out, double tol) {
    double a = t_in, b = t_out;
    auto gb = g(b);
    for (int it = 0; it < 200 && !gb; ++it) {
        const double m = 0.5 * (a + b);
        if (m == a || m == b) break;
        auto gm = g(m);
        if (gm && *gm > 0.0) {
            a = m;
        } else {
            b = m;
            gb = gm;
        }
    }
    if (!gb) return {a, true};
    if (*gb == 0.0) return {b, false};
    const double ga = *g(a);
    if (ga <= tol) return {a, false};

    auto fun = [&](double t) {
        auto v = g(t);
        // the segment lies in Γ by convexity; guard against the last ulp anyway
        return v ? *v : -kInf;
    };
    double lo = a, hi = b, flo = ga, fhi = *gb;
    if (lo > hi) {
        std::swap(lo, hi);
        std::swap(flo, fhi);
    }
    std::uintmax_t max_iter = 200;
    auto stop = [&](double x0, double x1) {
        return std::abs(x1 - x0) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max({1.0, std::abs(x0), std::abs(x1)});
    };
    auto [r0, r1] = boost::math::tools::toms748_solve(fun, lo, hi, flo, fhi, stop, max_iter);
    const double v0 = fun(r0), v1 = fun(r1);
    // prefer the end inside the level set
    if (v1 >= 0.0 && (v0 < 0.0 || std::abs(v1) <= std::abs(v0))) return {r1, false};
    if (v0 >= 0.0) return {r0, false};
    return {std::abs(v0) <= std::abs(v1) ? r0 : r1, false};
}

double norm2(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

// Orthonormal basis of the hyperplane orthogonal to (1,…,1), by Gram-Schmidt on
// e_1, …, e_{n−1}. Column j is the direction of e_{j+1} with the previous removed.
Eigen::MatrixXd diagonal_complement(int n) {
    Eigen::MatrixXd b(n, n - 1);
    const Eigen::VectorXd e = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    for (int j = 0; j < n - 1; ++j) {
        Eigen::VectorXd v = Eigen::VectorXd::Unit(n, j);
        v -= e.dot(v) * e;
        for (int i = 0; i < j; ++i) v -= b.col(i).dot(v) * b.col(i);
        b.col(j) = v.normalized();
    }
    return b;
}

// Quasi-uniform unit vectors in ℝ^{d}.
std::vector<Eigen::VectorXd> sphere_directions(int d, int count, std::uint64_t seed) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(count));
    if (d == 1) {
        for (int i = 0; i < count; ++i) out.push_back(Eigen::VectorXd::Constant(1, i % 2 == 0 ? 1.0 : -1.0));
        return out;
    }
    if (d == 2) {
        for (int i = 0; i < count; ++i) {
            const double th = 2.0 * std::numbers::pi * i / count;
            Eigen::VectorXd v(2);
            v << std::cos(th), std::sin(th);
            out.push_back(v);
        }
        return out;
    }
    if (d == 3) {
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (int i = 0; i < count; ++i) {
            const double z = 1.0 - 2.0 * (i + 0.5) / count;
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            Eigen::VectorXd v(3);
            v << r * std::cos(golden * i), r * std::sin(golden * i), z;
            out.push_back(v);
        }
        return out;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    while (static_cast<int>(out.size()) < count) {
        Eigen::VectorXd v(d);
        for (int i = 0; i < d; ++i) v(i) = normal(rng);
        const double nv = v.norm();
        if (nv > 1e-12) out.push_back(v / nv);
    }
    return out;
}

int default_directions(int n, int directions) {
    if (directions > 0) return directions;
    return n == 2 ? 2 : 512 * n;
}

}  // namespace

// ---------------------------------------------------------------- level sets

LevelSetHandle LevelSetHandle::create(const OperatorSpec& op, double sigma, std::optional<std::vector<double>> anchor) {
    if (!std::isfinite(sigma)) throw Error(ErrorCode::InvalidArgument, "level must be finite");
    const double lo = sup_boundary(op);
    const double hi = sup_interior(op);
    if (!(lo < sigma && sigma < hi)) {
        throw Error(ErrorCode::HypothesisFailed, "level " + std::to_string(sigma) + " outside (sup over the cone boundary, sup over the cone) = (" +
                                                     std::to_string(lo) + ", " + std::to_string(hi) + ") for " + op.name());
    }
    LevelSetHandle ls{op, sigma, LambdaVec{0.0, 0.0}};
    if (anchor) {
        if (static_cast<int>(anchor->size()) != op.n) throw Error(ErrorCode::InvalidArgument, "anchor has the wrong dimension");
        auto v = try_value(op, *anchor);
        if (!v || !(*v > sigma)) throw Error(ErrorCode::OutsideDomain, "anchor is not inside the level set");
        ls.anchor = LambdaVec(*anchor);
        return ls;
    }
    std::vector<double> diag(static_cast<std::size_t>(op.n), 1.0);
    for (int it = 0; it < 2000; ++it) {
        auto v = try_value(op, diag);
        if (v && *v > sigma) {
            for (auto& x : diag) x *= 2.0;
            ls.anchor = LambdaVec(diag);
            return ls;
        }
        for (auto& x : diag) x *= 2.0;
    }
    throw Error(ErrorCode::HypothesisFailed, "diagonal never enters the level set");
}

BoundaryPoint boundary_point(const LevelSetHandle& ls, std::span<const double> direction, double t_max, bool allow_degenerate) {
    const int n = ls.op.n;
    if (static_cast<int>(direction.size()) != n) throw Error(ErrorCode::InvalidArgument, "direction has the wrong dimension");
    const double dn = norm2(direction);
    if (!(dn > 0.0)) throw Error(ErrorCode::InvalidArgument, "direction must be nonzero");
    std::vector<double> dir(direction.begin(), direction.end());
    for (auto& v : dir) v /= dn;
    auto base = ls.anchor.values();

    LineProbe g(ls.op, ls.sigma, base.data(), dir.data());
    const double scale = 1.0 + ls.anchor.norm();
    double t_in = 0.0, t_out = -1.0;
    for (double t = 1e-3 * scale; t <= t_max * 2.0; t *= 2.0) {
        auto v = g(t);
        if (!v || *v <= 0.0) {
            t_out = t;
            break;
        }
        t_in = t;
    }
    if (t_out < 0.0) throw Error(ErrorCode::RayStaysInside, "no level crossing before t = " + std::to_string(t_max));

    const Crossing c = solve_level(g, t_in, t_out, level_tol(ls.sigma));
    g(c.t);
    std::vector<double> coords(g.point().begin(), g.point().end());
    if (c.degenerate && !allow_degenerate) {
        throw Error(ErrorCode::OutsideCone, "ray leaves the cone before reaching the level set boundary");
    }
    Eigen::VectorXd grad = eval_grad(ls.op, coords);
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return coords[static_cast<std::size_t>(a)] > coords[static_cast<std::size_t>(b)]; });
    std::vector<double> sorted(static_cast<std::size_t>(n));
    Eigen::VectorXd normal(n);
    const double gn = grad.norm();
    for (int i = 0; i < n; ++i) {
        sorted[static_cast<std::size_t>(i)] = coords[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        normal(i) = grad(order[static_cast<std::size_t>(i)]) / gn;
    }
    return BoundaryPoint{LambdaVec(sorted), normal, coords, c.t, c.degenerate};
}

// ---------------------------------------------------------------- shells

std::vector<double> geometric_ladder(double r0, double r1, int count) {
    if (!(r0 > 0.0 && r1 >= r0) || count < 1) throw Error(ErrorCode::InvalidArgument, "bad ladder");
    std::vector<double> out(static_cast<std::size_t>(count));
    if (count == 1) {
        out[0] = r0;
        return out;
    }
    const double q = std::log(r1 / r0) / (count - 1);
    for (int j = 0; j < count; ++j) out[static_cast<std::size_t>(j)] = r0 * std::exp(q * j);
    out.back() = r1;
    return out;
}

ShellSamples sample_shells(const LevelSetHandle& ls, std::span<const double> radii, int directions, std::uint64_t seed) {
    const int n = ls.op.n;
    if (radii.empty()) throw Error(ErrorCode::InvalidArgument, "empty radius ladder");
    for (std::size_t j = 0; j < radii.size(); ++j) {
        if (!(radii[j] > 0.0) || (j > 0 && !(radii[j] > radii[j - 1]))) {
            throw Error(ErrorCode::InvalidArgument, "radii must be positive and increasing");
        }
    }
    const int ndir = default_directions(n, directions);
    const int nshell = static_cast<int>(radii.size());
    const Eigen::MatrixXd basis = diagonal_complement(n);
    const auto units = sphere_directions(n - 1, ndir, seed);
    const std::vector<double> e(static_cast<std::size_t>(n), 1.0 / std::sqrt(static_cast<double>(n)));
    const double tol = level_tol(ls.sigma);

    // crossing on the diagonal itself
    const std::vector<double> zero(static_cast<std::size_t>(n), 0.0);
    double s_axis = 0.0;
    {
        LineProbe g(ls.op, ls.sigma, zero.data(), e.data());
        double hi = std::max(1.0, ls.anchor.norm());
        while (!(g(hi).value_or(-1.0) > 0.0)) hi *= 2.0;
        double lo = 0.0;
        while (g(lo).value_or(-1.0) > 0.0) lo -= (1.0 + std::abs(lo));
        s_axis = solve_level(g, hi, lo, tol).t;
    }

    std::vector<double> lam(static_cast<std::size_t>(ndir * nshell * n), kNaN);
    std::vector<char> valid(static_cast<std::size_t>(ndir * nshell), 0);

#pragma omp parallel for schedule(dynamic, 8)
    for (int d = 0; d < ndir; ++d) {
        Eigen::VectorXd w = basis * units[static_cast<std::size_t>(d)];
        std::vector<double> y(static_cast<std::size_t>(n));
        double s_guess = s_axis;
        // boundary height over ρ·w
        auto height = [&](double rho) {
            for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = rho * w(i);
            LineProbe g(ls.op, ls.sigma, y.data(), e.data());
            const double step = 1e-3 * (1.0 + std::abs(s_guess));
            double in = s_guess, out = s_guess;
            if (g(s_guess).value_or(-1.0) > 0.0) {
                double h = step;
                for (int it = 0; it < 2000; ++it, h *= 2.0) {
                    out = s_guess - h;
                    if (!(g(out).value_or(-1.0) > 0.0)) break;
                    in = out;
                }
            } else {
                double h = step;
                for (int it = 0; it < 2000; ++it, h *= 2.0) {
                    in = s_guess + h;
                    if (g(in).value_or(-1.0) > 0.0) break;
                    out = in;
                }
            }
            const double s = solve_level(g, in, out, tol).t;
            s_guess = s;
            return s;
        };
        double rho_lo = 0.0;
        for (int j = 0; j < nshell; ++j) {
            const double r = radii[static_cast<std::size_t>(j)];
            if (std::abs(s_axis) >= r) continue;
            auto hfun = [&](double rho) {
                const double s = height(rho);
                return rho * rho + s * s - r * r;
            };
            const double f_lo = hfun(rho_lo);
            if (f_lo >= 0.0) continue;
            const double f_hi = hfun(r);
            std::uintmax_t max_iter = 200;
            auto [a, b] = boost::math::tools::toms748_solve(hfun, rho_lo, r, f_lo, f_hi,
                                                            boost::math::tools::eps_tolerance<double>(44), max_iter);
            const double rho = 0.5 * (a + b);
            const double s = height(rho);
            const std::size_t slot = static_cast<std::size_t>(d * nshell + j);
            for (int i = 0; i < n; ++i) lam[slot * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] = rho * w(i) + s * e[static_cast<std::size_t>(i)];
            valid[slot] = 1;
            rho_lo = rho;
        }
    }

    ShellSamples out;
    out.n = n;
    out.radii.assign(radii.begin(), radii.end());
    int count = 0;
    for (char v : valid) count += v;
    out.lambda.resize(n, count);
    out.grad.resize(n, count);
    int c = 0;
    for (int j = 0; j < nshell; ++j) {
        for (int d = 0; d < ndir; ++d) {
            const std::size_t slot = static_cast<std::size_t>(d * nshell + j);
            if (!valid[slot]) continue;
            for (int i = 0; i < n; ++i) out.lambda(i, c) = lam[slot * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)];
            out.shell.push_back(j);
            out.direction.push_back(d);
            ++c;
        }
    }
#pragma omp parallel for schedule(static)
    for (int s = 0; s < count; ++s) {
        out.grad.col(s) = eval_grad(ls.op, std::span<const double>(out.lambda.col(s).data(), static_cast<std::size_t>(n)));
    }
    return out;
}

// ---------------------------------------------------------------- rank

RankEstimate estimate_rank(const LevelSetHandle& ls, const RankOptions& opts) {
    const int n = ls.op.n;
    const int ndir = opts.escape_directions > 0 ? opts.escape_directions : 512 * n;
    if (ndir < 2 * n) throw Error(ErrorCode::InvalidArgument, "need at least 2n escape directions");
    if (opts.radii.empty()) throw Error(ErrorCode::InvalidArgument, "empty radius ladder");
    const ShellSamples samples = sample_shells(ls, opts.radii, ndir, opts.seed);
    const int last = static_cast<int>(opts.radii.size()) - 1;

    std::vector<int> at_last(static_cast<std::size_t>(ndir), -1), at_prev(static_cast<std::size_t>(ndir), -1);
    for (int s = 0; s < samples.size(); ++s) {
        const int d = samples.direction[static_cast<std::size_t>(s)];
        if (samples.shell[static_cast<std::size_t>(s)] == last) at_last[static_cast<std::size_t>(d)] = s;
        if (samples.shell[static_cast<std::size_t>(s)] == last - 1) at_prev[static_cast<std::size_t>(d)] = s;
    }

    RankEstimate est;
    est.radius_max = opts.radii.back();
    est.samples = samples.size();
    std::map<std::vector<bool>, std::size_t> index;
    for (int d = 0; d < ndir; ++d) {
        const int s = at_last[static_cast<std::size_t>(d)];
        if (s < 0) continue;
        const Eigen::VectorXd nu = samples.grad.col(s).normalized();
        std::vector<bool> pattern(static_cast<std::size_t>(n));
        int zeros = 0;
        for (int i = 0; i < n; ++i) {
            pattern[static_cast<std::size_t>(i)] = std::abs(nu(i)) < opts.zero_threshold;
            zeros += pattern[static_cast<std::size_t>(i)];
        }
        if (zeros == 0 || zeros == n) continue;
        if (last > 0) {
            const int p = at_prev[static_cast<std::size_t>(d)];
            if (p < 0) continue;
            const Eigen::VectorXd nu_prev = samples.grad.col(p).normalized();
            bool shrinking = true;
            for (int i = 0; i < n; ++i)
                if (pattern[static_cast<std::size_t>(i)] && !(std::abs(nu(i)) < std::abs(nu_prev(i)))) shrinking = false;
            if (!shrinking) continue;
        }
        auto [it, fresh] = index.try_emplace(pattern, est.normal_clusters.size());
        if (fresh) {
            NormalCluster c;
            c.zero_pattern = pattern;
            c.nonzero = n - zeros;
            c.mean_normal = Eigen::VectorXd::Zero(n);
            est.normal_clusters.push_back(c);
        }
        NormalCluster& c = est.normal_clusters[it->second];
        c.members += 1;
        c.mean_normal += nu;

        Eigen::VectorXd nu0 = nu;
        for (int i = 0; i < n; ++i)
            if (pattern[static_cast<std::size_t>(i)]) nu0(i) = 0.0;
        nu0.normalize();
        est.planes.push_back(AsymptoticPlane{nu0, nu0.dot(samples.lambda.col(s))});
    }
    est.rank = n;
    for (auto& c : est.normal_clusters) {
        c.mean_normal /= c.members;
        est.rank = std::min(est.rank, c.nonzero);
    }
    return est;
}

// ---------------------------------------------------------------- C^+ membership

std::string to_string(CplusVerdict::Kind k) {
    switch (k) {
        case CplusVerdict::Kind::In: return "in";
        case CplusVerdict::Kind::Out: return "out";
        case CplusVerdict::Kind::Inconclusive: return "inconclusive";
    }
    return "?";
}

CplusProbe::CplusProbe(const ShellSamples& samples)
    : n_(samples.n), radii_(samples.radii), shell_(samples.shell), lambda_(samples.lambda), grad_(samples.grad) {
    sum_f_ = grad_.colwise().sum().transpose();
    f_dot_lambda_ = grad_.cwiseProduct(lambda_).colwise().sum().transpose();
}

Eigen::VectorXd CplusProbe::margins(std::span<const double> mu) const {
    if (static_cast<int>(mu.size()) != n_) throw Error(ErrorCode::InvalidArgument, "μ has the wrong dimension");
    const Eigen::Map<const Eigen::VectorXd> m(mu.data(), n_);
    Eigen::VectorXd f_dot_mu = grad_.transpose() * m;
    return (f_dot_mu - f_dot_lambda_).cwiseQuotient((sum_f_.array() + 1.0).matrix());
}

CplusVerdict CplusProbe::classify(std::span<const double> mu, double tol) const {
    const Eigen::VectorXd q = margins(mu);
    const int nshell = static_cast<int>(radii_.size());
    CplusVerdict v;
    v.shell_min_margin.assign(static_cast<std::size_t>(nshell), kInf);
    std::vector<int> argmin(static_cast<std::size_t>(nshell), -1);
    for (int s = 0; s < q.size(); ++s) {
        const std::size_t j = static_cast<std::size_t>(shell_[static_cast<std::size_t>(s)]);
        if (q(s) < v.shell_min_margin[j]) {
            v.shell_min_margin[j] = q(s);
            argmin[j] = s;
        }
    }
    for (int j = 0; j < nshell; ++j)
        if (argmin[static_cast<std::size_t>(j)] < 0) v.shell_min_margin[static_cast<std::size_t>(j)] = kNaN;

    // out: the worst margin stays below −tol on the two outermost shells
    if (nshell >= 2) {
        const double a = v.shell_min_margin[static_cast<std::size_t>(nshell - 2)];
        const double b = v.shell_min_margin[static_cast<std::size_t>(nshell - 1)];
        if (a <= -tol && b <= -tol) {
            const int s = argmin[static_cast<std::size_t>(nshell - 1)];
            v.kind = CplusVerdict::Kind::Out;
            v.radius = radii_.back();
            v.witness.assign(lambda_.col(s).data(), lambda_.col(s).data() + n_);
            v.witness_margin = b;
            return v;
        }
    }
    // in: smallest R beyond which every sample has a positive margin
    double tail_min = kInf;
    int first = -1;
    bool any = false;
    for (int j = nshell - 1; j >= 0; --j) {
        const double m = v.shell_min_margin[static_cast<std::size_t>(j)];
        if (std::isnan(m)) continue;
        if (!(m > tol)) break;
        any = true;
        tail_min = std::min(tail_min, m);
        first = j;
    }
    if (any && first <= std::max(0, nshell - 2)) {
        v.kind = CplusVerdict::Kind::In;
        v.epsilon = 0.5 * tail_min;
        v.radius = radii_[static_cast<std::size_t>(first)];
        return v;
    }
    if (any && nshell == 1) {
        v.kind = CplusVerdict::Kind::In;
        v.epsilon = 0.5 * tail_min;
        v.radius = radii_[0];
    }
    return v;
}

CplusVerdict membership_cplus(const LevelSetHandle& ls, std::span<const double> mu, std::span<const double> radii, int directions) {
    const ShellSamples samples = sample_shells(ls, radii, directions);
    return CplusProbe(samples).classify(mu);
}

// ---------------------------------------------------------------- C̃^+ membership

std::string to_string(CtildeVerdict::Kind k) {
    switch (k) {
        case CtildeVerdict::Kind::In: return "in";
        case CtildeVerdict::Kind::Out: return "out";
        case CtildeVerdict::Kind::EqualsRn: return "equals_Rn";
    }
    return "?";
}

CtildeVerdict membership_ctilde(const RankEstimate& rank, std::span<const double> mu, double tol) {
    CtildeVerdict v;
    if (rank.planes.empty()) {
        v.kind = CtildeVerdict::Kind::EqualsRn;
        v.min_slack = kInf;
        return v;
    }
    const int n = static_cast<int>(rank.planes.front().normal.size());
    if (static_cast<int>(mu.size()) != n) throw Error(ErrorCode::InvalidArgument, "μ has the wrong dimension");
    const Eigen::Map<const Eigen::VectorXd> m(mu.data(), n);
    v.min_slack = kInf;
    for (const auto& p : rank.planes) v.min_slack = std::min(v.min_slack, p.normal.dot(m) - p.offset);
    v.planes_checked = static_cast<int>(rank.planes.size());
    v.kind = v.min_slack > tol ? CtildeVerdict::Kind::In : CtildeVerdict::Kind::Out;
    return v;
}

CtildeVerdict membership_ctilde(const LevelSetHandle& ls, std::span<const double> mu) {
    return membership_ctilde(estimate_rank(ls), mu);
}

// ---------------------------------------------------------------- dichotomy

BranchMargins branch_margins(const ShellSamples& samples, std::span<const double> mu) {
    const int n = samples.n;
    if (static_cast<int>(mu.size()) != n) throw Error(ErrorCode::InvalidArgument, "μ has the wrong dimension");
    const Eigen::Map<const Eigen::VectorXd> m(mu.data(), n);
    BranchMargins b;
    b.m1.resize(samples.size());
    b.m2.resize(samples.size());
    for (int s = 0; s < samples.size(); ++s) {
        const auto f = samples.grad.col(s);
        const double sum = f.sum();
        b.m1(s) = f.minCoeff() / sum;
        b.m2(s) = f.dot(m - samples.lambda.col(s)) / sum;
    }
    return b;
}

namespace {

void require_ctilde(const LevelSetHandle& ls, std::span<const double> mu, const RankEstimate* rank) {
    RankEstimate local;
    if (!rank) {
        local = estimate_rank(ls);
        rank = &local;
    }
    const auto v = membership_ctilde(*rank, mu);
    if (v.kind == CtildeVerdict::Kind::Out) {
        throw Error(ErrorCode::HypothesisFailed, "μ is not in the cone cut out by the degenerate supporting planes");
    }
}

// Best (δ, ε) with every sample satisfying m1 ≥ δ or m2 ≥ ε, maximizing min(δ, ε).
DichotomyWitness best_assignment(const BranchMargins& b) {
    const int count = static_cast<int>(b.m1.size());
    DichotomyWitness w;
    w.samples_checked = count;
    if (count == 0) return w;
    std::vector<int> order(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) { return b.m1(x) < b.m1(y); });

    // candidate j: samples order[0..j) take branch two, the rest branch one with δ = m1(order[j])
    double best = -kInf, best_delta = 0.0, best_eps = 0.0;
    int best_j = 0;
    double prefix_min = kInf;
    for (int j = 0; j <= count; ++j) {
        const double delta = j < count ? b.m1(order[static_cast<std::size_t>(j)]) : kInf;
        const double eps = prefix_min;
        const double value = std::min(delta, eps);
        if (value > best) {
            best = value;
            best_delta = delta;
            best_eps = eps;
            best_j = j;
        }
        if (j < count) prefix_min = std::min(prefix_min, b.m2(order[static_cast<std::size_t>(j)]));
    }
    if (!std::isfinite(best_delta)) best_delta = b.m1.maxCoeff();
    if (!std::isfinite(best_eps)) best_eps = b.m2.maxCoeff();
    w.delta = 0.5 * best_delta;
    w.epsilon = 0.5 * best_eps;
    w.branch_two = best_j;
    w.branch_one = count - best_j;
    for (int s = 0; s < count; ++s)
        if (b.m1(s) <= kMarginFloor && b.m2(s) <= kMarginFloor) ++w.violations;
    return w;
}

}  // namespace

DichotomyWitness dichotomy_witness(const LevelSetHandle& ls, std::span<const double> mu, std::span<const double> shells,
                                   int directions, const RankEstimate* rank) {
    require_ctilde(ls, mu, rank);
    const ShellSamples samples = sample_shells(ls, shells, directions);
    DichotomyWitness w = best_assignment(branch_margins(samples, mu));
    w.radius_max = shells.back();
    return w;
}

// ---------------------------------------------------------------- h_μ profile

std::vector<HProfileRow> h_mu_profile(const LevelSetHandle& ls, std::span<const double> mu, std::span<const double> radii,
                                      int directions, const RankEstimate* rank) {
    require_ctilde(ls, mu, rank);
    const int n = ls.op.n;
    const ShellSamples samples = sample_shells(ls, radii, directions);
    const BranchMargins b = branch_margins(samples, mu);
    const DichotomyWitness w = best_assignment(b);
    const double tol = level_tol(ls.sigma);

    std::vector<double> sup_on(static_cast<std::size_t>(samples.size()), kNaN);
#pragma omp parallel for schedule(dynamic, 4)
    for (int s = 0; s < samples.size(); ++s) {
        if (!(b.m2(s) >= w.epsilon)) continue;
        // segment t·λ + (1−t)·μ = μ + t·(λ − μ)
        std::vector<double> dir(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) dir[static_cast<std::size_t>(i)] = samples.lambda(i, s) - mu[static_cast<std::size_t>(i)];
        LineProbe g(ls.op, ls.sigma, mu.data(), dir.data());
        auto in_closure = [&](double t) {
            auto v = g(t);
            return v && *v >= -tol;
        };
        double t_lambda = 0.0;
        if (!in_closure(0.0)) {
            double lo = 0.0, hi = 1.0;
            for (int it = 0; it < 80; ++it) {
                const double m = 0.5 * (lo + hi);
                (in_closure(m) ? hi : lo) = m;
            }
            t_lambda = hi;
        }
        auto neg = [&](double t) {
            auto v = g(t);
            return v ? -*v : kInf;
        };
        auto [t_best, neg_best] = boost::math::tools::brent_find_minima(neg, t_lambda, 1.0, 40);
        double best = -neg_best;
        best = std::max({best, -neg(t_lambda), -neg(1.0)});
        (void)t_best;
        sup_on[static_cast<std::size_t>(s)] = best;
    }

    std::vector<HProfileRow> rows(radii.size());
    for (std::size_t j = 0; j < radii.size(); ++j) {
        rows[j].r = radii[j];
        rows[j].h = kInf;
    }
    for (int s = 0; s < samples.size(); ++s) {
        auto& row = rows[static_cast<std::size_t>(samples.shell[static_cast<std::size_t>(s)])];
        row.samples += 1;
        const double v = sup_on[static_cast<std::size_t>(s)];
        if (std::isnan(v)) continue;
        row.samples_in_branch += 1;
        row.h = std::min(row.h, v);
    }
    for (auto& row : rows)
        if (row.samples_in_branch == 0) row.h = kNaN;
    return rows;
}

// ---------------------------------------------------------------- CSV

void write_shell_csv(std::ostream& os, const ShellSamples& samples, std::optional<std::span<const double>> mu) {
    const int n = samples.n;
    os << "radius";
    for (int i = 0; i < n; ++i) os << ",lambda_" << i;
    for (int i = 0; i < n; ++i) os << ",nu_" << i;
    if (mu) os << ",m1,m2";
    os << '\n';
    BranchMargins b;
    if (mu) b = branch_margins(samples, *mu);
    os.precision(17);
    for (int s = 0; s < samples.size(); ++s) {
        os << samples.radii[static_cast<std::size_t>(samples.shell[static_cast<std::size_t>(s)])];
        const Eigen::VectorXd nu = samples.grad.col(s).normalized();
        for (int i = 0; i < n; ++i) os << ',' << samples.lambda(i, s);
        for (int i = 0; i < n; ++i) os << ',' << nu(i);
        if (mu) os << ',' << b.m1(s) << ',' << b.m2(s);
        os << '\n';
    }
}

void write_profile_csv(std::ostream& os, const std::vector<HProfileRow>& rows) {
    os << "r,h,samples,samples_in_branch\n";
    os.precision(17);
    for (const auto& r : rows) os << r.r << ',' << r.h << ',' << r.samples << ',' << r.samples_in_branch << '\n';
}

}  // namespace hlab
