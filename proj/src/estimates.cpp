#include "hlab/estimates.hpp"

#include "hlab/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

namespace hlab {

namespace {

using Fields = std::vector<CField>;

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

constexpr double kInf = std::numeric_limits<double>::infinity();
const cplx kI(0.0, 1.0);

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

}  // namespace

// ---------------------------------------------------------------- second order

EstimateRow estimate_row(double max_dd_u, double max_grad_u, double osc_u) {
    if (!finite_nonneg(max_dd_u) || !finite_nonneg(max_grad_u) || !finite_nonneg(osc_u))
        throw Error(ErrorCode::InvalidArgument, "estimate entries must be finite and nonnegative");
    return {max_dd_u, max_grad_u, osc_u, max_dd_u / (1.0 + max_grad_u * max_grad_u)};
}

EstimateReport second_order_report(std::span<const SolutionReport> solutions) {
    std::vector<EstimateRow> rows;
    rows.reserve(solutions.size());
    for (const auto& s : solutions) rows.push_back(estimate_row(s.max_dd_u, s.max_grad_u, s.osc_u));
    return second_order_report(std::span<const EstimateRow>(rows));
}

EstimateReport second_order_report(std::span<const EstimateRow> rows) {
    if (rows.empty()) throw Error(ErrorCode::EmptyFamily, "no solutions to report on");
    EstimateReport r;
    r.rows.assign(rows.begin(), rows.end());
    for (const auto& row : rows) {
        r.max_dd_u = std::max(r.max_dd_u, row.max_dd_u);
        r.max_grad_u = std::max(r.max_grad_u, row.max_grad_u);
        r.osc_u = std::max(r.osc_u, row.osc_u);
        r.ratio_HMW = std::max(r.ratio_HMW, row.ratio_HMW);
    }
    const double ref = rows.front().ratio_HMW;
    r.ratio_growth = r.ratio_HMW == 0.0 ? 0.0 : (ref > 0.0 ? r.ratio_HMW / ref : kInf);

    // log max_dd = a + C2·osc by least squares
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (const auto& row : rows) {
        if (!(row.max_dd_u > 0.0)) continue;
        const double y = std::log(row.max_dd_u);
        sx += row.osc_u;
        sy += y;
        sxx += row.osc_u * row.osc_u;
        sxy += row.osc_u * y;
        ++m;
    }
    r.fit_points = m;
    if (m > 0) {
        const double det = m * sxx - sx * sx;
        if (m >= 2 && det > 1e-14 * (1.0 + m * sxx)) {
            r.C2_fit = (m * sxy - sx * sy) / det;
            r.C1_fit = std::exp((sy - r.C2_fit * sx) / m);
        } else {
            r.C1_fit = std::exp(sy / m);
        }
    }
    return r;
}

// ---------------------------------------------------------------- CNS

namespace {

std::optional<double> value_at(const OperatorSpec& op, const MatC& X) {
    Eigen::SelfAdjointEigenSolver<MatC> es(X, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd ev = es.eigenvalues();
    return try_value(op, std::span<const double>(ev.data(), static_cast<std::size_t>(ev.size())));
}

// Central second difference at step h, or nullopt if a stencil point leaves the domain.
std::optional<double> second_difference(const OperatorSpec& op, const MatC& X, const MatC& B, double f0, double h) {
    const auto fp = value_at(op, X + h * B);
    const auto fm = value_at(op, X - h * B);
    if (!fp || !fm) return std::nullopt;
    return (*fp - 2.0 * f0 + *fm) / (h * h);
}

}  // namespace

CnsSample cns_sample(const OperatorSpec& op, std::span<const double> lambda, const MatC& B) {
    const int n = op.n;
    if (static_cast<int>(lambda.size()) != n || B.rows() != n || B.cols() != n)
        throw Error(ErrorCode::InvalidArgument, "λ or B has the wrong dimension");
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(lambda[sz(i)] - lambda[sz(j)]) <= 1e-8)
                throw Error(ErrorCode::DegenerateSpectrum, "λ has tied entries");
    const MatC Bh = 0.5 * (B + B.adjoint());
    MatC X = MatC::Zero(n, n);
    double lnorm = 0.0;
    for (int i = 0; i < n; ++i) {
        X(i, i) = lambda[sz(i)];
        lnorm = std::max(lnorm, std::abs(lambda[sz(i)]));
    }
    const auto f0 = try_value(op, lambda);
    if (!f0) throw Error(ErrorCode::OutsideDomain, "λ is not inside the operator domain");

    // second differences at h, h/2, h/4 with two Richardson levels
    const double bnorm = std::max(Bh.cwiseAbs().maxCoeff(), 1e-300);
    double h = 1e-2 * (1.0 + lnorm) / bnorm;
    std::optional<double> d[3];
    bool ok = false;
    for (int tries = 0; tries < 60 && !ok; ++tries, h *= 0.5) {
        ok = true;
        for (int r = 0; r < 3 && ok; ++r) {
            d[r] = second_difference(op, X, Bh, *f0, std::ldexp(h, -r));
            ok = d[r].has_value();
        }
    }
    if (!ok) throw Error(ErrorCode::OutsideDomain, "no admissible difference step");
    const double r1 = (4.0 * *d[1] - *d[0]) / 3.0, r2 = (4.0 * *d[2] - *d[1]) / 3.0;

    CnsSample s;
    s.left = -(16.0 * r2 - r1) / 15.0;
    const Eigen::VectorXd f = eval_grad(op, lambda);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            s.right += (f(i) - f(j)) / (lambda[sz(j)] - lambda[sz(i)]) * std::norm(Bh(i, j));
        }
    s.scale = 1.0 + std::abs(s.left) + std::abs(s.right);
    return s;
}

CnsReport cns_inequality_check(const OperatorSpec& op, int trials, std::uint64_t seed, bool keep_rows, double tolerance) {
    const int n = op.n;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    CnsReport rep;
    rep.tolerance = tolerance;
    rep.min_margin = kInf;
    rep.min_relative_margin = kInf;
    for (int t = 0; t < trials; ++t) {
        ++rep.trials;
        const std::vector<double> lambda = sample_inside(op, rng, 10.0, 1e-2);
        MatC B(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) B(i, j) = cplx(gauss(rng), gauss(rng));
        B = 0.5 * (B + B.adjoint());
        CnsSample s;
        try {
            s = cns_sample(op, lambda, B);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateSpectrum) throw;
            ++rep.skipped_degenerate;
            continue;
        }
        ++rep.evaluated;
        const double margin = s.margin();
        if (margin < -tolerance * s.scale) ++rep.violations;
        rep.min_margin = std::min(rep.min_margin, margin);
        rep.min_relative_margin = std::min(rep.min_relative_margin, margin / s.scale);
        if (keep_rows) rep.rows.push_back({lambda, s.left, s.right, margin, s.scale});
    }
    if (rep.evaluated == 0) rep.min_margin = rep.min_relative_margin = 0.0;
    return rep;
}

// ---------------------------------------------------------------- χ as a function of ζ

namespace {

std::vector<cplx> torsion_at(const Problem& pr, std::size_t p) {
    const auto& T = pr.torsion();
    std::vector<cplx> t(T.size());
    for (std::size_t q = 0; q < T.size(); ++q) t[q] = T[q][p];
    return t;
}

// χ̃ = χ̃₀ + cẼ at grid point p for the Gauduchon problem.
MatC chi_tilde_at(const Problem& pr, std::size_t p, std::span<const cplx> zeta) {
    const MatC g = pr.metric().at(p);
    MatC ct = gauduchon_chi_tilde0(g, pr.chi().omega0->at(p));
    if (pr.chi().c != 0.0) ct += pr.chi().c * gauduchon_E(g, torsion_at(pr, p), zeta);
    return ct;
}

}  // namespace

ChiFunction chi_function(const Problem& problem) {
    switch (problem.chi().kind) {
    case ChiSpec::Kind::Constant: {
        const MatC x = problem.chi().constant;
        return [x](std::size_t, std::span<const cplx>) { return x; };
    }
    case ChiSpec::Kind::ZDependent:
        return [problem](std::size_t p, std::span<const cplx>) { return problem.chi().field.at(p); };
    case ChiSpec::Kind::Gauduchon:
        return [problem](std::size_t p, std::span<const cplx> zeta) {
            return chi_from_tilde(problem.metric().at(p), chi_tilde_at(problem, p, zeta));
        };
    }
    throw Error(ErrorCode::InvalidArgument, "unknown χ kind");
}

// ---------------------------------------------------------------- (A3)

namespace {

cplx g_inner(const MatC& g, const std::vector<cplx>& x, const std::vector<cplx>& y) {
    cplx s = 0.0;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index j = 0; j < g.cols(); ++j) s += g(i, j) * x[sz(static_cast<int>(i))] * std::conj(y[sz(static_cast<int>(j))]);
    return s;
}

void normalize_g(const MatC& g, std::vector<cplx>& x) {
    const double nrm = std::sqrt(std::max(g_inner(g, x, x).real(), 1e-300));
    for (auto& v : x) v /= nrm;
}

}  // namespace

A3Verdict a3_check(const ChiFunction& chi, const MetricField& metric, int samples, std::uint64_t seed, double zeta_box,
                   double tolerance) {
    const int n = metric.n();
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "orthogonal pairs need n ≥ 2");
    const std::size_t N = metric.grid().size();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> point(0, N - 1);
    std::uniform_real_distribution<double> box(-zeta_box, zeta_box);
    std::normal_distribution<double> gauss;

    A3Verdict v;
    v.max_form = -kInf;
    for (int s = 0; s < samples; ++s) {
        const std::size_t p = point(rng);
        const MatC g = metric.at(p);
        std::vector<cplx> zeta(sz(n)), xi(sz(n)), eta(sz(n));
        for (int i = 0; i < n; ++i) {
            zeta[sz(i)] = cplx(box(rng), box(rng));
            xi[sz(i)] = cplx(gauss(rng), gauss(rng));
            eta[sz(i)] = cplx(gauss(rng), gauss(rng));
        }
        normalize_g(g, xi);
        const cplx proj = g_inner(g, eta, xi);
        for (int i = 0; i < n; ++i) eta[sz(i)] -= proj * xi[sz(i)];
        normalize_g(g, eta);

        double zn = 0.0;
        for (auto z : zeta) zn = std::max(zn, std::abs(z));
        const double h = 1e-4 * (1.0 + zn);
        // q(w) = Σ χ_{ij̄}(ζ + wη) ξ_i ξ̄_j; the form is ∂_w∂_w̄ q = ¼Δq
        const auto q = [&](cplx w) {
            std::vector<cplx> z = zeta;
            for (int i = 0; i < n; ++i) z[sz(i)] += w * eta[sz(i)];
            const MatC X = chi(p, z);
            cplx acc = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) acc += X(i, j) * xi[sz(i)] * std::conj(xi[sz(j)]);
            return acc.real();
        };
        const double q0 = q(0.0);
        const double lap = (q(h) + q(-h) + q(cplx(0.0, h)) + q(cplx(0.0, -h)) - 4.0 * q0) / (h * h);
        const double form = 0.25 * lap;
        ++v.samples;
        if (form > v.max_form) {
            v.max_form = form;
            v.witness_point = p;
            v.witness_zeta = zeta;
            v.witness_xi = xi;
            v.witness_eta = eta;
        }
    }
    if (v.samples == 0) v.max_form = 0.0;
    v.holds = v.samples > 0 && v.max_form < -tolerance;
    v.c0 = v.holds ? -v.max_form : 0.0;
    return v;
}

// ---------------------------------------------------------------- (A5)

std::optional<int> analytic_rank(const OperatorSpec& op) {
    switch (op.family) {
    case Family::LogRhoK: return op.k;
    case Family::SigmaKRoot: return op.n - op.k + 1;
    default: return std::nullopt;
    }
}

namespace {

// ∂X/∂ζ_a (Wirtinger) of a function that is real-linear in ζ up to a constant; forward
// differences are exact there apart from round-off.
template <class Fn>
std::vector<MatC> zeta_derivatives(Fn&& fn, int n) {
    constexpr double h = 1e-3;
    std::vector<MatC> out;
    std::vector<cplx> z(sz(n), 0.0);
    const MatC x0 = fn(z);
    for (int a = 0; a < n; ++a) {
        z[sz(a)] = h;
        const MatC xr = fn(z);
        z[sz(a)] = cplx(0.0, h);
        const MatC xi = fn(z);
        z[sz(a)] = 0.0;
        out.push_back(((xr - x0) - kI * (xi - x0)) / (2.0 * h));
    }
    return out;
}

// χ̃ at one point with the Cholesky frame and frame torsion computed once.
struct TildeAtPoint {
    int n;
    double c;
    MatC g, L, M, base;
    std::vector<cplx> Tf;

    TildeAtPoint(const Problem& pr, std::size_t p) : n(pr.n()), c(pr.chi().c), g(pr.metric().at(p)) {
        L = MatC(Eigen::LLT<MatC>(g).matrixL());
        M = L.inverse();
        base = gauduchon_chi_tilde0(g, pr.chi().omega0->at(p));
        const auto T = torsion_at(pr, p);
        Tf.assign(sz(n * n * n), 0.0);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int cc = 0; cc < n; ++cc) {
                    cplx s = 0.0;
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < n; ++j)
                            for (int k = 0; k < n; ++k) s += M(a, i) * M(b, j) * T[sz(idx3(n, i, j, k))] * L(k, cc);
                    Tf[sz(idx3(n, a, b, cc))] = s;
                }
    }
    MatC operator()(std::span<const cplx> du) const {
        if (c == 0.0) return base;
        std::vector<cplx> z(sz(n), 0.0);
        for (int a = 0; a < n; ++a)
            for (int i = 0; i < n; ++i) z[sz(a)] += M(a, i) * du[sz(i)];
        return base + c * (L * gauduchon_E_frame(n, Tf, z) * L.adjoint());
    }
};

// Fields K(a)_{ij̄} = ∂X_{ij̄}/∂ζ_a, stored at idx3(n, a, i, j), and their ∇_k̄ at idx4(n, a, k, i, j).
struct ZetaJet {
    Fields K, Y;
};

void covariant_dbar(const Problem& pr, const Fields& gamma, ZetaJet& J) {
    const int n = pr.n();
    const auto& grid = pr.grid();
    const std::size_t N = grid.size();
    J.Y.assign(sz(n * n * n * n), CField(N, cplx(0.0)));
    for (int a = 0; a < n; ++a)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const auto dbar = grid.d_all(J.K[sz(idx3(n, a, i, j))], true);
                for (int k = 0; k < n; ++k) {
                    auto& y = J.Y[sz(idx4(n, a, k, i, j))];
                    y = dbar[sz(k)];
                    for (int m = 0; m < n; ++m) {
                        const auto& G = gamma[sz(idx3(n, k, j, m))];
                        const auto& K = J.K[sz(idx3(n, a, i, m))];
                        for (std::size_t p = 0; p < N; ++p) y[p] -= std::conj(G[p]) * K[p];
                    }
                }
            }
}

// ζ-jets of χ (through χ = (tr χ̃/(n−1))g − χ̃) and of χ̃ itself.
std::pair<ZetaJet, ZetaJet> gauduchon_jets(const Problem& pr, const Fields& gamma) {
    const int n = pr.n();
    const std::size_t N = pr.grid().size();
    ZetaJet Jc, Jt;
    Jc.K.assign(sz(n * n * n), CField(N, cplx(0.0)));
    Jt.K.assign(sz(n * n * n), CField(N, cplx(0.0)));
#pragma omp parallel for
    for (std::size_t p = 0; p < N; ++p) {
        const TildeAtPoint tilde(pr, p);
        const auto dc = zeta_derivatives([&](std::span<const cplx> z) { return chi_from_tilde(tilde.g, tilde(z)); }, n);
        const auto dt = zeta_derivatives(tilde, n);
        for (int a = 0; a < n; ++a)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    Jc.K[sz(idx3(n, a, i, j))][p] = dc[sz(a)](i, j);
                    Jt.K[sz(idx3(n, a, i, j))][p] = dt[sz(a)](i, j);
                }
    }
    covariant_dbar(pr, gamma, Jc);
    covariant_dbar(pr, gamma, Jt);
    return {std::move(Jc), std::move(Jt)};
}

// Frame version at p: e_b = Σ U_bi ∂_i, ζ-index through U^{-1}; Y[α][b] is the derivative along ē_b.
struct FrameJet {
    std::vector<MatC> K;
    std::vector<std::vector<MatC>> Y;
};

FrameJet to_frame(const ZetaJet& J, int n, std::size_t p, const MatC& U, const MatC& Uinv) {
    FrameJet F;
    for (int al = 0; al < n; ++al) {
        MatC K = MatC::Zero(n, n);
        std::vector<MatC> Y(sz(n), MatC::Zero(n, n));
        for (int a = 0; a < n; ++a) {
            const cplx w = Uinv(a, al);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    K(i, j) += w * J.K[sz(idx3(n, a, i, j))][p];
                    for (int k = 0; k < n; ++k) {
                        const cplx y = w * J.Y[sz(idx4(n, a, k, i, j))][p];
                        for (int bb = 0; bb < n; ++bb) Y[sz(bb)](i, j) += std::conj(U(bb, k)) * y;
                    }
                }
        }
        F.K.push_back(U * K * U.adjoint());
        for (auto& y : Y) y = U * y * U.adjoint();
        F.Y.push_back(std::move(Y));
    }
    return F;
}

}  // namespace

A5Report a5_check(const Problem& problem, const RField& u, int samples, std::uint64_t seed) {
    const int n = problem.n();
    const auto& op = problem.op();
    if (problem.chi().kind != ChiSpec::Kind::Gauduchon) throw Error(ErrorCode::InvalidArgument, "a5_check needs a Gauduchon χ");
    if (op.family != Family::LogRhoK || op.k != n - 1) throw Error(ErrorCode::InvalidArgument, "a5_check needs log ρ_{n−1}");
    const auto& metric = problem.metric();
    const std::size_t N = problem.grid().size();
    const Fields gamma = christoffel(metric);

    const auto [Jc, Jt] = gauduchon_jets(problem, gamma);

    const Form11Field gf = assemble_g(problem, u);
    const int r0 = *analytic_rank(op);
    A5Report rep;
    rep.alpha_max = n - r0;

    std::vector<std::size_t> pts;
    if (samples <= 0 || static_cast<std::size_t>(samples) >= N) {
        for (std::size_t p = 0; p < N; ++p) pts.push_back(p);
    } else {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> point(0, N - 1);
        for (int s = 0; s < samples; ++s) pts.push_back(point(rng));
    }

    for (std::size_t p : pts) {
        const MatC g = metric.at(p);
        const Eigen::LLT<MatC> llt(g);
        const MatC W = MatC(llt.matrixL()).inverse();
        MatC A = W * gf.at(p) * W.adjoint();
        A = 0.5 * (A + A.adjoint());
        Eigen::SelfAdjointEigenSolver<MatC> es(A);
        // descending order
        MatC V(n, n);
        std::vector<double> lam(sz(n));
        for (int c = 0; c < n; ++c) {
            V.col(c) = es.eigenvectors().col(n - 1 - c);
            lam[sz(c)] = es.eigenvalues()(n - 1 - c);
        }
        const MatC U = V.adjoint() * W;
        const MatC Uinv = U.inverse();
        const Eigen::VectorXd f = eval_grad(op, lam);

        const FrameJet Fc = to_frame(Jc, n, p, U, Uinv);
        const FrameJet Ft = to_frame(Jt, n, p, U, Uinv);

        for (int al = 0; al < rep.alpha_max; ++al) {
            cplx s = 0.0;
            double sq = 0.0;
            for (int i = 0; i < n; ++i) {
                s += f(i) * Fc.Y[sz(al)][0](i, i);
                sq += f(i) * std::norm(Fc.K[sz(al)](i, 0));
            }
            const double left = std::abs(s) + sq;
            rep.max_left = std::max(rep.max_left, left);
            rep.max_ratio = std::max(rep.max_ratio, left / (lam[0] * f(al)));
        }

        // Σ F^{iī} χ_{iī1̄,ζ₁} against Σ_j χ̃_{jj̄1̄,ζ₁}/η_j
        double total = 0.0;
        for (double l : lam) total += l;
        cplx direct = 0.0, reduced = 0.0;
        for (int i = 0; i < n; ++i) direct += f(i) * Fc.Y[0][0](i, i);
        for (int j = 0; j < n; ++j) reduced += Ft.Y[0][0](j, j) / (total - lam[sz(j)]);
        rep.identity_max_diff = std::max(rep.identity_max_diff, std::abs(direct - reduced) / (1.0 + std::abs(direct)));
        rep.max_dropped_term = std::max(rep.max_dropped_term, std::abs(Ft.Y[0][0](0, 0)) / (total - lam[0]));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) rep.tilde_zeta_j = std::max(rep.tilde_zeta_j, std::abs(Ft.K[sz(j)](i, j)));
            rep.tilde_bar_zeta_i = std::max(rep.tilde_bar_zeta_i, std::abs(Ft.Y[sz(i)][sz(i)](i, i)));
        }
        ++rep.samples;
    }
    return rep;
}

// ---------------------------------------------------------------- subsolutions

SubsolutionReport subsolution_check(const Problem& problem, const RField& ubar, const SubsolutionOptions& opts) {
    const int n = problem.n();
    const auto& psi = problem.psi();
    const std::size_t N = psi.size();
    if (ubar.size() != N) throw Error(ErrorCode::InvalidArgument, "ū size does not match the grid");
    const EigenField mu = eigenvalues_wrt_metric(assemble_g(problem, ubar), problem.metric());

    // bucket the ψ values, each bucket represented by its largest σ
    std::vector<double> uniq(psi.begin(), psi.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    const int levels = std::max(1, opts.max_levels);
    const double lo = uniq.front(), hi = uniq.back();
    const auto bucket_of = [&](double s) -> int {
        if (static_cast<int>(uniq.size()) <= levels)
            return static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), s) - uniq.begin());
        const int b = static_cast<int>(std::floor((s - lo) / (hi - lo) * levels));
        return std::clamp(b, 0, levels - 1);
    };
    const int nb = std::min(levels, static_cast<int>(uniq.size()));
    SubsolutionReport rep;
    rep.levels.assign(sz(nb), -kInf);
    for (double s : uniq) rep.levels[sz(bucket_of(s))] = std::max(rep.levels[sz(bucket_of(s))], s);

    const std::vector<double> radii = opts.radii.empty() ? geometric_ladder(10.0, 1e3, 6) : opts.radii;
    struct Level {
        std::optional<CplusProbe> probe;
        RankEstimate rank;
    };
    std::vector<Level> lv(sz(nb));
    for (int b = 0; b < nb; ++b) {
        if (!std::isfinite(rep.levels[sz(b)])) continue;
        const auto ls = LevelSetHandle::create(problem.op(), rep.levels[sz(b)]);
        lv[sz(b)].probe.emplace(sample_shells(ls, radii, opts.directions));
        lv[sz(b)].rank = estimate_rank(ls);
    }

    rep.cplus.resize(N);
    rep.ctilde.resize(N);
    std::map<std::pair<int, std::vector<double>>, std::pair<CplusVerdict::Kind, CtildeVerdict::Kind>> cache;
    bool seen_out = false;
    for (std::size_t p = 0; p < N; ++p) {
        const int b = bucket_of(psi[p]);
        std::vector<double> m(sz(n));
        for (int i = 0; i < n; ++i) m[sz(i)] = mu(p, i);
        auto key = std::make_pair(b, m);
        auto it = cache.find(key);
        if (it == cache.end()) {
            const auto cp = lv[sz(b)].probe->classify(m).kind;
            const auto ct = membership_ctilde(lv[sz(b)].rank, m).kind;
            it = cache.emplace(std::move(key), std::make_pair(cp, ct)).first;
        }
        const auto [cp, ct] = it->second;
        rep.cplus[p] = cp;
        rep.ctilde[p] = ct;
        switch (cp) {
        case CplusVerdict::Kind::In: ++rep.cplus_counts.in; break;
        case CplusVerdict::Kind::Out: ++rep.cplus_counts.out; break;
        case CplusVerdict::Kind::Inconclusive: ++rep.cplus_counts.inconclusive; break;
        }
        if (ct == CtildeVerdict::Kind::Out) ++rep.ctilde_counts.out;
        else ++rep.ctilde_counts.in;
        if (!seen_out && (cp == CplusVerdict::Kind::Out || ct == CtildeVerdict::Kind::Out)) {
            seen_out = true;
            rep.first_out = p;
        }
    }
    return rep;
}

}  // namespace hlab
