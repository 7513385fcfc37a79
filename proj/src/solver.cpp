#include "hlab/solver.hpp"

#include "hlab/errors.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/IterativeSolvers>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

namespace hlab {

namespace {

using Fields = std::vector<CField>;

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

MatC gather(const Fields& f, int n, std::size_t p) {
    MatC m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = f[sz(i * n + j)][p];
    return m;
}

void scatter(Fields& f, const MatC& m, std::size_t p) {
    const auto n = static_cast<int>(m.rows());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) f[sz(i * n + j)][p] = m(i, j);
}

Fields alloc(std::size_t count, std::size_t N) { return Fields(count, CField(N, cplx(0.0))); }

double mean(const RField& f) { return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size()); }

double norm_inf(const RField& f) {
    double v = 0.0;
    for (double x : f) v = std::max(v, std::abs(x));
    return v;
}

double norm_l2(const RField& f) {
    double s = 0.0;
    for (double x : f) s += x * x;
    return std::sqrt(s / static_cast<double>(f.size()));
}

double hermitian_defect(const MatC& m) { return (m - m.adjoint()).cwiseAbs().maxCoeff(); }

// Whitened spectral data at one point: λ descending and P = Σ f_p v_p v_p*.
struct PointSpectrum {
    double lambda[3] = {0.0, 0.0, 0.0};
    bool inside = false;
    double value = 0.0;
    MatC P;
};

PointSpectrum spectrum(const OperatorSpec& op, const MatC& A, bool want_derivative) {
    const auto n = static_cast<int>(A.rows());
    PointSpectrum out;
    if (n == 2) {
        const double a = A(0, 0).real(), d = A(1, 1).real();
        const cplx b = 0.5 * (A(0, 1) + std::conj(A(1, 0)));
        const double mid = 0.5 * (a + d), r = std::hypot(0.5 * (a - d), std::abs(b));
        out.lambda[0] = mid + r;
        out.lambda[1] = mid - r;
        const auto v = try_value(op, std::span<const double>(out.lambda, 2));
        if (!v) return out;
        out.inside = true;
        out.value = *v;
        if (!want_derivative) return out;
        const Eigen::VectorXd f = eval_grad(op, std::span<const double>(out.lambda, 2));
        out.P = MatC::Identity(2, 2) * f(1);
        if (r > 0.0) {
            // columns of A − λ₂ span the top eigenvector
            Eigen::Vector2cd c0(a - out.lambda[1], std::conj(b)), c1(b, d - out.lambda[1]);
            Eigen::Vector2cd v1 = c0.squaredNorm() >= c1.squaredNorm() ? c0 : c1;
            v1.normalize();
            out.P += (f(0) - f(1)) * (v1 * v1.adjoint());
        }
        return out;
    }
    Eigen::SelfAdjointEigenSolver<MatC> es(A, want_derivative ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    for (int i = 0; i < n; ++i) out.lambda[i] = es.eigenvalues()(n - 1 - i);
    const auto v = try_value(op, std::span<const double>(out.lambda, sz(n)));
    if (!v) return out;
    out.inside = true;
    out.value = *v;
    if (!want_derivative) return out;
    const Eigen::VectorXd f = eval_grad(op, std::span<const double>(out.lambda, sz(n)));
    out.P = MatC::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const auto vi = es.eigenvectors().col(n - 1 - i);
        out.P += f(i) * (vi * vi.adjoint());
    }
    return out;
}

MatC whitening_of(const MatC& g) {
    Eigen::LLT<MatC> llt(g);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::MetricDegenerate, "metric is not positive definite");
    MatC L = llt.matrixL();
    return L.inverse();
}

}  // namespace

// ---------------------------------------------------------------- ChiSpec

ChiSpec ChiSpec::make_constant(const MatC& x) {
    if (x.rows() != x.cols() || x.rows() < 2 || x.rows() > 3) throw Error(ErrorCode::InvalidArgument, "χ must be a 2×2 or 3×3 matrix");
    if (hermitian_defect(x) > 1e-12) throw Error(ErrorCode::InvalidArgument, "χ must be Hermitian");
    ChiSpec c;
    c.kind = Kind::Constant;
    c.constant = x;
    return c;
}

ChiSpec ChiSpec::z_dependent(Form11Field x) {
    if (x.hermitian_defect() > 1e-12) throw Error(ErrorCode::InvalidArgument, "χ must be Hermitian");
    ChiSpec c;
    c.kind = Kind::ZDependent;
    c.field = std::move(x);
    return c;
}

ChiSpec ChiSpec::gauduchon(const MetricField& omega0, double c) {
    ChiSpec s;
    s.kind = Kind::Gauduchon;
    s.omega0 = std::make_shared<const MetricField>(omega0);
    s.c = c;
    return s;
}

std::string ChiSpec::name() const {
    switch (kind) {
    case Kind::Constant: return "constant";
    case Kind::ZDependent: return "z_dependent";
    case Kind::Gauduchon: return "gauduchon";
    }
    return "?";
}

std::string to_string(Normalization n) { return n == Normalization::MeanZero ? "mean_zero" : "sup_zero"; }

// ---------------------------------------------------------------- Gauduchon χ

MatC gauduchon_E_frame(int n, std::span<const cplx> T, std::span<const cplx> z) {
    const auto t = [&](int a, int b, int c) { return T[sz(idx3(n, a, b, c))]; };
    MatC E = MatC::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        cplx s = 0.0;
        for (int p = 0; p < n; ++p)
            for (int l = 0; l < n; ++l) {
                if (p == i || l == i) continue;
                s += z[sz(p)] * std::conj(t(p, l, l)) + std::conj(z[sz(p)]) * t(p, l, l);
            }
        E(i, i) = 0.5 * s;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            cplx a = 0.0;
            for (int l = 0; l < n; ++l) {
                if (l != i) a += z[sz(i)] * std::conj(t(j, l, l)) + z[sz(l)] * std::conj(t(l, j, i));
                if (l != j) a += std::conj(z[sz(j)]) * t(i, l, l) + std::conj(z[sz(l)]) * t(l, i, j);
            }
            E(i, j) = -0.5 * a;
        }
    }
    return E;
}

MatC gauduchon_E(const MatC& g, std::span<const cplx> T, std::span<const cplx> du) {
    const auto n = static_cast<int>(g.rows());
    Eigen::LLT<MatC> llt(g);
    const MatC L = llt.matrixL();
    const MatC M = L.inverse();
    // frame e_a = Σ_i M_ai ∂_i, so ∂_i = Σ_a L_ia e_a
    std::vector<cplx> z(sz(n), 0.0), Tf(sz(n * n * n), 0.0);
    for (int a = 0; a < n; ++a)
        for (int i = 0; i < n; ++i) z[sz(a)] += M(a, i) * du[sz(i)];
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c) {
                cplx s = 0.0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        for (int k = 0; k < n; ++k) s += M(a, i) * M(b, j) * T[sz(idx3(n, i, j, k))] * L(k, c);
                Tf[sz(idx3(n, a, b, c))] = s;
            }
    const MatC Ef = gauduchon_E_frame(n, Tf, z);
    return L * Ef * L.adjoint();
}

MatC gauduchon_chi_tilde0(const MatC& g, const MatC& omega0) {
    const auto n = static_cast<double>(g.rows());
    const double ratio = (omega0.determinant() / g.determinant()).real();
    MatC x = (n - 1.0) * ratio * (g * omega0.inverse() * g);
    return 0.5 * (x + x.adjoint());
}

MatC chi_from_tilde(const MatC& g, const MatC& chi_tilde) {
    const auto n = static_cast<double>(g.rows());
    const double tr = g.inverse().cwiseProduct(chi_tilde.transpose()).sum().real();
    return (tr / (n - 1.0)) * g - chi_tilde;
}

Form11Field build_gauduchon_chi(const MetricField& omega0, const MetricField& metric, const RField& u, double c) {
    const auto& grid = metric.grid();
    if (&omega0.grid() != &grid) throw Error(ErrorCode::InvalidArgument, "ω₀ and the metric live on different grids");
    const int n = metric.n();
    const std::size_t N = grid.size();
    RealSpectral rs(grid);
    const auto du = holomorphic_gradient(rs, rs.forward(u));
    const Fields T = torsion(christoffel(metric), n);
    Form11Field out{n, alloc(sz(n * n), N)};
#pragma omp parallel for
    for (std::size_t p = 0; p < N; ++p) {
        const MatC g = metric.at(p);
        MatC ct = gauduchon_chi_tilde0(g, omega0.at(p));
        if (c != 0.0) {
            std::vector<cplx> t(sz(n * n * n)), d(sz(n));
            for (std::size_t q = 0; q < t.size(); ++q) t[q] = T[q][p];
            for (int i = 0; i < n; ++i) d[sz(i)] = du[sz(i)][p];
            ct += c * gauduchon_E(g, t, d);
        }
        scatter(out.X, chi_from_tilde(g, ct), p);
    }
    return out;
}

// ---------------------------------------------------------------- Problem

Problem Problem::create(const MetricField& metric, const OperatorSpec& op, ChiSpec chi, RField psi, Normalization normalization) {
    const auto& grid = metric.grid();
    const int n = metric.n();
    const std::size_t N = grid.size();
    if (op.n != n) throw Error(ErrorCode::InvalidArgument, "operator dimension does not match the grid");
    if (psi.size() != N) throw Error(ErrorCode::InvalidArgument, "ψ size does not match the grid");

    Problem pr;
    pr.metric_ = std::make_shared<const MetricField>(metric);
    pr.op_ = op;
    pr.normalization_ = normalization;
    pr.spectral_ = std::make_shared<RealSpectral>(grid);

    pr.linv_ = alloc(sz(n * n), N);
#pragma omp parallel for
    for (std::size_t p = 0; p < N; ++p) scatter(pr.linv_, whitening_of(metric.at(p)), p);

    pr.chi0_ = Form11Field{n, alloc(sz(n * n), N)};
    switch (chi.kind) {
    case ChiSpec::Kind::Constant:
        if (chi.constant.rows() != n) throw Error(ErrorCode::InvalidArgument, "χ dimension does not match the grid");
        for (std::size_t p = 0; p < N; ++p) scatter(pr.chi0_.X, chi.constant, p);
        break;
    case ChiSpec::Kind::ZDependent:
        if (chi.field.n != n || chi.field.X.size() != sz(n * n) || chi.field.X[0].size() != N)
            throw Error(ErrorCode::InvalidArgument, "χ field does not match the grid");
        pr.chi0_ = chi.field;
        break;
    case ChiSpec::Kind::Gauduchon:
        if (!chi.omega0 || &chi.omega0->grid() != &grid) throw Error(ErrorCode::InvalidArgument, "ω₀ must live on the problem grid");
#pragma omp parallel for
        for (std::size_t p = 0; p < N; ++p) {
            const MatC g = metric.at(p);
            scatter(pr.chi0_.X, chi_from_tilde(g, gauduchon_chi_tilde0(g, chi.omega0->at(p))), p);
        }
        pr.torsion_ = hlab::torsion(christoffel(metric), n);
        pr.gradient_dependent_ = chi.c != 0.0 && n >= 3;
        if (pr.gradient_dependent_) {
            const double cc = chi.c;
            pr.grad_a_ = alloc(sz(n * n * n), N);
            pr.grad_b_ = alloc(sz(n * n * n), N);
#pragma omp parallel for
            for (std::size_t p = 0; p < N; ++p) {
                const MatC g = metric.at(p);
                std::vector<cplx> t(sz(n * n * n));
                for (std::size_t q = 0; q < t.size(); ++q) t[q] = pr.torsion_[q][p];
                for (int a = 0; a < n; ++a) {
                    std::vector<cplx> z(sz(n), 0.0);
                    z[sz(a)] = 1.0;
                    const MatC re = cc * chi_from_tilde(g, gauduchon_E(g, t, z));
                    z[sz(a)] = cplx(0.0, 1.0);
                    const MatC im = cc * chi_from_tilde(g, gauduchon_E(g, t, z));
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < n; ++j) {
                            pr.grad_a_[sz(idx3(n, i, j, a))][p] = 0.5 * (re(i, j) - cplx(0.0, 1.0) * im(i, j));
                            pr.grad_b_[sz(idx3(n, i, j, a))][p] = 0.5 * (re(i, j) + cplx(0.0, 1.0) * im(i, j));
                        }
                }
            }
        }
        break;
    }
    pr.chi_ = std::move(chi);
    return pr.with_psi(std::move(psi));
}

Problem Problem::with_psi(RField psi) const {
    if (psi.size() != grid().size()) throw Error(ErrorCode::InvalidArgument, "ψ size does not match the grid");
    const double lo = sup_boundary(op_), hi = sup_interior(op_);
    for (double v : psi) {
        if (!std::isfinite(v) || !(v > lo) || !(v < hi))
            throw Error(ErrorCode::HypothesisFailed, "ψ = " + std::to_string(v) + " is not strictly between sup over ∂Γ (" +
                                                         std::to_string(lo) + ") and sup over Γ (" + std::to_string(hi) + ")");
    }
    Problem out = *this;
    out.psi_ = std::move(psi);
    return out;
}

Form11Field Problem::chi_gradient(const std::vector<CField>& dv) const {
    const int n = this->n();
    const std::size_t N = grid().size();
    Form11Field out{n, alloc(sz(n * n), N)};
    if (!gradient_dependent_) return out;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            auto& x = out(i, j);
            for (int a = 0; a < n; ++a) {
                const auto& A = grad_a_[sz(idx3(n, i, j, a))];
                const auto& B = grad_b_[sz(idx3(n, i, j, a))];
                const auto& d = dv[sz(a)];
                for (std::size_t p = 0; p < N; ++p) x[p] += A[p] * d[p] + B[p] * std::conj(d[p]);
            }
        }
    return out;
}

// ---------------------------------------------------------------- evaluation

std::vector<CField> holomorphic_gradient(const RealSpectral& rs, const CField& spec) {
    const int n = rs.grid().n();
    const std::size_t N = rs.grid().size();
    std::vector<CField> out;
    for (int i = 0; i < n; ++i) {
        const RField ux = rs.axis_derivative(spec, 2 * i), uy = rs.axis_derivative(spec, 2 * i + 1);
        CField d(N);
        for (std::size_t p = 0; p < N; ++p) d[p] = 0.5 * cplx(ux[p], -uy[p]);
        out.push_back(std::move(d));
    }
    return out;
}

Form11Field ddbar_real(const RealSpectral& rs, const CField& spec) {
    const int n = rs.grid().n();
    const std::size_t N = rs.grid().size();
    Form11Field out{n, Fields(sz(n * n))};
    for (int i = 0; i < n; ++i) {
        const RField d = rs.ddbar_re(spec, i, i);
        out(i, i) = CField(d.begin(), d.end());
        for (int j = i + 1; j < n; ++j) {
            const RField re = rs.ddbar_re(spec, i, j), im = rs.ddbar_im(spec, i, j);
            CField a(N), b(N);
            for (std::size_t p = 0; p < N; ++p) {
                a[p] = cplx(re[p], im[p]);
                b[p] = cplx(re[p], -im[p]);
            }
            out(i, j) = std::move(a);
            out(j, i) = std::move(b);
        }
    }
    return out;
}

Form11Field assemble_g(const Problem& problem, const RField& u) {
    const auto& rs = problem.spectral();
    const CField spec = rs.forward(u);
    Form11Field g = ddbar_real(rs, spec);
    const std::size_t N = problem.grid().size();
    for (std::size_t c = 0; c < g.X.size(); ++c) {
        const auto& x = problem.chi_fixed().X[c];
        auto& out = g.X[c];
        for (std::size_t p = 0; p < N; ++p) out[p] += x[p];
    }
    if (problem.gradient_dependent()) {
        const Form11Field e = problem.chi_gradient(holomorphic_gradient(rs, spec));
        for (std::size_t c = 0; c < g.X.size(); ++c)
            for (std::size_t p = 0; p < N; ++p) g.X[c][p] += e.X[c][p];
    }
    return g;
}

OperatorField evaluate_operator(const Problem& problem, const Form11Field& gfrak) {
    const int n = problem.n();
    const std::size_t N = problem.grid().size();
    const auto& op = problem.op();
    OperatorField out;
    out.F.assign(N, 0.0);
    out.lambda_min.assign(N, 0.0);
    out.lambda_max.assign(N, 0.0);
    out.Fij = alloc(sz(n * n), N);
    double margin = std::numeric_limits<double>::infinity(), gnorm = 0.0;
    std::size_t bad = N;
#pragma omp parallel for reduction(min : margin, bad) reduction(max : gnorm)
    for (std::size_t p = 0; p < N; ++p) {
        const MatC W = gather(problem.whitening(), n, p);
        MatC G = gather(gfrak.X, n, p);
        G = 0.5 * (G + G.adjoint());
        const MatC A = W * G * W.adjoint();
        const PointSpectrum s = spectrum(op, A, true);
        out.lambda_max[p] = s.lambda[0];
        out.lambda_min[p] = s.lambda[n - 1];
        gnorm = std::max({gnorm, std::abs(s.lambda[0]), std::abs(s.lambda[n - 1])});
        if (!s.inside) {
            bad = std::min(bad, p);
            margin = std::min(margin, cone_margin(op.domain, std::span<const double>(s.lambda, sz(n))));
            continue;
        }
        out.F[p] = s.value;
        margin = std::min(margin, cone_margin(op.domain, std::span<const double>(s.lambda, sz(n))));
        const MatC Q = W.adjoint() * s.P * W;
        scatter(out.Fij, Q.transpose(), p);
    }
    out.margin = margin;
    out.g_norm = gnorm;
    if (bad < N)
        throw Error(ErrorCode::NotAdmissible, "λ(𝔤) leaves the operator domain at grid point " + std::to_string(bad) +
                                                  " (margin " + std::to_string(margin) + ")");
    return out;
}

MatC operator_derivative(const OperatorSpec& op, const MatC& gfrak, const MatC& g) {
    const MatC W = whitening_of(g);
    const PointSpectrum s = spectrum(op, W * gfrak * W.adjoint(), true);
    if (!s.inside) throw Error(ErrorCode::NotAdmissible, "λ(𝔤) is outside the operator domain");
    return (W.adjoint() * s.P * W).transpose();
}

std::optional<double> operator_value(const OperatorSpec& op, const MatC& gfrak, const MatC& g) {
    const MatC W = whitening_of(g);
    const PointSpectrum s = spectrum(op, W * gfrak * W.adjoint(), false);
    if (!s.inside) return std::nullopt;
    return s.value;
}

namespace {

// F^{ij̄}(∂_j̄∂_i v + δχ[v]) for the coefficients of one state.
class Linearization {
public:
    Linearization(const Problem& problem, const OperatorField& state) : problem_(problem), state_(state) {
        const int n = problem.n();
        double tr = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto& f = state.Fij[sz(i * n + i)];
            for (const auto& v : f) tr += v.real();
        }
        coeff_ = tr / static_cast<double>(n) / static_cast<double>(problem.grid().size());
    }

    RField apply(const RField& v) const {
        const int n = problem_.n();
        const std::size_t N = problem_.grid().size();
        const auto& rs = problem_.spectral();
        const CField spec = rs.forward(v);
        RField out(N, 0.0);
        for (int i = 0; i < n; ++i) {
            const RField d = rs.ddbar_re(spec, i, i);
            const auto& f = state_.Fij[sz(i * n + i)];
            for (std::size_t p = 0; p < N; ++p) out[p] += f[p].real() * d[p];
            for (int j = i + 1; j < n; ++j) {
                const RField re = rs.ddbar_re(spec, i, j), im = rs.ddbar_im(spec, i, j);
                const auto& fij = state_.Fij[sz(i * n + j)];
                for (std::size_t p = 0; p < N; ++p) out[p] += 2.0 * (fij[p] * cplx(re[p], im[p])).real();
            }
        }
        if (problem_.gradient_dependent()) {
            const Form11Field e = problem_.chi_gradient(holomorphic_gradient(rs, spec));
            for (std::size_t c = 0; c < e.X.size(); ++c)
                for (std::size_t p = 0; p < N; ++p) out[p] += (state_.Fij[c][p] * e.X[c][p]).real();
        }
        return out;
    }

    RField precondition(const RField& r) const { return problem_.spectral().solve_laplacian(problem_.spectral().forward(r), coeff_); }
    std::size_t size() const { return problem_.grid().size(); }

private:
    const Problem& problem_;
    const OperatorField& state_;
    double coeff_ = 1.0;
};

RField from_eigen(const Eigen::VectorXd& v) { return RField(v.data(), v.data() + v.size()); }

void remove_mean(RField& f) {
    const double m = mean(f);
    for (auto& x : f) x -= m;
}

}  // namespace

}  // namespace hlab

// Matrix-free adapter so the Newton system can be handed to Eigen's GMRES.
namespace hlab::detail {
class NewtonOperator;
}

namespace Eigen::internal {
template <>
struct traits<hlab::detail::NewtonOperator> : public Eigen::internal::traits<Eigen::SparseMatrix<double>> {};
}  // namespace Eigen::internal

namespace hlab::detail {

class NewtonOperator : public Eigen::EigenBase<NewtonOperator> {
public:
    using Scalar = double;
    using RealScalar = double;
    using StorageIndex = int;
    enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic, IsRowMajor = false };

    explicit NewtonOperator(const hlab::Linearization& lin) : lin_(&lin) {}
    Eigen::Index rows() const { return static_cast<Eigen::Index>(lin_->size()); }
    Eigen::Index cols() const { return rows(); }

    template <typename Rhs>
    Eigen::Product<NewtonOperator, Rhs, Eigen::AliasFreeProduct> operator*(const Eigen::MatrixBase<Rhs>& x) const {
        return Eigen::Product<NewtonOperator, Rhs, Eigen::AliasFreeProduct>(*this, x.derived());
    }

    // mean-zero projection of L applied to the mean-zero part of v
    Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
        hlab::RField x = hlab::from_eigen(v);
        hlab::remove_mean(x);
        hlab::RField y = lin_->apply(x);
        hlab::remove_mean(y);
        return Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    }
    const hlab::Linearization& linearization() const { return *lin_; }

private:
    const hlab::Linearization* lin_;
};

class LaplacianPreconditioner {
public:
    using StorageIndex = int;
    enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic };
    LaplacianPreconditioner() = default;
    template <typename MatType>
    LaplacianPreconditioner& analyzePattern(const MatType&) { return *this; }
    template <typename MatType>
    LaplacianPreconditioner& factorize(const MatType&) { return *this; }
    template <typename MatType>
    LaplacianPreconditioner& compute(const MatType& m) {
        lin_ = &m.linearization();
        return *this;
    }
    template <typename Rhs>
    Eigen::VectorXd solve(const Rhs& b) const {
        Eigen::VectorXd bv = b;
        const hlab::RField x = lin_->precondition(hlab::from_eigen(bv));
        return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    }
    Eigen::ComputationInfo info() const { return Eigen::Success; }

private:
    const hlab::Linearization* lin_ = nullptr;
};

}  // namespace hlab::detail

namespace Eigen::internal {
template <typename Rhs>
struct generic_product_impl<hlab::detail::NewtonOperator, Rhs, SparseShape, DenseShape, GemvProduct>
    : generic_product_impl_base<hlab::detail::NewtonOperator, Rhs, generic_product_impl<hlab::detail::NewtonOperator, Rhs>> {
    using Scalar = typename Product<hlab::detail::NewtonOperator, Rhs>::Scalar;
    template <typename Dest>
    static void scaleAndAddTo(Dest& dst, const hlab::detail::NewtonOperator& lhs, const Rhs& rhs, const Scalar& alpha) {
        Eigen::VectorXd v = rhs;
        dst.noalias() += alpha * lhs.apply(v);
    }
};
}  // namespace Eigen::internal

namespace hlab {

RField linearized_apply(const Problem& problem, const RField& u, const RField& du) {
    const OperatorField state = evaluate_operator(problem, assemble_g(problem, u));
    return Linearization(problem, state).apply(du);
}

RField manufacture(const Problem& problem, const RField& u_star) { return evaluate_operator(problem, assemble_g(problem, u_star)).F; }

DerivativeSizes derivative_sizes(const MetricField& metric, const RField& u) {
    const auto& grid = metric.grid();
    const int n = metric.n();
    const std::size_t N = grid.size();
    RealSpectral rs(grid);
    const CField spec = rs.forward(u);
    const Form11Field dd = ddbar_real(rs, spec);
    const auto du = holomorphic_gradient(rs, spec);
    DerivativeSizes out;
    const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
    out.osc = *hi - *lo;
    double dmax = 0.0, gmax = 0.0;
#pragma omp parallel for reduction(max : dmax, gmax)
    for (std::size_t p = 0; p < N; ++p) {
        const MatC g = metric.at(p);
        const Eigen::VectorXd ev = generalized_eigenvalues(dd.at(p), g);
        dmax = std::max(dmax, ev.cwiseAbs().maxCoeff());
        cplx s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) s += metric.ginv(i, j)[p] * du[sz(i)][p] * std::conj(du[sz(j)][p]);
        gmax = std::max(gmax, std::sqrt(std::max(0.0, s.real())));
    }
    out.max_dd = dmax;
    out.max_grad = gmax;
    return out;
}

// ---------------------------------------------------------------- solve

namespace {

struct Iterate {
    RField u;
    OperatorField state;
    RField r;
    double b = 0.0;
    double r_inf = 0.0, r_l2 = 0.0;
};

void normalize(RField& u, Normalization norm) {
    const double shift = norm == Normalization::MeanZero ? mean(u) : *std::max_element(u.begin(), u.end());
    for (auto& x : u) x -= shift;
}

Iterate make_iterate(const Problem& problem, RField u, const RField& psi_t) {
    Iterate it;
    it.state = evaluate_operator(problem, assemble_g(problem, u));
    it.u = std::move(u);
    const std::size_t N = it.u.size();
    it.r.resize(N);
    for (std::size_t p = 0; p < N; ++p) it.r[p] = it.state.F[p] - psi_t[p];
    it.b = mean(it.r);
    for (auto& x : it.r) x -= it.b;
    it.r_inf = norm_inf(it.r);
    it.r_l2 = norm_l2(it.r);
    return it;
}

enum class NewtonStatus { Converged, LineSearchFailed, MaxIterations };

NewtonStatus newton(const Problem& problem, Iterate& it, const RField& psi_t, double t, double tol, const SolveOptions& opts,
                    SolutionReport& report) {
    report.history.push_back({t, it.r_inf, it.r_l2, 0.0, 0});
    for (int k = 0; k < opts.max_newton; ++k) {
        if (it.r_inf <= tol) return NewtonStatus::Converged;
        const Linearization lin(problem, it.state);
        detail::NewtonOperator A(lin);
        Eigen::GMRES<detail::NewtonOperator, detail::LaplacianPreconditioner> gmres;
        gmres.set_restart(opts.gmres_restart);
        gmres.setMaxIterations(opts.gmres_max_iterations);
        // inexact Newton: the Krylov tolerance follows the residual
        gmres.setTolerance(std::clamp(0.01 * it.r_inf, opts.gmres_tolerance, 1e-3));
        gmres.compute(A);
        Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(it.r.data(), static_cast<Eigen::Index>(it.r.size()));
        Eigen::VectorXd x0 = gmres.preconditioner().solve(rhs);
        Eigen::VectorXd sol = gmres.solveWithGuess(rhs, x0);
        RField du = from_eigen(sol);
        remove_mean(du);

        const double delta_adm = opts.admissibility >= 0.0 ? opts.admissibility : 1e-8 * (1.0 + it.state.g_norm);
        double alpha = 1.0;
        bool accepted = false;
        for (int h = 0; h <= opts.max_halvings; ++h, alpha *= 0.5) {
            RField u_try = it.u;
            for (std::size_t p = 0; p < u_try.size(); ++p) u_try[p] += alpha * du[p];
            normalize(u_try, problem.normalization());
            try {
                Iterate cand = make_iterate(problem, std::move(u_try), psi_t);
                if (cand.state.margin >= delta_adm && cand.r_l2 < it.r_l2) {
                    it = std::move(cand);
                    accepted = true;
                    break;
                }
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NotAdmissible) throw;
            }
        }
        ++report.iterations;
        if (opts.verbose)
            std::cerr << "  t=" << t << " newton " << k << " krylov " << gmres.iterations() << " alpha " << (accepted ? alpha : 0.0)
                      << " |r|inf " << it.r_inf << "\n";
        if (!accepted) return NewtonStatus::LineSearchFailed;
        report.history.push_back({t, it.r_inf, it.r_l2, alpha, static_cast<int>(gmres.iterations())});
    }
    return it.r_inf <= tol ? NewtonStatus::Converged : NewtonStatus::MaxIterations;
}

}  // namespace

SolutionReport solve(const Problem& problem, const SolveOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t N = problem.grid().size();
    SolutionReport report;

    RField u0(N, 0.0);
    OperatorField s0;
    try {
        s0 = evaluate_operator(problem, assemble_g(problem, u0));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NotAdmissible) throw Error(ErrorCode::NoAdmissibleStart, std::string("u = 0 is not admissible: ") + e.what());
        throw;
    }
    const RField F0 = s0.F;
    const RField& psi = problem.psi();
    const auto psi_at = [&](double t) {
        RField out(N);
        for (std::size_t p = 0; p < N; ++p) out[p] = (1.0 - t) * F0[p] + t * psi[p];
        return out;
    };

    Iterate current = make_iterate(problem, u0, psi_at(0.0));
    double t = 0.0, dt = std::min(1.0, opts.initial_step);
    NewtonStatus last = NewtonStatus::Converged;
    while (t < 1.0) {
        const double t_try = std::min(1.0, t + dt);
        const RField psi_t = psi_at(t_try);
        Iterate trial = make_iterate(problem, current.u, psi_t);
        const double tol = t_try >= 1.0 ? opts.tolerance : std::max(opts.tolerance, opts.intermediate_tolerance);
        last = newton(problem, trial, psi_t, t_try, tol, opts, report);
        if (last == NewtonStatus::Converged) {
            current = std::move(trial);
            t = t_try;
            ++report.continuity_steps;
            report.t_history.push_back(t);
            dt = std::min(1.0, 2.0 * dt);
            continue;
        }
        dt *= 0.5;
        if (opts.verbose) std::cerr << "continuity step rejected at t=" << t_try << ", dt -> " << dt << "\n";
        if (dt < opts.min_step) {
            if (last == NewtonStatus::MaxIterations)
                throw Error(ErrorCode::NewtonDiverged, "Newton did not converge in " + std::to_string(opts.max_newton) + " iterations");
            throw Error(ErrorCode::ContinuityStalled, "continuity step fell below " + std::to_string(opts.min_step) + " at t = " + std::to_string(t));
        }
    }

    report.u = current.u;
    report.b = current.b;
    report.residual_inf = current.r_inf;
    report.residual_l2 = current.r_l2;
    report.admissibility_margin = current.state.margin;
    report.lambda_min = current.state.lambda_min;
    report.lambda_max = current.state.lambda_max;
    const DerivativeSizes ds = derivative_sizes(problem.metric(), report.u);
    report.max_dd_u = ds.max_dd;
    report.max_grad_u = ds.max_grad;
    report.osc_u = ds.osc;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace hlab
