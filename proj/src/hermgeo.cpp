#include "hlab/hermgeo.hpp"

#include "hlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hlab {

namespace {

using Fields = std::vector<CField>;

Fields alloc(std::size_t count, std::size_t size) { return Fields(count, CField(size, cplx(0.0, 0.0))); }

MatC gather(const Fields& comps, int n, std::size_t p) {
    MatC a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = comps[static_cast<std::size_t>(i * n + j)][p];
    return a;
}

// ∂_i g_{jl̄} stored at idx3(i, j, l).
Fields metric_gradient(const MetricField& metric) {
    const auto& grid = metric.grid();
    const int n = metric.n();
    Fields dg(static_cast<std::size_t>(n * n * n));
    for (int j = 0; j < n; ++j) {
        for (int l = 0; l < n; ++l) {
            auto d = grid.d_all(metric.g(j, l), false);
            for (int i = 0; i < n; ++i) dg[static_cast<std::size_t>(idx3(n, i, j, l))] = std::move(d[static_cast<std::size_t>(i)]);
        }
    }
    return dg;
}

}  // namespace

// ---------------------------------------------------------------- metric

MetricField MetricField::from_components(const SpectralGrid& grid, std::vector<CField> g) {
    const int n = grid.n();
    if (static_cast<int>(g.size()) != n * n) throw Error(ErrorCode::InvalidArgument, "metric needs n² components");
    for (const auto& c : g)
        if (c.size() != grid.size()) throw Error(ErrorCode::InvalidArgument, "metric component size does not match the grid");
    MetricField mf;
    mf.grid_ = &grid;
    mf.g_ = std::move(g);
    mf.ginv_ = alloc(static_cast<std::size_t>(n * n), grid.size());
    double min_eig = std::numeric_limits<double>::infinity();
    double herm_defect = 0.0;
    const std::size_t N = grid.size();
#pragma omp parallel for reduction(min : min_eig) reduction(max : herm_defect)
    for (std::size_t p = 0; p < N; ++p) {
        MatC G = gather(mf.g_, n, p);
        herm_defect = std::max(herm_defect, (G - G.adjoint()).cwiseAbs().maxCoeff() / (1.0 + G.cwiseAbs().maxCoeff()));
        Eigen::SelfAdjointEigenSolver<MatC> es(G, Eigen::EigenvaluesOnly);
        min_eig = std::min(min_eig, es.eigenvalues()(0));
        const MatC H = G.inverse().transpose();
        for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l) mf.ginv_[static_cast<std::size_t>(k * n + l)][p] = H(k, l);
    }
    if (herm_defect > 1e-12) throw Error(ErrorCode::MetricDegenerate, "metric is not Hermitian");
    if (!(min_eig > 1e-10)) throw Error(ErrorCode::MetricDegenerate, "metric is not positive definite");
    mf.min_eig_ = min_eig;
    return mf;
}

MetricField MetricField::flat(const SpectralGrid& grid) {
    const int n = grid.n();
    Fields g = alloc(static_cast<std::size_t>(n * n), grid.size());
    for (int i = 0; i < n; ++i) std::fill(g[static_cast<std::size_t>(i * n + i)].begin(), g[static_cast<std::size_t>(i * n + i)].end(), cplx(1.0, 0.0));
    return from_components(grid, std::move(g));
}

MetricField MetricField::conformal(const SpectralGrid& grid, const Expr& phi) {
    const int n = grid.n();
    Fields g = alloc(static_cast<std::size_t>(n * n), grid.size());
    const CField f = grid.sample(phi);
    for (int i = 0; i < n; ++i) {
        auto& c = g[static_cast<std::size_t>(i * n + i)];
        for (std::size_t p = 0; p < grid.size(); ++p) c[p] = std::exp(f[p].real());
    }
    return from_components(grid, std::move(g));
}

MatC MetricField::at(std::size_t p) const { return gather(g_, n(), p); }

MatC Form11Field::at(std::size_t p) const { return gather(X, n, p); }

double Form11Field::hermitian_defect() const {
    double d = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const auto& a = (*this)(i, j);
            const auto& b = (*this)(j, i);
            for (std::size_t p = 0; p < a.size(); ++p) d = std::max(d, std::abs(a[p] - std::conj(b[p])));
        }
    return d;
}

Form11Field ddbar(const SpectralGrid& grid, const CField& u) {
    const int n = grid.n();
    Form11Field out{n, alloc(static_cast<std::size_t>(n * n), grid.size())};
    const CField spec = grid.forward(u);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out(i, j) = grid.inverse_with(spec, [&](std::size_t p) { return grid.symbol(p, i, false) * grid.symbol(p, j, true); });
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            auto& a = out(i, j);
            auto& b = out(j, i);
            for (std::size_t p = 0; p < grid.size(); ++p) {
                const cplx s = 0.5 * (a[p] + std::conj(b[p]));
                a[p] = s;
                b[p] = std::conj(s);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- connection

std::vector<CField> christoffel(const MetricField& metric) {
    const int n = metric.n();
    const std::size_t N = metric.grid().size();
    const Fields dg = metric_gradient(metric);
    Fields gamma = alloc(static_cast<std::size_t>(n * n * n), N);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                auto& out = gamma[static_cast<std::size_t>(idx3(n, i, j, k))];
                for (int l = 0; l < n; ++l) {
                    const auto& h = metric.ginv(k, l);
                    const auto& d = dg[static_cast<std::size_t>(idx3(n, i, j, l))];
                    for (std::size_t p = 0; p < N; ++p) out[p] += h[p] * d[p];
                }
            }
    return gamma;
}

std::vector<CField> torsion(const std::vector<CField>& gamma, int n) {
    const std::size_t N = gamma.front().size();
    Fields t = alloc(static_cast<std::size_t>(n * n * n), N);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                auto& out = t[static_cast<std::size_t>(idx3(n, i, j, k))];
                const auto& a = gamma[static_cast<std::size_t>(idx3(n, i, j, k))];
                const auto& b = gamma[static_cast<std::size_t>(idx3(n, j, i, k))];
                for (std::size_t p = 0; p < N; ++p) out[p] = a[p] - b[p];
            }
    return t;
}

CurvatureResult curvature(const MetricField& metric, const std::vector<CField>& gamma, double tolerance) {
    const auto& grid = metric.grid();
    const int n = metric.n();
    const std::size_t N = grid.size();
    CurvatureResult res;
    res.R = alloc(static_cast<std::size_t>(n * n * n * n), N);

    // R_{ij̄kl̄} = −g_{ml̄} ∂_j̄ Γ_ik^m
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k)
            for (int m = 0; m < n; ++m) {
                const CField spec = grid.forward(gamma[static_cast<std::size_t>(idx3(n, i, k, m))]);
                for (int j = 0; j < n; ++j) {
                    const CField d = grid.inverse_with(spec, [&](std::size_t p) { return grid.symbol(p, j, true); });
                    for (int l = 0; l < n; ++l) {
                        auto& out = res.R[static_cast<std::size_t>(idx4(n, i, j, k, l))];
                        const auto& g = metric.g(m, l);
                        for (std::size_t p = 0; p < N; ++p) out[p] -= g[p] * d[p];
                    }
                }
            }
    for (const auto& c : res.R) res.norm = std::max(res.norm, max_abs(c));

    // −∂_i ∂_j̄ g_{kl̄} + g^{pq̄} ∂_i g_{kq̄} ∂_j̄ g_{pl̄}, with ∂_j̄ g_{pl̄} = conj(∂_j g_{lp̄})
    const Fields dg = metric_gradient(metric);
    Fields ddg(static_cast<std::size_t>(n * n * n * n));
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
            const CField spec = grid.forward(metric.g(k, l));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    ddg[static_cast<std::size_t>(idx4(n, i, j, k, l))] =
                        grid.inverse_with(spec, [&](std::size_t p) { return grid.symbol(p, i, false) * grid.symbol(p, j, true); });
        }
    const auto n2 = static_cast<std::size_t>(n * n), n3 = n2 * static_cast<std::size_t>(n);
    double worst = 0.0;
#pragma omp parallel reduction(max : worst)
    {
        std::vector<cplx> h(n2), d(n3);
#pragma omp for
        for (std::size_t p = 0; p < N; ++p) {
            for (std::size_t c = 0; c < n2; ++c) h[c] = metric.ginv(static_cast<int>(c) / n, static_cast<int>(c) % n)[p];
            for (std::size_t c = 0; c < n3; ++c) d[c] = dg[c][p];
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k)
                        for (int l = 0; l < n; ++l) {
                            const auto c = static_cast<std::size_t>(idx4(n, i, j, k, l));
                            cplx v = -ddg[c][p];
                            for (int a = 0; a < n; ++a)
                                for (int b = 0; b < n; ++b)
                                    v += h[static_cast<std::size_t>(a * n + b)] * d[static_cast<std::size_t>(idx3(n, i, k, b))] *
                                         std::conj(d[static_cast<std::size_t>(idx3(n, j, l, a))]);
                            worst = std::max(worst, std::abs(v - res.R[c][p]));
                        }
        }
    }
    res.cross_check = worst;
    if (tolerance >= 0.0 && res.cross_check > tolerance * res.norm) {
        throw Error(ErrorCode::CrossCheckFailed, "curvature expressions differ by " + std::to_string(res.cross_check) +
                                                     " (norm " + std::to_string(res.norm) + "); refine the grid");
    }
    return res;
}

CurvatureResult curvature(const MetricField& metric, double tolerance) { return curvature(metric, christoffel(metric), tolerance); }

ChernData chern(const MetricField& metric) {
    ChernData d;
    d.gamma = christoffel(metric);
    d.torsion = torsion(d.gamma, metric.n());
    auto c = curvature(metric, d.gamma);
    d.curvature = std::move(c.R);
    d.cross_check = c.cross_check;
    return d;
}

// ---------------------------------------------------------------- eigenvalues

Eigen::VectorXd generalized_eigenvalues(const MatC& X, const MatC& g) {
    Eigen::LLT<MatC> llt(g);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::MetricDegenerate, "whitening failed");
    const auto L = llt.matrixL();
    MatC A = L.solve(X);
    A = L.solve(A.adjoint().eval()).adjoint();
    A = 0.5 * (A + A.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<MatC> es(A, Eigen::EigenvaluesOnly);
    Eigen::VectorXd v = es.eigenvalues().reverse();
    return v;
}

EigenField eigenvalues_wrt_metric(const Form11Field& X, const MetricField& metric) {
    const int n = metric.n();
    if (X.n != n || X.X.size() != static_cast<std::size_t>(n * n) || X.X.front().size() != metric.grid().size()) {
        throw Error(ErrorCode::InvalidArgument, "form and metric live on different grids");
    }
    const std::size_t N = metric.grid().size();
    EigenField out{n, std::vector<double>(N * static_cast<std::size_t>(n))};
    bool failed = false;
#pragma omp parallel for reduction(|| : failed)
    for (std::size_t p = 0; p < N; ++p) {
        try {
            const Eigen::VectorXd v = generalized_eigenvalues(X.at(p), metric.at(p));
            for (int i = 0; i < n; ++i) out.values[p * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] = v(i);
        } catch (const Error&) {
            failed = true;
        }
    }
    if (failed) throw Error(ErrorCode::MetricDegenerate, "whitening failed");
    return out;
}

// ---------------------------------------------------------------- commutation

double CommutationResiduals::max() const { return *std::max_element(residual.begin(), residual.end()); }

CommutationResiduals commutation_residuals(const CField& u, const MetricField& metric) {
    const auto& grid = metric.grid();
    const int n = metric.n();
    const std::size_t N = grid.size();
    if (u.size() != N) throw Error(ErrorCode::InvalidArgument, "field size does not match the grid");
    const auto I3 = [n](int i, int j, int k) { return static_cast<std::size_t>(idx3(n, i, j, k)); };
    const auto I4 = [n](int i, int j, int k, int l) { return static_cast<std::size_t>(idx4(n, i, j, k, l)); };
    const auto I2 = [n](int i, int j) { return static_cast<std::size_t>(i * n + j); };

    const Fields G = christoffel(metric);
    const Fields T = torsion(G, n);
    const Fields R = curvature(metric, G, -1.0).R;
    std::vector<const CField*> H;
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) H.push_back(&metric.ginv(k, l));

    CommutationResiduals out;

    // u_i and u_{ij̄}
    const Fields ui = grid.d_all(u, false);
    Fields uij(static_cast<std::size_t>(n * n));
    for (int i = 0; i < n; ++i) {
        auto d = grid.d_all(ui[static_cast<std::size_t>(i)], true);
        for (int j = 0; j < n; ++j) uij[I2(i, j)] = std::move(d[static_cast<std::size_t>(j)]);
    }

    // u_{ij̄k} = ∂_k u_{ij̄} − Γ_ki^l u_{lj̄}
    Fields uijk(static_cast<std::size_t>(n * n * n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            auto d = grid.d_all(uij[I2(i, j)], false);
            for (int k = 0; k < n; ++k) {
                CField f = std::move(d[static_cast<std::size_t>(k)]);
                for (int l = 0; l < n; ++l) {
                    const auto& g = G[I3(k, i, l)];
                    const auto& v = uij[I2(l, j)];
                    for (std::size_t p = 0; p < N; ++p) f[p] -= g[p] * v[p];
                }
                uijk[I3(i, j, k)] = std::move(f);
            }
        }

    // u_{ikj̄} = ∂_j̄ (∂_k u_i − Γ_ki^l u_l), stored at (i, k, j)
    Fields uikj(static_cast<std::size_t>(n * n * n));
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            CField uik = grid.d(ui[static_cast<std::size_t>(i)], k, false);
            for (int l = 0; l < n; ++l) {
                const auto& g = G[I3(k, i, l)];
                const auto& v = ui[static_cast<std::size_t>(l)];
                for (std::size_t p = 0; p < N; ++p) uik[p] -= g[p] * v[p];
            }
            auto d = grid.d_all(uik, true);
            for (int j = 0; j < n; ++j) uikj[I3(i, k, j)] = std::move(d[static_cast<std::size_t>(j)]);
        }

    // u_{ij̄kl̄} = ∂_l̄ u_{ij̄k} − conj(Γ_lj^m) u_{im̄k}
    Fields uijkl(static_cast<std::size_t>(n * n * n * n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                auto d = grid.d_all(uijk[I3(i, j, k)], true);
                for (int l = 0; l < n; ++l) {
                    CField f = std::move(d[static_cast<std::size_t>(l)]);
                    for (int m = 0; m < n; ++m) {
                        const auto& g = G[I3(l, j, m)];
                        const auto& v = uijk[I3(i, m, k)];
                        for (std::size_t p = 0; p < N; ++p) f[p] -= std::conj(g[p]) * v[p];
                    }
                    uijkl[I4(i, j, k, l)] = std::move(f);
                }
            }

    // u_{ij̄l̄} = ∂_l̄ u_{ij̄} − conj(Γ_lj^m) u_{im̄}, stored at (i, j, l)
    Fields uijl(static_cast<std::size_t>(n * n * n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            auto d = grid.d_all(uij[I2(i, j)], true);
            for (int l = 0; l < n; ++l) {
                CField f = std::move(d[static_cast<std::size_t>(l)]);
                for (int m = 0; m < n; ++m) {
                    const auto& g = G[I3(l, j, m)];
                    const auto& v = uij[I2(i, m)];
                    for (std::size_t p = 0; p < N; ++p) f[p] -= std::conj(g[p]) * v[p];
                }
                uijl[I3(i, j, l)] = std::move(f);
            }
        }

    // u_{ij̄l̄k} = ∂_k u_{ij̄l̄} − Γ_ki^q u_{qj̄l̄}, stored at (i, j, l, k)
    Fields uijlk(static_cast<std::size_t>(n * n * n * n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int l = 0; l < n; ++l) {
                auto d = grid.d_all(uijl[I3(i, j, l)], false);
                for (int k = 0; k < n; ++k) {
                    CField f = std::move(d[static_cast<std::size_t>(k)]);
                    for (int q = 0; q < n; ++q) {
                        const auto& g = G[I3(k, i, q)];
                        const auto& v = uijl[I3(q, j, l)];
                        for (std::size_t p = 0; p < N; ++p) f[p] -= g[p] * v[p];
                    }
                    uijlk[I4(i, j, l, k)] = std::move(f);
                }
            }

    // All four rules in one pass, gathering the tensors at each point.
    const auto n2 = static_cast<std::size_t>(n * n), n3 = n2 * static_cast<std::size_t>(n), n4 = n3 * static_cast<std::size_t>(n);
    std::array<double, 4> res{}, scale{};
    double res_swapped = 0.0;
#pragma omp parallel
    {
        std::array<double, 4> lres{}, lscale{};
        double lswap = 0.0;
        std::vector<cplx> h(n2), a2(n2), t(n3), a3(n3), k3(n3), l3(n3), r(n4), a4(n4), b4(n4), ui_p(static_cast<std::size_t>(n));
        const auto gather = [](const Fields& src, std::vector<cplx>& dst, std::size_t p) {
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = src[c][p];
        };
#pragma omp for
        for (std::size_t p = 0; p < N; ++p) {
            for (std::size_t c = 0; c < n2; ++c) h[c] = (*H[c])[p];
            gather(uij, a2, p);
            gather(T, t, p);
            gather(uijk, a3, p);
            gather(uikj, k3, p);
            gather(uijl, l3, p);
            gather(R, r, p);
            gather(uijkl, a4, p);
            gather(uijlk, b4, p);
            for (int i = 0; i < n; ++i) ui_p[static_cast<std::size_t>(i)] = ui[static_cast<std::size_t>(i)][p];
            const auto upd = [&](int rule, cplx lhs, cplx rhs) {
                lres[static_cast<std::size_t>(rule)] = std::max(lres[static_cast<std::size_t>(rule)], std::abs(lhs - rhs));
                lscale[static_cast<std::size_t>(rule)] = std::max(lscale[static_cast<std::size_t>(rule)], std::abs(lhs));
            };
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k) {
                        cplx rhs1 = 0.0, rhs2 = 0.0;
                        for (int l = 0; l < n; ++l) {
                            rhs1 += t[I3(i, k, l)] * a2[I2(l, j)];
                            for (int m = 0; m < n; ++m) rhs2 -= h[I2(l, m)] * r[I4(k, j, i, m)] * ui_p[static_cast<std::size_t>(l)];
                        }
                        upd(0, a3[I3(i, j, k)] - a3[I3(k, j, i)], rhs1);
                        upd(1, a3[I3(i, j, k)] - k3[I3(i, k, j)], rhs2);

                        for (int l = 0; l < n; ++l) {
                            cplx common = 0.0, second = 0.0, swapped = 0.0, other = 0.0, rhs4 = 0.0;
                            for (int a = 0; a < n; ++a) {
                                for (int b = 0; b < n; ++b) {
                                    const cplx hab = h[I2(a, b)];
                                    common += hab * r[I4(k, l, i, b)] * a2[I2(a, j)];
                                    second += hab * r[I4(k, l, a, j)] * a2[I2(i, b)];
                                    swapped += hab * r[I4(a, l, k, j)] * a2[I2(i, b)];
                                    other += hab * r[I4(i, j, k, b)] * a2[I2(a, l)];
                                    rhs4 -= t[I3(i, k, a)] * std::conj(t[I3(j, l, b)]) * a2[I2(a, b)];
                                }
                                rhs4 += t[I3(i, k, a)] * l3[I3(a, j, l)];
                                rhs4 += std::conj(t[I3(j, l, a)]) * a3[I3(i, a, k)];
                            }
                            const cplx lhs3 = a4[I4(i, j, k, l)] - b4[I4(i, j, l, k)];
                            upd(2, lhs3, common - second);
                            lswap = std::max(lswap, std::abs(lhs3 - (common - swapped)));
                            upd(3, a4[I4(i, j, k, l)] - a4[I4(k, l, i, j)], rhs4 + common - other);
                        }
                    }
        }
#pragma omp critical
        {
            for (std::size_t c = 0; c < 4; ++c) {
                res[c] = std::max(res[c], lres[c]);
                scale[c] = std::max(scale[c], lscale[c]);
            }
            res_swapped = std::max(res_swapped, lswap);
        }
    }
    out.residual = res;
    out.scale = scale;
    out.residual_swapped_slots = res_swapped;
    return out;
}

}  // namespace hlab
