#include "doctest.h"

#include "hlab/errors.hpp"
#include "hlab/hermgeo.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace hlab;

namespace {

constexpr double kPi = std::numbers::pi;

Expr cos_mode(double amp, std::vector<int> k) { return Expr{0.0, {FourierMode{amp, FourierMode::Trig::Cos, std::move(k)}}}; }

// sin(2πx_1)cos(2πy_2) as two modes
Expr product_u() {
    return Expr{0.0, {FourierMode{0.5, FourierMode::Trig::Sin, {1, 0, 0, 1}}, FourierMode{0.5, FourierMode::Trig::Sin, {1, 0, 0, -1}}}};
}

Expr conformal_phi(double amp) {
    return Expr{0.0, {FourierMode{amp, FourierMode::Trig::Cos, {1, 0, 0, 0}}, FourierMode{amp / 2, FourierMode::Trig::Sin, {0, 1, 1, 0}}}};
}

std::vector<double> point_coords(const SpectralGrid& g, std::size_t p) {
    std::vector<double> x(static_cast<std::size_t>(g.axes()));
    for (int a = 0; a < g.axes(); ++a) x[static_cast<std::size_t>(a)] = g.coord(p, a);
    return x;
}

// ∂_i and ∂_i∂_j̄ of a scalar function by central differences on the real axes
cplx fd_d(const Expr& f, std::vector<double> x, int i, bool conj, double h = 1e-5) {
    auto dx = [&](int a) {
        auto xp = x, xm = x;
        xp[static_cast<std::size_t>(a)] += h;
        xm[static_cast<std::size_t>(a)] -= h;
        return (f(xp) - f(xm)) / (2 * h);
    };
    const double fx = dx(2 * i), fy = dx(2 * i + 1);
    return conj ? cplx(fx, fy) / 2.0 : cplx(fx, -fy) / 2.0;
}

cplx fd_ddbar(const Expr& f, std::vector<double> x, int i, int j, double h = 1e-4) {
    auto second = [&](int a, int b) {
        auto at = [&](double sa, double sb) {
            auto y = x;
            y[static_cast<std::size_t>(a)] += sa;
            y[static_cast<std::size_t>(b)] += sb;
            return f(y);
        };
        return (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4 * h * h);
    };
    const int xi = 2 * i, yi = 2 * i + 1, xj = 2 * j, yj = 2 * j + 1;
    // (∂x_i − i∂y_i)(∂x_j + i∂y_j)/4
    return cplx(second(xi, xj) + second(yi, yj), second(xi, yj) - second(yi, xj)) / 4.0;
}

}  // namespace

TEST_CASE("spectral derivatives") {
    SpectralGrid g(2, 8);
    CField c(g.size(), cplx(3.5, -1.0));
    for (int i = 0; i < 2; ++i)
        for (bool conj : {false, true}) CHECK(max_abs(g.d(c, i, conj)) == 0.0);

    CField e(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) e[p] = std::exp(cplx(0, 2 * kPi * g.coord(p, 0)));
    const CField d1 = g.d(e, 0, false);
    double err = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) err = std::max(err, std::abs(d1[p] - cplx(0, kPi) * e[p]));
    CHECK(err < 1e-12);

    const CField u = g.sample(cos_mode(1.0, {1, 0, 0, 0}));
    const Form11Field X = ddbar(g, u);
    err = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) err = std::max(err, std::abs(X(0, 0)[p] + kPi * kPi * u[p]));
    CHECK(err < 1e-12);
    CHECK(max_abs(X(1, 1)) < 1e-13);
    CHECK(X.hermitian_defect() == 0.0);

    CHECK_THROWS_AS(SpectralGrid(2, 12), Error);
    CHECK_THROWS_AS(SpectralGrid(1, 8), Error);
}

TEST_CASE("metric validation") {
    SpectralGrid g(2, 4);
    auto flat = MetricField::flat(g);
    CHECK(flat.min_eigenvalue() == doctest::Approx(1.0));
    std::vector<CField> bad(4, CField(g.size(), cplx(0, 0)));
    std::fill(bad[0].begin(), bad[0].end(), cplx(1, 0));
    std::fill(bad[3].begin(), bad[3].end(), cplx(-1, 0));
    CHECK_THROWS_AS(MetricField::from_components(g, bad), Error);
    std::vector<CField> skew(4, CField(g.size(), cplx(0, 0)));
    std::fill(skew[0].begin(), skew[0].end(), cplx(2, 0));
    std::fill(skew[3].begin(), skew[3].end(), cplx(2, 0));
    std::fill(skew[1].begin(), skew[1].end(), cplx(0.1, 0.2));
    std::fill(skew[2].begin(), skew[2].end(), cplx(0.1, 0.2));
    CHECK_THROWS_AS(MetricField::from_components(g, skew), Error);
}

TEST_CASE("flat torus has no torsion or curvature") {
    SpectralGrid g(2, 8);
    auto flat = MetricField::flat(g);
    auto data = chern(flat);
    for (const auto& c : data.gamma) CHECK(max_abs(c) == 0.0);
    for (const auto& c : data.torsion) CHECK(max_abs(c) == 0.0);
    for (const auto& c : data.curvature) CHECK(max_abs(c) == 0.0);
    auto res = commutation_residuals(g.sample(product_u()), flat);
    for (double r : res.residual) CHECK(r <= 1e-10);
}

TEST_CASE("conformal metric: Christoffel symbols, torsion and curvature against finite differences") {
    for (int n : {2, 3}) {
        const int m = n == 2 ? 16 : 8;
        SpectralGrid g(n, m);
        Expr phi = n == 2 ? conformal_phi(0.3) : Expr{0.0, {FourierMode{0.2, FourierMode::Trig::Cos, {1, 0, 0, 0, 0, 0}}, FourierMode{0.1, FourierMode::Trig::Sin, {0, 0, 0, 1, 1, 0}}}};
        auto metric = MetricField::conformal(g, phi);
        auto gamma = christoffel(metric);
        auto T = torsion(gamma, n);
        std::mt19937_64 rng(3);
        std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
        double worst_gamma = 0.0, worst_t = 0.0, antisym = 0.0;
        for (int s = 0; s < 20; ++s) {
            const std::size_t p = pick(rng);
            const auto x = point_coords(g, p);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k) {
                        const cplx expect = j == k ? fd_d(phi, x, i, false) : cplx(0, 0);
                        worst_gamma = std::max(worst_gamma, std::abs(gamma[static_cast<std::size_t>(idx3(n, i, j, k))][p] - expect));
                        const cplx t_expect = (j == k ? fd_d(phi, x, i, false) : 0.0) - (i == k ? fd_d(phi, x, j, false) : 0.0);
                        worst_t = std::max(worst_t, std::abs(T[static_cast<std::size_t>(idx3(n, i, j, k))][p] - t_expect));
                        antisym = std::max(antisym, std::abs(T[static_cast<std::size_t>(idx3(n, i, j, k))][p] + T[static_cast<std::size_t>(idx3(n, j, i, k))][p]));
                    }
        }
        // e^φ is not bandlimited; the n = 3 grid is coarse
        const double tol = n == 2 ? 1e-8 : 1e-5;
        CHECK(worst_gamma < tol);
        CHECK(worst_t < tol);
        CHECK(antisym == 0.0);
        double tmax = 0.0;
        for (const auto& c : T) tmax = std::max(tmax, max_abs(c));
        CHECK(tmax > 0.1);
    }

    SpectralGrid g(2, 16);
    const Expr phi = conformal_phi(0.3);
    auto metric = MetricField::conformal(g, phi);
    auto curv = curvature(metric);
    const auto& R = curv.R;
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
    double worst = 0.0, herm = 0.0;
    for (int s = 0; s < 20; ++s) {
        const std::size_t p = pick(rng);
        const auto x = point_coords(g, p);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    for (int l = 0; l < 2; ++l) {
                        // R_{ij̄kl̄} = −e^φ δ_kl ∂_i∂_j̄ φ
                        const cplx expect = k == l ? -std::exp(phi(x)) * fd_ddbar(phi, x, i, j) : cplx(0, 0);
                        worst = std::max(worst, std::abs(R[static_cast<std::size_t>(idx4(2, i, j, k, l))][p] - expect));
                        herm = std::max(herm, std::abs(R[static_cast<std::size_t>(idx4(2, i, j, k, l))][p] -
                                                       std::conj(R[static_cast<std::size_t>(idx4(2, j, i, l, k))][p])));
                    }
    }
    CHECK(worst < 1e-6);
    CHECK(herm < 1e-10);
}

TEST_CASE("curvature cross-check tightens with resolution and flags under-resolution") {
    double previous = INFINITY;
    for (int m : {8, 16}) {
        SpectralGrid g(2, m);
        auto metric = MetricField::conformal(g, conformal_phi(0.6));
        auto c = curvature(metric, -1.0);
        CHECK(c.cross_check <= 0.5 * previous);
        previous = c.cross_check;
    }
    SpectralGrid coarse(2, 8);
    auto metric = MetricField::conformal(coarse, conformal_phi(0.6));
    try {
        curvature(metric);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::CrossCheckFailed);
    }
}

TEST_CASE("eigenvalues with respect to the metric") {
    MatC g = MatC::Identity(2, 2), X(2, 2);
    X << 3, 0, 0, 1;
    auto v = generalized_eigenvalues(X, g);
    CHECK(v(0) == doctest::Approx(3.0));
    CHECK(v(1) == doctest::Approx(1.0));
    g(0, 0) = 2;
    v = generalized_eigenvalues(X, g);
    CHECK(v(0) == doctest::Approx(1.5));
    CHECK(v(1) == doctest::Approx(1.0));
    v = generalized_eigenvalues(g, g);
    CHECK(v(0) == doctest::Approx(1.0));
    CHECK(v(1) == doctest::Approx(1.0));
    MatC bad = MatC::Identity(2, 2);
    bad(1, 1) = -1;
    CHECK_THROWS_AS(generalized_eigenvalues(X, bad), Error);

    // congruence invariance X → A*XA, g → A*gA
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + trial % 2;
        MatC B(n, n), A(n, n), Y(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                B(i, j) = cplx(nd(rng), nd(rng));
                A(i, j) = cplx(nd(rng), nd(rng));
                Y(i, j) = cplx(nd(rng), nd(rng));
            }
        MatC G = B * B.adjoint() + MatC::Identity(n, n);
        MatC H = 0.5 * (Y + Y.adjoint());
        const auto a = generalized_eigenvalues(H, G);
        const auto b = generalized_eigenvalues(A.adjoint() * H * A, A.adjoint() * G * A);
        CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-10 * (1 + a.cwiseAbs().maxCoeff()));
    }

    // field version agrees with the point version
    SpectralGrid grid(2, 4);
    auto metric = MetricField::conformal(grid, conformal_phi(0.3));
    const auto form = ddbar(grid, grid.sample(product_u()));
    const auto eig = eigenvalues_wrt_metric(form, metric);
    for (std::size_t p = 0; p < grid.size(); p += 7) {
        const auto w = generalized_eigenvalues(form.at(p), metric.at(p));
        CHECK(eig(p, 0) == doctest::Approx(w(0)));
        CHECK(eig(p, 0) >= eig(p, 1));
    }
}

TEST_CASE("commutation rules on the conformal torus") {
    std::array<double, 4> coarse{};
    for (int m : {8, 16}) {
        SpectralGrid g(2, m);
        auto metric = MetricField::conformal(g, conformal_phi(0.6));
        auto r = commutation_residuals(g.sample(product_u()), metric);
        if (m == 8) {
            coarse = r.residual;
        } else {
            for (int t = 0; t < 4; ++t) CHECK(r.residual[static_cast<std::size_t>(t)] <= std::max(1e-11, 0.1 * coarse[static_cast<std::size_t>(t)]));
            CHECK(r.max() < 1e-5);
            // the transposed curvature slots are wrong in the presence of torsion
            CHECK(r.residual_swapped_slots > 1.0);
        }
    }
}

TEST_CASE("field serialization round trips") {
    SpectralGrid g(2, 4);
    auto metric = MetricField::conformal(g, conformal_phi(0.3));
    std::vector<const CField*> comps;
    for (const auto& c : metric.components()) comps.push_back(&c);
    {
        std::stringstream ss;
        write_field_binary(ss, g, comps);
        auto back = read_field_binary(ss);
        CHECK(back.n == 2);
        CHECK(back.m == 4);
        REQUIRE(back.components.size() == 4);
        for (int c = 0; c < 4; ++c)
            for (std::size_t p = 0; p < g.size(); ++p) CHECK(back.components[static_cast<std::size_t>(c)][p] == (*comps[static_cast<std::size_t>(c)])[p]);
    }
    {
        std::stringstream ss;
        write_field_csv(ss, g, comps);
        auto back = read_field_csv(ss);
        REQUIRE(back.components.size() == 4);
        for (std::size_t p = 0; p < g.size(); ++p) CHECK(back.components[0][p] == (*comps[0])[p]);
    }
    std::stringstream junk("nope");
    CHECK_THROWS_AS(read_field_binary(junk), Error);
}
