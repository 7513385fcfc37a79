#include "doctest.h"

#include "hlab/errors.hpp"
#include "hlab/estimates.hpp"

#include <cmath>
#include <random>

using namespace hlab;

namespace {

Expr mode(double amp, FourierMode::Trig trig, std::vector<int> k) { return Expr{0.0, {FourierMode{amp, trig, std::move(k)}}}; }

MatC diag2(double a, double b) {
    MatC m = MatC::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = b;
    return m;
}

// −D²F along B at diag(λ) from the eigenvalue jet:
// Σ f_ij B_ii B_jj + Σ_{i≠j} (f_i − f_j)/(λ_i − λ_j) |B_ij|²
double second_variation(const OperatorSpec& op, const std::vector<double>& lam, const MatC& B) {
    const auto jet = eval_jet(op, lam);
    const int n = op.n;
    double s = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j || lam[static_cast<std::size_t>(i)] == lam[static_cast<std::size_t>(j)]) {
                s += jet.hess(i, j) * B(i, i).real() * B(j, j).real();
                if (i != j) s += jet.hess(i, i) * std::norm(B(i, j));
            } else {
                s += jet.hess(i, j) * B(i, i).real() * B(j, j).real();
                s += (jet.grad(i) - jet.grad(j)) / (lam[static_cast<std::size_t>(i)] - lam[static_cast<std::size_t>(j)]) * std::norm(B(i, j));
            }
        }
    return -s;
}

}  // namespace

TEST_CASE("second_order_report") {
    SUBCASE("empty family") { CHECK_THROWS_AS(second_order_report(std::span<const EstimateRow>{}), Error); }
    SUBCASE("u = 0 gives zero ratios") {
        const std::vector<EstimateRow> rows{estimate_row(0, 0, 0)};
        const auto r = second_order_report(std::span<const EstimateRow>(rows));
        CHECK(r.ratio_HMW == 0.0);
        CHECK(r.ratio_growth == 0.0);
        CHECK(r.fit_points == 0);
    }
    SUBCASE("fit recovers an exact exponential") {
        std::vector<EstimateRow> rows;
        for (double osc : {0.1, 0.2, 0.4, 0.7}) rows.push_back(estimate_row(2.0 * std::exp(3.0 * osc), 0.5 * osc, osc));
        const auto r = second_order_report(std::span<const EstimateRow>(rows));
        CHECK(r.C2_fit == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(r.C1_fit == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(r.ratio_HMW == doctest::Approx(rows.back().ratio_HMW));
        CHECK(r.ratio_growth == doctest::Approx(rows.back().ratio_HMW / rows.front().ratio_HMW));
    }
    SUBCASE("ratio definition") {
        const auto row = estimate_row(3.0, 2.0, 1.0);
        CHECK(row.ratio_HMW == doctest::Approx(3.0 / 5.0));
        CHECK_THROWS_AS(estimate_row(-1.0, 0.0, 0.0), Error);
    }
}

TEST_CASE("CNS inequality") {
    SUBCASE("hand-checked equality case") {
        MatC B = MatC::Zero(2, 2);
        B(0, 1) = B(1, 0) = 1.0;
        const std::vector<double> lam{2.0, 1.0};
        const auto s = cns_sample(OperatorSpec::log_rho_k(2, 1), lam, B);
        CHECK(std::abs(s.left - 1.0) < 1e-9);
        CHECK(std::abs(s.right - 1.0) < 1e-12);
    }
    SUBCASE("linear operator") {
        std::mt19937_64 rng(1);
        MatC B = MatC::Random(3, 3);
        B = B + MatC(B.adjoint());
        const std::vector<double> lam{3.0, 1.0, -0.5};
        const auto s = cns_sample(OperatorSpec::sigma_k_root(3, 1), lam, B);
        CHECK(std::abs(s.left) < 1e-8);
        CHECK(std::abs(s.right) < 1e-14);
    }
    SUBCASE("tied eigenvalues") {
        const std::vector<double> lam{1.0, 1.0};
        CHECK_THROWS_WITH_AS(cns_sample(OperatorSpec::log_rho_k(2, 1), lam, MatC::Identity(2, 2)),
                             doctest::Contains("DegenerateSpectrum"), Error);
    }
    SUBCASE("second differences agree with the eigenvalue jet") {
        std::mt19937_64 rng(7);
        for (const auto& op : {OperatorSpec::sigma_k_root(3, 2), OperatorSpec::log_rho_k(3, 1), OperatorSpec::sum_arctan(3),
                               OperatorSpec::sigma_quotient(3, 2, 1)}) {
            for (int t = 0; t < 20; ++t) {
                const auto lam = sample_inside(op, rng, 5.0, 0.05);
                MatC B = MatC::Random(3, 3);
                B = 0.5 * (B + MatC(B.adjoint()));
                const auto s = cns_sample(op, lam, B);
                const double expect = second_variation(op, lam, B);
                CHECK(std::abs(s.left - expect) < 1e-6 * (1.0 + std::abs(expect)));
            }
        }
    }
    SUBCASE("no violations") {
        for (const auto& op : {OperatorSpec::sigma_k_root(3, 2), OperatorSpec::log_rho_k(3, 2), OperatorSpec::sigma_k_over_km1(2, 2)}) {
            const auto r = cns_inequality_check(op, 1000, 42);
            CHECK(r.violations == 0);
            CHECK(r.evaluated + r.skipped_degenerate == 1000);
        }
    }
}

TEST_CASE("A3 check") {
    SpectralGrid grid(2, 4);
    const auto flat = MetricField::flat(grid);
    SUBCASE("constant χ fails") {
        const auto v = a3_check([](std::size_t, std::span<const cplx>) { return MatC(MatC::Identity(2, 2)); }, flat, 50, 1);
        CHECK_FALSE(v.holds);
        CHECK(v.c0 == 0.0);
        CHECK(std::abs(v.max_form) < 1e-6);
    }
    SUBCASE("χ = −|ζ|²δ holds with c₀ = 1") {
        const auto toy = [](std::size_t, std::span<const cplx> z) {
            double s = 0.0;
            for (auto x : z) s += std::norm(x);
            return MatC(-s * MatC::Identity(static_cast<Eigen::Index>(z.size()), static_cast<Eigen::Index>(z.size())));
        };
        const auto v = a3_check(toy, flat, 100, 2);
        CHECK(v.holds);
        CHECK(v.c0 == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("Gauduchon χ is linear in ζ") {
        SpectralGrid g3(3, 4);
        const auto metric = MetricField::conformal(g3, mode(0.1, FourierMode::Trig::Cos, {1, 0, 0, 0, 0, 0}));
        const auto pr = Problem::create(metric, OperatorSpec::log_rho_k(3, 2), ChiSpec::gauduchon(MetricField::flat(g3), 1.0),
                                        RField(g3.size(), 1.0));
        const auto v = a3_check(chi_function(pr), metric, 50, 3);
        CHECK_FALSE(v.holds);
        CHECK(std::abs(v.max_form) < 1e-5);
    }
}

TEST_CASE("A5 check") {
    SpectralGrid grid(3, 4);
    const auto omega0 = MetricField::flat(grid);
    const RField u = grid.sample_real(mode(0.03, FourierMode::Trig::Cos, {0, 1, 0, 1, 0, 0}));
    SUBCASE("flat metric has no torsion") {
        const auto pr = Problem::create(MetricField::flat(grid), OperatorSpec::log_rho_k(3, 2), ChiSpec::gauduchon(omega0, 1.0),
                                        RField(grid.size(), 1.0));
        const auto r = a5_check(pr, u, 0, 1);
        CHECK(r.samples == static_cast<int>(grid.size()));
        CHECK(r.alpha_max == 1);
        CHECK(r.max_left < 1e-12);
        CHECK(r.max_ratio < 1e-12);
    }
    SUBCASE("conformal metric: diagonal identity and dropped term") {
        const auto metric = MetricField::conformal(grid, mode(0.1, FourierMode::Trig::Cos, {1, 0, 0, 0, 0, 0}));
        const auto pr = Problem::create(metric, OperatorSpec::log_rho_k(3, 2), ChiSpec::gauduchon(omega0, 1.0), RField(grid.size(), 1.0));
        const auto r = a5_check(pr, u, 32, 5);
        CHECK(r.samples == 32);
        CHECK(r.identity_max_diff < 1e-9);
        CHECK(r.max_dropped_term < 1e-9);
        CHECK(r.tilde_zeta_j < 1e-9);
        CHECK(r.tilde_bar_zeta_i < 1e-9);
        CHECK(r.max_left > 1e-3);
        CHECK(std::isfinite(r.max_ratio));
    }
    SUBCASE("requires log ρ_{n−1} and a Gauduchon χ") {
        const auto pr = Problem::create(MetricField::flat(grid), OperatorSpec::log_rho_k(3, 1), ChiSpec::gauduchon(omega0, 1.0),
                                        RField(grid.size(), 1.0));
        CHECK_THROWS_AS(a5_check(pr, u, 4, 1), Error);
    }
}

TEST_CASE("analytic rank") {
    CHECK(analytic_rank(OperatorSpec::log_rho_k(4, 3)) == 3);
    CHECK(analytic_rank(OperatorSpec::sigma_k_root(4, 3)) == 2);
    CHECK_FALSE(analytic_rank(OperatorSpec::sum_arctan(3)).has_value());
}

TEST_CASE("subsolution check") {
    SpectralGrid grid(2, 8);
    const auto flat = MetricField::flat(grid);
    const auto op = OperatorSpec::log_rho_k(2, 1);
    const RField zero(grid.size(), 0.0);

    SUBCASE("ū = 0 for the Gauduchon problem") {
        const auto metric = MetricField::conformal(grid, mode(0.1, FourierMode::Trig::Cos, {1, 0, 0, 0}));
        const RField h = grid.sample_real(mode(0.2, FourierMode::Trig::Sin, {0, 1, 1, 0}));
        const auto pr = Problem::create(metric, op, ChiSpec::gauduchon(MetricField::flat(grid), 1.0), h);
        const auto r = subsolution_check(pr, zero);
        CHECK(r.cplus_counts.in == static_cast<int>(grid.size()));
        CHECK(r.ctilde_counts.in == static_cast<int>(grid.size()));
        CHECK_FALSE(r.any_out());
        CHECK(r.levels.size() <= 8);
    }
    SUBCASE("constant fields agree with the cone queries") {
        const double sigma = 0.3;
        for (const MatC& chi : {diag2(2.0, 1.5), diag2(4.0, -2.0), diag2(0.5, 0.2)}) {
            const auto pr = Problem::create(flat, op, ChiSpec::make_constant(chi), RField(grid.size(), sigma));
            const auto r = subsolution_check(pr, zero);
            const auto ls = LevelSetHandle::create(op, sigma);
            const std::vector<double> mu{std::max(chi(0, 0).real(), chi(1, 1).real()), std::min(chi(0, 0).real(), chi(1, 1).real())};
            const auto cp = membership_cplus(ls, mu, geometric_ladder(10.0, 1e3, 6));
            const auto ct = membership_ctilde(ls, mu);
            for (std::size_t p = 0; p < grid.size(); ++p) {
                CHECK(r.cplus[p] == cp.kind);
                CHECK(r.ctilde[p] == ct.kind);
            }
        }
    }
    SUBCASE("negative eigenvalue past the asymptotic plane is out") {
        const auto pr = Problem::create(flat, op, ChiSpec::make_constant(diag2(5.0, -3.0)), RField(grid.size(), 0.0));
        const auto r = subsolution_check(pr, zero);
        CHECK(r.cplus_counts.out == static_cast<int>(grid.size()));
        CHECK(r.ctilde_counts.out == static_cast<int>(grid.size()));
        CHECK(r.any_out());
        CHECK(r.first_out == 0);
    }
    SUBCASE("relabeling the grid permutes the verdicts") {
        const auto metric = MetricField::conformal(grid, mode(0.3, FourierMode::Trig::Cos, {1, 0, 0, 0}));
        const RField ubar = grid.sample_real(mode(0.4, FourierMode::Trig::Cos, {1, 0, 0, 0}));
        const auto pr = Problem::create(metric, op, ChiSpec::make_constant(diag2(1.0, 0.6)), RField(grid.size(), 0.1));
        const auto r = subsolution_check(pr, ubar);
        // x₁ → x₁ + 1/2 shifts the data by half a period
        const auto metric2 = MetricField::conformal(grid, mode(-0.3, FourierMode::Trig::Cos, {1, 0, 0, 0}));
        const RField ubar2 = grid.sample_real(mode(-0.4, FourierMode::Trig::Cos, {1, 0, 0, 0}));
        const auto pr2 = Problem::create(metric2, op, ChiSpec::make_constant(diag2(1.0, 0.6)), RField(grid.size(), 0.1));
        const auto r2 = subsolution_check(pr2, ubar2);
        CHECK(r.cplus_counts.in == r2.cplus_counts.in);
        CHECK(r.cplus_counts.out == r2.cplus_counts.out);
        CHECK(r.ctilde_counts.out == r2.ctilde_counts.out);
        CHECK(r.cplus_counts.out > 0);
        for (std::size_t p = 0; p < grid.size(); ++p) {
            std::size_t q = p;
            // shift along axis 0 by m/2
            const int i0 = grid.axis_index(p, 0);
            for (std::size_t cand = 0; cand < grid.size(); ++cand) {
                bool same = grid.axis_index(cand, 0) == (i0 + grid.m() / 2) % grid.m();
                for (int a = 1; a < grid.axes() && same; ++a) same = grid.axis_index(cand, a) == grid.axis_index(p, a);
                if (same) q = cand;
            }
            CHECK(r.cplus[p] == r2.cplus[q]);
            CHECK(r.ctilde[p] == r2.ctilde[q]);
        }
    }
}
