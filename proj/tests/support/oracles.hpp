#pragma once

// Test-only reference computations, deliberately independent of the library
// code paths they check.

#include "hlab/symfun.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace hlab::oracle {

/// σ_k by summing products over every k-subset.
inline double sigma_enum(std::span<const double> x, int k) {
    const int n = static_cast<int>(x.size());
    if (k == 0) return 1.0;
    double total = 0.0;
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        if (std::popcount(mask) != k) continue;
        double prod = 1.0;
        for (int i = 0; i < n; ++i)
            if (mask & (1u << i)) prod *= x[static_cast<std::size_t>(i)];
        total += prod;
    }
    return total;
}

/// Direct evaluation of each operator from the subset-enumeration σ's.
inline double f_enum(const OperatorSpec& op, std::span<const double> x) {
    const int n = static_cast<int>(x.size());
    switch (op.family) {
        case Family::SigmaKRoot: return std::pow(sigma_enum(x, op.k), 1.0 / op.k);
        case Family::SigmaQuotient:
            return std::pow(sigma_enum(x, op.k) / sigma_enum(x, op.l), 1.0 / (op.k - op.l));
        case Family::SigmaKOverKm1: return sigma_enum(x, op.k) / sigma_enum(x, op.k - 1);
        case Family::LogRhoK: {
            double v = 0.0;
            for (unsigned mask = 1; mask < (1u << n); ++mask) {
                if (std::popcount(mask) != op.k) continue;
                double s = 0.0;
                for (int i = 0; i < n; ++i)
                    if (mask & (1u << i)) s += x[static_cast<std::size_t>(i)];
                v += std::log(s);
            }
            return v;
        }
        case Family::SumArctan: {
            double v = 0.0;
            for (double t : x) v += std::atan(t);
            return v;
        }
    }
    return NAN;
}

/// Central differences of a scalar function.
inline Eigen::VectorXd fd_gradient(const std::function<double(std::span<const double>)>& f,
                                   std::span<const double> x, double h) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd g(n);
    std::vector<double> p(x.begin(), x.end());
    for (int i = 0; i < n; ++i) {
        p[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] + h;
        const double fp = f(p);
        p[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - h;
        const double fm = f(p);
        p[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Central differences of a vector function (the Jacobian of a gradient).
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(std::span<const double>)>& g,
                                   std::span<const double> x, double h) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd J(n, n);
    std::vector<double> p(x.begin(), x.end());
    for (int j = 0; j < n; ++j) {
        p[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)] + h;
        const Eigen::VectorXd gp = g(p);
        p[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)] - h;
        const Eigen::VectorXd gm = g(p);
        p[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)];
        J.col(j) = (gp - gm) / (2.0 * h);
    }
    return J;
}

/// Every operator family instantiated for dimension n.
inline std::vector<OperatorSpec> all_operators(int n) {
    std::vector<OperatorSpec> ops;
    for (int k = 1; k <= n; ++k) ops.push_back(OperatorSpec::sigma_k_root(n, k));
    for (int k = 2; k <= n; ++k)
        for (int l = 1; l < k; ++l) ops.push_back(OperatorSpec::sigma_quotient(n, k, l));
    for (int k = 2; k <= n; ++k) ops.push_back(OperatorSpec::sigma_k_over_km1(n, k));
    for (int k = 1; k <= n; ++k) ops.push_back(OperatorSpec::log_rho_k(n, k));
    ops.push_back(OperatorSpec::sum_arctan(n));
    return ops;
}

}  // namespace hlab::oracle
