#pragma once

// Independent numeric oracles and fixtures shared by the test binaries.

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "fusedgroup/model.hpp"

namespace testsupport {

/// Minimizer of a convex 1-D function on [lo, hi] by ternary search.
inline double ternary_min(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12)
{
    while (hi - lo > tol) {
        const double a = lo + (hi - lo) / 3.0;
        const double b = hi - (hi - lo) / 3.0;
        if (f(a) <= f(b)) hi = b;
        else lo = a;
    }
    return 0.5 * (lo + hi);
}

/// Same search in extended precision; double objectives are too flat near
/// the minimum to locate it much below 1e-8.
inline double ternary_min_ld(const std::function<long double(long double)>& f, double lo, double hi,
                             double tol = 1e-12)
{
    long double a0 = lo, b0 = hi;
    while (b0 - a0 > tol) {
        const long double a = a0 + (b0 - a0) / 3.0L;
        const long double b = b0 - (b0 - a0) / 3.0L;
        if (f(a) <= f(b)) b0 = b;
        else a0 = a;
    }
    return static_cast<double>(0.5L * (a0 + b0));
}

namespace detail {
inline double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                      double whole, double eps, int depth)
{
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps) return left + right + (left + right - whole) / 15.0;
    return simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) +
           simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1);
}
} // namespace detail

/// Oriented integral of f over [0, y] by adaptive Simpson.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double eps = 1e-12,
                               int depth = 60)
{
    if (a == b) return 0.0;
    if (a > b) return -adaptive_simpson(f, b, a, eps, depth);
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    return detail::simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), eps, depth);
}

/// Central finite-difference gradient with step 1e-6 (1 + |x_k|).
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x)
{
    Eigen::VectorXd g(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double h = 1e-6 * (1.0 + std::abs(x(k)));
        Eigen::VectorXd a = x, b = x;
        a(k) += h;
        b(k) -= h;
        g(k) = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng)
{
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = nd(rng);
    return M;
}

inline fusedgroup::GroupedDesign random_design(Eigen::Index n, Eigen::Index g, Eigen::Index p, std::mt19937_64& rng)
{
    Eigen::MatrixXd X = gaussian_matrix(n, g * p, rng);
    Eigen::VectorXd y = gaussian_matrix(n, 1, rng).col(0) * 2.0;
    return fusedgroup::GroupedDesign(std::move(X), std::move(y), g, p);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("fusedgroup_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace testsupport
