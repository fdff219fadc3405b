#pragma once

#include <Eigen/Dense>

#include "fusedgroup/model.hpp"

namespace fusedgroup {

/// Quantile check function rho_tau(u) = u * (tau - 1{u < 0}).
inline double check_value(double u, double tau)
{
    return u * (tau - (u < 0.0 ? 1.0 : 0.0));
}

/// Subgradient of rho_tau at u; at u == 0 returns tau (right derivative).
inline double check_subgradient(double u, double tau)
{
    return u < 0.0 ? tau - 1.0 : tau;
}

/**
 * Absolute gap between the two sides of Knight's identity
 *
 *   rho(x - y) - rho(x) = y (1{x<0} - tau) + int_0^y (1{x <= v} - 1{x <= 0}) dv
 *
 * with the integral evaluated in closed form.
 */
double knight_identity_gap(double x, double y, double tau);

/// Closed form of int_0^y (1{x <= v} - 1{x <= 0}) dv (oriented integral).
double knight_integral(double x, double y);

/// argmin_z rho_tau(z) + (z - v)^2 / (2 alpha), alpha > 0.
inline double prox_check(double v, double alpha, double tau)
{
    if (v > alpha * tau) return v - alpha * tau;
    if (v < -alpha * (1.0 - tau)) return v + alpha * (1.0 - tau);
    return 0.0;
}

/// argmin_z z^2 + (z - v)^2 / (2 alpha), alpha > 0.
inline double prox_square(double v, double alpha)
{
    return v / (1.0 + 2.0 * alpha);
}

/// Gradient of sum_i (y_i - x_i' beta)^2, i.e. -2 X'(y - X beta).
Eigen::VectorXd ls_residual_gradient(const GroupedDesign& design, const GroupedCoefficients& beta);

} // namespace fusedgroup
