#include "fusedgroup/losses.hpp"

#include <algorithm>
#include <cmath>

namespace fusedgroup {

double knight_integral(double x, double y)
{
    // Integrand is 1{v >= x} - 1{0 >= x}; it is nonzero only between 0 and x.
    if (x <= 0.0) return y < 0.0 ? std::max(0.0, x - y) : 0.0;
    return y > 0.0 ? std::max(0.0, y - x) : 0.0;
}

double knight_identity_gap(double x, double y, double tau)
{
    const double lhs = check_value(x - y, tau) - check_value(x, tau);
    const double rhs = y * ((x < 0.0 ? 1.0 : 0.0) - tau) + knight_integral(x, y);
    return std::abs(lhs - rhs);
}

Eigen::VectorXd ls_residual_gradient(const GroupedDesign& design, const GroupedCoefficients& beta)
{
    return -2.0 * design.X().transpose() * design.residuals(beta);
}

} // namespace fusedgroup
