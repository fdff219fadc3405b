#include "fusedgroup/penalties.hpp"

#include <cmath>
#include <sstream>

namespace fusedgroup {

FusedPenalty FusedPenalty::uniform(int q, double lambda, Index g)
{
    FusedPenalty pen;
    pen.q = q;
    pen.lambda = lambda;
    pen.weights = Eigen::VectorXd::Ones(g > 0 ? g - 1 : 0);
    return pen;
}

void FusedPenalty::validate(Index g) const
{
    if (q != 1 && q != 2) throw SpecError("penalty norm q must be 1 or 2");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw SpecError("lambda must be finite and >= 0");
    const Index pairs = g > 0 ? g - 1 : 0;
    if (weights.size() != pairs) {
        std::ostringstream msg;
        msg << "penalty has " << weights.size() << " weights, expected " << pairs;
        throw DimensionError(msg.str());
    }
    for (Index j = 0; j < weights.size(); ++j) {
        if (!(weights(j) > 0.0) || !std::isfinite(weights(j))) {
            std::ostringstream msg;
            msg << "weight for pair " << j + 2 << " is not strictly positive and finite";
            throw SpecError(msg.str());
        }
    }
}

double block_norm(const Eigen::Ref<const Eigen::VectorXd>& v, int q)
{
    return q == 1 ? v.lpNorm<1>() : v.norm();
}

double penalty_value(const FusedPenalty& pen, const GroupedCoefficients& beta, Index n)
{
    const Index g = beta.groups();
    if (g <= 1 || pen.lambda == 0.0) return 0.0;
    pen.validate(g);
    double s = 0.0;
    for (Index j = 1; j < g; ++j) {
        const Eigen::VectorXd d = beta.block(j) - beta.block(j - 1);
        s += pen.weights(j - 1) * block_norm(d, pen.q);
    }
    return static_cast<double>(n) * pen.lambda * s;
}

Eigen::VectorXd adaptive_weights(const GroupedCoefficients& pilot, Index n, double gamma)
{
    if (n < 1) throw SpecError("adaptive weights need n >= 1");
    if (!(gamma > 0.0)) throw SpecError("gamma must be positive");
    const Index g = pilot.groups();
    const double floor = 1.0 / std::sqrt(static_cast<double>(n));
    Eigen::VectorXd w(g > 0 ? g - 1 : 0);
    for (Index j = 1; j < g; ++j) {
        double s = 0.0;
        for (Index k = 0; k < pilot.group_size(); ++k)
            s += std::pow(std::abs(pilot.block(j)(k) - pilot.block(j - 1)(k)), gamma);
        w(j - 1) = 1.0 / std::max(floor, s);
    }
    return w;
}

void prox_block_norm_inplace(Eigen::Ref<Eigen::VectorXd> v, double kappa, int q)
{
    if (kappa <= 0.0) return;
    if (q == 1) {
        for (Index k = 0; k < v.size(); ++k) {
            const double a = std::abs(v(k)) - kappa;
            v(k) = a > 0.0 ? std::copysign(a, v(k)) : 0.0;
        }
        return;
    }
    const double norm = v.norm();
    if (norm <= kappa) {
        v.setZero();
    } else {
        v *= 1.0 - kappa / norm;
    }
}

Eigen::VectorXd prox_block_norm(const Eigen::Ref<const Eigen::VectorXd>& v, double kappa, int q)
{
    if (kappa < 0.0) throw SpecError("prox threshold must be >= 0");
    if (q != 1 && q != 2) throw SpecError("penalty norm q must be 1 or 2");
    Eigen::VectorXd out = v;
    prox_block_norm_inplace(out, kappa, q);
    return out;
}

} // namespace fusedgroup
