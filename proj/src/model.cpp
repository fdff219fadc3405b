#include "fusedgroup/model.hpp"

#include <cmath>
#include <sstream>

#include "fusedgroup/losses.hpp"
#include "fusedgroup/penalties.hpp"

namespace fusedgroup {

GroupedCoefficients::GroupedCoefficients(Index g, Index p)
    : flat_(Eigen::VectorXd::Zero(g * p)), g_(g), p_(p)
{
    if (g < 0 || p < 0) throw DimensionError("negative group dimensions");
}

GroupedCoefficients::GroupedCoefficients(Eigen::VectorXd flat, Index g, Index p)
    : flat_(std::move(flat)), g_(g), p_(p)
{
    if (flat_.size() != g * p) {
        std::ostringstream msg;
        msg << "coefficient vector of length " << flat_.size() << " does not split into " << g << " blocks of "
            << p;
        throw DimensionError(msg.str());
    }
}

GroupedCoefficients GroupedCoefficients::from_blocks(const std::vector<std::vector<double>>& blocks)
{
    const Index g = static_cast<Index>(blocks.size());
    const Index p = g > 0 ? static_cast<Index>(blocks.front().size()) : 0;
    GroupedCoefficients out(g, p);
    for (Index j = 0; j < g; ++j) {
        const auto& b = blocks[static_cast<std::size_t>(j)];
        if (static_cast<Index>(b.size()) != p) {
            std::ostringstream msg;
            msg << "block " << j + 1 << " has length " << b.size() << ", expected " << p;
            throw DimensionError(msg.str());
        }
        for (Index k = 0; k < p; ++k) out.block(j)(k) = b[static_cast<std::size_t>(k)];
    }
    return out;
}

GroupedDesign::GroupedDesign(Eigen::MatrixXd X, Eigen::VectorXd y, Index g, Index p)
    : X_(std::move(X)), y_(std::move(y)), g_(g), p_(p)
{
    if (g < 1 || p < 1) throw DimensionError("design needs g >= 1 and p >= 1");
    if (X_.cols() != g * p) {
        std::ostringstream msg;
        msg << "design has " << X_.cols() << " columns, expected g*p = " << g * p;
        throw DimensionError(msg.str());
    }
    if (X_.rows() != y_.size()) {
        std::ostringstream msg;
        msg << "design has " << X_.rows() << " rows but response has length " << y_.size();
        throw DimensionError(msg.str());
    }
    if (X_.rows() < 1) throw DimensionError("design has no observations");
    if (!X_.allFinite()) throw SpecError("design matrix contains non-finite entries");
    if (!y_.allFinite()) throw SpecError("response contains non-finite entries");
}

void GroupedDesign::check_shape(const GroupedCoefficients& beta, const char* what) const
{
    if (beta.groups() != g_) {
        std::ostringstream msg;
        msg << what << " has " << beta.groups() << " blocks, design has " << g_ << " groups";
        throw DimensionError(msg.str());
    }
    if (beta.group_size() != p_) {
        std::ostringstream msg;
        msg << what << " block 1 has length " << beta.group_size() << ", design groups have " << p_
            << " covariates";
        throw DimensionError(msg.str());
    }
}

Eigen::VectorXd GroupedDesign::predict(const GroupedCoefficients& beta) const
{
    check_shape(beta);
    return X_ * beta.flat();
}

Eigen::VectorXd GroupedDesign::residuals(const GroupedCoefficients& beta) const
{
    return y_ - predict(beta);
}

void ProblemSpec::validate() const
{
    if (const auto* ql = std::get_if<QuantileLoss>(&loss)) {
        if (!(ql->tau > 0.0 && ql->tau < 1.0)) throw SpecError("quantile level tau must lie in (0,1)");
    }
    if (q != 1 && q != 2) throw SpecError("penalty norm q must be 1 or 2");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw SpecError("lambda must be finite and >= 0");
    if (const auto* aw = std::get_if<AdaptiveWeights>(&weights)) {
        if (!(aw->gamma > 0.0) || !std::isfinite(aw->gamma)) throw SpecError("gamma must be positive");
        if (!aw->pilot.all_finite()) throw SpecError("pilot coefficients contain non-finite entries");
    }
}

std::string describe(const LossKind& loss)
{
    if (const auto* ql = std::get_if<QuantileLoss>(&loss)) {
        std::ostringstream s;
        s << "quantile(" << ql->tau << ")";
        return s.str();
    }
    return "ls";
}

Eigen::VectorXd pair_weights(const ProblemSpec& spec, Index n, Index g, Index p)
{
    const Index pairs = g > 0 ? g - 1 : 0;
    if (const auto* aw = std::get_if<AdaptiveWeights>(&spec.weights)) {
        if (aw->pilot.groups() != g || aw->pilot.group_size() != p) {
            std::ostringstream msg;
            msg << "pilot has shape " << aw->pilot.groups() << "x" << aw->pilot.group_size() << ", expected " << g
                << "x" << p;
            throw DimensionError(msg.str());
        }
        return adaptive_weights(aw->pilot, n, aw->gamma);
    }
    return Eigen::VectorXd::Ones(pairs);
}

double loss_value(const GroupedDesign& design, const LossKind& loss, const GroupedCoefficients& beta)
{
    const Eigen::VectorXd r = design.residuals(beta);
    if (const auto* ql = std::get_if<QuantileLoss>(&loss)) {
        double s = 0.0;
        for (Index i = 0; i < r.size(); ++i) s += check_value(r(i), ql->tau);
        return s;
    }
    return r.squaredNorm();
}

double objective(const GroupedDesign& design, const ProblemSpec& spec, const GroupedCoefficients& beta)
{
    design.check_shape(beta);
    FusedPenalty pen;
    pen.q = spec.q;
    pen.lambda = spec.lambda;
    pen.weights = pair_weights(spec, design.observations(), design.groups(), design.group_size());
    return loss_value(design, spec.loss, beta) + penalty_value(pen, beta, design.observations());
}

} // namespace fusedgroup
