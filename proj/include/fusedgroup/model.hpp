#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace fusedgroup {

using Index = Eigen::Index;

/// Raised when two objects that must agree in shape do not.
class DimensionError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised for invalid problem parameters (tau outside (0,1), negative lambda, ...).
class SpecError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/**
 * Coefficient vector partitioned into g ordered blocks of p entries each.
 *
 * Storage is a single contiguous vector; block j (0-based) occupies
 * entries [j*p, (j+1)*p).
 */
class GroupedCoefficients
{
public:
    GroupedCoefficients() = default;
    GroupedCoefficients(Index g, Index p);
    GroupedCoefficients(Eigen::VectorXd flat, Index g, Index p);

    /// Builds from explicit blocks; all blocks must have the same length.
    static GroupedCoefficients from_blocks(const std::vector<std::vector<double>>& blocks);

    Index groups() const { return g_; }
    Index group_size() const { return p_; }
    Index size() const { return g_ * p_; }

    auto block(Index j) { return flat_.segment(j * p_, p_); }
    auto block(Index j) const { return flat_.segment(j * p_, p_); }

    Eigen::VectorXd& flat() { return flat_; }
    const Eigen::VectorXd& flat() const { return flat_; }

    bool all_finite() const { return flat_.allFinite(); }

private:
    Eigen::VectorXd flat_;
    Index g_ = 0;
    Index p_ = 0;
};

/**
 * Design of a linear model with grouped covariates: n observations,
 * g ordered groups of p covariates each. Column block j of X holds the
 * covariates of group j; group order defines fusion adjacency.
 *
 * g*p > n is allowed (flagged by underdetermined()).
 */
class GroupedDesign
{
public:
    GroupedDesign(Eigen::MatrixXd X, Eigen::VectorXd y, Index g, Index p);

    Index observations() const { return X_.rows(); }
    Index groups() const { return g_; }
    Index group_size() const { return p_; }
    Index parameters() const { return g_ * p_; }
    bool underdetermined() const { return parameters() > observations(); }

    const Eigen::MatrixXd& X() const { return X_; }
    const Eigen::VectorXd& y() const { return y_; }

    /// Covariate subvector of observation i for group j.
    auto covariates(Index i, Index j) const { return X_.row(i).segment(j * p_, p_); }

    Eigen::VectorXd predict(const GroupedCoefficients& beta) const;
    Eigen::VectorXd residuals(const GroupedCoefficients& beta) const;

    /// Throws DimensionError if beta does not have this design's block shape.
    void check_shape(const GroupedCoefficients& beta, const char* what = "beta") const;

private:
    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
    Index g_;
    Index p_;
};

struct QuantileLoss
{
    double tau = 0.5;
};

struct LeastSquaresLoss
{
};

using LossKind = std::variant<QuantileLoss, LeastSquaresLoss>;

struct UniformWeights
{
};

/// Two-stage weights built from a pilot (non-adaptive) fit.
struct AdaptiveWeights
{
    double gamma = 1.0;
    GroupedCoefficients pilot;
};

using WeightMode = std::variant<UniformWeights, AdaptiveWeights>;

/// Which estimator to compute. lambda is the user-facing value; the
/// objective multiplies it by n.
struct ProblemSpec
{
    LossKind loss = LeastSquaresLoss{};
    int q = 2;
    double lambda = 0.0;
    WeightMode weights = UniformWeights{};

    void validate() const;
    bool is_quantile() const { return std::holds_alternative<QuantileLoss>(loss); }
    bool is_adaptive() const { return std::holds_alternative<AdaptiveWeights>(weights); }
};

std::string describe(const LossKind& loss);

/// Per-pair fusion weights (length g-1) implied by spec for a design of n rows.
Eigen::VectorXd pair_weights(const ProblemSpec& spec, Index n, Index g, Index p);

/// Bare loss term: sum of check losses or sum of squared residuals.
double loss_value(const GroupedDesign& design, const LossKind& loss, const GroupedCoefficients& beta);

/// Full penalized objective: loss + n * lambda * sum_j w_j ||beta_j - beta_{j-1}||_q.
double objective(const GroupedDesign& design, const ProblemSpec& spec, const GroupedCoefficients& beta);

} // namespace fusedgroup
