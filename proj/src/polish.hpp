#pragma once

// Active-set refinement of an approximate splitting solution.

#include <vector>

#include <Eigen/Dense>

#include "fusedgroup/model.hpp"

namespace fusedgroup::detail {

struct PolishProblem
{
    const Eigen::MatrixXd& X;
    const Eigen::VectorXd& y;
    Index g;
    Index p;
    int q;
    bool quantile;
    double tau;
    const Eigen::VectorXd& kappa; // per-pair thresholds n * lambda * w_j
};

/// Zero pattern read off the splitting variables.
struct ActivePattern
{
    std::vector<bool> zero_resid; // residual i interpolated exactly
    std::vector<bool> zero_diff;  // difference component (pair j, coord k) exactly zero

    bool operator==(const ActivePattern&) const = default;
};

ActivePattern pattern_from(const PolishProblem& prob, const Eigen::VectorXd& resid, const Eigen::VectorXd& diffs);

struct PolishResult
{
    bool ok = false;      // candidate is feasible for the pattern
    bool optimal = false; // optimality conditions verified
    Eigen::VectorXd beta;
    Eigen::VectorXd resid; // y - X beta with pattern zeros exact
    Eigen::VectorXd diffs; // D beta with pattern zeros exact
    double objective = 0.0;
};

/**
 * Minimizes the objective restricted to {beta : pattern residuals and
 * differences are exactly zero}, with the signs of the remaining
 * residuals/components frozen, then checks the subgradient optimality
 * conditions of the full problem at the result.
 *
 * resid and diffs are the splitting variables that define the pattern and
 * signs; beta_hint is projected onto the pattern's affine set as a start.
 */
PolishResult polish(const PolishProblem& prob, const Eigen::VectorXd& beta_hint, const Eigen::VectorXd& resid,
                    const Eigen::VectorXd& diffs);

} // namespace fusedgroup::detail
