#pragma once

#include <Eigen/Dense>

#include "fusedgroup/model.hpp"

namespace fusedgroup {

/// Fused L_{q,1} penalty over successive block differences.
/// weights(j-1) multiplies ||beta_j - beta_{j-1}||_q (0-based blocks).
struct FusedPenalty
{
    int q = 2;
    double lambda = 0.0;
    Eigen::VectorXd weights;

    static FusedPenalty uniform(int q, double lambda, Index g);
    void validate(Index g) const;
};

/// L_q norm of a block, q in {1, 2}.
double block_norm(const Eigen::Ref<const Eigen::VectorXd>& v, int q);

/// n * lambda * sum_{j>=1} w_j ||beta_j - beta_{j-1}||_q.
double penalty_value(const FusedPenalty& pen, const GroupedCoefficients& beta, Index n);

/**
 * Adaptive weights from a pilot fit:
 *   w_j = 1 / max(n^{-1/2}, sum_k |pilot_{j,k} - pilot_{j-1,k}|^gamma).
 * Every weight lies in (0, sqrt(n)].
 */
Eigen::VectorXd adaptive_weights(const GroupedCoefficients& pilot, Index n, double gamma);

/// Proximal map of kappa * ||.||_q: block soft-threshold (q=2) or
/// componentwise soft-threshold (q=1).
Eigen::VectorXd prox_block_norm(const Eigen::Ref<const Eigen::VectorXd>& v, double kappa, int q);

/// In-place variant used by the solver.
void prox_block_norm_inplace(Eigen::Ref<Eigen::VectorXd> v, double kappa, int q);

} // namespace fusedgroup
