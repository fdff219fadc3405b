#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fusedgroup/detection.hpp"
#include "fusedgroup/model.hpp"

namespace fusedgroup {

/// Thrown when an iterate becomes non-finite.
class SolverError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/**
 * Implicit successive-difference operator: maps beta (g blocks of p) to
 * the g-1 blocks beta_j - beta_{j-1}, j = 1..g-1 (0-based).
 */
class DiffOperator
{
public:
    DiffOperator(Index g, Index p) : g_(g), p_(p) {}

    Index groups() const { return g_; }
    Index group_size() const { return p_; }
    Index rows() const { return g_ > 0 ? (g_ - 1) * p_ : 0; }
    Index cols() const { return g_ * p_; }

    Eigen::VectorXd apply(const Eigen::VectorXd& beta) const;
    Eigen::VectorXd adjoint(const Eigen::VectorXd& diffs) const;
    void apply(const Eigen::VectorXd& beta, Eigen::VectorXd& out) const;
    void adjoint(const Eigen::VectorXd& diffs, Eigen::VectorXd& out) const;

    /// D'D, block tridiagonal with (1,2,...,2,1) x I_p on the diagonal.
    Eigen::MatrixXd gram() const;
    Eigen::MatrixXd dense() const;

private:
    Index g_;
    Index p_;
};

/// Complete splitting state; lets a later fit resume exactly where one ended.
struct SolverState
{
    Eigen::VectorXd beta;
    Eigen::VectorXd resid;     // splitting copy of y - X beta
    Eigen::VectorXd diffs;     // splitting copy of D beta
    Eigen::VectorXd dual_resid; // unscaled multipliers
    Eigen::VectorXd dual_diffs;
    double rho_resid = 1.0;
    double rho_diffs = 1.0;
};

struct SolverConfig
{
    double rho = 1.0;
    int max_iter = 10000;
    double tol_abs = 1e-8;
    double tol_rel = 1e-6;
    double fusion_tol = kDefaultFusionTol;
    bool adapt_rho = true;
    /// History length for Anderson acceleration of the splitting iteration; 0 disables.
    int anderson_memory = 10;
    /// Start from these coefficients (splitting copies derived from them).
    std::optional<GroupedCoefficients> warm_start;
    /// Start from a full state saved by a previous fit; overrides warm_start.
    std::optional<SolverState> warm_state;

    void validate() const;
};

struct FitResult
{
    GroupedCoefficients beta;
    DifferenceSet detected_set;
    std::vector<double> objective_trace;
    bool converged = false;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double final_rho = 1.0;
    bool underdetermined = false;
    SolverState state;

    double objective() const { return objective_trace.empty() ? 0.0 : objective_trace.back(); }
};

/**
 * Minimizes loss(beta) + n * lambda * sum_j w_j ||beta_j - beta_{j-1}||_q by
 * ADMM on the splitting  X beta + r = y,  D beta - d = 0.
 *
 * Separate penalties for the two constraint blocks are rebalanced from the
 * residuals; the beta-update matrix X'X + (rho_d/rho_r) D'D is refactorized
 * only then. Iterates are Anderson-accelerated with a safeguard.
 *
 * When the zero pattern of (r, d) settles, the problem restricted to that
 * pattern is solved directly and the subgradient optimality conditions are
 * checked; converged is true if they hold or both residual criteria are met.
 * The trace records the objective of the best point seen so far, which is
 * also the returned beta.
 */
FitResult fit(const GroupedDesign& design, const ProblemSpec& spec, const SolverConfig& cfg = {});

/// Two-stage adaptive fit: pilot fused fit at pilot_lambda, then refit with
/// adaptive weights at lambda.
struct TwoStageResult
{
    FitResult pilot;
    FitResult adaptive;
};
TwoStageResult fit_two_stage(const GroupedDesign& design, const LossKind& loss, int q, double pilot_lambda,
                             double lambda, double gamma, const SolverConfig& cfg = {});

struct GridSpec
{
    int points_per_dim = 11;
    /// Box half-width; <= 0 picks one from the least-squares fit.
    double half_width = 0.0;
    double refine_tol = 1e-7;
};

/**
 * Independent oracle for tiny problems (g*p <= 3): zooming dense grid
 * search followed by line-search refinement along coordinate and
 * pairwise-diagonal directions.
 */
GroupedCoefficients brute_force_fit(const GroupedDesign& design, const ProblemSpec& spec,
                                    const GridSpec& grid = {});

enum class Stage { Fused, AdaptiveFused };

struct Schedule
{
    double lambda;
    double b;
};

/// lambda_n = (log n)^{1/2}/n (fused) or (log n)^{5/2}/n (adaptive); b_n = (log n / n)^{1/2}.
Schedule default_schedules(Index n, Stage stage);

} // namespace fusedgroup
