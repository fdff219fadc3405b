#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fusedgroup/model.hpp"

namespace fusedgroup {

inline constexpr double kDefaultFusionTol = 1e-6;

/// Sorted set of 1-based group indices j in {2..g} whose block differs
/// from block j-1.
struct DifferenceSet
{
    std::vector<int> indices;

    std::size_t size() const { return indices.size(); }
    bool empty() const { return indices.empty(); }
    bool contains(int j) const;
    bool operator==(const DifferenceSet&) const = default;
};

struct DetectionScore
{
    double recovery = 0.0;
    double overestimation = 0.0;
    std::size_t misclassified = 0;
};

/// Per-run evaluation of one estimator against the truth.
struct DetectionReport
{
    double recovery_rate = 0.0;
    double overestimation_ratio = 0.0;
    std::size_t missclassification_count = 0;
    double med = 0.0;
    double mad = 0.0;
};

/// Maximal run of consecutive fused groups, 1-based inclusive bounds.
struct Segment
{
    int first = 1;
    int last = 1;
};

/// Pair j is different iff ||b_j - b_{j-1}||_inf > tol * (1 + max(||b_j||_inf, ||b_{j-1}||_inf)).
DifferenceSet detect_differences(const GroupedCoefficients& beta, double fusion_tol = kDefaultFusionTol);

/**
 * Same rule, but the difference of pair j is read from diffs (the solver's
 * splitting variable, blocks of length p, g-1 of them) instead of from beta.
 */
DifferenceSet detect_from_differences(const GroupedCoefficients& beta, const Eigen::VectorXd& diffs,
                                      double fusion_tol = kDefaultFusionTol);

/// Recovery, overestimation ratio and |detected \ truth|. truth must be non-empty.
DetectionScore score_detection(const DifferenceSet& detected, const DifferenceSet& truth);

/// Median of y - yhat (even length: mean of the two central values).
double med_metric(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

/// Mean absolute deviation over all g*p coordinates.
double mad_metric(const GroupedCoefficients& beta_true, const GroupedCoefficients& beta_hat);

/// Splits 1..g into maximal runs with no change point inside.
std::vector<Segment> segments_from(const DifferenceSet& changes, int g);

/// "a/b" with two decimals: recovery share / detected-to-true ratio.
std::string format_recovery(double recovery, double overestimation);

} // namespace fusedgroup
