#include "fusedgroup/detection.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace fusedgroup {

bool DifferenceSet::contains(int j) const
{
    return std::binary_search(indices.begin(), indices.end(), j);
}

namespace {

bool differs(double diff_inf, double a_inf, double b_inf, double tol)
{
    return diff_inf > tol * (1.0 + std::max(a_inf, b_inf));
}

} // namespace

DifferenceSet detect_differences(const GroupedCoefficients& beta, double fusion_tol)
{
    DifferenceSet out;
    for (Index j = 1; j < beta.groups(); ++j) {
        const double d = (beta.block(j) - beta.block(j - 1)).lpNorm<Eigen::Infinity>();
        if (differs(d, beta.block(j).lpNorm<Eigen::Infinity>(), beta.block(j - 1).lpNorm<Eigen::Infinity>(),
                    fusion_tol))
            out.indices.push_back(static_cast<int>(j + 1));
    }
    return out;
}

DifferenceSet detect_from_differences(const GroupedCoefficients& beta, const Eigen::VectorXd& diffs,
                                      double fusion_tol)
{
    const Index g = beta.groups();
    const Index p = beta.group_size();
    if (diffs.size() != (g > 0 ? (g - 1) * p : 0))
        throw DimensionError("difference vector does not match coefficient shape");
    DifferenceSet out;
    for (Index j = 1; j < g; ++j) {
        const double d = diffs.segment((j - 1) * p, p).lpNorm<Eigen::Infinity>();
        if (differs(d, beta.block(j).lpNorm<Eigen::Infinity>(), beta.block(j - 1).lpNorm<Eigen::Infinity>(),
                    fusion_tol))
            out.indices.push_back(static_cast<int>(j + 1));
    }
    return out;
}

DetectionScore score_detection(const DifferenceSet& detected, const DifferenceSet& truth)
{
    if (truth.empty()) throw std::invalid_argument("score_detection: true difference set is empty");
    std::size_t hits = 0;
    for (int j : detected.indices)
        if (truth.contains(j)) ++hits;
    const double t = static_cast<double>(truth.size());
    return {static_cast<double>(hits) / t, static_cast<double>(detected.size()) / t, detected.size() - hits};
}

double med_metric(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat)
{
    if (y.size() != yhat.size()) throw DimensionError("med_metric: length mismatch");
    if (y.size() == 0) throw DimensionError("med_metric: empty input");
    std::vector<double> r(static_cast<std::size_t>(y.size()));
    for (Index i = 0; i < y.size(); ++i) r[static_cast<std::size_t>(i)] = y(i) - yhat(i);
    const std::size_t m = r.size() / 2;
    std::nth_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(m), r.end());
    const double hi = r[m];
    if (r.size() % 2 == 1) return hi;
    const double lo = *std::max_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(m));
    return 0.5 * (lo + hi);
}

double mad_metric(const GroupedCoefficients& beta_true, const GroupedCoefficients& beta_hat)
{
    if (beta_true.groups() != beta_hat.groups() || beta_true.group_size() != beta_hat.group_size())
        throw DimensionError("mad_metric: coefficient shapes differ");
    if (beta_true.size() == 0) return 0.0;
    return (beta_true.flat() - beta_hat.flat()).lpNorm<1>() / static_cast<double>(beta_true.size());
}

std::vector<Segment> segments_from(const DifferenceSet& changes, int g)
{
    std::vector<Segment> out;
    int start = 1;
    for (int j : changes.indices) {
        if (j < 2 || j > g) throw std::out_of_range("change index outside 2..g");
        out.push_back({start, j - 1});
        start = j;
    }
    if (g >= 1) out.push_back({start, g});
    return out;
}

std::string format_recovery(double recovery, double overestimation)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f/%.2f", recovery, overestimation);
    return buf;
}

} // namespace fusedgroup
