// Grid-search oracle used to cross-check the splitting solver on tiny problems.
#include <algorithm>
#include <cmath>
#include <vector>

#include "fusedgroup/solver.hpp"

namespace fusedgroup {

namespace {

constexpr Index kMaxOracleDims = 3;

struct Evaluator
{
    const GroupedDesign& design;
    const ProblemSpec& spec;
    mutable GroupedCoefficients scratch;

    double operator()(const Eigen::VectorXd& v) const
    {
        scratch.flat() = v;
        return objective(design, spec, scratch);
    }
};

// Bounded golden-section search for min_t f(x + t dir), t in [-delta, delta].
double line_minimize(const Evaluator& f, Eigen::VectorXd& x, const Eigen::VectorXd& dir, double delta)
{
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = -delta;
    double b = delta;
    double c = b - phi * (b - a);
    double d = a + phi * (b - a);
    double fc = f(x + c * dir);
    double fd = f(x + d * dir);
    for (int it = 0; it < 200 && (b - a) > 1e-14 * (1.0 + delta); ++it) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(x + c * dir);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(x + d * dir);
        }
    }
    const double t = 0.5 * (a + b);
    const double f0 = f(x);
    const double ft = f(x + t * dir);
    if (ft < f0) {
        x += t * dir;
        return ft;
    }
    return f0;
}

std::vector<Eigen::VectorXd> search_directions(Index m)
{
    // All nonzero vectors in {-1,0,1}^m up to sign.
    std::vector<Eigen::VectorXd> dirs;
    Index total = 1;
    for (Index k = 0; k < m; ++k) total *= 3;
    for (Index code = 0; code < total; ++code) {
        Eigen::VectorXd v(m);
        Index c = code;
        for (Index k = 0; k < m; ++k) {
            v(k) = static_cast<double>(c % 3) - 1.0;
            c /= 3;
        }
        if (v.isZero()) continue;
        // keep the representative whose first nonzero entry is positive
        Index first = 0;
        while (v(first) == 0.0) ++first;
        if (v(first) < 0.0) continue;
        dirs.push_back(v.normalized());
    }
    return dirs;
}

// Largest coefficient among exact fits through m-row subsets; bounds where
// loss-only minimizers can sit for small n.
double subset_fit_scale(const GroupedDesign& design)
{
    const Index n = design.observations();
    const Index m = design.parameters();
    if (n > 12 || m > n) return 0.0;
    double scale = 0.0;
    std::vector<bool> pick(static_cast<std::size_t>(n), false);
    std::fill(pick.begin(), pick.begin() + m, true);
    do {
        Eigen::MatrixXd A(m, m);
        Eigen::VectorXd b(m);
        Index row = 0;
        for (Index i = 0; i < n; ++i) {
            if (!pick[static_cast<std::size_t>(i)]) continue;
            A.row(row) = design.X().row(i);
            b(row) = design.y()(i);
            ++row;
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        if (lu.isInvertible()) scale = std::max(scale, lu.solve(b).lpNorm<Eigen::Infinity>());
    } while (std::prev_permutation(pick.begin(), pick.end()));
    return scale;
}

} // namespace

GroupedCoefficients brute_force_fit(const GroupedDesign& design, const ProblemSpec& spec, const GridSpec& grid)
{
    spec.validate();
    const Index g = design.groups();
    const Index p = design.group_size();
    const Index m = g * p;
    if (m > kMaxOracleDims) throw DimensionError("brute_force_fit supports at most 3 coefficients");
    if (grid.points_per_dim < 3) throw SpecError("grid needs at least 3 points per dimension");

    const Evaluator f{design, spec, GroupedCoefficients(g, p)};

    Eigen::VectorXd center = design.X().completeOrthogonalDecomposition().solve(design.y());
    double h = grid.half_width;
    if (h <= 0.0) {
        const double scale = std::max({center.lpNorm<Eigen::Infinity>(), subset_fit_scale(design),
                                       design.y().lpNorm<Eigen::Infinity>()});
        h = 4.0 * (1.0 + scale);
    }
    const double h0 = h;

    const int K = grid.points_per_dim | 1; // odd, so the center stays on the grid
    Index total = 1;
    for (Index k = 0; k < m; ++k) total *= K;

    double best = f(center);
    Eigen::VectorXd point(m);
    while (h > 1e-11 * (1.0 + center.lpNorm<Eigen::Infinity>())) {
        const double step = 2.0 * h / static_cast<double>(K - 1);
        Eigen::VectorXd next = center;
        for (Index code = 0; code < total; ++code) {
            Index c = code;
            for (Index k = 0; k < m; ++k) {
                point(k) = center(k) - h + step * static_cast<double>(c % K);
                c /= K;
            }
            const double v = f(point);
            if (v < best) {
                best = v;
                next = point;
            }
        }
        center = next;
        h = 4.0 * step;
    }

    const auto dirs = search_directions(m);
    double delta = 0.1 * h0;
    for (int round = 0; round < 200; ++round) {
        const double before = best;
        for (const auto& dir : dirs) best = line_minimize(f, center, dir, delta);
        if (before - best < grid.refine_tol) {
            if (delta < 1e-9) break;
            delta *= 0.1;
        }
    }
    return GroupedCoefficients(center, g, p);
}

} // namespace fusedgroup
