#include <doctest.h>

#include <cmath>
#include <random>

#include "fusedgroup/losses.hpp"
#include "fusedgroup/solver.hpp"
#include "support.hpp"

using namespace fusedgroup;

namespace {

// obs 1 loads group 1, obs 2 loads group 2
GroupedDesign two_point_design()
{
    return GroupedDesign(Eigen::Matrix2d::Identity(), Eigen::Vector2d(0, 2), 2, 1);
}

ProblemSpec random_spec(std::mt19937_64& rng, const GroupedDesign& d, int variant)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double taus[] = {0.3, 0.5, 0.8};
    const LossKind loss = variant % 4 == 3 ? LossKind{LeastSquaresLoss{}} : LossKind{QuantileLoss{taus[variant % 4]}};
    const int q = (variant / 4) % 2 ? 2 : 1;
    const double lambda = 0.05 + u(rng) * 0.5;
    if ((variant / 8) % 2) {
        GroupedCoefficients pilot(testsupport::gaussian_matrix(d.parameters(), 1, rng).col(0), d.groups(),
                                  d.group_size());
        return ProblemSpec{loss, q, lambda, AdaptiveWeights{1.0, pilot}};
    }
    return ProblemSpec{loss, q, lambda, UniformWeights{}};
}

} // namespace

TEST_CASE("DiffOperator adjoint and dense form")
{
    std::mt19937_64 rng(1);
    for (Index g : {1, 2, 5}) {
        for (Index p : {1, 3}) {
            DiffOperator D(g, p);
            const Eigen::MatrixXd M = D.dense();
            CHECK(M.rows() == D.rows());
            for (int rep = 0; rep < 10; ++rep) {
                const Eigen::VectorXd b = testsupport::gaussian_matrix(D.cols(), 1, rng).col(0);
                const Eigen::VectorXd z = testsupport::gaussian_matrix(std::max<Index>(D.rows(), 0), 1, rng).col(0);
                CHECK((D.apply(b) - M * b).norm() <= 1e-12);
                CHECK((D.adjoint(z) - M.transpose() * z).norm() <= 1e-12);
                CHECK(std::abs(D.apply(b).dot(z) - b.dot(D.adjoint(z))) <= 1e-12);
            }
            CHECK((D.gram() - M.transpose() * M).norm() == 0.0);
        }
    }
}

TEST_CASE("fit: closed-form examples")
{
    SUBCASE("sample mean")
    {
        GroupedDesign d(Eigen::MatrixXd::Ones(2, 1), Eigen::Vector2d(1, 3), 1, 1);
        const FitResult r = fit(d, ProblemSpec{LeastSquaresLoss{}, 2, 0.0, UniformWeights{}});
        CHECK(r.converged);
        CHECK(r.beta.flat()(0) == doctest::Approx(2.0).epsilon(1e-8));
    }
    SUBCASE("two-point LS, n lambda w = 1")
    {
        const FitResult r = fit(two_point_design(), ProblemSpec{LeastSquaresLoss{}, 1, 0.5, UniformWeights{}});
        CHECK(r.converged);
        CHECK(r.beta.flat()(0) == doctest::Approx(0.5).epsilon(1e-7));
        CHECK(r.beta.flat()(1) == doctest::Approx(1.5).epsilon(1e-7));
        CHECK(r.detected_set == DifferenceSet{{2}});
    }
    SUBCASE("two-point LS, n lambda w = 4 fuses at the mean")
    {
        const FitResult r = fit(two_point_design(), ProblemSpec{LeastSquaresLoss{}, 1, 2.0, UniformWeights{}});
        CHECK(r.beta.flat()(0) == doctest::Approx(1.0).epsilon(1e-7));
        CHECK(r.beta.flat()(1) == doctest::Approx(1.0).epsilon(1e-7));
        CHECK(r.detected_set.empty());
    }
    SUBCASE("median is the LAD fit")
    {
        GroupedDesign d(Eigen::MatrixXd::Ones(3, 1), Eigen::Vector3d(1, 2, 9), 1, 1);
        const FitResult r = fit(d, ProblemSpec{QuantileLoss{0.5}, 2, 0.0, UniformWeights{}});
        CHECK(r.converged);
        CHECK(r.beta.flat()(0) == doctest::Approx(2.0).epsilon(1e-8));
    }
}

TEST_CASE("two-point instance: oracle and stationarity agree")
{
    // 2 b1 = s, 2 (b2 - 2) = -s with s = 1
    const GroupedDesign d = two_point_design();
    const ProblemSpec spec{LeastSquaresLoss{}, 1, 0.5, UniformWeights{}};
    const GroupedCoefficients bf = brute_force_fit(d, spec);
    CHECK(bf.flat()(0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(bf.flat()(1) == doctest::Approx(1.5).epsilon(1e-6));
    const FitResult r = fit(d, spec);
    CHECK(std::abs(objective(d, spec, bf) - r.objective()) <= 1e-6);
}

TEST_CASE("brute_force_fit matches least squares at lambda 0")
{
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 5; ++rep) {
        const GroupedDesign d = testsupport::random_design(5, 3, 1, rng);
        const GroupedCoefficients bf = brute_force_fit(d, ProblemSpec{LeastSquaresLoss{}, 2, 0.0, UniformWeights{}});
        const Eigen::VectorXd ls = d.X().colPivHouseholderQr().solve(d.y());
        CHECK((bf.flat() - ls).lpNorm<Eigen::Infinity>() <= 1e-6 * (1 + ls.lpNorm<Eigen::Infinity>()));
    }
    std::mt19937_64 big(3);
    CHECK_THROWS(brute_force_fit(testsupport::random_design(6, 2, 2, big), ProblemSpec{}));
}

TEST_CASE("fit agrees with the brute-force oracle on tiny instances")
{
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 48; ++rep) {
        const Index n = 3 + rep % 4;
        const Index g = 1 + rep % 3;
        const Index p = g == 1 ? 1 + (rep / 3) % 3 : 1;
        const GroupedDesign d = testsupport::random_design(n, g, p, rng);
        const ProblemSpec spec = random_spec(rng, d, rep % 16);
        const FitResult r = fit(d, spec);
        const GroupedCoefficients bf = brute_force_fit(d, spec);
        INFO("rep " << rep);
        CHECK(objective(d, spec, r.beta) <= objective(d, spec, bf) + 1e-5);
        CHECK(r.objective() == doctest::Approx(objective(d, spec, r.beta)).epsilon(1e-12));
    }
}

TEST_CASE("fit never loses to trivial candidates and keeps a monotone trace")
{
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 16; ++rep) {
        const GroupedDesign d = testsupport::random_design(30, 10, 2, rng);
        const ProblemSpec spec = random_spec(rng, d, rep);
        const FitResult r = fit(d, spec);
        const double f = objective(d, spec, r.beta);
        CHECK(f <= objective(d, spec, GroupedCoefficients(10, 2)) + 1e-9);
        const Eigen::VectorXd ls = d.X().colPivHouseholderQr().solve(d.y());
        CHECK(f <= objective(d, spec, GroupedCoefficients(ls, 10, 2)) + 1e-9);
        for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
            CHECK(r.objective_trace[k] <= r.objective_trace[k - 1] + 1e-10);
        const double lowest = *std::min_element(r.objective_trace.begin(), r.objective_trace.end());
        CHECK(r.objective_trace.back() <= lowest + 1e-8);
        CHECK(r.converged);
    }
}

TEST_CASE("warm start from the solution converges within two iterations")
{
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 8; ++rep) {
        const GroupedDesign d = testsupport::random_design(40, 20, 1, rng);
        const ProblemSpec spec = random_spec(rng, d, rep * 3);
        const FitResult first = fit(d, spec);
        REQUIRE(first.converged);

        SolverConfig warm;
        warm.warm_start = first.beta;
        const FitResult again = fit(d, spec, warm);
        INFO("variant " << rep * 3 << " first iterations " << first.iterations);
        CHECK(again.converged);
        CHECK(again.iterations <= 2);
        CHECK(again.objective() <= first.objective() + 1e-9 * (1 + first.objective()));

        SolverConfig resume;
        resume.warm_state = first.state;
        const FitResult resumed = fit(d, spec, resume);
        CHECK(resumed.converged);
        CHECK(resumed.iterations <= 2);
    }
}

TEST_CASE("non-convergence is reported, not thrown")
{
    std::mt19937_64 rng(7);
    const GroupedDesign d = testsupport::random_design(50, 25, 2, rng);
    SolverConfig cfg;
    cfg.max_iter = 3;
    const FitResult r = fit(d, ProblemSpec{QuantileLoss{0.5}, 2, 0.05, UniformWeights{}}, cfg);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 3);
    CHECK(r.objective_trace.size() == 3);
}

TEST_CASE("underdetermined designs still fit")
{
    std::mt19937_64 rng(8);
    const GroupedDesign d = testsupport::random_design(10, 8, 3, rng);
    const FitResult r = fit(d, ProblemSpec{LeastSquaresLoss{}, 2, 0.2, UniformWeights{}});
    CHECK(r.underdetermined);
    CHECK(r.beta.all_finite());
}

TEST_CASE("numerical breakdown is a hard error")
{
    Eigen::MatrixXd X = Eigen::MatrixXd::Constant(3, 2, 1e300);
    GroupedDesign d(X, Eigen::Vector3d(1, 2, 3), 2, 1);
    CHECK_THROWS_AS(fit(d, ProblemSpec{LeastSquaresLoss{}, 2, 0.1, UniformWeights{}}), SolverError);
}

TEST_CASE("solver config validation")
{
    std::mt19937_64 rng(9);
    const GroupedDesign d = testsupport::random_design(4, 2, 1, rng);
    SolverConfig cfg;
    cfg.rho = 0.0;
    CHECK_THROWS_AS(fit(d, ProblemSpec{}, cfg), SpecError);
    cfg = {};
    cfg.tol_rel = -1;
    CHECK_THROWS_AS(fit(d, ProblemSpec{}, cfg), SpecError);
    cfg = {};
    cfg.warm_start = GroupedCoefficients(3, 1);
    CHECK_THROWS_AS(fit(d, ProblemSpec{}, cfg), DimensionError);
}

TEST_CASE("default schedules")
{
    CHECK(default_schedules(400, Stage::Fused).lambda == doctest::Approx(0.006120).epsilon(1e-3));
    CHECK(default_schedules(400, Stage::AdaptiveFused).lambda == doctest::Approx(0.2197).epsilon(1e-3));
    CHECK(default_schedules(100, Stage::Fused).b == doctest::Approx(0.2146).epsilon(1e-3));
    CHECK(default_schedules(400, Stage::Fused).lambda == doctest::Approx(std::sqrt(std::log(400.0)) / 400.0));
    CHECK_THROWS_AS(default_schedules(1, Stage::Fused), SpecError);
}

TEST_CASE("detected set shrinks along a lambda ladder")
{
    std::mt19937_64 rng(10);
    const GroupedDesign d = testsupport::random_design(30, 30, 1, rng);
    for (const LossKind& loss : {LossKind{LeastSquaresLoss{}}, LossKind{QuantileLoss{0.5}}}) {
        std::size_t prev = 1000;
        for (int k = 0; k < 10; ++k) {
            const double lambda = 1e-3 * std::pow(10.0, 3.0 * k / 9.0);
            const FitResult r = fit(d, ProblemSpec{loss, 2, lambda, UniformWeights{}});
            CHECK(r.detected_set.size() <= prev);
            prev = r.detected_set.size();
        }
    }
}

TEST_CASE("two-stage fit uses the pilot for the weights")
{
    std::mt19937_64 rng(11);
    const GroupedDesign d = testsupport::random_design(40, 20, 2, rng);
    const TwoStageResult two = fit_two_stage(d, LeastSquaresLoss{}, 2, 0.02, 0.2, 1.0);
    const FitResult direct =
        fit(d, ProblemSpec{LeastSquaresLoss{}, 2, 0.2, AdaptiveWeights{1.0, two.pilot.beta}});
    CHECK(two.adaptive.objective() == doctest::Approx(direct.objective()).epsilon(1e-8));
}
