#include <doctest.h>

#include <cmath>

#include "fusedgroup/simulation.hpp"

using namespace fusedgroup;

namespace {

ScenarioSpec tiny(int M)
{
    ScenarioSpec s;
    s.name = "tiny";
    s.g = 12;
    s.p = 1;
    s.changes = 2;
    s.M = M;
    s.seed = 42;
    return s;
}

} // namespace

TEST_CASE("zero changes gives equal blocks and an empty truth set")
{
    ScenarioSpec s = tiny(1);
    s.changes = 0;
    s.p = 3;
    auto rng = replication_rng(1, 0);
    const SimulatedInstance inst = generate_instance(s, rng);
    CHECK(inst.truth_set.empty());
    for (Index j = 1; j < s.g; ++j) CHECK(inst.truth.block(j) == inst.truth.block(0));
    CHECK(inst.design.observations() == s.g * s.p);
}

TEST_CASE("jump magnitudes lie in [0.5, 2] and changes match the truth set")
{
    ScenarioSpec s = tiny(1);
    s.g = 40;
    s.p = 3;
    s.changes = 5;
    for (int draw = 0; draw < 1000; ++draw) {
        auto rng = replication_rng(9, static_cast<std::uint64_t>(draw));
        const SimulatedInstance inst = generate_instance(s, rng);
        REQUIRE(inst.truth_set.size() == 5);
        for (Index j = 1; j < s.g; ++j) {
            const Eigen::VectorXd jump = inst.truth.block(j) - inst.truth.block(j - 1);
            if (inst.truth_set.contains(static_cast<int>(j + 1))) {
                CHECK(jump.cwiseAbs().minCoeff() >= 0.5 - 1e-12);
                CHECK(jump.cwiseAbs().maxCoeff() <= 2.0 + 1e-12);
            } else {
                CHECK(jump.isZero(0.0));
            }
        }
        // no adjacent changes when g >= 4 k
        for (std::size_t i = 1; i < inst.truth_set.indices.size(); ++i)
            CHECK(inst.truth_set.indices[i] > inst.truth_set.indices[i - 1] + 1);
        CHECK(inst.truth.block(0).cwiseAbs().maxCoeff() <= 1.0);
    }
}

TEST_CASE("Gaussian error variance over 10000 draws")
{
    ScenarioSpec s = tiny(1);
    s.g = 10000;
    s.changes = 0;
    auto rng = replication_rng(3, 0);
    const SimulatedInstance inst = generate_instance(s, rng);
    const double mean = inst.errors.mean();
    const double var = (inst.errors.array() - mean).square().sum() / static_cast<double>(inst.errors.size() - 1);
    CHECK(var >= 0.94);
    CHECK(var <= 1.06);
    CHECK((inst.design.y() - inst.design.X() * inst.truth.flat() - inst.errors).norm() < 1e-9);
}

TEST_CASE("fractional change counts and validation")
{
    ScenarioSpec s = tiny(1);
    s.g = 20;
    s.changes.reset();
    s.change_fraction = 0.2;
    CHECK(s.change_count() == 4);
    s.change_fraction.reset();
    s.changes = 20;
    CHECK_THROWS_AS(s.validate(), SpecError);
    s.changes = 2;
    s.tau = 1.0;
    CHECK_THROWS_AS(s.validate(), SpecError);
}

TEST_CASE("M = 1 report equals the single run")
{
    const ScenarioSpec s = tiny(1);
    const McReport rep = run_monte_carlo(s);
    const RunRecord one = run_replication(s, 0, SolverConfig{});
    for (Estimator e : kAllEstimators) {
        const auto& sum = rep[e];
        const auto& r = *one.reports[static_cast<std::size_t>(e)];
        CHECK(sum.ran);
        CHECK(sum.med == r.med);
        CHECK(sum.mad == r.mad);
        CHECK(sum.recovery == r.recovery_rate);
        CHECK(sum.overestimation == r.overestimation_ratio);
        CHECK(sum.misclassified == static_cast<double>(r.missclassification_count));
    }
}

TEST_CASE("reports are reproducible and independent of thread count")
{
    const ScenarioSpec s = tiny(6);
    McOptions one;
    McOptions three;
    three.threads = 3;
    const McReport a = run_monte_carlo(s, one);
    const McReport b = run_monte_carlo(s, one);
    const McReport c = run_monte_carlo(s, three);
    for (Estimator e : kAllEstimators) {
        CHECK(a[e].mad == b[e].mad);
        CHECK(a[e].mad == c[e].mad);
        CHECK(a[e].med == c[e].med);
        CHECK(a[e].recovery == c[e].recovery);
        CHECK(a[e].overestimation == c[e].overestimation);
    }
}

TEST_CASE("estimator subsets and scoring preconditions")
{
    ScenarioSpec s = tiny(2);
    s.estimators = {Estimator::AdaptiveQuantile};
    const McReport rep = run_monte_carlo(s);
    CHECK(rep[Estimator::AdaptiveQuantile].ran);
    CHECK_FALSE(rep[Estimator::FusedQuantile].ran);
    CHECK_FALSE(rep[Estimator::FusedLS].ran);

    s.changes = 0;
    CHECK_THROWS_AS(run_monte_carlo(s), SpecError);
}

TEST_CASE("substreams differ between replications")
{
    auto a = replication_rng(5, 0);
    auto b = replication_rng(5, 1);
    auto c = replication_rng(6, 0);
    const auto x = a();
    CHECK(x != b());
    CHECK(x != c());
}
