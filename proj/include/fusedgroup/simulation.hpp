#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fusedgroup/detection.hpp"
#include "fusedgroup/model.hpp"
#include "fusedgroup/solver.hpp"

namespace fusedgroup {

enum class ErrorDist { Gaussian, Cauchy };

enum class Estimator { FusedLS = 0, AdaptiveLS = 1, FusedQuantile = 2, AdaptiveQuantile = 3 };
inline constexpr std::array<Estimator, 4> kAllEstimators{Estimator::FusedLS, Estimator::AdaptiveLS,
                                                         Estimator::FusedQuantile, Estimator::AdaptiveQuantile};

const char* estimator_name(Estimator e);
const char* error_dist_name(ErrorDist d);

struct ScenarioSpec
{
    std::string name = "scenario";
    Index p = 1;
    Index g = 20;
    ErrorDist errors = ErrorDist::Gaussian;
    /// Either an absolute number of changes or a fraction of n.
    std::optional<int> changes = 2;
    std::optional<double> change_fraction;
    double jump_min = 0.5;
    double jump_max = 2.0;
    double tau = 0.5;
    double gamma = 1.0;
    int q = 2;
    std::uint64_t seed = 1;
    int M = 100;
    /// Schedule used for the non-adaptive fits (pilot fits included).
    Stage fused_schedule = Stage::Fused;
    /// Subset of estimators to run; adaptive ones imply their pilot.
    std::vector<Estimator> estimators{kAllEstimators.begin(), kAllEstimators.end()};

    Index n() const { return g * p; }
    int change_count() const;
    void validate() const;
};

struct SimulatedInstance
{
    GroupedDesign design;
    GroupedCoefficients truth;
    DifferenceSet truth_set;
    Eigen::VectorXd errors;
};

/// Draws one synthetic instance (see ScenarioSpec) from rng.
SimulatedInstance generate_instance(const ScenarioSpec& spec, std::mt19937_64& rng);

/// Generator for replication m: independent substream derived from (seed, m).
std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t replication);

struct EstimatorSummary
{
    Estimator estimator = Estimator::FusedLS;
    bool ran = false;
    double med = 0.0;
    double mad = 0.0;
    double recovery = 0.0;
    double overestimation = 0.0;
    double misclassified = 0.0;
    double converged_fraction = 0.0;
};

struct RunRecord
{
    std::array<std::optional<DetectionReport>, 4> reports;
    std::array<bool, 4> converged{};
};

struct McReport
{
    ScenarioSpec scenario;
    int M = 0;
    std::array<EstimatorSummary, 4> summaries;
    std::vector<RunRecord> runs;
    double elapsed_seconds = 0.0; // not serialized; outputs stay reproducible

    const EstimatorSummary& operator[](Estimator e) const { return summaries[static_cast<int>(e)]; }
};

struct McOptions
{
    unsigned threads = 1;
    SolverConfig solver;
};

/// Runs one replication (all requested estimators) and scores it.
RunRecord run_replication(const ScenarioSpec& spec, int replication, const SolverConfig& cfg);

/// M replications; bit-identical for a given seed regardless of thread count.
McReport run_monte_carlo(const ScenarioSpec& spec, const McOptions& options = {});

/// Thread count from FUSEDGROUP_THREADS, default 1.
unsigned threads_from_env();

} // namespace fusedgroup
