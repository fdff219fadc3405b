#include "fusedgroup/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace fusedgroup {

const char* estimator_name(Estimator e)
{
    switch (e) {
    case Estimator::FusedLS: return "fused_ls";
    case Estimator::AdaptiveLS: return "adaptive_fused_ls";
    case Estimator::FusedQuantile: return "fused_quantile";
    case Estimator::AdaptiveQuantile: return "adaptive_fused_quantile";
    }
    return "unknown";
}

const char* error_dist_name(ErrorDist d)
{
    return d == ErrorDist::Gaussian ? "gaussian" : "cauchy";
}

int ScenarioSpec::change_count() const
{
    if (change_fraction) return static_cast<int>(std::llround(*change_fraction * static_cast<double>(n())));
    return changes.value_or(0);
}

void ScenarioSpec::validate() const
{
    if (p < 1 || g < 1) throw SpecError("scenario needs p >= 1 and g >= 1");
    if (change_fraction && !(*change_fraction >= 0.0 && *change_fraction < 1.0))
        throw SpecError("change fraction must lie in [0,1)");
    const int k = change_count();
    if (k < 0) throw SpecError("number of changes must be >= 0");
    if (k > g - 1) {
        std::ostringstream msg;
        msg << "scenario '" << name << "' asks for " << k << " changes but only " << g - 1 << " pairs exist";
        throw SpecError(msg.str());
    }
    if (!(jump_min > 0.0 && jump_min <= jump_max)) throw SpecError("jump range must satisfy 0 < min <= max");
    if (!(tau > 0.0 && tau < 1.0)) throw SpecError("tau must lie in (0,1)");
    if (!(gamma > 0.0)) throw SpecError("gamma must be positive");
    if (q != 1 && q != 2) throw SpecError("q must be 1 or 2");
    if (M < 1) throw SpecError("M must be >= 1");
}

std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t replication)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replication), static_cast<std::uint32_t>(replication >> 32),
                      0x9e3779b9u};
    return std::mt19937_64(seq);
}

namespace {

std::vector<int> draw_change_locations(Index g, int k, std::mt19937_64& rng)
{
    std::vector<int> pool;
    for (int j = 2; j <= static_cast<int>(g); ++j) pool.push_back(j);
    const bool spread = g >= 4 * static_cast<Index>(k);
    for (;;) {
        // partial Fisher-Yates
        for (int i = 0; i < k; ++i) {
            std::uniform_int_distribution<int> pick(i, static_cast<int>(pool.size()) - 1);
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
        }
        std::vector<int> out(pool.begin(), pool.begin() + k);
        std::sort(out.begin(), out.end());
        bool adjacent = false;
        for (std::size_t i = 1; i < out.size(); ++i) adjacent |= out[i] == out[i - 1] + 1;
        if (!spread || !adjacent) return out;
    }
}

} // namespace

SimulatedInstance generate_instance(const ScenarioSpec& spec, std::mt19937_64& rng)
{
    spec.validate();
    const Index p = spec.p;
    const Index g = spec.g;
    const Index n = spec.n();
    const int k = spec.change_count();

    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> base(-1.0, 1.0);
    std::uniform_real_distribution<double> jump(spec.jump_min, spec.jump_max);
    std::bernoulli_distribution coin(0.5);

    Eigen::MatrixXd X(n, g * p);
    for (Index i = 0; i < n; ++i)
        for (Index c = 0; c < g * p; ++c) X(i, c) = normal(rng);

    DifferenceSet truth_set{draw_change_locations(g, k, rng)};

    GroupedCoefficients truth(g, p);
    for (Index c = 0; c < p; ++c) truth.block(0)(c) = base(rng);
    for (Index j = 1; j < g; ++j) {
        truth.block(j) = truth.block(j - 1);
        if (truth_set.contains(static_cast<int>(j + 1))) {
            for (Index c = 0; c < p; ++c) {
                const double mag = jump(rng);
                truth.block(j)(c) += coin(rng) ? mag : -mag;
            }
        }
    }

    Eigen::VectorXd eps(n);
    if (spec.errors == ErrorDist::Gaussian) {
        for (Index i = 0; i < n; ++i) eps(i) = normal(rng);
    } else {
        std::cauchy_distribution<double> cauchy(0.0, 1.0);
        for (Index i = 0; i < n; ++i) eps(i) = cauchy(rng);
    }
    Eigen::VectorXd y = X * truth.flat() + eps;
    return {GroupedDesign(std::move(X), std::move(y), g, p), std::move(truth), std::move(truth_set),
            std::move(eps)};
}

namespace {

bool wants(const ScenarioSpec& spec, Estimator e)
{
    return std::find(spec.estimators.begin(), spec.estimators.end(), e) != spec.estimators.end();
}

DetectionReport score_fit(const SimulatedInstance& inst, const FitResult& fit)
{
    DetectionReport rep;
    const DetectionScore s = score_detection(fit.detected_set, inst.truth_set);
    rep.recovery_rate = s.recovery;
    rep.overestimation_ratio = s.overestimation;
    rep.missclassification_count = s.misclassified;
    rep.med = med_metric(inst.design.y(), inst.design.predict(fit.beta));
    rep.mad = mad_metric(inst.truth, fit.beta);
    return rep;
}

} // namespace

RunRecord run_replication(const ScenarioSpec& spec, int replication, const SolverConfig& cfg)
{
    auto rng = replication_rng(spec.seed, static_cast<std::uint64_t>(replication));
    const SimulatedInstance inst = generate_instance(spec, rng);
    const Index n = inst.design.observations();
    const double fused_lambda = default_schedules(n, spec.fused_schedule).lambda;
    const double adaptive_lambda = default_schedules(n, Stage::AdaptiveFused).lambda;

    RunRecord rec;
    const auto run_family = [&](const LossKind& loss, Estimator fused_id, Estimator adaptive_id) {
        const bool need_adaptive = wants(spec, adaptive_id);
        if (!wants(spec, fused_id) && !need_adaptive) return;
        const FitResult pilot = fit(inst.design, ProblemSpec{loss, spec.q, fused_lambda, UniformWeights{}}, cfg);
        if (wants(spec, fused_id)) {
            rec.reports[static_cast<std::size_t>(fused_id)] = score_fit(inst, pilot);
            rec.converged[static_cast<std::size_t>(fused_id)] = pilot.converged;
        }
        if (need_adaptive) {
            const FitResult adaptive =
                fit(inst.design, ProblemSpec{loss, spec.q, adaptive_lambda, AdaptiveWeights{spec.gamma, pilot.beta}},
                    cfg);
            rec.reports[static_cast<std::size_t>(adaptive_id)] = score_fit(inst, adaptive);
            rec.converged[static_cast<std::size_t>(adaptive_id)] = adaptive.converged;
        }
    };

    try {
        run_family(LeastSquaresLoss{}, Estimator::FusedLS, Estimator::AdaptiveLS);
        run_family(QuantileLoss{spec.tau}, Estimator::FusedQuantile, Estimator::AdaptiveQuantile);
    } catch (const std::exception& e) {
        std::ostringstream msg;
        msg << "scenario '" << spec.name << "' seed " << spec.seed << " replication " << replication << ": "
            << e.what();
        throw SolverError(msg.str());
    }
    return rec;
}

McReport run_monte_carlo(const ScenarioSpec& spec, const McOptions& options)
{
    spec.validate();
    if (spec.change_count() < 1) throw SpecError("Monte Carlo scoring needs at least one true change");
    const auto start = std::chrono::steady_clock::now();

    McReport report;
    report.scenario = spec;
    report.M = spec.M;
    report.runs.resize(static_cast<std::size_t>(spec.M));

    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto worker = [&] {
        for (int m = next++; m < spec.M; m = next++) {
            try {
                report.runs[static_cast<std::size_t>(m)] = run_replication(spec, m, options.solver);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = spec.M;
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(spec.M)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    // Fixed-order summation keeps the aggregates independent of scheduling.
    for (Estimator e : kAllEstimators) {
        auto& s = report.summaries[static_cast<std::size_t>(e)];
        s.estimator = e;
        s.ran = wants(spec, e);
        if (!s.ran) continue;
        for (const RunRecord& rec : report.runs) {
            const DetectionReport& r = *rec.reports[static_cast<std::size_t>(e)];
            s.med += r.med;
            s.mad += r.mad;
            s.recovery += r.recovery_rate;
            s.overestimation += r.overestimation_ratio;
            s.misclassified += static_cast<double>(r.missclassification_count);
            s.converged_fraction += rec.converged[static_cast<std::size_t>(e)] ? 1.0 : 0.0;
        }
        const double M = static_cast<double>(spec.M);
        s.med /= M;
        s.mad /= M;
        s.recovery /= M;
        s.overestimation /= M;
        s.misclassified /= M;
        s.converged_fraction /= M;
    }
    report.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

unsigned threads_from_env()
{
    if (const char* v = std::getenv("FUSEDGROUP_THREADS")) {
        const long t = std::strtol(v, nullptr, 10);
        if (t > 0) return static_cast<unsigned>(t);
    }
    return 1;
}

} // namespace fusedgroup
