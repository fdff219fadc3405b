#include "fusedgroup/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fusedgroup/losses.hpp"
#include "fusedgroup/penalties.hpp"
#include "polish.hpp"

namespace fusedgroup {

Eigen::VectorXd DiffOperator::apply(const Eigen::VectorXd& beta) const
{
    Eigen::VectorXd out;
    apply(beta, out);
    return out;
}

Eigen::VectorXd DiffOperator::adjoint(const Eigen::VectorXd& diffs) const
{
    Eigen::VectorXd out;
    adjoint(diffs, out);
    return out;
}

void DiffOperator::apply(const Eigen::VectorXd& beta, Eigen::VectorXd& out) const
{
    if (beta.size() != cols()) throw DimensionError("DiffOperator::apply: wrong input length");
    out.resize(rows());
    for (Index j = 1; j < g_; ++j)
        out.segment((j - 1) * p_, p_) = beta.segment(j * p_, p_) - beta.segment((j - 1) * p_, p_);
}

void DiffOperator::adjoint(const Eigen::VectorXd& diffs, Eigen::VectorXd& out) const
{
    if (diffs.size() != rows()) throw DimensionError("DiffOperator::adjoint: wrong input length");
    out.setZero(cols());
    for (Index j = 1; j < g_; ++j) {
        const auto d = diffs.segment((j - 1) * p_, p_);
        out.segment(j * p_, p_) += d;
        out.segment((j - 1) * p_, p_) -= d;
    }
}

Eigen::MatrixXd DiffOperator::gram() const
{
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(cols(), cols());
    for (Index j = 1; j < g_; ++j) {
        for (Index k = 0; k < p_; ++k) {
            const Index a = (j - 1) * p_ + k;
            const Index b = j * p_ + k;
            G(a, a) += 1.0;
            G(b, b) += 1.0;
            G(a, b) -= 1.0;
            G(b, a) -= 1.0;
        }
    }
    return G;
}

Eigen::MatrixXd DiffOperator::dense() const
{
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(rows(), cols());
    for (Index j = 1; j < g_; ++j) {
        for (Index k = 0; k < p_; ++k) {
            D((j - 1) * p_ + k, j * p_ + k) = 1.0;
            D((j - 1) * p_ + k, (j - 1) * p_ + k) = -1.0;
        }
    }
    return D;
}

void SolverConfig::validate() const
{
    if (!(rho > 0.0)) throw SpecError("rho must be positive");
    if (max_iter < 1) throw SpecError("max_iter must be >= 1");
    if (!(tol_abs > 0.0) || !(tol_rel > 0.0)) throw SpecError("tolerances must be positive");
    if (!(fusion_tol >= 0.0)) throw SpecError("fusion_tol must be >= 0");
}

namespace {

constexpr double kRhoMin = 1e-3;
constexpr double kRhoMax = 1e3;
constexpr double kBalanceRatio = 10.0;
constexpr double kBalanceFactor = 2.0;
constexpr int kPolishInterval = 10;

struct LossProx
{
    bool quantile;
    double tau;

    double value(const Eigen::VectorXd& r) const
    {
        if (!quantile) return r.squaredNorm();
        double s = 0.0;
        for (Index i = 0; i < r.size(); ++i) s += check_value(r(i), tau);
        return s;
    }

    double prox(double v, double alpha) const
    {
        return quantile ? prox_check(v, alpha, tau) : prox_square(v, alpha);
    }
};

double penalty_from_diffs(const Eigen::VectorXd& diffs, const Eigen::VectorXd& kappa, Index p, int q)
{
    double s = 0.0;
    for (Index j = 0; j < kappa.size(); ++j) s += kappa(j) * block_norm(diffs.segment(j * p, p), q);
    return s;
}


// Cached factorization of X'X + t D'D. A small proximal term is added when
// the matrix is (numerically) singular; the fixed point is unchanged.
class BetaSystem
{
public:
    BetaSystem(const Eigen::MatrixXd& XtX, const Eigen::MatrixXd& DtD) : XtX_(XtX), DtD_(DtD) {}

    void factorize(double t)
    {
        Eigen::MatrixXd K = XtX_ + t * DtD_;
        prox_eps_ = 0.0;
        chol_.compute(K);
        if (chol_.info() != Eigen::Success || chol_.rcond() < 1e-14) {
            prox_eps_ = 1e-8 * std::max(1.0, K.diagonal().mean());
            K.diagonal().array() += prox_eps_;
            chol_.compute(K);
            if (chol_.info() != Eigen::Success) throw SolverError("failed to factorize the beta-update system");
        }
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs, const Eigen::VectorXd& previous) const
    {
        if (prox_eps_ > 0.0) return chol_.solve(rhs + prox_eps_ * previous);
        return chol_.solve(rhs);
    }

private:
    const Eigen::MatrixXd& XtX_;
    const Eigen::MatrixXd& DtD_;
    Eigen::LLT<Eigen::MatrixXd> chol_;
    double prox_eps_ = 0.0;
};

// One ADMM sweep from the state x = [r; d; ur; ud] (scaled duals).
class AdmmMap
{
public:
    AdmmMap(const GroupedDesign& design, const ProblemSpec& spec)
        : X_(design.X()), y_(design.y()), D_(design.groups(), design.group_size()),
          n_(design.observations()), md_(D_.rows()), p_(design.group_size()), q_(spec.q),
          loss_{spec.is_quantile(), spec.is_quantile() ? std::get<QuantileLoss>(spec.loss).tau : 0.5},
          kappa_(static_cast<double>(n_) * spec.lambda * pair_weights(spec, n_, design.groups(), p_)),
          XtX_(X_.transpose() * X_), DtD_(D_.gram()), Xty_(X_.transpose() * y_), system_(XtX_, DtD_)
    {
    }

    Index state_size() const { return 2 * (n_ + md_); }
    Index n() const { return n_; }
    Index md() const { return md_; }
    const DiffOperator& diff() const { return D_; }

    void set_rho(double rho_r, double rho_d)
    {
        rho_r_ = rho_r;
        rho_d_ = rho_d;
        system_.factorize(rho_d / rho_r);
    }
    double rho_r() const { return rho_r_; }
    double rho_d() const { return rho_d_; }

    struct Step
    {
        Eigen::VectorXd beta;
        Eigen::VectorXd next;
        double objective = 0.0;
        double pri_r = 0.0, pri_d = 0.0, dual_r = 0.0, dual_d = 0.0, dual = 0.0;
        double eps_pri_scale = 0.0;
    };

    void step(const Eigen::VectorXd& x, const Eigen::VectorXd& beta_prev, Step& out)
    {
        const auto r = x.segment(0, n_);
        const auto d = x.segment(n_, md_);
        const auto ur = x.segment(n_ + md_, n_);
        const auto ud = x.segment(2 * n_ + md_, md_);
        const double t = rho_d_ / rho_r_;

        D_.adjoint(d - ud, tmp_);
        rhs_.noalias() = Xty_ - X_.transpose() * (r + ur);
        rhs_ += t * tmp_;
        out.beta = system_.solve(rhs_, beta_prev);
        Xbeta_.noalias() = X_ * out.beta;
        D_.apply(out.beta, Dbeta_);

        out.next.resize(x.size());
        auto r1 = out.next.segment(0, n_);
        auto d1 = out.next.segment(n_, md_);
        auto ur1 = out.next.segment(n_ + md_, n_);
        auto ud1 = out.next.segment(2 * n_ + md_, md_);
        for (Index i = 0; i < n_; ++i) r1(i) = loss_.prox(y_(i) - Xbeta_(i) - ur(i), 1.0 / rho_r_);
        d1 = Dbeta_ + ud;
        for (Index j = 0; j < kappa_.size(); ++j)
            prox_block_norm_inplace(d1.segment(j * p_, p_), kappa_(j) / rho_d_, q_);
        ur1 = ur + Xbeta_ + r1 - y_;
        ud1 = ud + Dbeta_ - d1;

        out.objective = loss_.value(y_ - Xbeta_) + penalty_from_diffs(Dbeta_, kappa_, p_, q_);

        Xt_dr_.noalias() = X_.transpose() * (r1 - r);
        D_.adjoint(d1 - d, Dt_dd_);
        out.pri_r = (Xbeta_ + r1 - y_).norm();
        out.pri_d = (Dbeta_ - d1).norm();
        out.dual_r = rho_r_ * Xt_dr_.norm();
        out.dual_d = rho_d_ * Dt_dd_.norm();
        out.dual = (rho_r_ * Xt_dr_ - rho_d_ * Dt_dd_).norm();
        out.eps_pri_scale = std::max({std::sqrt(Xbeta_.squaredNorm() + Dbeta_.squaredNorm()),
                                      std::sqrt(r1.squaredNorm() + d1.squaredNorm()), y_.norm()});
    }

    // Larger of ||X'nu_r||, ||D'nu_d|| at state x; their sum vanishes at the optimum.
    double dual_scale(const Eigen::VectorXd& x)
    {
        D_.adjoint(x.segment(2 * n_ + md_, md_), tmp_);
        return std::max(rho_r_ * (X_.transpose() * x.segment(n_ + md_, n_)).norm(), rho_d_ * tmp_.norm());
    }

    const Eigen::VectorXd& kappa() const { return kappa_; }

private:
    const Eigen::MatrixXd& X_;
    const Eigen::VectorXd& y_;
    DiffOperator D_;
    Index n_, md_, p_;
    int q_;
    LossProx loss_;
    Eigen::VectorXd kappa_;
    Eigen::MatrixXd XtX_, DtD_;
    Eigen::VectorXd Xty_;
    BetaSystem system_;
    double rho_r_ = 1.0, rho_d_ = 1.0;
    Eigen::VectorXd rhs_, tmp_, Xbeta_, Dbeta_, Xt_dr_, Dt_dd_;
};

// Type-II Anderson acceleration over the last few fixed-point residuals.
class Anderson
{
public:
    explicit Anderson(int memory) : memory_(memory) {}

    void reset()
    {
        dx_.clear();
        df_.clear();
        has_prev_ = false;
    }

    // Records (x, f = T(x) - x) and returns the extrapolated next state,
    // or T(x) when no history is available.
    Eigen::VectorXd next(const Eigen::VectorXd& x, const Eigen::VectorXd& f)
    {
        if (memory_ <= 0) return x + f;
        if (has_prev_) {
            dx_.push_back(x - prev_x_);
            df_.push_back(f - prev_f_);
            if (static_cast<int>(dx_.size()) > memory_) {
                dx_.erase(dx_.begin());
                df_.erase(df_.begin());
            }
        }
        prev_x_ = x;
        prev_f_ = f;
        has_prev_ = true;
        if (dx_.empty()) return x + f;

        const Index k = static_cast<Index>(df_.size());
        Eigen::MatrixXd G(k, k);
        Eigen::VectorXd b(k);
        for (Index a = 0; a < k; ++a) {
            b(a) = df_[static_cast<std::size_t>(a)].dot(f);
            for (Index c = 0; c <= a; ++c)
                G(a, c) = G(c, a) = df_[static_cast<std::size_t>(a)].dot(df_[static_cast<std::size_t>(c)]);
        }
        G.diagonal().array() += 1e-10 * std::max(G.trace(), 1e-300);
        const Eigen::VectorXd gamma = G.ldlt().solve(b);
        if (!gamma.allFinite()) {
            reset();
            return x + f;
        }
        Eigen::VectorXd out = x + f;
        for (Index a = 0; a < k; ++a)
            out -= gamma(a) * (dx_[static_cast<std::size_t>(a)] + df_[static_cast<std::size_t>(a)]);
        return out;
    }

private:
    int memory_;
    std::vector<Eigen::VectorXd> dx_, df_;
    Eigen::VectorXd prev_x_, prev_f_;
    bool has_prev_ = false;
};

} // namespace

FitResult fit(const GroupedDesign& design, const ProblemSpec& spec, const SolverConfig& cfg)
{
    spec.validate();
    cfg.validate();

    const Index n = design.observations();
    const Index g = design.groups();
    const Index p = design.group_size();
    const Index m = g * p;
    const Index md = (g - 1) * p;
    const Eigen::MatrixXd& X = design.X();
    const Eigen::VectorXd& y = design.y();

    AdmmMap admm(design, spec);
    const DiffOperator& D = admm.diff();

    FitResult result;
    result.underdetermined = design.underdetermined();

    Eigen::VectorXd x(admm.state_size());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
    double rho_r = cfg.rho;
    double rho_d = cfg.rho;

    // snap round-off so a near-optimal start exposes its zero pattern
    const auto snap = [&](Eigen::VectorXd& v, double rel) {
        const double tiny_r = rel * (1.0 + y.lpNorm<Eigen::Infinity>());
        const double tiny_d = rel * (1.0 + beta.lpNorm<Eigen::Infinity>());
        for (Index i = 0; i < n; ++i)
            if (std::abs(v(i)) <= tiny_r) v(i) = 0.0;
        for (Index j = 0; j + 1 < g; ++j)
            if (v.segment(n + j * p, p).lpNorm<Eigen::Infinity>() <= tiny_d) v.segment(n + j * p, p).setZero();
    };
    Eigen::VectorXd start_raw;

    if (cfg.warm_state) {
        const SolverState& s = *cfg.warm_state;
        if (s.beta.size() != m || s.resid.size() != n || s.diffs.size() != md || s.dual_resid.size() != n ||
            s.dual_diffs.size() != md)
            throw DimensionError("warm state does not match the design");
        rho_r = std::clamp(s.rho_resid, kRhoMin, kRhoMax);
        rho_d = std::clamp(s.rho_diffs, kRhoMin, kRhoMax);
        beta = s.beta;
        x << s.resid, s.diffs, s.dual_resid / rho_r, s.dual_diffs / rho_d;
    } else if (cfg.warm_start) {
        design.check_shape(*cfg.warm_start, "warm start");
        beta = cfg.warm_start->flat();
        x << y - X * beta, D.apply(beta), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(md);
        start_raw = x;
        snap(x, 1e-9);
    } else {
        x << y, Eigen::VectorXd::Zero(md), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(md);
    }
    admm.set_rho(rho_r, rho_d);

    const auto rescale_duals = [&](Eigen::VectorXd& v, double fr, double fd) {
        v.segment(n + md, n) *= fr;
        v.segment(2 * n + md, md) *= fd;
    };

    GroupedCoefficients best(g, p);
    Eigen::VectorXd best_d = x.segment(n, md);
    double best_obj = std::numeric_limits<double>::infinity();
    const double pri_scale = std::sqrt(static_cast<double>(n + md));
    const double dual_abs = std::sqrt(static_cast<double>(m)) * cfg.tol_abs;

    Anderson anderson(cfg.anderson_memory);
    bool extrapolated = false;
    double safe_norm = std::numeric_limits<double>::infinity();
    Eigen::VectorXd safe_next = x;
    AdmmMap::Step st;

    const bool quantile = spec.is_quantile();
    const detail::PolishProblem prob{X, y, g, p, spec.q, quantile,
                                     quantile ? std::get<QuantileLoss>(spec.loss).tau : 0.5, admm.kappa()};
    detail::ActivePattern checked, polished;
    bool have_checked = false, have_polished = false;
    std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> polished_state; // (r, d) of the incumbent
    // Solves on the zero pattern of (r, d); true when optimality is certified.
    const auto try_polish = [&](const Eigen::VectorXd& hint, const Eigen::VectorXd& state) {
        const Eigen::VectorXd r = state.segment(0, n);
        const Eigen::VectorXd d = state.segment(n, md);
        polished = detail::pattern_from(prob, r, d);
        have_polished = true;
        const detail::PolishResult pr = detail::polish(prob, hint, r, d);
        if (!pr.ok || !(pr.objective <= best_obj + 1e-12 * (1.0 + std::abs(best_obj)))) return false;
        best_obj = std::min(best_obj, pr.objective);
        best.flat() = pr.beta;
        best_d = pr.diffs;
        polished_state = {pr.resid, pr.diffs};
        if (!result.objective_trace.empty()) result.objective_trace.back() = best_obj;
        return pr.optimal;
    };

    result.objective_trace.reserve(static_cast<std::size_t>(std::min(cfg.max_iter, 20000)));

    for (int it = 1; it <= cfg.max_iter; ++it) {
        admm.step(x, beta, st);
        if (!st.beta.allFinite() || !st.next.allFinite()) {
            std::ostringstream msg;
            msg << "non-finite iterate at iteration " << it;
            throw SolverError(msg.str());
        }
        beta = st.beta;
        result.iterations = it;

        if (st.objective < best_obj) {
            best_obj = st.objective;
            best.flat() = st.beta;
            best_d = st.next.segment(n, md);
            polished_state.reset();
        }
        result.objective_trace.push_back(best_obj);

        if (it == 1 && (cfg.warm_state || cfg.warm_start)) {
            bool done = try_polish(beta, x);
            // a start that is only close to optimal needs a coarser snap
            for (double rel : {1e-7, 1e-5}) {
                if (done || start_raw.size() == 0) break;
                Eigen::VectorXd v = start_raw;
                snap(v, rel);
                const detail::ActivePattern pat = detail::pattern_from(prob, v.segment(0, n), v.segment(n, md));
                if (!(pat == polished)) done = try_polish(beta, v);
            }
            if (done) {
                result.converged = true;
                break;
            }
        }
        if (it % kPolishInterval == 0) {
            const detail::ActivePattern pat =
                detail::pattern_from(prob, st.next.segment(0, n), st.next.segment(n, md));
            const bool stable = have_checked && pat == checked;
            checked = pat;
            have_checked = true;
            if (stable && !(have_polished && pat == polished) && try_polish(st.beta, st.next)) {
                result.converged = true;
                x = st.next;
                break;
            }
        }

        Eigen::VectorXd f = st.next - x;
        const double fnorm = f.norm();
        if (extrapolated && fnorm > safe_norm) {
            // extrapolation made things worse: fall back to the plain step
            anderson.reset();
            extrapolated = false;
            x = safe_next;
            continue;
        }

        const double pri = std::hypot(st.pri_r, st.pri_d);
        const double eps_pri = pri_scale * cfg.tol_abs + cfg.tol_rel * st.eps_pri_scale;
        result.primal_residual = pri;
        result.dual_residual = st.dual;
        if (pri <= eps_pri && st.dual <= dual_abs + cfg.tol_rel * admm.dual_scale(st.next)) {
            result.converged = true;
            x = st.next;
            break;
        }

        if (cfg.adapt_rho) {
            const auto balance = [](double rho, double pri_b, double dual_b) {
                if (pri_b > kBalanceRatio * dual_b) return std::min(rho * kBalanceFactor, kRhoMax);
                if (dual_b > kBalanceRatio * pri_b) return std::max(rho / kBalanceFactor, kRhoMin);
                return rho;
            };
            const double next_r = balance(admm.rho_r(), st.pri_r, st.dual_r);
            const double next_d = balance(admm.rho_d(), st.pri_d, st.dual_d);
            if (next_r != admm.rho_r() || next_d != admm.rho_d()) {
                x = st.next;
                rescale_duals(x, admm.rho_r() / next_r, admm.rho_d() / next_d);
                admm.set_rho(next_r, next_d);
                anderson.reset();
                extrapolated = false;
                safe_norm = std::numeric_limits<double>::infinity();
                continue;
            }
        }

        safe_next = st.next;
        safe_norm = fnorm;
        x = anderson.next(x, f);
        extrapolated = cfg.anderson_memory > 0;
    }

    if (!polished_state) {
        const detail::ActivePattern pat = detail::pattern_from(prob, x.segment(0, n), x.segment(n, md));
        if (!(have_polished && pat == polished) && try_polish(beta, x)) result.converged = true;
    }

    result.beta = best;
    result.final_rho = admm.rho_r();
    result.detected_set = detect_from_differences(best, best_d, cfg.fusion_tol);
    const double rr = admm.rho_r();
    const double rd = admm.rho_d();
    result.state = SolverState{beta, x.segment(0, n), x.segment(n, md), rr * x.segment(n + md, n),
                               rd * x.segment(2 * n + md, md), rr, rd};
    if (polished_state) {
        result.state.beta = best.flat();
        result.state.resid = polished_state->first;
        result.state.diffs = polished_state->second;
    }
    return result;
}

TwoStageResult fit_two_stage(const GroupedDesign& design, const LossKind& loss, int q, double pilot_lambda,
                             double lambda, double gamma, const SolverConfig& cfg)
{
    TwoStageResult out;
    ProblemSpec pilot_spec{loss, q, pilot_lambda, UniformWeights{}};
    out.pilot = fit(design, pilot_spec, cfg);
    ProblemSpec spec{loss, q, lambda, AdaptiveWeights{gamma, out.pilot.beta}};
    SolverConfig second = cfg;
    second.warm_state.reset();
    second.warm_start.reset();
    out.adaptive = fit(design, spec, second);
    return out;
}

Schedule default_schedules(Index n, Stage stage)
{
    if (n < 2) throw SpecError("default schedules need n >= 2");
    const double nn = static_cast<double>(n);
    const double logn = std::log(nn);
    const double lambda = stage == Stage::Fused ? std::sqrt(logn) / nn : std::pow(logn, 2.5) / nn;
    return {lambda, std::sqrt(logn / nn)};
}

} // namespace fusedgroup
