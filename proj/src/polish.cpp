#include "polish.hpp"

#include <algorithm>
#include <cmath>

#include "fusedgroup/losses.hpp"

namespace fusedgroup::detail {

namespace {

// Rows of D as index pairs: (D beta)_c = beta[hi] - beta[lo].
struct DiffRow
{
    Index lo;
    Index hi;
};

DiffRow diff_row(Index c, Index p)
{
    const Index pair = c / p;
    const Index k = c % p;
    return {pair * p + k, (pair + 1) * p + k};
}

Eigen::VectorXd apply_diff(const Eigen::VectorXd& beta, Index g, Index p)
{
    Eigen::VectorXd d((g - 1) * p);
    for (Index c = 0; c < d.size(); ++c) {
        const DiffRow r = diff_row(c, p);
        d(c) = beta(r.hi) - beta(r.lo);
    }
    return d;
}

class Restricted
{
public:
    Restricted(const PolishProblem& prob, const ActivePattern& pat, const Eigen::VectorXd& resid,
               const Eigen::VectorXd& diffs)
        : prob_(prob), pat_(pat)
    {
        const Index n = prob.X.rows();
        sign_resid_.resize(n);
        for (Index i = 0; i < n; ++i) sign_resid_(i) = resid(i) > 0.0 ? prob.tau : prob.tau - 1.0;
        sign_diff_ = diffs.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
        if (prob.quantile) {
            lin_ = Eigen::VectorXd::Zero(prob.X.cols());
            for (Index i = 0; i < n; ++i)
                if (!pat.zero_resid[static_cast<std::size_t>(i)]) lin_ -= sign_resid_(i) * prob.X.row(i).transpose();
            lin_const_ = 0.0;
            for (Index i = 0; i < n; ++i)
                if (!pat.zero_resid[static_cast<std::size_t>(i)]) lin_const_ += sign_resid_(i) * prob.y(i);
        }
    }

    double value(const Eigen::VectorXd& beta) const
    {
        double v = 0.0;
        if (prob_.quantile) {
            v = lin_const_ + lin_.dot(beta);
        } else {
            v = (prob_.y - prob_.X * beta).squaredNorm();
        }
        const Eigen::VectorXd d = apply_diff(beta, prob_.g, prob_.p);
        const Index p = prob_.p;
        for (Index j = 0; j + 1 < prob_.g; ++j) {
            if (prob_.q == 2) {
                if (pat_.zero_diff[static_cast<std::size_t>(j * p)]) continue;
                v += prob_.kappa(j) * d.segment(j * p, p).norm();
            } else {
                for (Index k = 0; k < p; ++k) {
                    const Index c = j * p + k;
                    if (!pat_.zero_diff[static_cast<std::size_t>(c)]) v += prob_.kappa(j) * sign_diff_(c) * d(c);
                }
            }
        }
        return v;
    }

    void derivatives(const Eigen::VectorXd& beta, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const
    {
        const Index m = beta.size();
        const Index p = prob_.p;
        if (prob_.quantile) {
            grad = lin_;
            hess.setZero(m, m);
        } else {
            grad = -2.0 * prob_.X.transpose() * (prob_.y - prob_.X * beta);
            hess = 2.0 * prob_.X.transpose() * prob_.X;
        }
        const Eigen::VectorXd d = apply_diff(beta, prob_.g, prob_.p);
        for (Index j = 0; j + 1 < prob_.g; ++j) {
            const double kap = prob_.kappa(j);
            if (prob_.q == 2) {
                if (pat_.zero_diff[static_cast<std::size_t>(j * p)]) continue;
                const Eigen::VectorXd dj = d.segment(j * p, p);
                const double nrm = dj.norm();
                if (nrm == 0.0) continue;
                const Eigen::VectorXd u = dj / nrm;
                const Eigen::MatrixXd block = kap / nrm * (Eigen::MatrixXd::Identity(p, p) - u * u.transpose());
                // D_j^T (.) D_j with D_j = [-I, I] on blocks j, j+1
                grad.segment(j * p, p) -= kap * u;
                grad.segment((j + 1) * p, p) += kap * u;
                hess.block(j * p, j * p, p, p) += block;
                hess.block((j + 1) * p, (j + 1) * p, p, p) += block;
                hess.block(j * p, (j + 1) * p, p, p) -= block;
                hess.block((j + 1) * p, j * p, p, p) -= block;
            } else {
                for (Index k = 0; k < p; ++k) {
                    const Index c = j * p + k;
                    if (pat_.zero_diff[static_cast<std::size_t>(c)]) continue;
                    const DiffRow r = diff_row(c, p);
                    grad(r.hi) += kap * sign_diff_(c);
                    grad(r.lo) -= kap * sign_diff_(c);
                }
            }
        }
    }

    bool signs_consistent(const Eigen::VectorXd& beta, double tol) const
    {
        if (prob_.quantile) {
            const Eigen::VectorXd r = prob_.y - prob_.X * beta;
            for (Index i = 0; i < r.size(); ++i) {
                if (pat_.zero_resid[static_cast<std::size_t>(i)]) continue;
                if (sign_resid_(i) > 0.0 ? r(i) < -tol : r(i) > tol) return false;
            }
        }
        if (prob_.q == 1) {
            const Eigen::VectorXd d = apply_diff(beta, prob_.g, prob_.p);
            for (Index c = 0; c < d.size(); ++c) {
                if (pat_.zero_diff[static_cast<std::size_t>(c)]) continue;
                if (sign_diff_(c) * d(c) < -tol) return false;
            }
        }
        return true;
    }

private:
    const PolishProblem& prob_;
    const ActivePattern& pat_;
    Eigen::VectorXd sign_resid_;
    Eigen::VectorXd sign_diff_;
    Eigen::VectorXd lin_;
    double lin_const_ = 0.0;
};

double full_objective(const PolishProblem& prob, const Eigen::VectorXd& beta)
{
    const Eigen::VectorXd r = prob.y - prob.X * beta;
    double v = 0.0;
    if (prob.quantile) {
        for (Index i = 0; i < r.size(); ++i) v += check_value(r(i), prob.tau);
    } else {
        v = r.squaredNorm();
    }
    const Eigen::VectorXd d = apply_diff(beta, prob.g, prob.p);
    for (Index j = 0; j + 1 < prob.g; ++j) {
        const auto dj = d.segment(j * prob.p, prob.p);
        v += prob.kappa(j) * (prob.q == 1 ? dj.lpNorm<1>() : dj.norm());
    }
    return v;
}

// Newton iterations on beta0 + N theta; false if the restricted problem is unbounded.
bool newton_on_subspace(const Restricted& f, const Eigen::MatrixXd& N, Eigen::VectorXd& beta)
{
    const Index k = N.cols();
    if (k == 0) return true;
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
    double value = f.value(beta);
    for (int it = 0; it < 100; ++it) {
        f.derivatives(beta, grad, hess);
        const Eigen::VectorXd gr = N.transpose() * grad;
        if (gr.norm() <= 1e-13 * (1.0 + std::abs(value) + grad.norm())) return true;
        const Eigen::MatrixXd H = N.transpose() * hess * N;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
        const Eigen::VectorXd& lam = eig.eigenvalues();
        const Eigen::MatrixXd& V = eig.eigenvectors();
        const double lam_max = std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
        const Eigen::VectorXd gv = V.transpose() * gr;
        Eigen::VectorXd step_v(k);
        for (Index i = 0; i < k; ++i) {
            if (lam(i) <= 1e-11 * lam_max) {
                // flat direction with nonzero slope: the pattern is not optimal
                if (std::abs(gv(i)) > 1e-9 * (1.0 + gr.norm())) return false;
                step_v(i) = 0.0;
            } else {
                step_v(i) = -gv(i) / lam(i);
            }
        }
        const Eigen::VectorXd step = N * (V * step_v);
        const double slope = grad.dot(step);
        double t = 1.0;
        double trial = f.value(beta + step);
        while (trial > value + 1e-4 * t * slope && t > 1e-12) {
            t *= 0.5;
            trial = f.value(beta + t * step);
        }
        if (trial > value) return true; // no further progress possible
        beta += t * step;
        const double prev = value;
        value = trial;
        if (std::abs(prev - value) <= 1e-15 * (1.0 + std::abs(value)) && t * step.norm() <= 1e-14 * (1.0 + beta.norm()))
            return true;
    }
    return true;
}

struct Bounds
{
    // Unknown multipliers: residual subgradients (box [tau-1, tau]) and
    // difference subgradients (box [-kappa, kappa] for q=1, ball per pair for q=2).
    std::vector<Index> resid_rows;
    std::vector<Index> diff_rows;
};

bool kkt_holds(const PolishProblem& prob, const Eigen::VectorXd& beta, const ActivePattern& pat)
{
    const Index n = prob.X.rows();
    const Index m = prob.X.cols();
    const Index p = prob.p;
    const Eigen::VectorXd r = prob.y - prob.X * beta;
    const Eigen::VectorXd d = apply_diff(beta, prob.g, p);
    const double tiny_r = 1e-10 * (1.0 + prob.y.lpNorm<Eigen::Infinity>());
    const double tiny_d = 1e-10 * (1.0 + beta.lpNorm<Eigen::Infinity>());

    Eigen::VectorXd h = Eigen::VectorXd::Zero(m);
    Bounds unk;
    if (prob.quantile) {
        for (Index i = 0; i < n; ++i) {
            if (pat.zero_resid[static_cast<std::size_t>(i)] || std::abs(r(i)) <= tiny_r) {
                unk.resid_rows.push_back(i);
            } else {
                h -= check_subgradient(r(i), prob.tau) * prob.X.row(i).transpose();
            }
        }
    } else {
        h = -2.0 * prob.X.transpose() * r;
    }
    std::vector<bool> pair_unknown(static_cast<std::size_t>(prob.g > 0 ? prob.g - 1 : 0), false);
    for (Index j = 0; j + 1 < prob.g; ++j) {
        const auto dj = d.segment(j * p, p);
        if (prob.q == 2) {
            const double nrm = dj.norm();
            if (pat.zero_diff[static_cast<std::size_t>(j * p)] || nrm <= tiny_d) {
                pair_unknown[static_cast<std::size_t>(j)] = true;
                for (Index k = 0; k < p; ++k) unk.diff_rows.push_back(j * p + k);
            } else {
                const Eigen::VectorXd v = prob.kappa(j) * dj / nrm;
                h.segment((j + 1) * p, p) += v;
                h.segment(j * p, p) -= v;
            }
        } else {
            for (Index k = 0; k < p; ++k) {
                const Index c = j * p + k;
                if (pat.zero_diff[static_cast<std::size_t>(c)] || std::abs(d(c)) <= tiny_d) {
                    unk.diff_rows.push_back(c);
                } else {
                    const DiffRow row = diff_row(c, p);
                    const double v = prob.kappa(j) * (d(c) > 0.0 ? 1.0 : -1.0);
                    h(row.hi) += v;
                    h(row.lo) -= v;
                }
            }
        }
    }

    const Index nr = static_cast<Index>(unk.resid_rows.size());
    const Index nd = static_cast<Index>(unk.diff_rows.size());
    const double scale = 1.0 + h.norm() + (prob.kappa.size() ? prob.kappa.maxCoeff() : 0.0) +
                         (nr > 0 ? prob.X.lpNorm<Eigen::Infinity>() : 0.0);
    if (nr + nd == 0) return h.norm() <= 1e-8 * scale;

    // M w = -h, columns: -x_i for residual unknowns, D_c^T for difference unknowns.
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, nr + nd);
    for (Index a = 0; a < nr; ++a) M.col(a) = -prob.X.row(unk.resid_rows[static_cast<std::size_t>(a)]).transpose();
    for (Index a = 0; a < nd; ++a) {
        const DiffRow row = diff_row(unk.diff_rows[static_cast<std::size_t>(a)], p);
        M(row.hi, nr + a) = 1.0;
        M(row.lo, nr + a) = -1.0;
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
    Eigen::VectorXd w = cod.solve(-h);
    if ((M * w + h).norm() > 1e-8 * scale) return false;

    const auto project_bounds = [&](Eigen::VectorXd& v) {
        for (Index a = 0; a < nr; ++a) v(a) = std::clamp(v(a), prob.tau - 1.0, prob.tau);
        if (prob.q == 1) {
            for (Index a = 0; a < nd; ++a) {
                const double kap = prob.kappa(unk.diff_rows[static_cast<std::size_t>(a)] / p);
                v(nr + a) = std::clamp(v(nr + a), -kap, kap);
            }
        } else {
            for (Index a = 0; a < nd; a += p) {
                const double kap = prob.kappa(unk.diff_rows[static_cast<std::size_t>(a)] / p);
                auto blk = v.segment(nr + a, p);
                const double nrm = blk.norm();
                if (nrm > kap) blk *= kap / nrm;
            }
        }
    };
    const auto violation = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd pv = v;
        project_bounds(pv);
        return (pv - v).lpNorm<Eigen::Infinity>();
    };
    const double bound_tol = 1e-8 * (1.0 + (prob.kappa.size() ? prob.kappa.maxCoeff() : 0.0));
    if (violation(w) <= bound_tol) return true;

    // Several multiplier vectors may satisfy the equations; alternate projections
    // (Dykstra) between the solution set and the bounds.
    Eigen::VectorXd pcorr = Eigen::VectorXd::Zero(w.size());
    Eigen::VectorXd qcorr = Eigen::VectorXd::Zero(w.size());
    for (int it = 0; it < 500; ++it) {
        Eigen::VectorXd yb = w + pcorr;
        project_bounds(yb);
        pcorr = w + pcorr - yb;
        Eigen::VectorXd za = yb + qcorr;
        za -= cod.solve(M * za + h);
        qcorr = yb + qcorr - za;
        w = za;
        if (violation(w) <= bound_tol && (M * w + h).norm() <= 1e-8 * scale) return true;
    }
    return false;
}

} // namespace

ActivePattern pattern_from(const PolishProblem& prob, const Eigen::VectorXd& resid, const Eigen::VectorXd& diffs)
{
    ActivePattern pat;
    pat.zero_resid.assign(static_cast<std::size_t>(resid.size()), false);
    if (prob.quantile)
        for (Index i = 0; i < resid.size(); ++i) pat.zero_resid[static_cast<std::size_t>(i)] = resid(i) == 0.0;
    pat.zero_diff.assign(static_cast<std::size_t>(diffs.size()), false);
    const Index p = prob.p;
    for (Index j = 0; j + 1 < prob.g; ++j) {
        if (prob.q == 2) {
            const bool fused = diffs.segment(j * p, p).isZero(0.0);
            for (Index k = 0; k < p; ++k) pat.zero_diff[static_cast<std::size_t>(j * p + k)] = fused;
        } else {
            for (Index k = 0; k < p; ++k)
                pat.zero_diff[static_cast<std::size_t>(j * p + k)] = diffs(j * p + k) == 0.0;
        }
    }
    return pat;
}

PolishResult polish(const PolishProblem& prob, const Eigen::VectorXd& beta_hint, const Eigen::VectorXd& resid,
                    const Eigen::VectorXd& diffs)
{
    PolishResult out;
    const Index m = prob.X.cols();
    const ActivePattern pat = pattern_from(prob, resid, diffs);

    std::vector<Index> zr;
    std::vector<Index> zd;
    for (std::size_t i = 0; i < pat.zero_resid.size(); ++i)
        if (pat.zero_resid[i]) zr.push_back(static_cast<Index>(i));
    for (std::size_t c = 0; c < pat.zero_diff.size(); ++c)
        if (pat.zero_diff[c]) zd.push_back(static_cast<Index>(c));
    const Index rows = static_cast<Index>(zr.size() + zd.size());

    Eigen::VectorXd beta = beta_hint;
    Eigen::MatrixXd N;
    if (rows == 0) {
        N = Eigen::MatrixXd::Identity(m, m);
    } else {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, m);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
        Index row = 0;
        for (Index i : zr) {
            A.row(row) = prob.X.row(i);
            b(row) = prob.y(i);
            ++row;
        }
        for (Index c : zd) {
            const DiffRow dr = diff_row(c, prob.p);
            A(row, dr.hi) = 1.0;
            A(row, dr.lo) = -1.0;
            ++row;
        }
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
        beta -= cod.solve(A * beta - b);
        if ((A * beta - b).lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + b.lpNorm<Eigen::Infinity>()))
            return out; // pattern over-constrained

        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A.transpose());
        const Index rank = qr.rank();
        const Eigen::MatrixXd Q = qr.householderQ();
        N = Q.rightCols(m - rank);
    }

    const Restricted f(prob, pat, resid, diffs);
    if (!newton_on_subspace(f, N, beta)) return out;
    if (!beta.allFinite()) return out;
    const double tol = 1e-9 * (1.0 + prob.y.lpNorm<Eigen::Infinity>() + beta.lpNorm<Eigen::Infinity>());
    if (!f.signs_consistent(beta, tol)) return out;

    out.ok = true;
    out.beta = beta;
    out.diffs = apply_diff(beta, prob.g, prob.p);
    for (Index c : zd) out.diffs(c) = 0.0;
    out.resid = prob.y - prob.X * beta;
    for (Index i : zr) out.resid(i) = 0.0;
    out.objective = full_objective(prob, beta);
    out.optimal = kkt_holds(prob, beta, pat);
    return out;
}

} // namespace fusedgroup::detail
