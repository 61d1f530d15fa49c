#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qpcut/sym_matrix.hpp"

namespace qpcut {

/// Parameters of the primal-barrier coordinate minimization solver.
/// Defaults follow the reference parameter choices.
struct SepParams {
    double sml_sig = 1e-5;     // sigma floor
    double sig_upd = 0.8;      // sigma shrink factor
    double subg_tol = 0.03;    // ||s||/||beta|| trigger for the sigma update
    double smll_prgrss = 5e-4; // relative-progress termination threshold
    long max_iter = 0;         // 0 -> 50 * n
    double beta_floor = 1e-8;  // perturbation keeping the optimum attained
    int refactor_period = 0;   // 0 -> 5 * n; full re-inversion cadence
};

/// Separation problem data: minimize sum_i g_i(d_i) subject to
/// Q + diag(d) >= 0, where g_i(t) = alpha_i*t for t < 0 and beta_i*t for
/// t >= 0 with 0 <= alpha_i <= beta_i. Q is stored normalized to unit
/// 2-norm; results are mapped back by `scale` (the problem is positively
/// homogeneous in (Q, d)).
class SepProblem {
public:
    SepProblem(const SymMatrix& q, Eigen::VectorXd alpha, Eigen::VectorXd beta,
               double beta_floor = 1e-8)
        : alpha_(std::move(alpha)), beta_(std::move(beta)), qnorm_(q) {
        const int n = q.size();
        if (alpha_.size() != n || beta_.size() != n)
            throw std::invalid_argument("SepProblem: coefficient size mismatch");
        for (int i = 0; i < n; ++i) {
            if (!std::isfinite(alpha_(i)) || !std::isfinite(beta_(i)) ||
                alpha_(i) > beta_(i) + 1e-12 * (1.0 + std::abs(beta_(i))))
                throw std::invalid_argument("SepProblem: need 0 <= alpha_i <= beta_i");
            if (alpha_(i) < 0.0) alpha_(i) = beta_floor;
            beta_(i) = std::max(beta_(i), beta_floor);
            alpha_(i) = std::min(alpha_(i), beta_(i));
        }
        scale_ = spectral_norm(q);
        if (!(scale_ > 0.0)) {
            // Q == 0: the PSD cone constraint is d >= 0 at any scale.
            scale_ = 1.0;
        }
        qnorm_ = q.scaled(1.0 / scale_);
    }

    int size() const { return qnorm_.size(); }
    const SymMatrix& normalized_q() const { return qnorm_; }
    double scale() const { return scale_; }
    const Eigen::VectorXd& alpha() const { return alpha_; }
    const Eigen::VectorXd& beta() const { return beta_; }

    /// g_i evaluated at one coordinate value.
    double g(int i, double di) const {
        return di < 0.0 ? alpha_(i) * di : beta_(i) * di;
    }

    double g_sum(const Eigen::VectorXd& d) const {
        double s = 0.0;
        for (int i = 0; i < d.size(); ++i) s += g(i, d(i));
        return s;
    }

private:
    Eigen::VectorXd alpha_, beta_;
    SymMatrix qnorm_;
    double scale_;
};

/// Mutable solver state on the normalized problem: strictly feasible d,
/// V = [Qn + diag(d)]^{-1}, barrier weight sigma, and running objective
/// pieces. Single-owner; one solve runs on one thread.
struct SepState {
    Eigen::VectorXd d;
    Eigen::MatrixXd V;
    double sigma = 0.0;
    double gsum = 0.0;    // sum_i g_i(d_i)
    double logdet = 0.0;  // log det(Qn + diag(d))
    double f_val = 0.0;   // gsum - sigma * logdet
    long iter = 0;
    int steps_since_refactor = 0;

    void refresh_f() { f_val = gsum - sigma * logdet; }
};

namespace detail {

inline double median(std::vector<double> v) {
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    double hi = v[n / 2];
    if (n % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
    return 0.5 * (v[n / 2 - 1] + hi);
}

/// Element of the subdifferential of g_i at di used by the initial-sigma
/// rule; the midpoint is chosen at the kink.
inline double g_subgradient_element(const SepProblem& p, int i, double di) {
    if (di > 0.0) return p.beta()(i);
    if (di < 0.0) return p.alpha()(i);
    return 0.5 * (p.alpha()(i) + p.beta()(i));
}

}  // namespace detail

/// Initial state: d = -1.5*lambda_min(Qn) * e (0 when Qn is PD), V its
/// inverse, sigma the median of subgradient/V_ii ratios. A warm start d
/// (given on the original scale) is used instead when strictly feasible.
inline SepState init_state(const SepProblem& problem, const SepParams& params,
                           const Eigen::VectorXd* warm = nullptr) {
    const int n = problem.size();
    const SymMatrix& qn = problem.normalized_q();
    SepState st;

    std::optional<SymMatrix> vinv;
    if (warm && warm->size() == n && warm->allFinite()) {
        Eigen::VectorXd cand = *warm / problem.scale();
        vinv = invert_pd(qn.plus_diag(cand));
        if (vinv) st.d = std::move(cand);
    }
    if (!vinv) {
        const double lmin = min_eigenvalue(qn);
        double shift = lmin > 0.0 ? 0.0 : -1.5 * lmin;
        for (int attempt = 0; attempt < 64; ++attempt) {
            vinv = invert_pd(qn.plus_diag(Eigen::VectorXd::Constant(n, shift)));
            if (vinv) break;
            shift = std::max(2.0 * shift, 1e-8);
        }
        if (!vinv) throw std::runtime_error("init_state: could not find a PD shift");
        st.d = Eigen::VectorXd::Constant(n, shift);
    }
    st.V = vinv->dense();

    std::vector<double> ratios(n);
    for (int i = 0; i < n; ++i)
        ratios[i] = detail::g_subgradient_element(problem, i, st.d(i)) / st.V(i, i);
    st.sigma = std::max(detail::median(std::move(ratios)), params.sml_sig);

    st.gsum = problem.g_sum(st.d);
    const auto ld = logdet_pd(qn.plus_diag(st.d));
    if (!ld) throw std::runtime_error("init_state: log-det of an infeasible point");
    st.logdet = *ld;
    st.refresh_f();
    return st;
}

/// Minimum-norm element of the subdifferential of f(d; sigma), computed per
/// coordinate from V's diagonal in linear time. With c_j = sigma * V_jj:
/// d_j < 0 -> alpha_j - c_j; d_j > 0 -> beta_j - c_j; d_j = 0 -> distance of
/// c_j from [alpha_j, beta_j] (0 when inside).
inline Eigen::VectorXd min_norm_subgradient(const SepState& state, const SepProblem& problem) {
    const int n = problem.size();
    Eigen::VectorXd s(n);
    for (int j = 0; j < n; ++j) {
        const double c = state.sigma * state.V(j, j);
        if (state.d(j) < 0.0) {
            s(j) = problem.alpha()(j) - c;
        } else if (state.d(j) > 0.0) {
            s(j) = problem.beta()(j) - c;
        } else if (c < problem.alpha()(j)) {
            s(j) = problem.alpha()(j) - c;
        } else if (c > problem.beta()(j)) {
            s(j) = problem.beta()(j) - c;
        } else {
            s(j) = 0.0;
        }
    }
    return s;
}

/// Picks the coordinate with the largest |s_j| (lowest index on ties) and
/// returns the exact minimizer of the 1-D restriction of f, which is the
/// intersection of the curve sigma*V_ii/(1 + t*V_ii) with the piecewise
/// constant subdifferential of g_i. Always returns delta > -1/V_ii.
inline std::pair<int, double> coordinate_step(const SepState& state, const SepProblem& problem,
                                              const Eigen::VectorXd& s) {
    int i = 0;
    double best = -1.0;
    for (int j = 0; j < s.size(); ++j) {
        const double m = std::abs(s(j));
        if (m > best) {
            best = m;
            i = j;
        }
    }

    const double vii = state.V(i, i);
    const double di = state.d(i);
    const double sigma = state.sigma;
    const double alpha = problem.alpha()(i);
    const double beta = problem.beta()(i);

    const double kink_gap = 1.0 - di * vii;  // (-d_i) - (-1/V_ii), times V_ii
    double delta;
    if (kink_gap <= 0.0) {
        // The kink -d_i is at or below the feasibility bound -1/V_ii.
        delta = sigma / beta - 1.0 / vii;
    } else {
        const double rho = sigma * vii / kink_gap;  // curve value at the kink
        if (rho > beta) {
            delta = sigma / beta - 1.0 / vii;
        } else if (rho >= alpha) {
            delta = -di;
        } else {
            // rho < alpha needs rho > 0, so alpha > 0 here (sigma, V_ii > 0).
            if (!(alpha > 0.0))
                throw std::logic_error("coordinate_step: rho < alpha with alpha == 0");
            delta = sigma / alpha - 1.0 / vii;
        }
    }
    return {i, delta};
}

/// Applies d_i += delta: rank-1 update of V, incremental objective update,
/// periodic full re-inversion to bound Sherman-Morrison drift.
inline void apply_step(SepState& state, const SepProblem& problem, int i, double delta,
                       const SepParams& params) {
    const int n = problem.size();
    const double vii_old = state.V(i, i);
    if (!(1.0 + delta * vii_old > 0.0))
        throw std::logic_error("apply_step: step bound violated");

    state.gsum += problem.g(i, state.d(i) + delta) - problem.g(i, state.d(i));
    state.d(i) += delta;
    state.logdet += std::log1p(delta * vii_old);
    detail::rank1_update_inverse_inplace(state.V, i, delta);
    state.iter += 1;

    const int period = params.refactor_period > 0 ? params.refactor_period : 5 * n;
    if (++state.steps_since_refactor >= period) {
        const SymMatrix a = problem.normalized_q().plus_diag(state.d);
        const auto vinv = invert_pd(a);
        const auto ld = logdet_pd(a);
        if (!vinv || !ld)
            throw std::runtime_error("apply_step: refactorization found an infeasible iterate");
        state.V = vinv->dense();
        state.logdet = *ld;
        state.gsum = problem.g_sum(state.d);
        state.steps_since_refactor = 0;
    }
    state.refresh_f();
}

/// Shrinks sigma (floored at sml_sig) when the scaled min-norm subgradient
/// indicates near-stationarity: ||s||_2 / ||beta||_2 <= subg_tol.
inline void update_sigma(SepState& state, const SepProblem& problem, const SepParams& params,
                         const Eigen::VectorXd& s) {
    const double bnorm = problem.beta().norm();
    if (s.norm() <= params.subg_tol * bnorm) {
        state.sigma = std::max(params.sml_sig, params.sig_upd * state.sigma);
        state.refresh_f();
    }
}

struct SepResult {
    Eigen::VectorXd d;   // original scale; Q + diag(d) strictly PD
    double objective;    // sum_i g_i(d_i) on the original scale
    long iterations = 0;
};

/// Primal-barrier coordinate minimization for the separation problem.
/// Strictly feasible throughout; terminates on max_iter or when the
/// relative objective progress over the last n iterations drops below
/// smll_prgrss. The progress check is armed only once sigma has reached its
/// floor, so plateaus caused by the barrier schedule are not mistaken for
/// convergence.
inline SepResult solve_separation(const SepProblem& problem, const SepParams& params = {},
                                  const Eigen::VectorXd* warm = nullptr) {
    const int n = problem.size();
    SepState state = init_state(problem, params, warm);
    const long max_iter = params.max_iter > 0 ? params.max_iter : 50L * n;

    std::vector<double> fhist;
    fhist.reserve(static_cast<std::size_t>(max_iter) + 1);
    fhist.push_back(state.f_val);
    long armed_at = -1;

    for (long k = 1; k <= max_iter; ++k) {
        const Eigen::VectorXd s = min_norm_subgradient(state, problem);
        const auto [i, delta] = coordinate_step(state, problem, s);
        apply_step(state, problem, i, delta, params);
        const Eigen::VectorXd s_new = min_norm_subgradient(state, problem);
        update_sigma(state, problem, params, s_new);

        if (armed_at < 0 && state.sigma <= params.sml_sig * (1.0 + 1e-9)) armed_at = k;
        fhist.push_back(state.f_val);
        if (armed_at >= 0 && k >= armed_at + n) {
            const double prev = fhist[static_cast<std::size_t>(k - n)];
            if (std::abs(prev - state.f_val) < params.smll_prgrss * std::max(1.0, std::abs(state.f_val)))
                break;
        }
    }

    SepResult res;
    res.d = problem.scale() * state.d;
    res.objective = problem.scale() * problem.g_sum(state.d);
    res.iterations = state.iter;
    return res;
}

/// Violation of the diagonal-perturbation cut defined by d at the point
/// (xbar, vbar): (-vbar + xbar^T Q xbar) - sum_i g_i(d_i), with g built from
/// the envelope coefficients (alpha, beta) at xbar. Positive means the cut
/// separates (xbar, vbar) by that amount. Everything on the original scale.
inline double cut_violation(const Eigen::VectorXd& d, const Eigen::VectorXd& alpha,
                            const Eigen::VectorXd& beta, const Eigen::VectorXd& xbar,
                            double vbar, const SymMatrix& q) {
    double gsum = 0.0;
    for (int i = 0; i < d.size(); ++i)
        gsum += d(i) < 0.0 ? alpha(i) * d(i) : beta(i) * d(i);
    const double xqx = xbar.dot(q.dense() * xbar);
    return (-vbar + xqx) - gsum;
}

}  // namespace qpcut
