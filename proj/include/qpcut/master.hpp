#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpcut/envelopes.hpp"
#include "qpcut/instances.hpp"
#include "qpcut/sym_matrix.hpp"

namespace qpcut {

/// Diagonal-perturbation cut: v >= x^T (Q + diag(d)) x - d^T y, valid when
/// Q + diag(d) is PSD.
struct DiagCut {
    Eigen::VectorXd d;
};

/// Linear cut in the (x, tau, v) space: a^T x + b_tau * tau + c_v * v <= rhs.
struct LinearCut {
    Eigen::VectorXd a;
    double b_tau = 0.0;
    double c_v = 0.0;
    double rhs = 0.0;
};

struct MasterOptions {
    bool psd_split = false;  // add tau and the constraint v >= x^T Q+ x + tau
};

struct MasterParams {
    double mu_init = 1.0;
    double mu_factor = 0.2;
    double mu_stop_per_constraint = 1e-9;  // schedule floor: mu <= this * m
    double gap_refine_tol = 1e-7;          // and m*mu <= this * (1 + |obj|)
    double armijo = 1e-4;
    int max_newton_per_stage = 120;
    double newton_tol = 1e-9;  // stage stop on Newton decrement^2 / 2
};

struct MasterSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd y;  // full length n; eliminated components filled from chords
    std::optional<double> tau;
    double v = 0.0;
    double bound = 0.0;  // v + q^T x
    int newton_iters = 0;
    double barrier_mu_final = 0.0;
    double kkt_residual = 0.0;
    bool converged = false;
    std::string status;
};

enum class AddCutStatus { Added, Duplicate };

/// Convex relaxation master model over (x, y, v[, tau]): minimize v + q^T x
/// subject to box, envelope, diagonal-cut, optional PSD-split and linear
/// constraints. Variables y_i with degenerate envelopes (l == u) are
/// substituted by their chord expression.
class MasterModel {
public:
    MasterModel(const Instance& inst, const std::vector<EnvelopeModel>& envelopes,
                const MasterOptions& options)
        : n_(inst.n), Q_(inst.Q), q_(inst.q), envelopes_(envelopes) {
        inst.validate();
        if (static_cast<int>(envelopes.size()) != n_)
            throw std::invalid_argument("MasterModel: one envelope per variable required");
        L_.resize(n_);
        R_.resize(n_);
        yslot_.assign(n_, -1);
        for (int i = 0; i < n_; ++i) {
            L_(i) = envelopes_[i].domain_lower();
            R_(i) = envelopes_[i].domain_upper();
            if (!(L_(i) < R_(i)))
                throw std::invalid_argument("MasterModel: singleton variable domains unsupported");
            if (!envelopes_[i].degenerate()) yslot_[i] = ny_++;
        }
        if (options.psd_split) {
            auto [qp, qm] = psd_split(Q_);
            qplus_ = std::move(qp);
            qminus_ = std::move(qm);
            double norm2max = 0.0;
            for (int i = 0; i < n_; ++i)
                norm2max += std::max(L_(i) * L_(i), R_(i) * R_(i));
            // Valid since x^T Q- x >= lambda_min(Q-) * ||x||^2 and Q- is NSD;
            // the extra -1 keeps a strict interior for the barrier.
            tau_lb_ = min_eigenvalue(*qminus_) * norm2max - 1.0;
        }
    }

    int n() const { return n_; }
    int num_y() const { return ny_; }
    bool has_tau() const { return qplus_.has_value(); }
    const SymMatrix& Q() const { return Q_; }
    const Eigen::VectorXd& q() const { return q_; }
    const Eigen::VectorXd& box_lower() const { return L_; }
    const Eigen::VectorXd& box_upper() const { return R_; }
    const std::vector<EnvelopeModel>& envelopes() const { return envelopes_; }
    int yslot(int i) const { return yslot_[i]; }
    const SymMatrix& qplus() const { return *qplus_; }
    const SymMatrix& qminus() const { return *qminus_; }
    double tau_lower_bound() const { return tau_lb_; }
    const std::vector<DiagCut>& diag_cuts() const { return diag_cuts_; }
    const std::vector<LinearCut>& linear_cuts() const { return linear_cuts_; }

    /// Validates PSD-ness of Q + diag(d) (throws on failure), flags
    /// near-identical duplicates of pooled cuts.
    AddCutStatus add_cut(DiagCut cut) {
        if (cut.d.size() != n_) throw std::invalid_argument("add_cut: dimension mismatch");
        if (min_eigenvalue(Q_.plus_diag(cut.d)) < -1e-8)
            throw std::invalid_argument("add_cut: Q + diag(d) is not PSD");
        AddCutStatus status = AddCutStatus::Added;
        for (const auto& existing : diag_cuts_)
            if ((existing.d - cut.d).cwiseAbs().maxCoeff() <= 1e-10) {
                status = AddCutStatus::Duplicate;
                break;
            }
        cut_caches_.push_back(make_cache(cut.d));
        diag_cuts_.push_back(std::move(cut));
        return status;
    }

    void add_cut(LinearCut cut) {
        if (cut.a.size() != n_) throw std::invalid_argument("add_cut: dimension mismatch");
        if (cut.b_tau != 0.0 && !has_tau())
            throw std::invalid_argument("add_cut: tau coefficient without PSD split");
        linear_cuts_.push_back(std::move(cut));
    }

    /// y_i expression value for eliminated variables (the common chord).
    double eliminated_y(int i, double xi) const {
        return envelopes_[i].upper_piece().eval(xi);
    }

    // Cached cut data used by the solver: the cut in variables (x, y_active, v)
    // reads  x^T A x + bx^T x - dy^T y + c0 - v <= 0.
    struct CutCache {
        Eigen::MatrixXd A;
        Eigen::VectorXd bx;
        Eigen::VectorXd dy;
        double c0 = 0.0;
    };
    const std::vector<CutCache>& cut_caches() const { return cut_caches_; }

private:
    CutCache make_cache(const Eigen::VectorXd& d) const {
        CutCache c;
        c.A = Q_.dense();
        c.A.diagonal() += d;
        c.bx = Eigen::VectorXd::Zero(n_);
        c.dy = Eigen::VectorXd::Zero(ny_);
        c.c0 = 0.0;
        for (int i = 0; i < n_; ++i) {
            if (yslot_[i] >= 0) {
                c.dy(yslot_[i]) = d(i);
            } else {
                const AffinePiece& chord = envelopes_[i].upper_piece();
                c.bx(i) += -d(i) * chord.slope;
                c.c0 += -d(i) * chord.intercept;
            }
        }
        return c;
    }

    int n_;
    SymMatrix Q_;
    Eigen::VectorXd q_;
    std::vector<EnvelopeModel> envelopes_;
    Eigen::VectorXd L_, R_;
    std::vector<int> yslot_;
    int ny_ = 0;
    std::optional<SymMatrix> qplus_, qminus_;
    double tau_lb_ = 0.0;
    std::vector<DiagCut> diag_cuts_;
    std::vector<CutCache> cut_caches_;
    std::vector<LinearCut> linear_cuts_;
};

inline MasterModel build_master(const Instance& inst, const std::vector<EnvelopeModel>& envelopes,
                                const MasterOptions& options = {}) {
    return MasterModel(inst, envelopes, options);
}

namespace detail {

/// Log-barrier machinery for the master model. Variable layout:
/// z = [x (n), y (ny), v, tau?].
class MasterBarrier {
public:
    explicit MasterBarrier(const MasterModel& m) : m_(m) {
        nvar_ = m.n() + m.num_y() + 1 + (m.has_tau() ? 1 : 0);
        vidx_ = m.n() + m.num_y();
        tidx_ = m.has_tau() ? vidx_ + 1 : -1;
        grad_f0_ = Eigen::VectorXd::Zero(nvar_);
        grad_f0_.head(m.n()) = m.q();
        grad_f0_(vidx_) = 1.0;
        count_ = count_constraints();
    }

    int nvar() const { return nvar_; }
    int vidx() const { return vidx_; }
    int tidx() const { return tidx_; }
    int constraint_count() const { return count_; }
    const Eigen::VectorXd& grad_f0() const { return grad_f0_; }

    double f0(const Eigen::VectorXd& z) const {
        return z(vidx_) + m_.q().dot(z.head(m_.n()));
    }

    /// Walks every constraint h_j(z) <= 0 and calls cb(h_j, g_j, curv) where
    /// g_j is the dense gradient and curv the (sparse) Hessian hook. For
    /// value-only passes, use phi() / feasible() below.
    template <typename Callback>
    void for_each_constraint(const Eigen::VectorXd& z, Callback&& cb) const {
        const int n = m_.n();
        const auto x = z.head(n);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(nvar_);

        for (int i = 0; i < n; ++i) {
            g.setZero();
            g(i) = -1.0;
            cb(m_.box_lower()(i) - z(i), g, nullptr);
            g(i) = 1.0;
            cb(z(i) - m_.box_upper()(i), g, nullptr);
        }
        for (int i = 0; i < n; ++i) {
            const int slot = m_.yslot(i);
            if (slot < 0) continue;
            const int yj = n + slot;
            const EnvelopeModel& env = m_.envelopes()[i];
            for (const auto& p : env.lower_pieces()) {
                g.setZero();
                g(i) = p.slope;
                g(yj) = -1.0;
                cb(p.eval(z(i)) - z(yj), g, nullptr);
            }
            if (env.lower_has_quadratic()) {
                g.setZero();
                g(i) = 2.0 * z(i);
                g(yj) = -1.0;
                quad_hook_.i = i;
                quad_hook_.coeff = 2.0;
                quad_hook_.dense = nullptr;
                cb(z(i) * z(i) - z(yj), g, &quad_hook_);
            }
            const AffinePiece& up = env.upper_piece();
            g.setZero();
            g(i) = -up.slope;
            g(yj) = 1.0;
            cb(z(yj) - up.eval(z(i)), g, nullptr);
        }
        for (const auto& c : m_.cut_caches()) {
            Eigen::VectorXd ax = c.A * x;
            const double h = x.dot(ax) + c.bx.dot(x) -
                             c.dy.dot(z.segment(n, m_.num_y())) + c.c0 - z(vidx_);
            g.setZero();
            g.head(n) = 2.0 * ax + c.bx;
            g.segment(n, m_.num_y()) = -c.dy;
            g(vidx_) = -1.0;
            quad_hook_.i = -1;
            quad_hook_.coeff = 2.0;
            quad_hook_.dense = &c.A;
            cb(h, g, &quad_hook_);
        }
        if (m_.has_tau()) {
            Eigen::VectorXd qpx = m_.qplus().dense() * x;
            g.setZero();
            g.head(n) = 2.0 * qpx;
            g(tidx_) = 1.0;
            g(vidx_) = -1.0;
            quad_hook_.i = -1;
            quad_hook_.coeff = 2.0;
            quad_hook_.dense = &m_.qplus().dense();
            cb(x.dot(qpx) + z(tidx_) - z(vidx_), g, &quad_hook_);

            g.setZero();
            g(tidx_) = -1.0;
            cb(m_.tau_lower_bound() - z(tidx_), g, nullptr);
        }
        for (const auto& lc : m_.linear_cuts()) {
            g.setZero();
            g.head(n) = lc.a;
            if (tidx_ >= 0) g(tidx_) = lc.b_tau;
            g(vidx_) = lc.c_v;
            double h = lc.a.dot(x) + lc.c_v * z(vidx_) - lc.rhs;
            if (tidx_ >= 0) h += lc.b_tau * z(tidx_);
            cb(h, g, nullptr);
        }
    }

    struct QuadHook {
        int i = -1;  // >= 0: coeff on (i,i); -1 with dense: coeff * dense block
        double coeff = 0.0;
        const Eigen::MatrixXd* dense = nullptr;
    };

    /// Barrier value; +inf when z is not strictly feasible.
    double phi(const Eigen::VectorXd& z) const {
        double total = 0.0;
        bool ok = true;
        for_each_value(z, [&](double h) {
            if (h >= 0.0) {
                ok = false;
            } else {
                total -= std::log(-h);
            }
        });
        return ok ? total : std::numeric_limits<double>::infinity();
    }

    bool strictly_feasible(const Eigen::VectorXd& z, double margin = 0.0) const {
        bool ok = true;
        for_each_value(z, [&](double h) {
            if (h > -margin || !std::isfinite(h)) ok = false;
        });
        return ok;
    }

    double max_constraint_value(const Eigen::VectorXd& z) const {
        double worst = -std::numeric_limits<double>::infinity();
        for_each_value(z, [&](double h) { worst = std::max(worst, h); });
        return worst;
    }

    /// Assembles gradient and Hessian of psi = f0/mu + phi at z.
    /// Returns false when z is infeasible.
    bool assemble(const Eigen::VectorXd& z, double mu, double& psi, Eigen::VectorXd& grad,
                  Eigen::MatrixXd& hess) const {
        const int n = m_.n();
        psi = f0(z) / mu;
        grad = grad_f0_ / mu;
        hess.setZero(nvar_, nvar_);
        bool ok = true;
        for_each_constraint(z, [&](double h, const Eigen::VectorXd& g, const QuadHook* hook) {
            if (!ok) return;
            if (h >= 0.0) {
                ok = false;
                return;
            }
            const double w1 = -1.0 / h;        // 1/(-h)
            const double w2 = w1 * w1;         // 1/h^2
            psi -= std::log(-h);
            grad.noalias() += w1 * g;
            hess.noalias() += w2 * (g * g.transpose());
            if (hook) {
                if (hook->dense) {
                    hess.topLeftCorner(n, n).noalias() += (w1 * hook->coeff) * (*hook->dense);
                } else {
                    hess(hook->i, hook->i) += w1 * hook->coeff;
                }
            }
        });
        return ok;
    }

private:
    template <typename ValueCb>
    void for_each_value(const Eigen::VectorXd& z, ValueCb&& cb) const {
        // Value-only duplicate of for_each_constraint, skipping gradients.
        const int n = m_.n();
        const auto x = z.head(n);
        for (int i = 0; i < n; ++i) {
            cb(m_.box_lower()(i) - z(i));
            cb(z(i) - m_.box_upper()(i));
        }
        for (int i = 0; i < n; ++i) {
            const int slot = m_.yslot(i);
            if (slot < 0) continue;
            const int yj = n + slot;
            const EnvelopeModel& env = m_.envelopes()[i];
            for (const auto& p : env.lower_pieces()) cb(p.eval(z(i)) - z(yj));
            if (env.lower_has_quadratic()) cb(z(i) * z(i) - z(yj));
            cb(z(yj) - env.upper_piece().eval(z(i)));
        }
        for (const auto& c : m_.cut_caches()) {
            const double h = x.dot(c.A * x) + c.bx.dot(x) -
                             c.dy.dot(z.segment(n, m_.num_y())) + c.c0 - z(vidx_);
            cb(h);
        }
        if (m_.has_tau()) {
            cb(x.dot(m_.qplus().dense() * x) + z(tidx_) - z(vidx_));
            cb(m_.tau_lower_bound() - z(tidx_));
        }
        for (const auto& lc : m_.linear_cuts()) {
            double h = lc.a.dot(x) + lc.c_v * z(vidx_) - lc.rhs;
            if (tidx_ >= 0) h += lc.b_tau * z(tidx_);
            cb(h);
        }
    }

    int count_constraints() const {
        int m = 2 * m_.n();
        for (int i = 0; i < m_.n(); ++i) {
            if (m_.yslot(i) < 0) continue;
            m += static_cast<int>(m_.envelopes()[i].lower_pieces().size());
            if (m_.envelopes()[i].lower_has_quadratic()) ++m;
            ++m;  // upper
        }
        m += static_cast<int>(m_.diag_cuts().size());
        if (m_.has_tau()) m += 2;
        m += static_cast<int>(m_.linear_cuts().size());
        return m;
    }

    const MasterModel& m_;
    int nvar_ = 0, vidx_ = 0, tidx_ = -1, count_ = 0;
    Eigen::VectorXd grad_f0_;
    mutable QuadHook quad_hook_;
};

/// Strictly feasible starting point: box midpoints (nudged off envelope
/// kinks), envelope midpoints for y, restored tau/v levels.
inline Eigen::VectorXd master_initial_point(const MasterModel& m, const MasterBarrier& b,
                                            double nudge_scale) {
    const int n = m.n();
    Eigen::VectorXd z = Eigen::VectorXd::Zero(b.nvar());
    for (int i = 0; i < n; ++i) {
        const double lo = m.box_lower()(i), hi = m.box_upper()(i);
        double x0 = 0.5 * (lo + hi);
        const EnvelopeModel& env = m.envelopes()[i];
        // Detect a kink: two or more lower pieces active at x0.
        double best = env.lower_has_quadratic() ? x0 * x0
                                                : -std::numeric_limits<double>::infinity();
        for (const auto& p : env.lower_pieces()) best = std::max(best, p.eval(x0));
        int active = env.lower_has_quadratic() &&
                             std::abs(x0 * x0 - best) <= 1e-9 * (1.0 + std::abs(best))
                         ? 1
                         : 0;
        for (const auto& p : env.lower_pieces())
            if (std::abs(p.eval(x0) - best) <= 1e-9 * (1.0 + std::abs(best))) ++active;
        if (active >= 2) x0 += std::min(nudge_scale * (hi - lo), 0.25 * (hi - x0));
        z(i) = x0;
    }
    for (int i = 0; i < n; ++i) {
        const int slot = m.yslot(i);
        if (slot < 0) continue;
        const auto [lo_env, up_env] = m.envelopes()[i].evaluate(z(i));
        z(n + slot) = 0.5 * (lo_env + up_env);
    }

    if (m.has_tau()) {
        const auto x = z.head(n);
        double tau0 = x.dot(m.qminus().dense() * x) - 0.5;
        // Pure-tau linear cuts (c_v == 0 forces b_tau < 0) bound tau below.
        for (const auto& lc : m.linear_cuts()) {
            if (std::abs(lc.c_v) <= 1e-14 && lc.b_tau < -1e-14) {
                const double need = (lc.a.dot(x) - lc.rhs) / (-lc.b_tau);
                tau0 = std::max(tau0, need + 0.5);
            }
        }
        z(b.tidx()) = tau0;
    }

    // v above every v-involving constraint with unit slack.
    double vmin = -std::numeric_limits<double>::infinity();
    const auto x = z.head(n);
    for (const auto& c : m.cut_caches()) {
        const double rhs = x.dot(c.A * x) + c.bx.dot(x) -
                           c.dy.dot(z.segment(n, m.num_y())) + c.c0;
        vmin = std::max(vmin, rhs);
    }
    if (m.has_tau())
        vmin = std::max(vmin, x.dot(m.qplus().dense() * x) + z(b.tidx()));
    for (const auto& lc : m.linear_cuts()) {
        if (lc.c_v < -1e-14) {
            double lhs = lc.a.dot(x) - lc.rhs;
            if (b.tidx() >= 0) lhs += lc.b_tau * z(b.tidx());
            vmin = std::max(vmin, lhs / (-lc.c_v));
        }
    }
    z(b.vidx()) = vmin + 1.0 + 1e-3 * (1.0 + std::abs(vmin));
    return z;
}

}  // namespace detail

/// Solves the master relaxation by a log-barrier Newton method with
/// backtracking line search. The reported bound is v + q^T x at the final
/// barrier iterate; mu is driven below both the per-constraint floor and a
/// relative-gap refinement so the iterate's overshoot above the exact
/// relaxation value stays within downstream tolerances.
inline MasterSolution solve_master(const MasterModel& model, const MasterParams& params = {}) {
    if (model.diag_cuts().empty())
        throw std::logic_error("solve_master: model needs at least one diagonal cut");
    detail::MasterBarrier barrier(model);
    const int nvar = barrier.nvar();
    const int mcount = barrier.constraint_count();

    MasterSolution sol;
    sol.status = "ok";
    sol.converged = true;

    Eigen::VectorXd z;
    for (double nudge : {1e-3, 2.5e-2}) {
        z = detail::master_initial_point(model, barrier, nudge);
        if (barrier.strictly_feasible(z)) break;
    }
    if (!barrier.strictly_feasible(z))
        throw std::runtime_error("solve_master: failed to construct a strictly feasible start");

    Eigen::VectorXd grad(nvar), dz(nvar);
    Eigen::MatrixXd hess(nvar, nvar);
    double mu = params.mu_init;
    int total_newton = 0;
    bool aborted = false;

    for (int stage = 0; stage < 96 && !aborted; ++stage) {
        for (int it = 0; it < params.max_newton_per_stage; ++it) {
            double psi;
            if (!barrier.assemble(z, mu, psi, grad, hess))
                throw std::runtime_error("solve_master: iterate left the feasible region");
            Eigen::LLT<Eigen::MatrixXd> llt(hess);
            if (llt.info() != Eigen::Success) {
                const double ridge = 1e-12 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
                hess.diagonal().array() += ridge;
                llt.compute(hess);
                if (llt.info() != Eigen::Success) {
                    sol.converged = false;
                    sol.status = "newton factorization failed";
                    aborted = true;
                    break;
                }
            }
            dz = llt.solve(-grad);
            const double decrement2 = -grad.dot(dz);
            ++total_newton;
            if (decrement2 * 0.5 <= params.newton_tol) break;

            double alpha = 1.0;
            const double slope = grad.dot(dz);
            bool stepped = false;
            for (int ls = 0; ls < 60; ++ls) {
                const Eigen::VectorXd cand = z + alpha * dz;
                const double phi_cand = barrier.phi(cand);
                if (std::isfinite(phi_cand) &&
                    barrier.f0(cand) / mu + phi_cand <= psi + params.armijo * alpha * slope) {
                    z = cand;
                    stepped = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!stepped) {
                // Cannot make progress at this mu; current z remains feasible.
                sol.converged = false;
                sol.status = "newton line search stalled";
                aborted = true;
                break;
            }
        }
        const double obj = barrier.f0(z);
        const bool schedule_done = mu <= params.mu_stop_per_constraint * mcount;
        const bool gap_done = mcount * mu <= params.gap_refine_tol * (1.0 + std::abs(obj));
        if ((schedule_done && gap_done) || mu < 1e-14) break;
        mu *= params.mu_factor;
    }

    const int n = model.n();
    sol.x = z.head(n);
    sol.y.resize(n);
    for (int i = 0; i < n; ++i) {
        const int slot = model.yslot(i);
        sol.y(i) = slot >= 0 ? z(n + slot) : model.eliminated_y(i, z(i));
    }
    if (model.has_tau()) sol.tau = z(barrier.tidx());
    sol.v = z(barrier.vidx());
    sol.bound = barrier.f0(z);
    sol.newton_iters = total_newton;
    sol.barrier_mu_final = mu;

    // KKT residual: stationarity with the barrier multipliers mu/(-h_j)
    // equals mu * grad(psi); feasibility is the worst constraint value.
    double psi;
    if (barrier.assemble(z, mu, psi, grad, hess)) {
        const double stat = mu * grad.lpNorm<Eigen::Infinity>();
        const double feas = std::max(0.0, barrier.max_constraint_value(z));
        sol.kkt_residual = std::max(stat, feas);
    } else {
        sol.kkt_residual = std::numeric_limits<double>::infinity();
    }
    return sol;
}

}  // namespace qpcut
