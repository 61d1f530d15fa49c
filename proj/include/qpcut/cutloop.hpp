#pragma once

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpcut/envelopes.hpp"
#include "qpcut/instances.hpp"
#include "qpcut/master.hpp"
#include "qpcut/projlp.hpp"
#include "qpcut/separation.hpp"
#include "qpcut/sym_matrix.hpp"

namespace qpcut {

struct LoopParams {
    int max_outer_iter = 30;
    double violation_tol = 1e-6;
    bool relative_violation = true;  // scale the threshold by 1 + |vbar|
    bool enable_projlp = false;
    bool enable_psd_split = false;
    SepParams sep_params;
    MasterParams master_params;
    double time_limit_seconds = 0.0;  // 0 = no limit
};

struct IterationTrace {
    double bound = 0.0;
    double diag_violation = 0.0;    // violation of the separated diagonal cut
    double linear_violation = 0.0;  // violation of the ProjLP cut (augmented)
    bool added_diag = false;
    bool added_linear = false;
};

struct BoundReport {
    std::string instance_name;
    double bound = -std::numeric_limits<double>::infinity();
    int iterations = 0;  // master solves
    int diag_cuts_added = 0;
    int linear_cuts_added = 0;
    double sep_time_fraction = 0.0;  // separation wall time / total wall time
    double total_time_seconds = 0.0;
    std::vector<IterationTrace> trace;
    bool converged = true;
    std::string status = "ok";
};

/// Initial uniform diagonal cut lambda * e with lambda just above
/// |lambda_min(Q)| so that Q + diag(d) is strictly PD.
inline DiagCut initial_cut(const SymMatrix& q) {
    const double lmin = min_eigenvalue(q);
    const double tiny = 1e-8 * spectral_norm(q);
    const double lambda = lmin < 0.0 ? 1.05 * std::abs(lmin) + tiny : tiny;
    return DiagCut{Eigen::VectorXd::Constant(q.size(), lambda)};
}

namespace detail {

class StopWatch {
public:
    StopWatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline BoundReport run_loop_impl(const Instance& inst, const LoopParams& params, bool augmented) {
    inst.validate();
    const int n = inst.n;
    const auto envelopes = inst.envelopes();

    MasterOptions mopts;
    mopts.psd_split = augmented || params.enable_psd_split;
    const bool use_projlp = augmented || params.enable_projlp;
    if (augmented) {
        for (const auto& s : inst.sets)
            if (s.kind() != SetKind::Interval)
                throw std::invalid_argument("run_augmented_loop: interval sets required");
    }

    MasterModel model = build_master(inst, envelopes, mopts);
    model.add_cut(initial_cut(inst.Q));

    std::optional<LiftedRltSet> lifted;
    if (use_projlp && mopts.psd_split) {
        Eigen::VectorXd lo(n), hi(n);
        for (int i = 0; i < n; ++i) {
            lo(i) = inst.sets[i].lower();
            hi(i) = inst.sets[i].upper();
        }
        lifted.emplace(model.qplus(), model.qminus(), RltBox(lo, hi));
    }

    BoundReport report;
    report.instance_name = inst.name;
    StopWatch clock;
    double sep_seconds = 0.0;
    Eigen::VectorXd warm_d;
    bool have_warm = false;

    for (int k = 0; k < params.max_outer_iter; ++k) {
        if (params.time_limit_seconds > 0.0 && clock.seconds() > params.time_limit_seconds) {
            report.status = "time limit reached";
            break;
        }
        MasterSolution sol;
        try {
            sol = solve_master(model, params.master_params);
        } catch (const std::exception& e) {
            report.converged = false;
            report.status = std::string("master solve failed: ") + e.what();
            break;
        }
        report.iterations += 1;
        report.bound = sol.bound;
        IterationTrace it;
        it.bound = sol.bound;
        if (!sol.converged) {
            report.converged = false;
            report.status = "master: " + sol.status;
        }
        if (report.iterations >= params.max_outer_iter) {
            report.trace.push_back(it);
            break;
        }

        const double threshold =
            params.relative_violation ? params.violation_tol * (1.0 + std::abs(sol.v))
                                      : params.violation_tol;

        // Diagonal-cut separation at (xbar, vbar).
        Eigen::VectorXd alpha(n), beta(n);
        for (int i = 0; i < n; ++i) {
            const auto [a, b] = envelopes[i].sep_coefficients(sol.x(i));
            alpha(i) = a;
            beta(i) = b;
        }
        bool separated = false;
        {
            const StopWatch sep_clock;
            SepProblem sep(inst.Q, alpha, beta, params.sep_params.beta_floor);
            const SepResult sres =
                solve_separation(sep, params.sep_params, have_warm ? &warm_d : nullptr);
            sep_seconds += sep_clock.seconds();
            warm_d = sres.d;
            have_warm = true;

            it.diag_violation = cut_violation(sres.d, alpha, beta, sol.x, sol.v, inst.Q);
            if (it.diag_violation > threshold) {
                if (model.add_cut(DiagCut{sres.d}) == AddCutStatus::Added) {
                    it.added_diag = true;
                    report.diag_cuts_added += 1;
                } else {
                    it.diag_violation = 0.0;  // duplicate: treat as no progress
                }
                separated = it.added_diag;
            }
        }

        if (lifted) {
            const auto cut = separate_projlp(*lifted, sol.x, *sol.tau, sol.v,
                                             params.violation_tol);
            if (cut) {
                it.linear_violation = cut->a.dot(sol.x) + cut->b_tau * *sol.tau +
                                      cut->c_v * sol.v - cut->rhs;
                model.add_cut(*cut);
                it.added_linear = true;
                report.linear_cuts_added += 1;
                separated = true;
            }
        }

        report.trace.push_back(it);
        if (!separated) break;
    }

    report.total_time_seconds = clock.seconds();
    report.sep_time_fraction =
        report.total_time_seconds > 0.0 ? sep_seconds / report.total_time_seconds : 0.0;
    return report;
}

}  // namespace detail

/// Cutting-surface loop: alternate master solves with diagonal-cut
/// separation, adding each violated cut until no cut separates, the
/// iteration cap, or the time limit.
inline BoundReport run_cutting_loop(const Instance& inst, const LoopParams& params = {}) {
    return detail::run_loop_impl(inst, params, false);
}

/// Augmented loop: the master additionally carries the PSD-split constraint
/// v >= x^T Q+ x + tau, and each iteration also separates a linear Farkas
/// cut over the lifted RLT set at (xbar, taubar, vbar). Terminates when
/// neither cut family separates.
inline BoundReport run_augmented_loop(const Instance& inst, const LoopParams& params = {}) {
    return detail::run_loop_impl(inst, params, true);
}

}  // namespace qpcut
