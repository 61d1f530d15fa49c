#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qpcut/master.hpp"
#include "qpcut/sym_matrix.hpp"

namespace qpcut {

/// Variable box for the RLT (McCormick) bound functions. Intervals only:
/// L_i < R_i for all i.
struct RltBox {
    Eigen::VectorXd L, R;

    RltBox(Eigen::VectorXd lo, Eigen::VectorXd hi) : L(std::move(lo)), R(std::move(hi)) {
        if (L.size() != R.size() || L.size() == 0)
            throw std::invalid_argument("RltBox: dimension mismatch");
        for (int i = 0; i < L.size(); ++i)
            if (!(L(i) < R(i))) throw std::invalid_argument("RltBox: requires L_i < R_i");
    }

    int n() const { return static_cast<int>(L.size()); }

    void check_inside(const Eigen::VectorXd& x) const {
        if (x.size() != L.size()) throw std::domain_error("RltBox: x dimension mismatch");
        for (int i = 0; i < L.size(); ++i) {
            const double tol = 1e-9 * (1.0 + std::max(std::abs(L(i)), std::abs(R(i))));
            if (x(i) < L(i) - tol || x(i) > R(i) + tol)
                throw std::domain_error("RltBox: x outside the box");
        }
    }
};

/// McCormick bound functions of the bilinear term x_i x_j at x:
/// returns (y-_ij(x), y+_ij(x)); always y- <= x_i x_j <= y+ inside the box.
inline std::pair<double, double> rlt_bounds(const RltBox& box, const Eigen::VectorXd& x, int i,
                                            int j) {
    box.check_inside(x);
    const double li = box.L(i), lj = box.L(j), ri = box.R(i), rj = box.R(j);
    const double lower = std::max(ri * x(j) + rj * x(i) - ri * rj,
                                  li * x(j) + lj * x(i) - li * lj);
    const double upper = std::min(li * x(j) + rj * x(i) - li * rj,
                                  ri * x(j) + lj * x(i) - ri * lj);
    return {lower, upper};
}

/// The lifted RLT feasibility set used for separation:
///   { (x,tau,v) : exists X,  <Q+,X> + tau - v <= 0,  <Q-,X> - tau <= 0,
///                 y-_ij(x) <= X_ij <= y+_ij(x) }.
struct LiftedRltSet {
    SymMatrix Qplus;
    SymMatrix Qminus;
    RltBox box;

    LiftedRltSet(SymMatrix qp, SymMatrix qm, RltBox b)
        : Qplus(std::move(qp)), Qminus(std::move(qm)), box(std::move(b)) {
        if (Qplus.size() != box.n() || Qminus.size() != box.n())
            throw std::invalid_argument("LiftedRltSet: dimension mismatch");
    }
};

namespace detail {

/// One affine bound row p(x) = gi*x_i + gj*x_j + c for an X_ij entry.
struct RltPiece {
    double gi, gj, c;
    double eval(double xi, double xj) const { return gi * xi + gj * xj + c; }
};

/// The two lower / two upper McCormick pieces for pair (i, j). For i == j
/// both upper pieces coincide.
inline void mccormick_pieces(const RltBox& box, int i, int j, RltPiece lower[2],
                             RltPiece upper[2]) {
    const double li = box.L(i), lj = box.L(j), ri = box.R(i), rj = box.R(j);
    lower[0] = {rj, ri, -ri * rj};  // R_i x_j + R_j x_i - R_i R_j  (gi multiplies x_i)
    lower[1] = {lj, li, -li * lj};
    upper[0] = {rj, li, -li * rj};  // L_i x_j + R_j x_i - L_i R_j
    upper[1] = {lj, ri, -ri * lj};
}

}  // namespace detail

/// Farkas-certificate separation over the lifted RLT set. Decides whether
/// (xbar, taubar, vbar) admits a feasible lift X; when it does not, the
/// infeasibility certificate is aggregated into a valid linear cut
/// a^T x + b*tau + c*v <= rhs violated at the query point.
///
/// The feasibility LP has two coupling rows plus per-entry bounds, so its
/// dual is solved exactly: with multipliers (theta, 1-theta) on the coupling
/// rows the inner minimization over X is separable, and the concave
/// piecewise-linear outer function of theta is maximized over its kinks.
inline std::optional<LinearCut> separate_projlp(const LiftedRltSet& set,
                                                const Eigen::VectorXd& xbar, double taubar,
                                                double vbar, double violation_tol = 1e-6) {
    const int n = set.box.n();
    set.box.check_inside(xbar);

    const int npairs = n * (n + 1) / 2;
    std::vector<double> cp(npairs), cm(npairs), lo(npairs), hi(npairs);
    {
        int k = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j, ++k) {
                const double w = i == j ? 1.0 : 2.0;
                cp[k] = w * set.Qplus(i, j);
                cm[k] = w * set.Qminus(i, j);
                const auto [l, u] = rlt_bounds(set.box, xbar, i, j);
                lo[k] = l;
                hi[k] = u;
            }
    }

    // g(theta) = sum_k min over [lo,hi] of (theta*cp + (1-theta)*cm)_k * X_k
    //            - theta*(vbar - taubar) - (1-theta)*taubar,
    // the negated optimal slack of the feasibility system; infeasible iff
    // g(theta*) > 0 for the maximizing theta in [0,1].
    const auto g_of = [&](double theta) {
        double total = -theta * (vbar - taubar) - (1.0 - theta) * taubar;
        for (int k = 0; k < npairs; ++k) {
            const double coef = theta * cp[k] + (1.0 - theta) * cm[k];
            total += coef >= 0.0 ? coef * lo[k] : coef * hi[k];
        }
        return total;
    };

    std::vector<double> candidates{0.0, 1.0};
    for (int k = 0; k < npairs; ++k) {
        const double denom = cm[k] - cp[k];
        if (denom != 0.0) {
            const double theta = cm[k] / denom;
            if (theta > 0.0 && theta < 1.0) candidates.push_back(theta);
        }
    }
    double best_theta = 0.0, best_g = -std::numeric_limits<double>::infinity();
    for (double theta : candidates) {
        const double val = g_of(theta);
        if (val > best_g) {
            best_g = val;
            best_theta = theta;
        }
    }
    if (!(best_g > violation_tol)) return std::nullopt;

    // Assemble the aggregated cut. Multiplier coef_k lands on the lower or
    // upper bound row of X_k; the x-dependence enters through the affine
    // McCormick piece active at xbar (ties broken by the first piece).
    const double y1 = best_theta, y2 = 1.0 - best_theta;
    LinearCut cut;
    cut.a = Eigen::VectorXd::Zero(n);
    cut.b_tau = y1 - y2;
    cut.c_v = -y1;
    cut.rhs = 0.0;
    {
        int k = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j, ++k) {
                const double coef = y1 * cp[k] + y2 * cm[k];
                if (coef == 0.0) continue;
                detail::RltPiece lower[2], upper[2];
                detail::mccormick_pieces(set.box, i, j, lower, upper);
                if (coef > 0.0) {
                    // Lower bound active: + coef * p_l(x) on the cut LHS.
                    const detail::RltPiece& p =
                        lower[0].eval(xbar(i), xbar(j)) >= lower[1].eval(xbar(i), xbar(j)) - 1e-14
                            ? lower[0]
                            : lower[1];
                    cut.a(i) += coef * p.gi;
                    cut.a(j) += coef * p.gj;
                    cut.rhs -= coef * p.c;
                } else {
                    // Upper bound active: - |coef| * p_u(x) on the cut LHS.
                    const detail::RltPiece& p =
                        upper[0].eval(xbar(i), xbar(j)) <= upper[1].eval(xbar(i), xbar(j)) + 1e-14
                            ? upper[0]
                            : upper[1];
                    cut.a(i) += coef * p.gi;
                    cut.a(j) += coef * p.gj;
                    cut.rhs -= coef * p.c;
                }
            }
    }

    // Scale to unit coefficient norm; (b, c) never both vanish.
    Eigen::VectorXd full(n + 2);
    full << cut.a, cut.b_tau, cut.c_v;
    const double norm = full.norm();
    cut.a /= norm;
    cut.b_tau /= norm;
    cut.c_v /= norm;
    cut.rhs /= norm;
    return cut;
}

}  // namespace qpcut
