#pragma once

// Shared test utilities. The oracles here are deliberately independent of
// the library's solve paths: eigenvalues come from a hand-rolled Householder
// tridiagonalization plus Sturm-count bisection (characteristic-polynomial
// sign changes), 1-D minimization from golden section, and the separation
// reference from a projected subgradient method.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "qpcut/instances.hpp"
#include "qpcut/rng.hpp"
#include "qpcut/separation.hpp"
#include "qpcut/sym_matrix.hpp"

namespace qpcut::test {

/// Householder tridiagonalization of a symmetric matrix (basic arithmetic
/// only; no eigen-solver involved).
inline void tridiagonalize(Eigen::MatrixXd a, Eigen::VectorXd& diag, Eigen::VectorXd& off) {
    const int n = static_cast<int>(a.rows());
    for (int k = 0; k + 2 < n; ++k) {
        Eigen::VectorXd xk = a.col(k).segment(k + 1, n - k - 1);
        const double xnorm = xk.norm();
        if (xnorm < 1e-300) continue;
        const double alpha = xk(0) >= 0.0 ? -xnorm : xnorm;
        Eigen::VectorXd v = xk;
        v(0) -= alpha;
        const double vnorm = v.norm();
        if (vnorm < 1e-300) continue;
        v /= vnorm;
        auto sub = a.block(k + 1, k + 1, n - k - 1, n - k - 1);
        const Eigen::VectorXd p = sub * v;
        const Eigen::VectorXd q = p - v.dot(p) * v;
        sub -= 2.0 * (v * q.transpose() + q * v.transpose());
        a(k + 1, k) = alpha;
        a(k, k + 1) = alpha;
        for (int r = k + 2; r < n; ++r) {
            a(r, k) = 0.0;
            a(k, r) = 0.0;
        }
    }
    diag = a.diagonal();
    off.resize(n - 1);
    for (int i = 0; i + 1 < n; ++i) off(i) = a(i, i + 1);
}

/// Number of eigenvalues of the tridiagonal matrix strictly below t, via the
/// Sturm sequence of leading principal minors of T - tI.
inline int sturm_count_below(const Eigen::VectorXd& diag, const Eigen::VectorXd& off, double t) {
    const int n = static_cast<int>(diag.size());
    int count = 0;
    double q = diag(0) - t;
    if (q < 0.0) ++count;
    for (int i = 1; i < n; ++i) {
        if (q == 0.0) q = 1e-300;
        q = (diag(i) - t) - off(i - 1) * off(i - 1) / q;
        if (q < 0.0) ++count;
    }
    return count;
}

/// k-th smallest eigenvalue (k >= 1) by bisection on the Sturm count.
inline double oracle_eigenvalue_k(const qpcut::SymMatrix& a, int k) {
    Eigen::VectorXd diag, off;
    tridiagonalize(a.dense(), diag, off);
    const int n = a.size();
    double lo = diag(0), hi = diag(0);
    for (int i = 0; i < n; ++i) {
        double radius = 0.0;
        if (i > 0) radius += std::abs(off(i - 1));
        if (i + 1 < n) radius += std::abs(off(i));
        lo = std::min(lo, diag(i) - radius);
        hi = std::max(hi, diag(i) + radius);
    }
    for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (sturm_count_below(diag, off, mid) >= k)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

inline double oracle_min_eigenvalue(const qpcut::SymMatrix& a) { return oracle_eigenvalue_k(a, 1); }

inline double oracle_max_eigenvalue(const qpcut::SymMatrix& a) {
    return oracle_eigenvalue_k(a, a.size());
}

/// Golden-section minimization of a convex function on [lo, hi].
inline double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                                 int iters = 200) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < iters && b - a > 1e-15 * (1.0 + std::abs(a) + std::abs(b)); ++i) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

/// Random symmetric matrix with entries ~ U[-1, 1].
inline qpcut::SymMatrix random_symmetric(int n, qpcut::Rng& rng) {
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
    return qpcut::SymMatrix::from_dense(0.5 * (a + a.transpose()));
}

/// Random symmetric positive definite matrix, moderately conditioned.
inline qpcut::SymMatrix random_spd(int n, qpcut::Rng& rng, double min_eig = 0.5) {
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
    Eigen::MatrixXd s = a * a.transpose();
    s.diagonal().array() += min_eig;
    return qpcut::SymMatrix::from_dense(0.5 * (s + s.transpose()));
}

inline bool is_pd(const qpcut::SymMatrix& a) {
    Eigen::LLT<Eigen::MatrixXd> llt(a.dense());
    return llt.info() == Eigen::Success;
}

/// Projected-subgradient reference for the separation problem: `iters`
/// subgradient steps of size 1/k on the normalized problem, each followed by
/// a uniform diagonal shift (eigen-clip restricted to diagonal moves) found
/// by bisection with Cholesky feasibility probes. Returns the best feasible
/// objective seen, on the original scale.
inline double subgradient_reference(const qpcut::SepProblem& p, long iters = 50000) {
    const int n = p.size();
    const Eigen::MatrixXd& qn = p.normalized_q().dense();
    const Eigen::VectorXd& alpha = p.alpha();
    const Eigen::VectorXd& beta = p.beta();
    const double margin = 1e-9;

    const auto feasible = [&](const Eigen::VectorXd& d) {
        Eigen::MatrixXd m = qn;
        m.diagonal() += d;
        m.diagonal().array() -= margin;
        return Eigen::LLT<Eigen::MatrixXd>(m).info() == Eigen::Success;
    };
    const auto gsum = [&](const Eigen::VectorXd& d) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += d(i) < 0.0 ? alpha(i) * d(i) : beta(i) * d(i);
        return s;
    };

    // Start at the uniform shift just above |lambda_min|.
    const double lmin = qpcut::test::oracle_min_eigenvalue(p.normalized_q());
    double lambda0 = lmin < 0.0 ? 1.05 * std::abs(lmin) + 1e-8 : 1e-8;
    Eigen::VectorXd d = Eigen::VectorXd::Constant(n, lambda0);
    while (!feasible(d)) d.array() += 1e-6;

    double best = gsum(d);
    for (long k = 1; k <= iters; ++k) {
        const double step = 1.0 / static_cast<double>(k);
        double max_u = 0.0;
        for (int i = 0; i < n; ++i) {
            const double u = d(i) > 0.0   ? beta(i)
                             : d(i) < 0.0 ? alpha(i)
                                          : 0.5 * (alpha(i) + beta(i));
            d(i) -= step * u;
            max_u = std::max(max_u, u);
        }
        if (!feasible(d)) {
            // Weyl: the deficit is at most step * max_u; bisect the shift.
            double lo = 0.0, hi = step * max_u + 1e-12;
            Eigen::VectorXd cand = d;
            while (true) {
                cand.array() = d.array() + hi;
                if (feasible(cand)) break;
                hi *= 2.0;
            }
            for (int b = 0; b < 48 && hi - lo > 1e-14 + 1e-7 * hi; ++b) {
                const double mid = 0.5 * (lo + hi);
                cand.array() = d.array() + mid;
                if (feasible(cand))
                    hi = mid;
                else
                    lo = mid;
            }
            d.array() += hi;
        }
        best = std::min(best, gsum(d));
    }
    return best * p.scale();
}

}  // namespace qpcut::test
