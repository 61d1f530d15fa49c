#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <optional>
#include <stdexcept>
#include <utility>

namespace qpcut {

/// Dense real symmetric matrix with value semantics. Symmetry is enforced on
/// construction and preserved exactly by every operation in this module.
class SymMatrix {
public:
    explicit SymMatrix(int n) : m_(Eigen::MatrixXd::Zero(n, n)) {
        if (n < 1) throw std::invalid_argument("SymMatrix: dimension must be >= 1");
    }

    static SymMatrix identity(int n) {
        SymMatrix a(n);
        a.m_.setIdentity();
        return a;
    }

    static SymMatrix from_diagonal(const Eigen::VectorXd& d) {
        SymMatrix a(static_cast<int>(d.size()));
        a.m_.diagonal() = d;
        return a;
    }

    /// Builds from a dense matrix. Rejects non-finite entries and gross
    /// asymmetry; small asymmetric roundoff is averaged away.
    static SymMatrix from_dense(const Eigen::MatrixXd& a) {
        if (a.rows() != a.cols() || a.rows() < 1)
            throw std::invalid_argument("SymMatrix: matrix must be square, n >= 1");
        if (!a.allFinite())
            throw std::invalid_argument("SymMatrix: entries must be finite");
        const double scale = a.cwiseAbs().maxCoeff();
        const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-8 * (1.0 + scale))
            throw std::invalid_argument("SymMatrix: matrix is not symmetric");
        SymMatrix out(static_cast<int>(a.rows()));
        out.m_ = 0.5 * (a + a.transpose());
        return out;
    }

    int size() const { return static_cast<int>(m_.rows()); }

    double operator()(int i, int j) const { return m_(i, j); }

    /// Sets both (i,j) and (j,i).
    void set(int i, int j, double v) {
        m_(i, j) = v;
        m_(j, i) = v;
    }

    void add_to_diagonal(int i, double delta) { m_(i, i) += delta; }

    void add_to_diagonal(const Eigen::VectorXd& d) { m_.diagonal() += d; }

    const Eigen::MatrixXd& dense() const { return m_; }

    Eigen::VectorXd diagonal() const { return m_.diagonal(); }

    SymMatrix scaled(double s) const {
        SymMatrix out(size());
        out.m_ = s * m_;
        return out;
    }

    SymMatrix plus_diag(const Eigen::VectorXd& d) const {
        SymMatrix out = *this;
        out.m_.diagonal() += d;
        return out;
    }

private:
    Eigen::MatrixXd m_;
};

/// Smallest eigenvalue.
inline double min_eigenvalue(const SymMatrix& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.dense(), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("min_eigenvalue: eigen-solve failed");
    return es.eigenvalues()(0);
}

/// Matrix 2-norm, i.e. max(|lambda_min|, |lambda_max|).
inline double spectral_norm(const SymMatrix& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.dense(), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("spectral_norm: eigen-solve failed");
    const auto& ev = es.eigenvalues();
    return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

/// Splits A into its positive- and negative-semidefinite parts via the
/// eigen-pairs of A: A = Aplus + Aminus with Aplus PSD and Aminus NSD.
inline std::pair<SymMatrix, SymMatrix> psd_split(const SymMatrix& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.dense());
    if (es.info() != Eigen::Success)
        throw std::runtime_error("psd_split: eigen-solve failed");
    const Eigen::VectorXd pos = es.eigenvalues().cwiseMax(0.0);
    const Eigen::VectorXd neg = es.eigenvalues().cwiseMin(0.0);
    const Eigen::MatrixXd& u = es.eigenvectors();
    Eigen::MatrixXd ap = u * pos.asDiagonal() * u.transpose();
    Eigen::MatrixXd am = u * neg.asDiagonal() * u.transpose();
    ap = 0.5 * (ap + ap.transpose()).eval();
    am = 0.5 * (am + am.transpose()).eval();
    return {SymMatrix::from_dense(ap), SymMatrix::from_dense(am)};
}

/// Inverse of a positive definite matrix, or nullopt when the Cholesky
/// factorization fails (A not PD). Callers treat nullopt as "infeasible".
inline std::optional<SymMatrix> invert_pd(const SymMatrix& a) {
    Eigen::LLT<Eigen::MatrixXd> llt(a.dense());
    if (llt.info() != Eigen::Success) return std::nullopt;
    const int n = a.size();
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    inv = 0.5 * (inv + inv.transpose()).eval();
    return SymMatrix::from_dense(inv);
}

/// log det(A) for PD A, or nullopt when A is not PD.
inline std::optional<double> logdet_pd(const SymMatrix& a) {
    Eigen::LLT<Eigen::MatrixXd> llt(a.dense());
    if (llt.info() != Eigen::Success) return std::nullopt;
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

namespace detail {

/// In-place Sherman-Morrison update of V = A^{-1} after A += delta * E_ii:
///   V <- V - delta * v_i v_i^T / (1 + delta * V_ii).
/// Requires 1 + delta * V_ii > 0 (the 1-D feasibility bound).
inline void rank1_update_inverse_inplace(Eigen::MatrixXd& v, int i, double delta) {
    const double denom = 1.0 + delta * v(i, i);
    if (!(denom > 0.0))
        throw std::logic_error("rank1_update_inverse: step bound 1 + delta*V_ii > 0 violated");
    if (delta == 0.0) return;
    const Eigen::VectorXd col = v.col(i);
    // Update the lower triangle, then mirror: both triangles stay
    // bit-identical over long update sequences.
    v.selfadjointView<Eigen::Lower>().rankUpdate(col, -delta / denom);
    v.triangularView<Eigen::StrictlyUpper>() = v.transpose();
}

}  // namespace detail

/// Inverse of (V^{-1} + delta * E_ii) given V, by the Sherman-Morrison
/// formula. Throws std::logic_error when 1 + delta * V_ii <= 0.
inline SymMatrix rank1_update_inverse(const SymMatrix& v, int i, double delta) {
    Eigen::MatrixXd w = v.dense();
    detail::rank1_update_inverse_inplace(w, i, delta);
    return SymMatrix::from_dense(w);
}

}  // namespace qpcut
