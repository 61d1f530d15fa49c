#include <gtest/gtest.h>

#include <Eigen/Core>
#include <cmath>

#include "qpcut/envelopes.hpp"
#include "qpcut/instances.hpp"
#include "qpcut/separation.hpp"
#include "qpcut/sym_matrix.hpp"
#include "support.hpp"

using namespace qpcut;

namespace {

SepProblem unit_problem(int n, double alpha, double beta) {
    return SepProblem(SymMatrix::identity(n), Eigen::VectorXd::Constant(n, alpha),
                      Eigen::VectorXd::Constant(n, beta));
}

/// State with prescribed diagonal V entries (for formula-level tests).
SepState manual_state(Eigen::VectorXd d, Eigen::VectorXd vdiag, double sigma) {
    SepState st;
    st.d = std::move(d);
    st.V = Eigen::MatrixXd(SymMatrix::from_diagonal(vdiag).dense());
    st.sigma = sigma;
    return st;
}

}  // namespace

TEST(SepProblem, NormalizationAndFloors) {
    Rng rng(2);
    const SymMatrix q = test::random_symmetric(5, rng);
    const double norm = spectral_norm(q);
    SepProblem p(q, Eigen::VectorXd::Constant(5, 0.1), Eigen::VectorXd::Constant(5, 0.7));
    EXPECT_NEAR(p.scale(), norm, 1e-12 * norm);
    EXPECT_NEAR(spectral_norm(p.normalized_q()), 1.0, 1e-8);

    // alpha = beta = 0 is perturbed by the beta floor rather than rejected
    SepProblem zero(q, Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(5));
    for (int i = 0; i < 5; ++i) {
        EXPECT_GE(zero.beta()(i), 1e-8);
        EXPECT_LE(zero.alpha()(i), zero.beta()(i));
    }

    // small negative alpha from roundoff is raised
    Eigen::VectorXd a = Eigen::VectorXd::Constant(5, -1e-15);
    SepProblem neg(q, a, Eigen::VectorXd::Constant(5, 0.5));
    for (int i = 0; i < 5; ++i) EXPECT_GE(neg.alpha()(i), 0.0);

    EXPECT_THROW(SepProblem(q, Eigen::VectorXd::Constant(5, 0.9),
                            Eigen::VectorXd::Constant(5, 0.5)),
                 std::invalid_argument);
}

TEST(InitState, NegativeEigenvalueShift) {
    Eigen::MatrixXd qd(2, 2);
    qd << 0.0, 1.0, 1.0, 0.0;  // eigenvalues -1, 1; spectral norm 1
    const SymMatrix q = SymMatrix::from_dense(qd);
    SepProblem p(q, Eigen::VectorXd::Constant(2, 0.5), Eigen::VectorXd::Constant(2, 1.0));
    const SepState st = init_state(p, SepParams{});
    EXPECT_NEAR(st.d(0), 1.5, 1e-9);
    EXPECT_NEAR(st.d(1), 1.5, 1e-9);
    // V = inv([[1.5, 1], [1, 1.5]]) = [[1.2, -0.8], [-0.8, 1.2]]
    EXPECT_NEAR(st.V(0, 0), 1.2, 1e-9);
    EXPECT_NEAR(st.V(0, 1), -0.8, 1e-9);
    EXPECT_NEAR(st.V(1, 1), 1.2, 1e-9);
    // d > 0 so the subgradient element is beta; sigma = median(1/1.2)
    EXPECT_NEAR(st.sigma, 1.0 / 1.2, 1e-9);
}

TEST(InitState, PositiveDefiniteGuard) {
    // Q = I has lambda_min = 1 > 0; the -1.5*lambda_min shift would be
    // infeasible, so d starts at zero.
    SepProblem p = unit_problem(3, 0.5, 1.0);
    const SepState st = init_state(p, SepParams{});
    EXPECT_DOUBLE_EQ(st.d.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_TRUE(test::is_pd(p.normalized_q().plus_diag(st.d)));
}

TEST(InitState, WarmStartUsedWhenFeasible) {
    SepProblem p = unit_problem(3, 0.5, 1.0);
    const Eigen::VectorXd warm = Eigen::VectorXd::Constant(3, 0.25);
    const SepState st = init_state(p, SepParams{}, &warm);
    EXPECT_NEAR(st.d(0), 0.25, 1e-12);

    // infeasible warm start is ignored
    const Eigen::VectorXd bad = Eigen::VectorXd::Constant(3, -2.0);
    const SepState cold = init_state(p, SepParams{}, &bad);
    EXPECT_DOUBLE_EQ(cold.d.cwiseAbs().maxCoeff(), 0.0);
}

TEST(MinNormSubgradient, ThreeCases) {
    const auto alpha = Eigen::VectorXd::Constant(3, 0.2);
    const auto beta = Eigen::VectorXd::Constant(3, 0.8);
    SepProblem p(SymMatrix::identity(3), alpha, beta);

    // case d_j > 0 with sigma*V_jj = beta_j -> 0
    {
        Eigen::VectorXd d = Eigen::VectorXd::Constant(3, 1.0);
        Eigen::VectorXd v = Eigen::VectorXd::Constant(3, 0.8);
        const SepState st = manual_state(d, v, 1.0);
        EXPECT_NEAR(min_norm_subgradient(st, p)(0), 0.0, 1e-15);
    }
    // d_j = 0 with sigma*V_jj inside [alpha, beta] -> 0
    {
        const SepState st = manual_state(Eigen::VectorXd::Zero(3),
                                         Eigen::VectorXd::Constant(3, 0.5), 1.0);
        EXPECT_NEAR(min_norm_subgradient(st, p)(0), 0.0, 1e-15);
    }
    // d_j = 0 with sigma*V_jj = 1.0 > beta -> beta - 1 = -0.2
    {
        const SepState st = manual_state(Eigen::VectorXd::Zero(3),
                                         Eigen::VectorXd::Constant(3, 1.0), 1.0);
        EXPECT_NEAR(min_norm_subgradient(st, p)(0), -0.2, 1e-15);
    }
}

TEST(CoordinateStep, ClosedFormCases) {
    // case 2: curve value at the kink inside [alpha, beta] -> delta = -d_i
    {
        SepProblem p = unit_problem(1, 0.5, 1.0);
        const SepState st = manual_state(Eigen::VectorXd::Zero(1),
                                         Eigen::VectorXd::Constant(1, 1.0), 1.0);
        const auto [i, delta] = coordinate_step(st, p, min_norm_subgradient(st, p));
        EXPECT_EQ(i, 0);
        EXPECT_NEAR(delta, 0.0, 1e-15);
    }
    // case 1 via rho > beta: sigma/beta - 1/V = 1; curve equals beta there
    {
        SepProblem p = unit_problem(1, 0.2, 0.5);
        const SepState st = manual_state(Eigen::VectorXd::Zero(1),
                                         Eigen::VectorXd::Constant(1, 1.0), 1.0);
        const auto [i, delta] = coordinate_step(st, p, min_norm_subgradient(st, p));
        EXPECT_NEAR(delta, 1.0, 1e-15);
        const double curve = 1.0 * 1.0 / (1.0 + delta * 1.0);
        EXPECT_NEAR(curve, 0.5, 1e-15);
    }
    // case 1 via infeasible kink (-d_i < -1/V_ii)
    {
        SepProblem p1 = unit_problem(1, 0.2, 1.0);
        const SepState st = manual_state(Eigen::VectorXd::Constant(1, 2.0),
                                         Eigen::VectorXd::Constant(1, 1.0), 1.0);
        const auto [i1, d1] = coordinate_step(st, p1, min_norm_subgradient(st, p1));
        EXPECT_NEAR(d1, 0.0, 1e-15);

        SepProblem p2 = unit_problem(1, 0.2, 0.5);
        const auto [i2, d2] = coordinate_step(st, p2, min_norm_subgradient(st, p2));
        EXPECT_NEAR(d2, 1.0, 1e-15);
    }
    // ties in |s_j| break to the lowest index
    {
        SepProblem p = unit_problem(2, 0.5, 0.5);
        const SepState st = manual_state(Eigen::VectorXd::Ones(2),
                                         Eigen::VectorXd::Constant(2, 2.0), 1.0);
        const auto [i, delta] = coordinate_step(st, p, min_norm_subgradient(st, p));
        EXPECT_EQ(i, 0);
        (void)delta;
    }
}

TEST(CoordinateStep, MatchesGoldenSectionOracle) {
    Rng rng(99);
    int checked = 0;
    while (checked < 300) {
        const double vii = rng.uniform(0.05, 5.0);
        const double di = rng.uniform(-3.0, 3.0);
        const double sigma = rng.uniform(1e-3, 2.0);
        const double beta = rng.uniform(0.05, 2.0);
        const double alpha = rng.uniform(0.0, beta);
        SepProblem p(SymMatrix::identity(1), Eigen::VectorXd::Constant(1, alpha),
                     Eigen::VectorXd::Constant(1, beta));
        const SepState st = manual_state(Eigen::VectorXd::Constant(1, di),
                                         Eigen::VectorXd::Constant(1, vii), sigma);
        const auto [i, delta] = coordinate_step(st, p, min_norm_subgradient(st, p));

        const auto f1d = [&](double t) {
            return p.g(0, di + t) - sigma * std::log1p(t * vii);
        };
        const double lo = -1.0 / vii + 1e-9;
        double span = 1.0;
        while (f1d(lo + 2.0 * span) < f1d(lo + span) && span < 1e8) span *= 2.0;
        const double oracle = test::golden_section_min(f1d, lo, lo + 2.0 * span, 300);
        EXPECT_NEAR(delta, oracle, 1e-7 * (1.0 + std::abs(oracle)));
        ++checked;
    }
}

TEST(ApplyStep, KnownCases) {
    // n=1 scalar case: Q=(0), d=2, V=0.5, delta=-1 -> d=1, V=1
    SepProblem p(SymMatrix(1), Eigen::VectorXd::Constant(1, 0.5),
                 Eigen::VectorXd::Constant(1, 1.0));
    const Eigen::VectorXd warm = Eigen::VectorXd::Constant(1, 2.0);
    SepState st = init_state(p, SepParams{}, &warm);
    EXPECT_NEAR(st.V(0, 0), 0.5, 1e-12);
    SepParams params;
    apply_step(st, p, 0, -1.0, params);
    EXPECT_NEAR(st.d(0), 1.0, 1e-12);
    EXPECT_NEAR(st.V(0, 0), 1.0, 1e-12);
    EXPECT_EQ(st.iter, 1);

    // delta = 0 changes only the iteration counter
    const Eigen::MatrixXd v_before = st.V;
    apply_step(st, p, 0, 0.0, params);
    EXPECT_EQ(st.iter, 2);
    EXPECT_DOUBLE_EQ((st.V - v_before).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ApplyStep, MatchesReinversionOracle) {
    Rng rng(17);
    SepProblem p = gen_sep_instance(5, 77);
    SepParams params;
    params.refactor_period = 1000;  // keep Sherman-Morrison path active
    SepState st = init_state(p, params);
    for (int rep = 0; rep < 10; ++rep) {
        const int i = static_cast<int>(rng.uniform_int(0, 4));
        const double delta = -0.8 / st.V(i, i) + rng.uniform(0.0, 1.5);
        apply_step(st, p, i, delta, params);
        const auto direct = invert_pd(p.normalized_q().plus_diag(st.d));
        ASSERT_TRUE(direct.has_value());
        EXPECT_LE((st.V - direct->dense()).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(UpdateSigma, Rules) {
    SepProblem p = unit_problem(4, 0.5, 1.0);
    SepParams params;
    SepState st = init_state(p, params);

    st.sigma = 1.0;
    update_sigma(st, p, params, Eigen::VectorXd::Zero(4));
    EXPECT_NEAR(st.sigma, 0.8, 1e-15);

    st.sigma = params.sml_sig;
    update_sigma(st, p, params, Eigen::VectorXd::Zero(4));
    EXPECT_NEAR(st.sigma, params.sml_sig, 1e-20);

    // ||s||/||beta|| = 0.05 > subg_tol = 0.03 -> unchanged
    st.sigma = 1.0;
    Eigen::VectorXd s = Eigen::VectorXd::Zero(4);
    s(0) = 0.05 * p.beta().norm();
    update_sigma(st, p, params, s);
    EXPECT_NEAR(st.sigma, 1.0, 1e-15);
}

TEST(SolveSeparation, BoundaryOptimumTwoByTwo) {
    // min 0.5(d1+d2) (d<0 branch) s.t. I + diag(d) >= 0: optimum -1 at
    // d = (-1,-1); the strictly feasible solver should get close.
    SepProblem p = unit_problem(2, 0.5, 1.0);
    const SepResult res = solve_separation(p);
    EXPECT_LE(res.objective, -0.97);
    EXPECT_GE(res.objective, -1.0 - 1e-9);
    EXPECT_TRUE(test::is_pd(p.normalized_q().plus_diag(res.d / p.scale())));
}

TEST(SolveSeparation, StrictFeasibilityAndMonotoneBarrier) {
    SepProblem p = gen_sep_instance(12, 5);
    SepParams params;
    params.sig_upd = 1.0;  // freeze sigma: f must be nonincreasing every step
    SepState st = init_state(p, params);
    double prev_f = st.f_val;
    for (long k = 1; k <= 300; ++k) {
        const Eigen::VectorXd s = min_norm_subgradient(st, p);
        const auto [i, delta] = coordinate_step(st, p, s);
        apply_step(st, p, i, delta, params);
        EXPECT_LE(st.f_val, prev_f + 1e-10 * (1.0 + std::abs(prev_f)));
        prev_f = st.f_val;
        if (k % 12 == 0)
            EXPECT_GT(min_eigenvalue(p.normalized_q().plus_diag(st.d)), 0.0);
    }
}

TEST(SolveSeparation, Lemma1Boundary) {
    Rng rng(31);
    for (int rep = 0; rep < 25; ++rep) {
        SepProblem p = gen_sep_instance(8, 200 + rep);
        SepState st = init_state(p, SepParams{});
        // randomize the state a little while keeping strict feasibility
        for (int moves = 0; moves < 8; ++moves) {
            const int i = static_cast<int>(rng.uniform_int(0, 7));
            const double delta = -0.5 / st.V(i, i) + rng.uniform(0.0, 1.0);
            apply_step(st, p, i, delta, SepParams{});
        }
        const int i = static_cast<int>(rng.uniform_int(0, 7));
        const double bound = -1.0 / st.V(i, i);
        SymMatrix plus = p.normalized_q().plus_diag(st.d);
        plus.add_to_diagonal(i, bound + 1e-6);
        SymMatrix minus = p.normalized_q().plus_diag(st.d);
        minus.add_to_diagonal(i, bound - 1e-6);
        EXPECT_GT(min_eigenvalue(plus), -1e-9);
        EXPECT_LT(min_eigenvalue(minus), 1e-9);
    }
}

TEST(SolveSeparation, ShermanMorrisonDriftBounded) {
    Rng rng(47);
    const int n = 12;
    SepProblem p = gen_sep_instance(n, 321);
    SepParams params;  // refactor_period defaults to 5n
    SepState st = init_state(p, params);
    for (int step = 1; step <= 10 * n; ++step) {
        const int i = static_cast<int>(rng.uniform_int(0, n - 1));
        const double delta = -0.7 / st.V(i, i) + rng.uniform(0.0, 1.2);
        apply_step(st, p, i, delta, params);
        if (step % n == 0) {
            const Eigen::MatrixXd resid =
                st.V * p.normalized_q().plus_diag(st.d).dense() -
                Eigen::MatrixXd::Identity(n, n);
            EXPECT_LE(resid.cwiseAbs().maxCoeff(), 1e-6);
        }
    }
}

TEST(SolveSeparation, ScaleEquivariance) {
    const SymMatrix q = gen_sep_instance(10, 9).normalized_q();
    const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(10, 0.3);
    const Eigen::VectorXd beta = Eigen::VectorXd::Constant(10, 0.9);
    SepProblem p1(q, alpha, beta);
    SepProblem p5(q.scaled(5.0), alpha, beta);
    const SepResult r1 = solve_separation(p1);
    const SepResult r5 = solve_separation(p5);
    EXPECT_NEAR(r5.objective, 5.0 * r1.objective, 1e-9 * (1.0 + std::abs(r1.objective) * 5.0));
    EXPECT_LE((r5.d - 5.0 * r1.d).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + r1.d.cwiseAbs().maxCoeff() * 5.0));
}

TEST(SolveSeparation, WarmStartStaysValid) {
    SepProblem p = gen_sep_instance(15, 55);
    const SepResult cold = solve_separation(p);
    const SepResult warm = solve_separation(p, SepParams{}, &cold.d);
    EXPECT_TRUE(test::is_pd(p.normalized_q().plus_diag(warm.d / p.scale())));
    EXPECT_LE(warm.objective, cold.objective + 1e-6 * (1.0 + std::abs(cold.objective)));
}

TEST(SolveSeparation, TracksSubgradientReferenceOnSmallInstance) {
    SepProblem p = gen_sep_instance(12, 4242);
    const SepResult res = solve_separation(p);
    const double ref = test::subgradient_reference(p, 20000);
    EXPECT_NEAR(res.objective, ref, 2e-3 * std::abs(ref));
}

TEST(CutViolation, KnownCases) {
    // d = 0 and vbar = xbar' Q xbar (Q PSD) -> violation 0
    Rng rng(3);
    const SymMatrix q = test::random_spd(3, rng);
    const Eigen::VectorXd xbar = Eigen::VectorXd::Constant(3, 0.4);
    const double vbar = xbar.dot(q.dense() * xbar);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
    EXPECT_NEAR(cut_violation(zero, zero, zero, xbar, vbar, q), 0.0, 1e-14);

    // a point on the cut surface has violation 0 by construction
    const Eigen::VectorXd d = Eigen::VectorXd::Constant(3, 0.7);
    const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(3, 0.2);
    const Eigen::VectorXd beta = Eigen::VectorXd::Constant(3, 0.9);
    double gsum = 0.0;
    for (int i = 0; i < 3; ++i) gsum += beta(i) * d(i);
    const double v_surface = xbar.dot(q.dense() * xbar) - gsum;
    EXPECT_NEAR(cut_violation(d, alpha, beta, xbar, v_surface, q), 0.0, 1e-10);
}

TEST(CutViolation, MatchesDirectCutEvaluation) {
    // mid-loop style check on a small integer instance
    const Instance inst = gen_integer_qp(3, 0.5, 11);
    const auto envs = inst.envelopes();
    Eigen::VectorXd xbar(3), alpha(3), beta(3);
    xbar << 0.4, -1.3, 2.2;
    for (int i = 0; i < 3; ++i) {
        const auto [a, b] = envs[i].sep_coefficients(xbar(i));
        alpha(i) = a;
        beta(i) = b;
    }
    SepProblem sep(inst.Q, alpha, beta);
    const SepResult res = solve_separation(sep);
    const double vbar = xbar.dot(inst.Q.dense() * xbar) - 5.0;  // below the surface
    const double viol = cut_violation(res.d, alpha, beta, xbar, vbar, inst.Q);

    // direct evaluation of the cut right-hand side at xbar
    double rhs = xbar.dot(inst.Q.dense() * xbar);
    for (int i = 0; i < 3; ++i) {
        const auto [lo, up] = envs[i].evaluate(xbar(i));
        const double sq = xbar(i) * xbar(i);
        if (res.d(i) < 0.0)
            rhs += res.d(i) * (sq - lo);
        else
            rhs += res.d(i) * (sq - up);
    }
    EXPECT_NEAR(viol, rhs - vbar, 1e-10 * (1.0 + std::abs(rhs)));
    EXPECT_GT(viol, 0.0);
}
