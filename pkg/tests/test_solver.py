import numpy as np
import pytest

import pdsplit as pd
from pdsplit.solver import HistoryRecord

from helpers import rand_sparse


def identity_ls_problem(b):
    """min (1/2)||x - b||^2 via one identity term."""
    b = np.asarray(b, dtype=float)
    return pd.Problem(g=pd.Zero(), terms=((pd.SqL2(1.0, shift=b), pd.Identity(b.size)),))


def small_ct_problem(method, constraint=None, seed=1):
    tomo = pd.paralleltomo(8, np.arange(0.0, 180.0, 30.0))
    sigma = 0.01 * float(np.mean(np.abs(tomo.projections)))
    noisy = pd.add_noise(tomo.projections, sigma, 0.05, 1.0, seed=seed)
    noisy_tomo = pd.TomoProblem(system_matrix=tomo.system_matrix, projections=noisy,
                                ground_truth=tomo.ground_truth, geometry=tomo.geometry)
    model = pd.CtModelSpec(w1=0.3, w2=0.7, tv_weight=0.5, tv="atv",
                           constraint=constraint, method=method)
    return pd.build_ct_problem(noisy_tomo, model)


class TestSolveAnalytic:
    def test_identity_least_squares(self):
        b = np.array([2.0, 4.0])
        result = pd.solve(identity_ls_problem(b), pd.FixedSteps(0.9, 0.9, theta=1.0),
                          pd.StopRule(epsilon=1e-10, max_iter=5000))
        assert result.converged and result.iterations < 5000
        np.testing.assert_allclose(result.x, b, atol=1e-6)

    def test_nonneg_constrained_least_squares(self):
        b = np.array([-1.0, 3.0])
        problem = pd.Problem(g=pd.IndicatorNonneg(),
                             terms=((pd.SqL2(1.0, shift=b), pd.Identity(2)),))
        result = pd.solve(problem, pd.FixedSteps(0.9, 0.9),
                          pd.StopRule(epsilon=1e-10, max_iter=5000))
        np.testing.assert_allclose(result.x, [0.0, 3.0], atol=1e-6)

    def test_preconditioned_reaches_same_solution(self):
        b = np.array([-1.0, 3.0])
        problem = pd.Problem(g=pd.IndicatorNonneg(),
                             terms=((pd.SqL2(1.0, shift=b), pd.Identity(2)),))
        result = pd.solve(problem, pd.PreconditionedSteps(alpha=1.0),
                          pd.StopRule(epsilon=1e-10, max_iter=5000))
        np.testing.assert_allclose(result.x, [0.0, 3.0], atol=1e-6)

    @pytest.mark.parametrize("theta", [0.0, 1.0])
    def test_theta_variants_run(self, theta):
        b = np.array([1.0, -2.0])
        result = pd.solve(identity_ls_problem(b), pd.FixedSteps(0.9, 0.9, theta=theta),
                          pd.StopRule(epsilon=1e-8, max_iter=2000))
        np.testing.assert_allclose(result.x, b, atol=1e-5)


class TestMethodEquivalence:
    def test_unconstrained_iterates_match(self):
        p1 = small_ct_problem("I", constraint=None)
        p2 = small_ct_problem("II", constraint=None)
        tau, sigma = pd.default_fixed_steps(p1)  # norm of the 4-term stack is larger
        iterates = {1: [], 2: []}
        for label, problem in ((1, p1), (2, p2)):
            pd.solve(problem, pd.FixedSteps(tau, sigma), pd.StopRule(1e-14, 200),
                     callback=lambda k, x, ys, lab=label: iterates[lab].append(x.copy()))
        assert len(iterates[1]) == len(iterates[2]) == 200
        worst = max(float(np.max(np.abs(a - b))) for a, b in zip(iterates[1], iterates[2]))
        assert worst <= 1e-14

    def test_whole_space_dual_stays_zero(self):
        p1 = small_ct_problem("I", constraint=None)
        tau, sigma = pd.default_fixed_steps(p1)
        result = pd.solve(p1, pd.FixedSteps(tau, sigma), pd.StopRule(1e-14, 50))
        assert np.all(result.ys[3] == 0.0)


class TestSingleTermReference:
    """The engine with l=1 must reproduce the plain primal-dual iteration."""

    def _reference_fixed(self, f, op, b, tau, sigma, theta, iters):
        g = pd.Zero()
        x = np.zeros(op.cols)
        y = np.zeros(op.rows)
        out = []
        for _ in range(iters):
            x_new = g.prox(x - tau * op.apply_adjoint(y), tau)
            x_bar = x_new + theta * (x_new - x)
            y = f.conjugate_prox(y + sigma * op.apply(x_bar), sigma)
            x = x_new
            out.append(x.copy())
        return out

    def _reference_preconditioned(self, f, op, alpha, theta, iters):
        metric, duals = pd.build_preconditioners([op], alpha)
        t, s = metric.entries, duals[0].entries
        g = pd.Zero()
        x = np.zeros(op.cols)
        y = np.zeros(op.rows)
        out = []
        for _ in range(iters):
            x_new = g.prox(x - t * op.apply_adjoint(y), t)
            x_bar = x_new + theta * (x_new - x)
            y = f.conjugate_prox(y + s * op.apply(x_bar), s)
            x = x_new
            out.append(x.copy())
        return out

    def test_fixed_steps_agree(self):
        rng = np.random.default_rng(8)
        op = rand_sparse(rng, 7, 5, density=0.6)
        b = rng.standard_normal(7)
        f = pd.SqL2(1.0, shift=b)
        tau = sigma = 0.9 / max(pd.power_iteration(op), 1e-12)
        expected = self._reference_fixed(f, op, b, tau, sigma, 1.0, 100)
        got = []
        pd.solve(pd.Problem(g=pd.Zero(), terms=((f, op),)),
                 pd.FixedSteps(tau, sigma), pd.StopRule(1e-16, 100),
                 callback=lambda k, x, ys: got.append(x.copy()))
        for a, e in zip(got, expected):
            np.testing.assert_allclose(a, e, atol=1e-14)

    def test_preconditioned_agree(self):
        rng = np.random.default_rng(9)
        op = rand_sparse(rng, 6, 6, density=0.5)
        b = rng.standard_normal(6)
        f = pd.SqL2(1.0, shift=b)
        expected = self._reference_preconditioned(f, op, 1.0, 1.0, 100)
        got = []
        pd.solve(pd.Problem(g=pd.Zero(), terms=((f, op),)),
                 pd.PreconditionedSteps(alpha=1.0), pd.StopRule(1e-16, 100),
                 callback=lambda k, x, ys: got.append(x.copy()))
        for a, e in zip(got, expected):
            np.testing.assert_allclose(a, e, atol=1e-14)


class TestDefaultFixedSteps:
    def test_identity(self):
        tau, sigma = pd.default_fixed_steps(identity_ls_problem(np.zeros(3)))
        assert abs(tau - 0.99) < 1e-9 and tau == sigma

    def test_scaled_diagonal(self):
        problem = pd.Problem(g=pd.Zero(),
                             terms=((pd.Zero(), pd.SparseMatrix([[2.0]])),))
        tau, sigma = pd.default_fixed_steps(problem)
        assert abs(tau - 0.495) < 1e-9

    def test_two_identity_terms(self):
        problem = pd.Problem(g=pd.Zero(), terms=((pd.Zero(), pd.Identity(1)),
                                                 (pd.Zero(), pd.Identity(1))))
        tau, sigma = pd.default_fixed_steps(problem)
        assert abs(tau - 0.99 / np.sqrt(2)) < 1e-9

    def test_zero_operator_falls_back_to_one(self):
        problem = pd.Problem(g=pd.Zero(),
                             terms=((pd.Zero(), pd.SparseMatrix(np.zeros((2, 2)))),))
        assert pd.default_fixed_steps(problem) == (1.0, 1.0)


class TestObjectiveValue:
    def test_minimum_is_zero(self):
        b = np.array([1.0, 2.0])
        assert pd.objective_value(identity_ls_problem(b), b) == 0.0

    def test_indicator_violation_is_inf(self):
        problem = pd.Problem(g=pd.IndicatorNonneg(),
                             terms=((pd.Zero(), pd.Identity(1)),))
        assert pd.objective_value(problem, np.array([-1.0])) == np.inf

    def test_weighted_hand_example(self):
        b = np.array([2.0])
        problem = pd.Problem(g=pd.Zero(), terms=((pd.SqL2(0.5, shift=b), pd.Identity(1)),
                                                 (pd.L1(0.5, shift=b), pd.Identity(1))))
        assert pd.objective_value(problem, np.array([3.0])) == pytest.approx(0.75, abs=1e-15)


class TestSaddleGap:
    def test_small_at_converged_solution(self):
        b = np.array([2.0, 4.0])
        problem = identity_ls_problem(b)
        result = pd.solve(problem, pd.FixedSteps(0.9, 0.9),
                          pd.StopRule(epsilon=1e-12, max_iter=10000))
        assert pd.saddle_gap_report(problem, result.x, result.ys) <= 1e-8

    def test_positive_away_from_solution(self):
        problem = identity_ls_problem(np.array([5.0]))
        assert pd.saddle_gap_report(problem, np.zeros(1), [np.zeros(1)]) > 0.0

    def test_decreases_on_average(self):
        problem = small_ct_problem("II", constraint="nonneg")
        gaps = []
        pd.solve(problem, pd.PreconditionedSteps(alpha=1.0), pd.StopRule(1e-14, 300),
                 callback=lambda k, x, ys: gaps.append(
                     pd.saddle_gap_report(problem, x, ys)))
        windows = [np.mean(gaps[i:i + 100]) for i in range(0, 300, 100)]
        assert windows[1] <= windows[0] and windows[2] <= windows[1]


class TestStepSafety:
    def test_violating_steps_rejected_before_iterating(self):
        problem = identity_ls_problem(np.array([1.0]))
        with pytest.raises(pd.StepSizeError, match="estimated"):
            pd.solve(problem, pd.FixedSteps(1.5, 1.5), pd.StopRule())

    def test_equality_is_admissible(self):
        problem = identity_ls_problem(np.array([1.0]))
        result = pd.solve(problem, pd.FixedSteps(1.0, 1.0), pd.StopRule(1e-8, 2000))
        np.testing.assert_allclose(result.x, [1.0], atol=1e-5)

    def test_nan_input_aborts_with_iteration_index(self):
        problem = identity_ls_problem(np.array([1.0, 1.0]))
        with pytest.raises(pd.DivergenceError, match="iteration 1"):
            pd.solve(problem, pd.FixedSteps(0.9, 0.9), pd.StopRule(),
                     x0=np.array([np.nan, 0.0]))

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            pd.FixedSteps(-1.0, 1.0)
        with pytest.raises(ValueError):
            pd.FixedSteps(1.0, 1.0, theta=1.5)
        with pytest.raises(ValueError):
            pd.PreconditionedSteps(alpha=3.0)
        with pytest.raises(ValueError):
            pd.StopRule(epsilon=0.0)


class TestDeterminismAndHistory:
    def test_bitwise_identical_histories(self):
        problem = small_ct_problem("II", constraint="nonneg")
        runs = [pd.solve(problem, pd.PreconditionedSteps(alpha=1.0),
                         pd.StopRule(1e-6, 400), log_every=10) for _ in range(2)]
        assert runs[0].history == runs[1].history
        np.testing.assert_array_equal(runs[0].x, runs[1].x)

    def test_history_iterations_increase_and_final_record(self):
        b = np.array([2.0, 4.0])
        result = pd.solve(identity_ls_problem(b), pd.FixedSteps(0.9, 0.9),
                          pd.StopRule(epsilon=1e-10, max_iter=5000), log_every=7)
        iters = [rec.iteration for rec in result.history]
        assert iters == sorted(iters)
        assert result.converged
        assert result.history[-1].iteration == result.iterations
        assert result.history[-1].relative_change <= 1e-10

    def test_metric_recorded(self):
        b = np.array([2.0, 4.0])
        result = pd.solve(identity_ls_problem(b), pd.FixedSteps(0.9, 0.9),
                          pd.StopRule(epsilon=1e-10, max_iter=5000),
                          metric=lambda x: float(np.linalg.norm(x - b)))
        assert isinstance(result.history[-1], HistoryRecord)
        assert result.history[-1].metric <= 1e-6

    def test_shape_validation(self):
        problem = identity_ls_problem(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            pd.solve(problem, pd.FixedSteps(0.9, 0.9), pd.StopRule(), x0=np.zeros(3))
        with pytest.raises(ValueError):
            pd.solve(problem, pd.FixedSteps(0.9, 0.9), pd.StopRule(),
                     y0s=[np.zeros(2), np.zeros(2)])


class TestProblemValidation:
    def test_empty_terms_rejected(self):
        with pytest.raises(ValueError):
            pd.Problem(g=pd.Zero(), terms=())

    def test_mismatched_domains_rejected(self):
        with pytest.raises(ValueError):
            pd.Problem(g=pd.Zero(), terms=((pd.Zero(), pd.Identity(2)),
                                           (pd.Zero(), pd.Identity(3))))
