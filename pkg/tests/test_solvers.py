import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gapcs.core import build_operator, make_problem
from gapcs.errors import DimensionError, DomainError
from gapcs.harness.generators import gen_sensing_matrix, gen_sparse_signal
from gapcs.solvers import (
    Algorithm,
    SolverConfig,
    StopReason,
    ait_step,
    estimate_noise,
    gap_step,
    run_solver,
    select_lambda,
    shrink,
    write_trace_csv,
    write_vectors_csv,
)

from conftest import hadamard

finite = st.floats(-1e6, 1e6, allow_nan=False)


class TestSelectLambda:
    def test_third_largest(self):
        assert select_lambda([3, -2, 1, 0], 2) == 1

    def test_fewer_nonzeros_than_budget(self):
        assert select_lambda([5, 0, 0, 0], 2) == 0

    def test_ties(self):
        assert select_lambda([-4, 4, 2, 2, 1], 3) == 2

    def test_budget_covers_everything(self):
        assert select_lambda([1.0, 2.0], 5) == 0.0

    def test_invalid_budget(self):
        with pytest.raises(DomainError):
            select_lambda([1.0], 0)


class TestShrink:
    def test_arithmetic(self):
        np.testing.assert_array_equal(shrink([3, -2, 1], 1), [2, -1, 0])

    def test_zero_threshold(self):
        w = np.array([0.5, -3.0, 2.0])
        np.testing.assert_array_equal(shrink(w, 0), w)

    def test_zero_input(self):
        np.testing.assert_array_equal(shrink([0, 0], 5), [0, 0])

    def test_negative_threshold(self):
        with pytest.raises(DomainError):
            shrink([1.0], -0.1)


@settings(max_examples=100, deadline=None)
@given(w=arrays(float, st.integers(1, 30), elements=finite), m_star=st.integers(1, 35))
def test_support_never_exceeds_budget(w, m_star):
    theta = shrink(w, select_lambda(w, m_star))
    assert np.count_nonzero(theta) <= m_star
    # shrinkage never flips a sign or grows a magnitude
    assert np.all(np.abs(theta) <= np.abs(w))
    assert np.all(theta * w >= 0)


class TestSteps:
    def test_gap_fixed_point(self, gaussian_6x10):
        x = gen_sparse_signal(10, 3, seed=1)
        y = gaussian_6x10.forward(x)
        for alpha in (0.3, 1.0, 1.7):
            np.testing.assert_allclose(gap_step(x, y, alpha, gaussian_6x10), x, atol=1e-12)
            np.testing.assert_allclose(ait_step(x, y, alpha, gaussian_6x10), x, atol=1e-12)

    def test_gap_identity_operator(self):
        op = build_operator(np.eye(2))
        np.testing.assert_allclose(gap_step([0, 0], [1, 2], 0.5, op), [0.5, 1.0])

    def test_gap_alpha_one_is_consistent(self, gaussian_6x10):
        rng = np.random.default_rng(5)
        y = rng.standard_normal(6)
        w = gap_step(rng.standard_normal(10), y, 1.0, gaussian_6x10)
        np.testing.assert_allclose(gaussian_6x10.forward(w), y, rtol=1e-10)

    def test_ait_scaled_identity(self):
        op = build_operator(2 * np.eye(2))
        np.testing.assert_allclose(ait_step([0, 0], [2, 0], 0.25, op), [1, 0])

    def test_ait_equals_gap_for_orthonormal_rows(self):
        op = build_operator(hadamard(16)[:8] / 4.0)
        rng = np.random.default_rng(2)
        theta, y = rng.standard_normal(16), rng.standard_normal(8)
        np.testing.assert_array_equal(ait_step(theta, y, 0.8, op), gap_step(theta, y, 0.8, op))

    def test_shapes(self, gaussian_6x10):
        with pytest.raises(DimensionError):
            gap_step(np.zeros(9), np.zeros(6), 1.0, gaussian_6x10)
        with pytest.raises(DimensionError):
            ait_step(np.zeros(10), np.zeros(5), 1.0, gaussian_6x10)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.05, 1.95))
def test_measurement_identity_property(seed, alpha):
    op = build_operator(gen_sensing_matrix(8, 20, "gaussian", seed))
    rng = np.random.default_rng(seed)
    theta, y = rng.standard_normal(20), rng.standard_normal(8)
    w = gap_step(theta, y, alpha, op)
    rhs = alpha * y + (1 - alpha) * op.forward(theta)
    assert np.linalg.norm(op.forward(w) - rhs) <= 1e-9 * max(np.linalg.norm(rhs), 1.0)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [{"alpha": 0.0}, {"m_star": 0}, {"max_iters": 0},
                                        {"stop_epsilon": -1.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            SolverConfig(**kwargs)

    def test_algorithm_from_string(self):
        assert SolverConfig(algorithm="ait").algorithm is Algorithm.AIT


def _reference_problem(seed):
    op = build_operator(gen_sensing_matrix(300, 512, "gaussian", seed))
    x = gen_sparse_signal(512, 20, seed)
    return make_problem(op, x), x


class TestRunSolver:
    def test_zero_problem(self, gaussian_6x10):
        p = make_problem(gaussian_6x10, np.zeros(10))
        tr = run_solver(p, SolverConfig(m_star=2, track_truth=np.zeros(10)))
        assert tr.iterations_run == 1
        assert tr.stop_reason is StopReason.CONVERGED
        assert not tr.last_w.any() and not tr.last_theta.any()

    def test_gap_reference_scale(self):
        p, x = _reference_problem(3)
        tr = run_solver(p, SolverConfig(m_star=20, track_truth=x, truth_tol=1e-8, check_identity=True))
        assert tr.stop_reason is StopReason.TRUTH_TOLERANCE
        assert tr.iterations_to(1e-8) <= 80
        assert tr.max_identity_residual < 1e-9
        assert tr.support_sizes.max() <= 20

    def test_ait_reference_scale(self):
        p, x = _reference_problem(3)
        tr = run_solver(p, SolverConfig(algorithm="ait", m_star=20, track_truth=x, truth_tol=1e-8))
        assert tr.iterations_to(1e-8) <= 120

    def test_divergence_recorded(self):
        op = build_operator(gen_sensing_matrix(20, 40, "gaussian", 0))
        x = gen_sparse_signal(40, 3, 0)
        tr = run_solver(make_problem(op, x), SolverConfig(algorithm="ait", alpha=5.0, m_star=3, max_iters=500))
        assert tr.stop_reason is StopReason.DIVERGED
        assert not tr.converged

    def test_max_iters(self, gaussian_6x10):
        x = gen_sparse_signal(10, 2, 0)
        tr = run_solver(make_problem(gaussian_6x10, x), SolverConfig(m_star=2, max_iters=3, stop_epsilon=0))
        assert tr.iterations_run == 3
        assert tr.stop_reason is StopReason.MAX_ITERS
        assert tr.err_w == []

    def test_gap_ait_identical_when_gram_is_identity(self):
        a = hadamard(64)[:32] / 8.0
        op = build_operator(a)
        np.testing.assert_array_equal(op.gram, np.eye(32))
        x = gen_sparse_signal(64, 4, 3)
        p = make_problem(op, x)
        runs = [run_solver(p, SolverConfig(algorithm=alg, alpha=0.9, m_star=6, max_iters=60, track_truth=x))
                for alg in ("gap", "ait")]
        assert runs[0].err_w == runs[1].err_w
        for wg, wa in zip(runs[0].w, runs[1].w):
            np.testing.assert_array_equal(wg, wa)

    def test_custom_shrinkage(self, gaussian_6x10):
        x = gen_sparse_signal(10, 2, 0)
        calls = []

        def hard(w, m_star):
            calls.append(m_star)
            keep = np.argsort(-np.abs(w))[:m_star]
            out = np.zeros_like(w)
            out[keep] = w[keep]
            return out, 0.0

        tr = run_solver(make_problem(gaussian_6x10, x), SolverConfig(m_star=2, max_iters=5), shrinkage=hard)
        assert calls == [2] * tr.iterations_run

    def test_budget_larger_than_n(self, gaussian_6x10):
        with pytest.raises(DomainError):
            run_solver(make_problem(gaussian_6x10, np.zeros(10)), SolverConfig(m_star=11))


class TestNoiseEstimate:
    def test_exact_at_truth(self, gaussian_6x10):
        x = gen_sparse_signal(10, 2, 4)
        eps = np.random.default_rng(9).normal(scale=0.01, size=6)
        y = gaussian_6x10.forward(x) + eps
        for alpha in (0.5, 1.0, 1.3):
            w = gap_step(x, y, alpha, gaussian_6x10)
            np.testing.assert_allclose(estimate_noise(w, x, alpha, gaussian_6x10), eps, atol=1e-12)

    def test_noiseless_converged(self):
        p, x = _reference_problem(2)
        tr = run_solver(p, SolverConfig(m_star=20, max_iters=300))
        eps_hat = estimate_noise(tr.last_w, tr.prev_theta, 1.0, p.operator)
        assert np.linalg.norm(eps_hat) < 1e-6

    def test_bad_alpha(self, gaussian_6x10):
        with pytest.raises(DomainError):
            estimate_noise(np.zeros(10), np.zeros(10), 0.0, gaussian_6x10)


def test_trace_csv(tmp_path, gaussian_6x10):
    x = gen_sparse_signal(10, 2, 0)
    tr = run_solver(make_problem(gaussian_6x10, x), SolverConfig(m_star=2, max_iters=7, track_truth=x))
    write_trace_csv(tr, tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["iter", "err_w", "err_theta", "lambda", "support_size"]
    assert len(rows) == tr.iterations_run + 1
    assert float(rows[1][1]) == tr.err_w[0]
    write_vectors_csv(tr, tmp_path / "w.csv")
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "w.csv", delimiter=","), np.vstack(tr.w))
