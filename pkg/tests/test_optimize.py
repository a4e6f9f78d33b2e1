import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stationary_ar.optimize import (AdamConfig, BfgsConfig, FailureReason, StoppingCriterion,
                                    adam_minimize, bfgs_minimize, should_stop, wolfe_line_search)


def bowl(w):
    w = np.asarray(w, dtype=float)
    return float(np.sum((w - 3.0) ** 2)), 2.0 * (w - 3.0)


def rosenbrock(w):
    x, y = w
    f = (1 - x) ** 2 + 100 * (y - x * x) ** 2
    g = np.array([-2 * (1 - x) - 400 * x * (y - x * x), 200 * (y - x * x)])
    return float(f), g


def quadratic(A, b):
    def f(w):
        return float(0.5 * w @ A @ w - b @ w), A @ w - b
    return f


class TestShouldStop:
    def test_examples(self):
        assert should_stop(1.0, 1.0 - 1e-8)
        assert not should_stop(1.0, 0.9)
        assert should_stop(0.0, 0.0)

    def test_scale_aware(self):
        for prev, curr in [(1.0, 1.0 - 5e-7), (1.0, 1.0 - 2e-6), (3.0, 2.9999999)]:
            assert should_stop(prev, curr) == should_stop(prev * 1e6, curr * 1e6)

    @settings(max_examples=200)
    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
    def test_formula(self, prev, curr):
        assert should_stop(prev, curr) == (abs(curr - prev) < 1e-6 * (abs(prev) + 1e-6))

    def test_custom_tolerance(self):
        assert should_stop(1.0, 0.99, StoppingCriterion(reltol=0.1))


class TestConfigs:
    @pytest.mark.parametrize("kwargs", [dict(reltol=0.0), dict(max_epochs=0)])
    def test_stopping_invalid(self, kwargs):
        with pytest.raises(ValueError):
            StoppingCriterion(**kwargs)

    @pytest.mark.parametrize("kwargs", [dict(learning_rate=0.0), dict(betas=(0.9, 1.0)),
                                        dict(epsilon=0.0)])
    def test_adam_invalid(self, kwargs):
        with pytest.raises(ValueError):
            AdamConfig(**kwargs)

    def test_bfgs_invalid(self):
        with pytest.raises(ValueError):
            BfgsConfig(c1=0.9, c2=0.1)

    def test_defaults(self):
        c = AdamConfig()
        assert (c.learning_rate, c.betas, c.epsilon) == (0.05, (0.9, 0.999), 1e-8)
        s = StoppingCriterion()
        assert (s.reltol, s.max_epochs) == (1e-6, 10_000)


class TestAdam:
    def test_bowl(self):
        run = adam_minimize(bowl, [0.0], AdamConfig(learning_rate=0.1))
        assert run.converged and run.failure_reason is None
        assert abs(run.final_weights[0] - 3.0) < 1e-3

    def test_first_step(self):
        # bias correction makes the first step -lr * g / (|g| + eps)
        run = adam_minimize(bowl, [0.0], AdamConfig(learning_rate=0.1, keep_best=False),
                            StoppingCriterion(max_epochs=2), trace=True)
        second_cost = run.cost_trace[1]
        assert second_cost == pytest.approx((0.1 - 3.0) ** 2, rel=1e-6)

    def test_already_optimal(self):
        run = adam_minimize(bowl, [3.0])
        assert run.converged and run.epochs_used <= 2

    def test_non_finite(self):
        run = adam_minimize(lambda w: (math.nan, np.zeros(1)), [0.0])
        assert not run.converged and run.failure_reason is FailureReason.NON_FINITE_VALUE

    def test_max_epochs(self):
        run = adam_minimize(rosenbrock, [-1.0, 1.0], AdamConfig(learning_rate=1e-4),
                            StoppingCriterion(max_epochs=5))
        assert not run.converged and run.failure_reason is FailureReason.MAX_EPOCHS
        assert run.epochs_used == 5

    def test_keep_best_returns_lowest_evaluated(self):
        run = adam_minimize(bowl, [0.0], AdamConfig(learning_rate=0.5), trace=True)
        assert run.final_cost == min(run.cost_trace)
        assert bowl(run.final_weights)[0] == run.final_cost

    def test_deterministic(self):
        a = adam_minimize(rosenbrock, [-1.0, 1.0], criterion=StoppingCriterion(max_epochs=300))
        b = adam_minimize(rosenbrock, [-1.0, 1.0], criterion=StoppingCriterion(max_epochs=300))
        assert np.array_equal(a.final_weights, b.final_weights) and a.epochs_used == b.epochs_used

    def test_rejects_non_finite_start(self):
        with pytest.raises(ValueError):
            adam_minimize(bowl, [np.inf])


class TestBfgs:
    def test_bowl_fast(self):
        run = bfgs_minimize(bowl, [0.0])
        assert run.converged and run.epochs_used <= 5
        assert abs(run.final_weights[0] - 3.0) < 1e-6

    def test_quadratic_matches_solve(self):
        rng = np.random.default_rng(0)
        M = rng.standard_normal((4, 4))
        A = M @ M.T + 4 * np.eye(4)
        b = rng.standard_normal(4)
        run = bfgs_minimize(quadratic(A, b), np.zeros(4), criterion=StoppingCriterion(reltol=1e-14))
        np.testing.assert_allclose(run.final_weights, np.linalg.solve(A, b), atol=1e-6)

    def test_rosenbrock(self):
        run = bfgs_minimize(rosenbrock, [-1.2, 1.0], criterion=StoppingCriterion(reltol=1e-14))
        np.testing.assert_allclose(run.final_weights, [1.0, 1.0], atol=1e-4)

    def test_monotone_trace(self):
        run = bfgs_minimize(rosenbrock, [-1.2, 1.0], trace=True)
        assert all(b <= a for a, b in zip(run.cost_trace, run.cost_trace[1:]))

    def test_nan_at_start(self):
        run = bfgs_minimize(lambda w: (math.nan, np.zeros(1)), [0.0])
        assert not run.converged and run.failure_reason is FailureReason.NON_FINITE_VALUE

    def test_nan_at_probe(self):
        def f(w):
            if abs(w[0]) > 0.0:
                return math.nan, np.full(1, math.nan)
            return 1.0, np.array([1.0])
        run = bfgs_minimize(f, [0.0])
        assert not run.converged and run.failure_reason is FailureReason.NON_FINITE_VALUE
        np.testing.assert_array_equal(run.final_weights, [0.0])

    def test_line_search_failure(self):
        # gradient that lies about the descent direction
        run = bfgs_minimize(lambda w: (float(w[0] ** 2), np.array([-1.0])), [1.0],
                            BfgsConfig(max_backtracks=5))
        assert not run.converged and run.failure_reason is FailureReason.LINE_SEARCH_FAILURE

    def test_max_epochs(self):
        run = bfgs_minimize(rosenbrock, [-1.2, 1.0], criterion=StoppingCriterion(max_epochs=3))
        assert run.failure_reason is FailureReason.MAX_EPOCHS and run.epochs_used == 3

    def test_deterministic(self):
        a = bfgs_minimize(rosenbrock, [-1.2, 1.0])
        b = bfgs_minimize(rosenbrock, [-1.2, 1.0])
        assert np.array_equal(a.final_weights, b.final_weights)
        assert (a.epochs_used, a.final_cost) == (b.epochs_used, b.final_cost)

    def test_agrees_with_adam(self):
        A = np.array([[3.0, 0.5], [0.5, 1.0]])
        b = np.array([1.0, -2.0])
        f = quadratic(A, b)
        tight = StoppingCriterion(reltol=1e-12, max_epochs=20_000)
        wa = adam_minimize(f, np.zeros(2), AdamConfig(learning_rate=0.01), tight).final_weights
        wb = bfgs_minimize(f, np.zeros(2), criterion=tight).final_weights
        np.testing.assert_allclose(wa, wb, atol=1e-4)


class TestLineSearch:
    def test_strong_wolfe_conditions(self):
        w = np.array([-1.2, 1.0])
        f0, g0 = rosenbrock(w)
        d = -g0
        step, f, g = wolfe_line_search(rosenbrock, w, f0, g0, d, step0=1e-3)
        assert f <= f0 + 1e-4 * step * (g0 @ d)
        assert abs(g @ d) <= 0.9 * abs(g0 @ d)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=4))
def test_run_contract(w0):
    for run in (adam_minimize(bowl, w0, criterion=StoppingCriterion(max_epochs=50)),
                bfgs_minimize(bowl, w0, criterion=StoppingCriterion(max_epochs=50))):
        assert run.converged == (run.failure_reason is None)
        assert 0 <= run.epochs_used <= 50
        assert run.wall_time_ns >= 0
