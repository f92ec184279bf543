import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deblur_forge.optim import (
    LbfgsConfig,
    OptimizationError,
    OptimProblem,
    check_gradient,
    lbfgs_minimize,
)


def shifted_quadratic(c):
    c = np.asarray(c, dtype=np.float64)
    return OptimProblem(c.size, lambda x: (0.5 * float((x - c) @ (x - c)), x - c))


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


class TestConvergence:
    @given(st.integers(1, 30), st.integers(0, 2**31 - 1))
    def test_shifted_quadratic_exact(self, dim, seed):
        rng = np.random.default_rng(seed)
        c = rng.uniform(-5, 5, dim)
        rep = lbfgs_minimize(shifted_quadratic(c), rng.uniform(-5, 5, dim))
        assert rep.converged
        assert rep.iterations <= 5
        assert np.max(np.abs(rep.final_params - c)) < 1e-10

    @given(st.integers(2, 12), st.integers(0, 2**31 - 1))
    def test_general_spd_quadratic_against_linear_solve(self, dim, seed):
        rng = np.random.default_rng(seed)
        q = rng.standard_normal((dim, dim))
        a = q @ q.T + dim * np.eye(dim)
        b = rng.standard_normal(dim)
        rep = lbfgs_minimize(lambda x: (0.5 * x @ a @ x - b @ x, a @ x - b), np.zeros(dim), grad_tol=1e-12, loss_rel_tol=0.0)
        np.testing.assert_allclose(rep.final_params, np.linalg.solve(a, b), atol=1e-8)

    def test_memory_one_still_converges(self):
        c = np.array([1.0, -2.0, 3.0, 0.5])
        rep = lbfgs_minimize(shifted_quadratic(c), np.zeros(4), memory=1)
        assert rep.converged and np.allclose(rep.final_params, c, atol=1e-10)

    def test_rosenbrock(self):
        rep = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]))
        assert rep.iterations <= 200
        np.testing.assert_allclose(rep.final_params, [1.0, 1.0], atol=1e-6)
        # plugging the result back in gives the known minimum value
        assert rosenbrock(rep.final_params)[0] < 1e-12

    def test_stationary_start(self):
        rep = lbfgs_minimize(shifted_quadratic([2.0, 3.0]), np.array([2.0, 3.0]))
        assert rep.converged and rep.iterations == 0

    def test_loss_history_non_increasing(self):
        rep = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]))
        h = np.array(rep.loss_history)
        assert np.all(np.diff(h) <= 0)
        assert len(h) == rep.iterations + 1

    def test_deterministic(self):
        a = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]))
        b = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]))
        assert a.loss_history == b.loss_history
        np.testing.assert_array_equal(a.final_params, b.final_params)

    def test_max_iters_respected(self):
        rep = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]), max_iters=3)
        assert rep.iterations == 3 and not rep.converged
        assert rep.message == "maximum iterations reached"


class TestFailures:
    def test_wrong_gradient_gives_unconverged_report(self):
        # the "gradient" points uphill, so no step can satisfy sufficient decrease
        rep = lbfgs_minimize(lambda x: (float(x @ x), -2 * x), np.array([1.0, 2.0]))
        assert not rep.converged
        assert rep.message == "line search failed"
        np.testing.assert_array_equal(rep.final_params, [1.0, 2.0])

    def test_non_finite_raises_with_context(self):
        def f(x):
            return (np.inf if x[0] > 0.5 else float(x @ x)), 2 * x

        with pytest.raises(OptimizationError, match="iteration"):
            lbfgs_minimize(f, np.array([1.0]))

    def test_gradient_shape_checked(self):
        with pytest.raises(ValueError, match="gradient has shape"):
            lbfgs_minimize(OptimProblem(2, lambda x: (0.0, np.zeros(3))), np.zeros(2))

    def test_x0_length_checked(self):
        with pytest.raises(ValueError):
            lbfgs_minimize(shifted_quadratic([1.0, 2.0]), np.zeros(3))

    @pytest.mark.parametrize("kwargs", [{"memory": 0}, {"c1": 0.95}, {"max_iters": -1}])
    def test_bad_config(self, kwargs):
        with pytest.raises(ValueError):
            LbfgsConfig(**kwargs)


class TestCheckGradient:
    def test_exact_gradient(self, rng):
        c = rng.standard_normal(6)
        assert check_gradient(shifted_quadratic(c), rng.standard_normal(6), 1e-6) < 1e-7

    def test_detects_wrong_gradient(self):
        bad = OptimProblem(2, lambda x: (float(x @ x), x))
        assert check_gradient(bad, np.array([1.0, 1.0])) > 0.1

    def test_rosenbrock(self):
        assert check_gradient(OptimProblem(2, rosenbrock), np.array([0.3, -0.7]), 1e-6) < 1e-6
