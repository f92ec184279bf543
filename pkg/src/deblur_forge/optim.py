"""Limited-memory BFGS with a strong-Wolfe line search.

Objectives are callables ``fun(x) -> (loss, grad)`` on flat float64 vectors.
The line search follows the bracketing/zoom scheme of Nocedal & Wright
(Algorithms 3.5 and 3.6) with safeguarded cubic interpolation.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


class OptimizationError(ArithmeticError):
    """The objective returned a non-finite loss or gradient."""


@dataclass(frozen=True)
class OptimProblem:
    """An objective together with its parameter dimension."""

    dim: int
    fun: Objective

    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        loss, grad = self.fun(x)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != (self.dim,):
            raise ValueError(f"gradient has shape {grad.shape}, expected ({self.dim},)")
        return float(loss), grad


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-8
    loss_rel_tol: float = 1e-12
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_steps: int = 50

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")


@dataclass
class OptimReport:
    final_params: np.ndarray
    final_loss: float
    iterations: int
    converged: bool
    grad_norm: float
    message: str = ""
    loss_history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "final_loss": self.final_loss,
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "message": self.message,
        }


def _evaluate(problem: OptimProblem, x: np.ndarray, iteration: int) -> tuple[float, np.ndarray]:
    f, g = problem(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise OptimizationError(
            f"objective returned non-finite value at iteration {iteration} "
            f"(loss={f}, |x|={np.linalg.norm(x):.6g})"
        )
    return f, g


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic through (a, fa, ga), (b, fb, gb), or None."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.copysign(np.sqrt(disc), b - a)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def _strong_wolfe(phi, f0, g0, alpha0, cfg: LbfgsConfig):
    """Return (alpha, f, grad_vec, dphi, evals) or None when no step satisfies the conditions.

    ``phi(alpha)`` returns ``(f, grad_vec, dphi)``.
    """
    evals = 0
    a_prev, f_prev, d_prev = 0.0, f0, g0
    a = alpha0
    best = None

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        nonlocal evals, best
        while evals < cfg.max_ls_steps:
            trial = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            span = hi - lo
            # keep trial safely inside the bracket
            if trial is None or not (min(lo, hi) + 0.1 * abs(span) <= trial <= max(lo, hi) - 0.1 * abs(span)):
                trial = lo + 0.5 * span
            f, g, d = phi(trial)
            evals += 1
            if best is None or f < best[1]:
                best = (trial, f, g, d)
            if f > f0 + cfg.c1 * trial * g0 or f >= flo:
                hi, fhi, dhi = trial, f, d
            else:
                if abs(d) <= -cfg.c2 * g0:
                    return trial, f, g, d
                if d * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = trial, f, d
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return None

    while evals < cfg.max_ls_steps:
        f, g, d = phi(a)
        evals += 1
        if best is None or f < best[1]:
            best = (a, f, g, d)
        if f > f0 + cfg.c1 * a * g0 or (evals > 1 and f >= f_prev):
            res = zoom(a_prev, f_prev, d_prev, a, f, d)
            break
        if abs(d) <= -cfg.c2 * g0:
            res = (a, f, g, d)
            break
        if d >= 0:
            res = zoom(a, f, d, a_prev, f_prev, d_prev)
            break
        a_prev, f_prev, d_prev = a, f, d
        a = 2.0 * a
    else:
        res = None

    if res is not None:
        return res + (evals,)
    # no Wolfe point; fall back to the best sufficient-decrease step seen, if any
    if best is not None and best[1] <= f0 + cfg.c1 * best[0] * g0 and best[1] < f0:
        return best + (evals,)
    return None


def lbfgs_minimize(problem, x0, config: LbfgsConfig | None = None, **overrides) -> OptimReport:
    """Minimise ``problem`` from ``x0``.

    ``problem`` is an :class:`OptimProblem` or a bare ``fun(x) -> (loss, grad)``
    callable. Keyword overrides (``memory``, ``max_iters``, ``grad_tol``,
    ``loss_rel_tol``) patch the default :class:`LbfgsConfig`.

    Never raises on line-search failure: the best iterate is returned with
    ``converged=False``. A non-finite loss or gradient raises
    :class:`OptimizationError`.
    """
    cfg = config or LbfgsConfig()
    if overrides:
        cfg = LbfgsConfig(**{**cfg.__dict__, **overrides})
    x = np.array(x0, dtype=np.float64).ravel()
    if not isinstance(problem, OptimProblem):
        problem = OptimProblem(x.size, problem)
    if x.size != problem.dim:
        raise ValueError(f"x0 has length {x.size}, problem expects {problem.dim}")

    f, g = _evaluate(problem, x, 0)
    history = [f]
    s_hist: deque[np.ndarray] = deque(maxlen=cfg.memory)
    y_hist: deque[np.ndarray] = deque(maxlen=cfg.memory)
    gnorm = float(np.linalg.norm(g))
    if gnorm <= cfg.grad_tol:
        return OptimReport(x, f, 0, True, gnorm, "gradient below tolerance", history)

    message = "maximum iterations reached"
    converged = False
    it = 0
    while it < cfg.max_iters:
        d = _two_loop(g, s_hist, y_hist)
        gd = float(g @ d)
        if not gd < 0:
            # lost positive definiteness numerically; restart from steepest descent
            s_hist.clear()
            y_hist.clear()
            d = -g
            gd = float(g @ d)
        assert gd < 0, "search direction is not a descent direction"

        alpha0 = 1.0 if s_hist else min(1.0, 1.0 / max(np.abs(g).max(), 1e-300))

        def phi(a, x=x, d=d, it=it):
            fa, ga = _evaluate(problem, x + a * d, it + 1)
            return fa, ga, float(ga @ d)

        found = _strong_wolfe(phi, f, gd, alpha0, cfg)
        if found is None:
            message = "line search failed"
            break
        alpha, f_new, g_new, _, _ = found
        s = alpha * d
        y = g_new - g
        x = x + s
        f_prev, f = f, f_new
        g = g_new
        it += 1
        history.append(f)

        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)

        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.grad_tol:
            message, converged = "gradient below tolerance", True
            break
        if (f_prev - f) <= cfg.loss_rel_tol * max(abs(f_prev), abs(f), 1e-300):
            message, converged = "relative loss decrease below tolerance", True
            break

    log.debug("lbfgs: %s after %d iterations (loss=%.6g, |g|=%.3g)", message, it, f, gnorm)
    return OptimReport(x, f, it, converged, gnorm, message, history)


def _two_loop(g: np.ndarray, s_hist, y_hist) -> np.ndarray:
    q = g.copy()
    alphas = []
    rhos = [1.0 / float(y @ s) for s, y in zip(s_hist, y_hist)]
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def check_gradient(problem, x, h: float = 1e-6) -> float:
    """Largest ``|analytic - central difference| / max(1, |central difference|)``."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=np.float64).ravel()
    fun = problem.fun if isinstance(problem, OptimProblem) else problem
    _, g = fun(x)
    g = np.asarray(g, dtype=np.float64)
    worst = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        numeric = (fun(x + e)[0] - fun(x - e)[0]) / (2 * h)
        worst = max(worst, abs(g[i] - numeric) / max(1.0, abs(numeric)))
    return worst
