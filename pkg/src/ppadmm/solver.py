"""Gradient descent with Armijo backtracking for smooth convex subproblems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonFiniteObjective

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000
ARMIJO_C = 1e-4
MAX_HALVINGS = 80
NOISE_EPS = 8 * np.finfo(float).eps

ValueAndGrad = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass
class SolveReport:
    solution: np.ndarray
    gradient_norm: float
    iterations: int
    converged: bool
    value: float = float("nan")


def _check(value, grad):
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NonFiniteObjective("objective or gradient became non-finite")


def minimize(
    objective: ValueAndGrad,
    x0: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    step0: float = 1.0,
) -> SolveReport:
    """Minimize a differentiable convex function by gradient descent.

    The trial step is the Barzilai-Borwein length from the previous step
    (``step0`` at first); it is halved until the Armijo condition
    ``f(x - s g) <= f(x) - c s |g|^2`` holds, ``c = 1e-4``. When the
    predicted decrease is below the rounding level of ``f``, the equivalent
    slope condition ``g(x - s g).g >= -(1 - 2c) |g|^2`` is used instead.

    Parameters
    ----------
    objective : callable
        Returns ``(value, gradient)`` at a point.
    x0 : ndarray
        Starting point (warm start).
    tol : float
        Stop when the gradient 2-norm is at most ``tol``.
    max_iter : int
        Budget of accepted steps. Exhausting it returns ``converged=False``.
    step0 : float
        Initial trial step length.

    Returns
    -------
    SolveReport
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.array(x0, dtype=float, copy=True)
    fx, g = objective(x)
    _check(fx, g)
    gnorm = float(np.linalg.norm(g))
    step = float(step0)
    it = 0
    while gnorm > tol and it < max_iter:
        gg = gnorm * gnorm
        noise = NOISE_EPS * max(1.0, abs(fx))
        s = step
        accepted = False
        for _ in range(MAX_HALVINGS):
            x_new = x - s * g
            f_new, g_new = objective(x_new)
            if np.isfinite(f_new):
                if ARMIJO_C * s * gg > noise:
                    accepted = f_new <= fx - ARMIJO_C * s * gg
                else:
                    # predicted decrease is below the rounding of f: use the
                    # slope form of the same condition (exact for quadratics)
                    accepted = f_new - fx <= noise and g_new @ g >= -(1.0 - 2.0 * ARMIJO_C) * gg
                if accepted:
                    break
            s *= 0.5
        it += 1
        if not accepted:
            # no representable decrease along -g
            break
        _check(f_new, g_new)
        dx, dg = x_new - x, g_new - g
        x, fx, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        # Barzilai-Borwein trial length for the next step
        curv = float(dx @ dg)
        step = float(dx @ dx) / curv if curv > 0 else 2.0 * s
    return SolveReport(solution=x, gradient_norm=gnorm, iterations=it, converged=gnorm <= tol, value=float(fx))
