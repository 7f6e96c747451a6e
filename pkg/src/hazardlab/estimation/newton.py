"""Newton-Raphson maximization with step halving."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["SingularHessianError", "NewtonResult", "newton_raphson"]


class SingularHessianError(np.linalg.LinAlgError):
    def __init__(self, iteration: int, detail: str = ""):
        msg = f"singular or non-finite Hessian at iteration {iteration}"
        super().__init__(f"{msg}: {detail}" if detail else msg)
        self.iteration = iteration


@dataclass(frozen=True)
class NewtonResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    hess: np.ndarray
    iterations: int
    converged: bool
    message: str


def _direction(g: np.ndarray, H: np.ndarray, iteration: int) -> np.ndarray:
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(g))):
        raise SingularHessianError(iteration, "non-finite entries")
    w, V = np.linalg.eigh(-0.5 * (H + H.T))
    scale = np.max(np.abs(w))
    if scale == 0.0:
        raise SingularHessianError(iteration, "zero Hessian")
    # Reflect and floor eigenvalues so the step is always an ascent direction.
    w = np.maximum(np.abs(w), 1e-15 * scale)
    return V @ ((V.T @ g) / w)


def newton_raphson(
    value: Callable[[np.ndarray], float],
    derivs: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]],
    x0,
    tol: float = 1e-8,
    max_iter: int = 100,
    max_halvings: int = 20,
    max_step: float = 5.0,
) -> NewtonResult:
    """Maximize ``value`` starting at ``x0``.

    Convergence is declared when the gradient max-norm is at most ``tol``.
    A step that fails to increase the objective is halved up to
    ``max_halvings`` times; ``value`` may return ``-inf`` for infeasible
    points. Steps longer than ``max_step`` in max-norm are shortened first.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g, H = derivs(x)
    it = 0
    message = ""
    while True:
        if np.max(np.abs(g), initial=0.0) <= tol:
            return NewtonResult(x, f, g, H, it, True, "gradient below tolerance")
        if it >= max_iter:
            message = f"maximum of {max_iter} iterations reached"
            break
        step = _direction(g, H, it)
        big = np.max(np.abs(step))
        if big > max_step:
            step *= max_step / big
        slack = 1e-12 * (1.0 + abs(f))
        for _ in range(max_halvings + 1):
            trial = x + step
            try:
                f_new = value(trial)
            except ArithmeticError:
                f_new = -math.inf
            if math.isfinite(f_new) and f_new >= f - slack:
                break
            step *= 0.5
        else:
            message = f"step halving failed at iteration {it}"
            break
        x = trial
        it += 1
        f, g, H = derivs(x)
    return NewtonResult(x, f, g, H, it, False, message)
