"""Step engines shared by the block-coordinate solvers.

Two modes: an adaptive first/second-moment rule with bias correction
(sign-scale invariant, the default), and plain gradient descent with Armijo
backtracking, under which per-block monotone descent is guaranteed.
"""

from __future__ import annotations

import numpy as np


class SolverDivergence(RuntimeError):
    """Objective became NaN or blew up beyond recovery."""


class AdamState:
    """First/second-moment adaptive step for one variable block."""

    def __init__(self, shape, step: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.step = step
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)

    def direction(self, grad: np.ndarray) -> np.ndarray:
        """Update to subtract from the block."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * np.square(grad)
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return self.step * m_hat / (np.sqrt(v_hat) + self.eps)


def armijo_project(x, grad, step0, objective, project, c: float = 1e-4, max_halvings: int = 40):
    """Projected-gradient step with backtracking; never increases the objective.

    Returns (new_x, new_objective). If no step length up to max_halvings
    halvings achieves sufficient decrease, the block is left unchanged.
    """
    fx = objective(x)
    s = step0
    for _ in range(max_halvings):
        cand = project(x - s * grad)
        fc = objective(cand)
        if np.isfinite(fc) and fc <= fx - (c / s) * float(np.sum(np.square(x - cand))):
            return cand, fc
        s *= 0.5
    return x, fx
