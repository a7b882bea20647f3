"""Reconstruction metrics and recoverability diagnostics.

Implements the log-domain normalized reconstruction error (LNRE), the
model-complexity terms and high-probability error bounds for the tensor and
generative map models, log covering numbers of both model classes, and the
empirical KL / squared-Hellinger divergences of the quantization channel.

The bounds describe the global likelihood optimum; they are reported as
diagnostics next to achieved errors, never asserted against solver output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quant import PROB_FLOOR, LinkConstants, QuantizerSpec, link_prob_all, log_transform


@dataclass(frozen=True)
class BoundParams:
    """Problem-size and model-class parameters entering the bounds.

    L is the tensor model's per-emitter spatial rank; D, P, q describe the
    generative model (latent dimension, network Lipschitz product, latent
    ball radius). delta is the failure probability, nu the worst-case model
    mismatch in max norm.
    """

    I: int
    J: int
    K: int
    N: int
    R: int
    beta: float
    kappa: float
    alpha: float
    a: float
    delta: float
    nu: float = 0.0
    L: int | None = None
    D: int | None = None
    P: float | None = None
    q: float | None = None

    def __post_init__(self):
        for name in ("I", "J", "K", "N"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.R < 0:
            raise ValueError("R must be nonnegative")
        for name in ("beta", "kappa", "alpha", "a"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")


def lnre(est, truth, a: float) -> float:
    """Log-domain normalized reconstruction error.

    |h(est) - h(truth)|_F^2 / |h(truth)|_F^2 with h(x) = log(x + a).
    """
    est_t = np.asarray(getattr(est, "tensor", est), dtype=np.float64)
    truth_t = np.asarray(getattr(truth, "tensor", truth), dtype=np.float64)
    if est_t.shape != truth_t.shape:
        raise ValueError(f"shape mismatch: {est_t.shape} vs {truth_t.shape}")
    m_est = log_transform(est_t, a)
    m_truth = log_transform(truth_t, a)
    denom = float(np.sum(np.square(m_truth)))
    if denom == 0.0:
        raise ValueError("reference map transforms to zero; LNRE undefined")
    return float(np.sum(np.square(m_est - m_truth))) / denom


def _checked_log(x: float, what: str) -> float:
    if x <= 0:
        raise ValueError(f"log of non-positive argument in {what}: {x}")
    return math.log(x)


def tau_btd(p: BoundParams) -> float:
    """Model-complexity term of the tensor-model recovery bound."""
    if p.L is None:
        raise ValueError("tensor-model tau needs the spatial rank L")
    dof = (p.I + p.J) * p.L + p.K
    t1 = dof * _checked_log(3.0 * math.sqrt(p.R) * (p.beta + p.kappa), "tau_btd")
    t2 = p.K * _checked_log(p.kappa / 2.0, "tau_btd") + (p.I + p.J) * p.L * _checked_log(p.beta, "tau_btd")
    if t1 < 0 or t2 < 0:
        raise ValueError("complexity term undefined: negative value under a square root")
    return 3.0 * (math.sqrt(t1) + math.sqrt(t2))


def tau_dgm(p: BoundParams) -> float:
    """Model-complexity term of the generative-model recovery bound."""
    if p.D is None or p.P is None or p.q is None:
        raise ValueError("generative-model tau needs D, P, and q")
    t = p.K * _checked_log(1.5 * math.sqrt(p.R) * p.kappa * (p.beta + p.kappa), "tau_dgm")
    t += p.D * _checked_log(3.0 * math.sqrt(p.R) * p.P * p.q * (p.beta + p.kappa), "tau_dgm")
    if t < 0:
        raise ValueError("complexity term undefined: negative value under a square root")
    return 3.0 * math.sqrt(t)


def error_bound(p: BoundParams, tau: float, constants: LinkConstants) -> float:
    """High-probability mean-squared-error bound for the likelihood optimum.

    c1 = 4 (alpha + a)^2 / f_alpha and c2 = l_alpha / a; the bound is

        8 c1 c2 (1 + tau) / K * sqrt(R / N)
        + u_alpha c1 sqrt(log(1/delta) / (2N))
        + u_alpha c1 sqrt(8 log(2/delta) / N)
        + c1 c2 nu
    """
    c1 = 4.0 * (p.alpha + p.a) ** 2 / constants.f_alpha
    c2 = constants.l_alpha / p.a
    t1 = 8.0 * c1 * c2 * (1.0 + tau) / p.K * math.sqrt(p.R / p.N)
    t2 = constants.u_alpha * c1 * math.sqrt(math.log(1.0 / p.delta) / (2.0 * p.N))
    t3 = constants.u_alpha * c1 * math.sqrt(8.0 * math.log(2.0 / p.delta) / p.N)
    return t1 + t2 + t3 + c1 * c2 * p.nu


def log_covering_btd(p: BoundParams, eps: float) -> float:
    """Log covering number of the bounded tensor model class at scale eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if p.R == 0:
        return 0.0
    if p.L is None:
        raise ValueError("tensor-model covering needs the spatial rank L")
    dof = (p.I + p.J) * p.L + p.K
    return (
        dof * p.R * _checked_log(3.0 * (p.kappa + p.beta) * p.R / eps, "log_covering_btd")
        + (p.I + p.J) * p.L * p.R * _checked_log(p.beta, "log_covering_btd")
        + p.R * p.K * _checked_log(p.kappa / 2.0, "log_covering_btd")
    )


def log_covering_dgm(p: BoundParams, eps: float) -> float:
    """Log covering number of the bounded generative model class at scale eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if p.R == 0:
        return 0.0
    if p.D is None or p.P is None or p.q is None:
        raise ValueError("generative-model covering needs D, P, and q")
    return (
        p.R * (p.K + p.D) * _checked_log(3.0 * p.R * (p.beta + p.kappa) / eps, "log_covering_dgm")
        + p.R * p.K * _checked_log(p.kappa / 2.0, "log_covering_dgm")
        + p.R * p.D * _checked_log(p.P * p.q, "log_covering_dgm")
    )


def empirical_kl(m_est, m_truth, spec: QuantizerSpec):
    """Channel divergences between two transformed maps.

    Returns (kl, hellinger_sq): the per-entry average KL divergence
    sum_q f_q(m_truth) log(f_q(m_truth)/f_q(m_est)) and the per-entry average
    squared Hellinger distance sum_q (sqrt f_q(m_est) - sqrt f_q(m_truth))^2.
    Estimated-side probabilities are floored inside the logarithm.
    """
    m_est = np.asarray(m_est, dtype=np.float64)
    m_truth = np.asarray(m_truth, dtype=np.float64)
    if m_est.shape != m_truth.shape:
        raise ValueError(f"shape mismatch: {m_est.shape} vs {m_truth.shape}")
    f_est = link_prob_all(m_est.ravel(), spec)
    f_tru = link_prob_all(m_truth.ravel(), spec)
    log_ratio = np.log(np.maximum(f_tru, PROB_FLOOR)) - np.log(np.maximum(f_est, PROB_FLOOR))
    kl_terms = np.where(f_tru > 0, f_tru * log_ratio, 0.0)
    hell_terms = np.square(np.sqrt(f_est) - np.sqrt(f_tru))
    n = max(m_est.size, 1)
    return float(kl_terms.sum()) / n, float(hell_terms.sum()) / n
