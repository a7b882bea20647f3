"""Simulated spatial loss fields for generator training.

Re-implements the scene generator's SLF recipe so the trainer stands alone:
per-cell dB gain -10*gamma*log10(max(d, 1)) plus a zero-mean Gaussian
shadowing field with correlation exp(-d/xc) (exact grid covariance via its
Cholesky factor), converted to linear scale and normalized to peak 1.

Shared scenario JSON files (keys I, J, K, R, emitters, Xc, eta, ...) can seed
the parameter ranges, keeping the trainer consistent with the runtime that
will consume the exported generator.
"""

from __future__ import annotations

import functools
import json
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .config import TrainConfig

# distinct decorrelation distances drawn per training set; the covariance
# Cholesky factor is cached per value, so the draw grid stays small
XC_GRID_POINTS = 12


@functools.lru_cache(maxsize=16)
def _field_cholesky(I: int, J: int, xc: float) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(I), np.arange(J), indexing="ij")
    pts = np.column_stack([ii.ravel(), jj.ravel()]).astype(np.float64)
    corr = np.exp(-cdist(pts, pts) / xc)
    corr[np.diag_indices_from(corr)] += 1e-10
    return np.linalg.cholesky(corr)


def shadow_field(I: int, J: int, xc: float, eta: float, seed) -> np.ndarray:
    """Correlated log-normal shadowing in dB, std eta, deterministic per seed."""
    if eta == 0:
        return np.zeros((I, J))
    rng = np.random.default_rng(seed)
    return eta * (_field_cholesky(I, J, float(xc)) @ rng.standard_normal(I * J)).reshape(I, J)


def slf_field(I: int, J: int, xc: float, eta: float, gamma: float, emitter, seed) -> np.ndarray:
    """One simulated SLF: pathloss plus shadowing, normalized to peak 1."""
    shadow = shadow_field(I, J, xc, eta, seed)
    i0, j0 = emitter
    ii, jj = np.meshgrid(np.arange(I), np.arange(J), indexing="ij")
    d = np.hypot(ii - i0, jj - j0)
    gain_db = -10.0 * gamma * np.log10(np.maximum(d, 1.0)) + shadow
    gain = 10.0 ** (gain_db / 10.0)
    return gain / gain.max()


def make_training_set(config: TrainConfig) -> np.ndarray:
    """Simulated SLF images, shape (n_samples, I, J), float32 in (0, 1].

    Emitter positions are uniform over the grid; the pathloss exponent and
    shadowing std are uniform over their ranges. Decorrelation distances are
    drawn from a fixed grid spanning xc_range so covariance factors can be
    reused across samples.
    """
    I, J = config.grid
    rng = np.random.default_rng(config.seed)
    lo, hi = config.xc_range
    xc_values = np.linspace(lo, hi, XC_GRID_POINTS) if hi > lo else np.array([lo])
    out = np.empty((config.n_samples, I, J), dtype=np.float32)
    for s in range(config.n_samples):
        emitter = (rng.uniform(0, I - 1), rng.uniform(0, J - 1))
        gamma = rng.uniform(*config.gamma_range)
        eta = rng.uniform(*config.eta_range)
        xc = float(rng.choice(xc_values))
        out[s] = slf_field(I, J, xc, eta, gamma, emitter, seed=[config.seed, 21, s])
    return out


def ranges_from_scenario(path, **overrides) -> TrainConfig:
    """Seed a TrainConfig from a shared scenario JSON file."""
    raw = json.loads(Path(path).read_text())
    gammas = [e["gamma"] for e in raw["emitters"]]
    base = dict(
        grid=(int(raw["I"]), int(raw["J"])),
        xc_range=(float(raw["Xc"]), float(raw["Xc"])),
        eta_range=(float(raw["eta"]), float(raw["eta"])),
        gamma_range=(min(gammas), max(gammas)),
    )
    base.update(overrides)
    return TrainConfig(**base)
