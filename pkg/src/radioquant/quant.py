"""Dithered Gaussian quantization of log-transformed power values.

The sensing channel is y = Q(h(x) + v) with h(x) = log(x + a), v ~ N(0, sigma2)
fresh per entry, and Q the threshold quantizer over ordered boundaries
b_0 = -inf < b_1 < ... < b_{Q-1} < b_Q = +inf.  The symbol-q link probability
is f_q(m) = Phi((b_q - m)/sigma) - Phi((b_{q-1} - m)/sigma).

This module also designs boundaries from empirical quantiles of pooled
transformed samples (equal expected occupancy per level) and evaluates the
kernel's extremal constants over a transformed-value range.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .simkit import SampleSet

# probability clamp used inside logarithms and gradient denominators; guards
# only against exact float-zero probabilities (fully saturated bins beyond the
# ~38-sigma representable tail) so far-tail hazard ratios keep their true
# magnitude and the solvers can climb out of deeply mismatched predictions
PROB_FLOOR = 1e-300

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class QuantizerSpec:
    """Transform offset, dither variance, and ordered bin boundaries.

    bins holds the full boundary vector of length Q+1 with bins[0] = -inf and
    bins[-1] = +inf; the interior boundaries must be finite and strictly
    increasing. Q = len(bins) - 1 output symbols, numbered 1..Q.
    """

    a: float
    sigma2: float
    bins: np.ndarray

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"transform offset a must be positive, got {self.a}")
        if not self.sigma2 > 0:
            raise ValueError(f"dither variance must be positive, got {self.sigma2}")
        b = np.asarray(self.bins, dtype=np.float64)
        if b.ndim != 1 or b.size < 3:
            raise ValueError("need at least 2 quantization symbols (3 boundaries)")
        if not (np.isneginf(b[0]) and np.isposinf(b[-1])):
            raise ValueError("outer boundaries must be -inf and +inf")
        interior = b[1:-1]
        if not np.all(np.isfinite(interior)):
            raise ValueError("interior boundaries must be finite")
        if np.any(np.diff(interior) <= 0):
            raise ValueError("interior boundaries must be strictly increasing")
        object.__setattr__(self, "bins", b)

    @property
    def n_symbols(self) -> int:
        return self.bins.size - 1

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass(frozen=True)
class ObservationSet:
    """Sampled fiber locations plus their quantized PSD symbols."""

    omega: SampleSet
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.int64)
        if y.ndim != 2 or y.shape[0] != len(self.omega):
            raise ValueError("y must be N x K with one row per sampled location")
        if y.size and (y.min() < 1):
            raise ValueError("symbols must be positive integers")
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class LinkConstants:
    """Extremal kernel constants over a transformed-value interval.

    u_alpha: sup over the range of the worst-symbol negative log-likelihood
    l_alpha: sup of |df_q/dm| / f_q (log-likelihood Lipschitz constant)
    f_alpha: inf over the range of max_q (df_q/dm)^2 / f_q (curvature floor)
    """

    u_alpha: float
    l_alpha: float
    f_alpha: float
    m_range: tuple[float, float]


def log_transform(x, a: float):
    """Entrywise log(x + a); rejects negative inputs."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("log transform requires nonnegative input")
    return np.log(x + a)


def inverse_transform(m, a: float):
    """Inverse of the log transform: exp(m) - a."""
    return np.exp(np.asarray(m, dtype=np.float64)) - a


def _phi(z):
    # standard normal pdf; exp(-inf) underflows cleanly to 0 at z = +-inf
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


def _interval_prob(z_lo, z_hi):
    """Phi(z_hi) - Phi(z_lo), evaluated through the far tail when both are
    positive so the difference survives cancellation."""
    direct = ndtr(z_hi) - ndtr(z_lo)
    tail = ndtr(-z_lo) - ndtr(-z_hi)
    return np.maximum(np.where(z_lo > 0, tail, direct), 0.0)


def link_prob(q, m, spec: QuantizerSpec):
    """Probability that the dithered, quantized value of m is symbol q."""
    q = np.asarray(q, dtype=np.int64)
    if np.any(q < 1) or np.any(q > spec.n_symbols):
        raise ValueError(f"symbol out of range [1, {spec.n_symbols}]")
    m = np.asarray(m, dtype=np.float64)
    z_hi = (spec.bins[q] - m) / spec.sigma
    z_lo = (spec.bins[q - 1] - m) / spec.sigma
    return _interval_prob(z_lo, z_hi)


def link_prob_all(m, spec: QuantizerSpec) -> np.ndarray:
    """Full link distribution: shape m.shape + (Q,)."""
    m = np.asarray(m, dtype=np.float64)
    z = (spec.bins - m[..., None]) / spec.sigma
    return _interval_prob(z[..., :-1], z[..., 1:])


def link_grad(q, m, spec: QuantizerSpec):
    """d f_q / d m = (phi(z_{q-1}) - phi(z_q)) / sigma."""
    q = np.asarray(q, dtype=np.int64)
    if np.any(q < 1) or np.any(q > spec.n_symbols):
        raise ValueError(f"symbol out of range [1, {spec.n_symbols}]")
    m = np.asarray(m, dtype=np.float64)
    z_hi = (spec.bins[q] - m) / spec.sigma
    z_lo = (spec.bins[q - 1] - m) / spec.sigma
    return (_phi(z_lo) - _phi(z_hi)) / spec.sigma


def link_grad_all(m, spec: QuantizerSpec) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    z = (spec.bins - m[..., None]) / spec.sigma
    pdf = _phi(z)
    return (pdf[..., :-1] - pdf[..., 1:]) / spec.sigma


def nll_entry(q, x, spec: QuantizerSpec):
    """Negative log-likelihood of symbol q at power x, and its x-derivative.

    Returns (-log f_q(h(x)), d/dx). The probability is clamped below at
    PROB_FLOOR inside the logarithm and the gradient denominator.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("power values must be nonnegative")
    m = np.log(x + spec.a)
    p = np.maximum(link_prob(q, m, spec), PROB_FLOOR)
    grad = -(link_grad(q, m, spec) / p) / (x + spec.a)
    return -np.log(p), grad


def design_bins(samples, bits: int) -> np.ndarray:
    """Equal-occupancy boundaries from the empirical CDF of pooled samples.

    Produces 2**bits levels: interior boundary i (i = 1..2**bits - 1) is the
    smallest sample value m with i/2**bits <= F(m), F the empirical CDF.
    Outer boundaries are +-inf. Degenerate sample distributions, where two
    quantiles coincide, are rejected.
    """
    if bits < 1:
        raise ValueError("need at least one bit")
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise ValueError("cannot design bins from an empty sample")
    levels = 2 ** bits
    srt = np.sort(samples)
    n = srt.size
    if np.unique(srt).size <= levels - 1:
        raise ValueError(
            "degenerate sample distribution: need more distinct samples than boundaries"
        )
    idx = np.ceil(n * np.arange(1, levels) / levels).astype(np.int64) - 1
    interior = srt[idx]
    if np.any(np.diff(interior) <= 0):
        raise ValueError(
            "degenerate sample distribution: empirical quantiles collide; "
            "need more distinct samples than boundaries"
        )
    return np.concatenate([[-np.inf], interior, [np.inf]])


def make_quantizer(samples, bits: int, a: float, sigma2: float) -> QuantizerSpec:
    return QuantizerSpec(a=a, sigma2=sigma2, bins=design_bins(samples, bits))


def dither_quantize(m, spec: QuantizerSpec, seed) -> np.ndarray:
    """Quantize transformed values with fresh Gaussian dither (counter-based
    Philox stream keyed by seed, so results are independent of evaluation
    order)."""
    m = np.asarray(m, dtype=np.float64)
    rng = np.random.Generator(np.random.Philox(key=seed))
    v = spec.sigma * rng.standard_normal(m.shape)
    return np.searchsorted(spec.bins[1:-1], m + v, side="left").astype(np.int64) + 1


def quantize_fibers(m_fibers: np.ndarray, omega: SampleSet, spec: QuantizerSpec, seed) -> ObservationSet:
    """Quantize the N x K transformed fiber matrix observed over omega.

    The dither for fiber (i, j) comes from a Philox stream keyed by
    (seed, i, j): per-entry randomness depends only on the seed and the grid
    location, never on the ordering of omega.
    """
    m = np.asarray(m_fibers, dtype=np.float64)
    if m.shape[0] != len(omega):
        raise ValueError("fiber matrix row count must match |omega|")
    sigma = spec.sigma
    interior = spec.bins[1:-1]
    y = np.empty(m.shape, dtype=np.int64)
    for s, (i, j) in enumerate(omega.locations):
        rng = np.random.Generator(np.random.Philox(key=[int(seed), (int(i) << 32) | int(j)]))
        v = sigma * rng.standard_normal(m.shape[1])
        y[s] = np.searchsorted(interior, m[s] + v, side="left") + 1
    return ObservationSet(omega=omega, y=y)


def compute_constants(
    spec: QuantizerSpec,
    alpha: float,
    m_range="transform",
    grid_points: int = 10_001,
) -> LinkConstants:
    """Extremal constants of the link kernel over a transformed-value range.

    m_range selects the interval: 'transform' (default) uses
    [h(0), h(alpha)] = [log a, log(alpha + a)]; 'symmetric' uses
    +-(alpha + |1 - a|)/a; a (lo, hi) tuple is used verbatim. Extrema are
    located on a dense grid and sharpened by one local refinement pass around
    each argextremum. PROB_FLOOR applies inside every ratio and logarithm.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if grid_points < 1000:
        raise ValueError("grid too coarse: need at least 1000 points")
    if m_range == "transform":
        lo, hi = math.log(spec.a), math.log(alpha + spec.a)
    elif m_range == "symmetric":
        half = (alpha + abs(1.0 - spec.a)) / spec.a
        lo, hi = -half, half
    else:
        lo, hi = float(m_range[0]), float(m_range[1])
    if not lo < hi:
        raise ValueError(f"empty constants range [{lo}, {hi}]")

    def metrics(ms):
        f = np.maximum(link_prob_all(ms, spec), PROB_FLOOR)
        fdot = link_grad_all(ms, spec)
        u = (-np.log(f)).max(axis=-1)
        l = (np.abs(fdot) / f).max(axis=-1)
        curv = (np.square(fdot) / f).max(axis=-1)
        return u, l, curv

    ms = np.linspace(lo, hi, grid_points)
    u, l, curv = metrics(ms)
    step = (hi - lo) / (grid_points - 1)

    def refine(coarse_vals, pick, reduce_fn):
        k = pick(coarse_vals)
        local = np.linspace(max(lo, ms[k] - step), min(hi, ms[k] + step), 201)
        return reduce_fn(metrics(local))

    u_alpha = max(u.max(), refine(u, np.argmax, lambda m3: m3[0].max()))
    l_alpha = max(l.max(), refine(l, np.argmax, lambda m3: m3[1].max()))
    f_alpha = min(curv.min(), refine(curv, np.argmin, lambda m3: m3[2].min()))
    return LinkConstants(float(u_alpha), float(l_alpha), float(f_alpha), (lo, hi))


# ---------------------------------------------------------------------------
# serialization


def spec_to_dict(spec: QuantizerSpec) -> dict:
    q = spec.n_symbols
    bits = int(round(math.log2(q)))
    if 2 ** bits != q:
        raise ValueError("only power-of-two symbol counts serialize to the broadcast format")
    return {
        "a": spec.a,
        "sigma2": spec.sigma2,
        "B": bits,
        "bins": [float(b) for b in spec.bins[1:-1]],
    }


def spec_from_dict(d: dict) -> QuantizerSpec:
    interior = np.asarray(d["bins"], dtype=np.float64)
    bins = np.concatenate([[-np.inf], interior, [np.inf]])
    spec = QuantizerSpec(a=float(d["a"]), sigma2=float(d["sigma2"]), bins=bins)
    if "B" in d and spec.n_symbols != 2 ** int(d["B"]):
        raise ValueError("boundary count does not match the declared bit width")
    return spec


def save_quantizer(path, spec: QuantizerSpec) -> None:
    with open(path, "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_quantizer(path) -> QuantizerSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))


def observations_to_dict(obs: ObservationSet) -> dict:
    return {
        "omega": [[int(i), int(j)] for i, j in obs.omega.locations],
        "y": obs.y.tolist(),
        "mode": obs.omega.mode,
    }


def observations_from_dict(d: dict) -> ObservationSet:
    omega = SampleSet(np.asarray(d["omega"], dtype=np.int64).reshape(-1, 2), mode=d.get("mode", "without"))
    return ObservationSet(omega=omega, y=np.asarray(d["y"], dtype=np.int64))


def save_observations(path, obs: ObservationSet) -> None:
    with open(path, "w") as fh:
        json.dump(observations_to_dict(obs), fh, sort_keys=True)
        fh.write("\n")


def load_observations(path) -> ObservationSet:
    with open(path) as fh:
        return observations_from_dict(json.load(fh))
