"""Synthetic radio-map generation.

Builds the ground-truth objects of a spectrum-cartography scenario: correlated
log-normal shadowing fields, per-emitter spatial loss fields (SLFs), emitter
power spectral densities (PSDs), the composed space x frequency power tensor,
and fiber-sampled sensor locations.

Grid resolution is 1 m per cell; distances are Euclidean in grid units.
All generators are deterministic given their seed.
"""

from __future__ import annotations

import functools
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

# pathloss distance clamp (grid units) to avoid the log singularity at the emitter
D_MIN = 1.0

# exact covariance Cholesky up to this many cells; separable filter above
_EXACT_FIELD_CELLS = 64 * 64

MAP_MAGIC = b"QMAP"


@dataclass(frozen=True)
class ShadowingParams:
    """Pathloss plus correlated log-normal shadowing parameters.

    xc: decorrelation distance in meters, > 0
    eta: shadowing standard deviation in dB, >= 0
    gamma: pathloss exponent, > 0
    emitter: (i0, j0) emitter position in grid coordinates; may lie off-grid
    """

    xc: float
    eta: float
    gamma: float
    emitter: tuple[float, float]

    def __post_init__(self):
        if not self.xc > 0:
            raise ValueError(f"decorrelation distance must be positive, got {self.xc}")
        if self.eta < 0:
            raise ValueError(f"shadowing std must be nonnegative, got {self.eta}")
        if not self.gamma > 0:
            raise ValueError(f"pathloss exponent must be positive, got {self.gamma}")


@dataclass(frozen=True)
class Slf:
    """Spatial loss field of one emitter: I x J linear power gains, peak 1."""

    grid: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.float64)
        if g.ndim != 2:
            raise ValueError("SLF grid must be a 2-D matrix")
        if np.any(g < 0):
            raise ValueError("SLF entries must be nonnegative")
        object.__setattr__(self, "grid", g)

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.grid))


@dataclass(frozen=True)
class Psd:
    """Power spectral density of one emitter: length-K nonnegative vector."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("PSD must be a 1-D vector")
        if np.any(v < 0):
            raise ValueError("PSD entries must be nonnegative")
        object.__setattr__(self, "values", v)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class RadioMap:
    """Nonnegative I x J x K power tensor."""

    tensor: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tensor, dtype=np.float64)
        if t.ndim != 3:
            raise ValueError("radio map must be a 3-D tensor")
        if np.any(t < 0):
            raise ValueError("radio map entries must be nonnegative")
        object.__setattr__(self, "tensor", t)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.tensor.shape


@dataclass(frozen=True)
class SampleSet:
    """Ordered sensor locations on the grid.

    locations: (N, 2) integer array of (i, j) indices
    mode: 'without' (distinct sensor sites) or 'with' replacement
    """

    locations: np.ndarray
    mode: str = "without"

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=np.int64).reshape(-1, 2)
        if self.mode not in ("with", "without"):
            raise ValueError(f"unknown replacement mode {self.mode!r}")
        if self.mode == "without" and len(loc) != len(set(map(tuple, loc))):
            raise ValueError("duplicate locations in 'without' replacement mode")
        object.__setattr__(self, "locations", loc)

    def __len__(self) -> int:
        return self.locations.shape[0]


@functools.lru_cache(maxsize=4)
def _field_cholesky(I: int, J: int, xc: float) -> np.ndarray:
    """Cholesky factor of the exp(-d/xc) correlation over all grid cells."""
    ii, jj = np.meshgrid(np.arange(I), np.arange(J), indexing="ij")
    pts = np.column_stack([ii.ravel(), jj.ravel()]).astype(np.float64)
    corr = np.exp(-cdist(pts, pts) / xc)
    corr[np.diag_indices_from(corr)] += 1e-10
    return np.linalg.cholesky(corr)


@functools.lru_cache(maxsize=8)
def _axis_cholesky(n: int, xc: float) -> np.ndarray:
    d = np.abs(np.subtract.outer(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64)))
    corr = np.exp(-d / xc)
    corr[np.diag_indices_from(corr)] += 1e-12
    return np.linalg.cholesky(corr)


def gen_shadow_field(I: int, J: int, params: ShadowingParams, seed) -> np.ndarray:
    """Zero-mean Gaussian shadowing field in dB with correlation exp(-d/xc).

    Grids up to 64x64 cells use the exact Cholesky factor of the Euclidean
    correlation matrix; larger grids fall back to a separable axis-wise
    filter (correlation exp(-(|di|+|dj|)/xc)). Marginal std is eta.
    """
    if I < 1 or J < 1:
        raise ValueError("grid dimensions must be at least 1")
    if params.eta == 0:
        return np.zeros((I, J))
    rng = np.random.default_rng(seed)
    if I * J <= _EXACT_FIELD_CELLS:
        chol = _field_cholesky(I, J, params.xc)
        field = (chol @ rng.standard_normal(I * J)).reshape(I, J)
    else:
        z = rng.standard_normal((I, J))
        field = _axis_cholesky(I, params.xc) @ z @ _axis_cholesky(J, params.xc).T
    return params.eta * field


def gen_slf(I: int, J: int, params: ShadowingParams, seed) -> Slf:
    """Spatial loss field: pathloss plus shadowing, rescaled to peak gain 1.

    Per-cell dB gain is -10*gamma*log10(max(d, 1)) + shadow(i, j) with d the
    Euclidean distance to the emitter; the linear-scale grid is normalized so
    its maximum entry equals 1.
    """
    shadow = gen_shadow_field(I, J, params, seed)
    i0, j0 = params.emitter
    ii, jj = np.meshgrid(np.arange(I), np.arange(J), indexing="ij")
    d = np.hypot(ii - i0, jj - j0)
    gain_db = -10.0 * params.gamma * np.log10(np.maximum(d, D_MIN)) + shadow
    gain = 10.0 ** (gain_db / 10.0)
    return Slf(gain / gain.max())


def gen_psd(
    K: int,
    n_subbands: int,
    seed,
    kappa: float = 1.0,
    amp_range: tuple[float, float] = (0.5, 1.0),
    floor: float = 0.0,
) -> Psd:
    """Random emitter PSD: separated raised-cosine subband bumps.

    Each of the n_subbands bumps sits at a distinct center bin with amplitude
    drawn from amp_range; centers are kept far enough apart that every bump
    contributes its own local maximum. The vector is rescaled so that its
    Euclidean norm is at most kappa. `floor` adds a flat pedestal (fraction
    of the peak) for scenarios that need strictly positive occupancy.
    """
    if not 1 <= n_subbands <= K:
        raise ValueError(f"n_subbands must be in [1, {K}], got {n_subbands}")
    rng = np.random.default_rng(seed)
    half_width = max(1, K // (4 * n_subbands))
    seg = K / n_subbands
    k = np.arange(K)
    values = np.zeros(K)
    for s in range(n_subbands):
        lo = s * seg + half_width
        hi = (s + 1) * seg - half_width
        center = rng.uniform(lo, hi) if hi > lo else (s + 0.5) * seg
        amp = rng.uniform(*amp_range)
        dist = np.abs(k - center)
        bump = amp * 0.5 * (1.0 + np.cos(np.pi * dist / half_width))
        values += np.where(dist <= half_width, bump, 0.0)
    if floor > 0:
        values += floor * values.max()
    norm = np.linalg.norm(values)
    if norm > kappa:
        values *= kappa / norm
    return Psd(values)


def compose(slfs, psds) -> RadioMap:
    """Superpose emitters: X(i,j,k) = sum_r S_r(i,j) * c_r(k)."""
    if len(slfs) != len(psds):
        raise ValueError(f"{len(slfs)} SLFs but {len(psds)} PSDs")
    if len(slfs) == 0:
        raise ValueError("need at least one emitter")
    grids = np.stack([s.grid if isinstance(s, Slf) else np.asarray(s, dtype=np.float64) for s in slfs])
    specs = np.stack([p.values if isinstance(p, Psd) else np.asarray(p, dtype=np.float64) for p in psds])
    if len({g.shape for g in grids}) > 1 or len({s.shape for s in specs}) > 1:
        raise ValueError("inconsistent SLF or PSD dimensions")
    return RadioMap(np.einsum("rij,rk->ijk", grids, specs))


def sample_fibers(I: int, J: int, N: int, mode: str = "without", seed=None) -> SampleSet:
    """Draw N sensor locations uniformly from the I x J grid."""
    rng = np.random.default_rng(seed)
    if mode == "without":
        if N > I * J:
            raise ValueError(f"cannot place {N} distinct sensors on {I * J} cells")
        flat = rng.choice(I * J, size=N, replace=False)
    elif mode == "with":
        flat = rng.integers(0, I * J, size=N)
    else:
        raise ValueError(f"unknown replacement mode {mode!r}")
    ii, jj = np.unravel_index(flat, (I, J))
    return SampleSet(np.column_stack([ii, jj]), mode=mode)


# ---------------------------------------------------------------------------
# scenario files


@dataclass(frozen=True)
class Emitter:
    x: float
    y: float
    gamma: float


@dataclass(frozen=True)
class Scenario:
    """Full description of a synthetic scene; serializes to JSON."""

    I: int
    J: int
    K: int
    R: int
    emitters: tuple[Emitter, ...]
    xc: float
    eta: float
    n_subbands: int
    beta: float
    kappa: float
    seed: int
    psd_floor: float = 0.0

    def __post_init__(self):
        if self.R != len(self.emitters):
            raise ValueError(f"R={self.R} but {len(self.emitters)} emitters listed")
        if min(self.I, self.J, self.K, self.R) < 1:
            raise ValueError("I, J, K, R must all be at least 1")


def scenario_to_dict(scen: Scenario) -> dict:
    d = {
        "I": scen.I,
        "J": scen.J,
        "K": scen.K,
        "R": scen.R,
        "emitters": [{"x": e.x, "y": e.y, "gamma": e.gamma} for e in scen.emitters],
        "Xc": scen.xc,
        "eta": scen.eta,
        "n_subbands": scen.n_subbands,
        "beta": scen.beta,
        "kappa": scen.kappa,
        "seed": scen.seed,
    }
    if scen.psd_floor:
        d["psd_floor"] = scen.psd_floor
    return d


def scenario_from_dict(d: dict) -> Scenario:
    try:
        emitters = tuple(Emitter(e["x"], e["y"], e["gamma"]) for e in d["emitters"])
        return Scenario(
            I=int(d["I"]),
            J=int(d["J"]),
            K=int(d["K"]),
            R=int(d["R"]),
            emitters=emitters,
            xc=float(d["Xc"]),
            eta=float(d["eta"]),
            n_subbands=int(d["n_subbands"]),
            beta=float(d["beta"]),
            kappa=float(d["kappa"]),
            seed=int(d["seed"]),
            psd_floor=float(d.get("psd_floor", 0.0)),
        )
    except KeyError as exc:
        raise ValueError(f"scenario file missing key {exc}") from exc


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(path, scen: Scenario) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scen), fh, indent=2, sort_keys=True)
        fh.write("\n")


def generate_scene(scen: Scenario, seed=None):
    """Realize a scenario: returns (RadioMap, [Slf], [Psd]).

    `seed` overrides the scenario's stored seed, letting one scenario file
    describe a whole family of random scenes.
    """
    base = scen.seed if seed is None else seed
    slfs, psds = [], []
    for r, em in enumerate(scen.emitters):
        params = ShadowingParams(xc=scen.xc, eta=scen.eta, gamma=em.gamma, emitter=(em.x, em.y))
        slf = gen_slf(scen.I, scen.J, params, seed=[base, 11, r])
        if slf.frobenius() > scen.beta:
            raise ValueError(
                f"SLF {r} has Frobenius norm {slf.frobenius():.3f} above the configured beta={scen.beta}"
            )
        slfs.append(slf)
        psds.append(
            gen_psd(scen.K, scen.n_subbands, seed=[base, 13, r], kappa=scen.kappa, floor=scen.psd_floor)
        )
    return compose(slfs, psds), slfs, psds


# ---------------------------------------------------------------------------
# binary tensor blobs: 16-byte header (magic 'QMAP', u32 I, u32 J, u32 K,
# little-endian) followed by float64 entries in row-major (i, j, k) order


def save_map_blob(path, tensor: np.ndarray) -> None:
    t = np.ascontiguousarray(np.asarray(tensor, dtype="<f8"))
    if t.ndim == 2:
        t = t[:, :, None]
    if t.ndim != 3:
        raise ValueError("blob format holds 2-D or 3-D arrays")
    with open(path, "wb") as fh:
        fh.write(MAP_MAGIC)
        fh.write(struct.pack("<III", *t.shape))
        fh.write(t.tobytes(order="C"))


def load_map_blob(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAP_MAGIC:
        raise ValueError(f"{path} is not a radio-map blob (bad magic)")
    I, J, K = struct.unpack("<III", raw[4:16])
    data = np.frombuffer(raw[16:], dtype="<f8")
    if data.size != I * J * K:
        raise ValueError(f"{path}: payload holds {data.size} values, header says {I * J * K}")
    return data.reshape(I, J, K).astype(np.float64)
