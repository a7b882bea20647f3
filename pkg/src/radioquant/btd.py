"""Radio-map recovery with a block-term tensor model.

The map is parameterized as X(i,j,k) = sum_r (A_r B_r^T)(i,j) * C(k,r) with
nonnegative factors; recovery minimizes the quantized-observation negative
log-likelihood plus squared-Frobenius regularizers by block-coordinate
projected gradient (C, then A, then B per iteration).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import quant
from .optim import AdamState, SolverDivergence, armijo_project
from .simkit import RadioMap, load_map_blob, save_map_blob


@dataclass
class BtdFactors:
    """Stacked factor blocks: A (R,I,L), B (R,J,L), C (K,R)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.B = np.asarray(self.B, dtype=np.float64)
        self.C = np.asarray(self.C, dtype=np.float64)
        if self.A.ndim != 3 or self.B.ndim != 3 or self.C.ndim != 2:
            raise ValueError("A and B must be (R, rows, L); C must be (K, R)")
        ra, _, la = self.A.shape
        rb, _, lb = self.B.shape
        if ra != rb or la != lb or self.C.shape[1] != ra:
            raise ValueError("inconsistent factor dimensions")

    @property
    def R(self) -> int:
        return self.A.shape[0]

    def slf(self, r: int) -> np.ndarray:
        return self.A[r] @ self.B[r].T

    def copy(self) -> "BtdFactors":
        return BtdFactors(self.A.copy(), self.B.copy(), self.C.copy())


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters for the block-coordinate solvers.

    Regularization weights apply to the summed squared Frobenius norms of
    each block. Step sizes follow the reference settings: 0.003 for C and
    0.006 for the spatial blocks; stopping at relative objective change below
    1e-3 or 300 iterations.
    """

    lambda1: float = 1e-3
    lambda2: float = 1e-3
    lambda3: float = 1e-3
    step_a: float = 0.006
    step_b: float = 0.006
    step_c: float = 0.003
    optimizer: str = "adaptive"
    max_iters: int = 300
    rel_tol: float = 1e-3
    patience: int = 5  # consecutive sub-tolerance iterations required to stop
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.optimizer not in ("adaptive", "plain-gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class BtdDims:
    I: int
    J: int
    K: int
    R: int
    L: int = 10


def btd_predict(factors: BtdFactors, locations: np.ndarray) -> np.ndarray:
    """Predicted power fibers at the given (i, j) locations: (N, K)."""
    loc = np.asarray(locations, dtype=np.int64).reshape(-1, 2)
    ii, jj = loc[:, 0], loc[:, 1]
    s_fib = np.einsum("rnl,rnl->rn", factors.A[:, ii, :], factors.B[:, jj, :])
    return np.einsum("rn,kr->nk", s_fib, factors.C)


def btd_reconstruct(factors: BtdFactors) -> RadioMap:
    """Full-grid reconstruction from the factor blocks."""
    slfs = np.einsum("ril,rjl->rij", factors.A, factors.B)
    return RadioMap(np.maximum(np.einsum("rij,kr->ijk", slfs, factors.C), 0.0))


def _reg_value(factors: BtdFactors, cfg: SolverConfig) -> float:
    return (
        cfg.lambda1 * float(np.sum(np.square(factors.A)))
        + cfg.lambda2 * float(np.sum(np.square(factors.B)))
        + cfg.lambda3 * float(np.sum(np.square(factors.C)))
    )


def btd_objective(factors: BtdFactors, obs: quant.ObservationSet, spec: quant.QuantizerSpec, cfg: SolverConfig) -> float:
    """Observed-fiber negative log-likelihood plus quadratic regularizers."""
    x_fib = np.maximum(btd_predict(factors, obs.omega.locations), 0.0)
    nll, _ = quant.nll_entry(obs.y, x_fib, spec)
    return float(nll.sum()) + _reg_value(factors, cfg)


def btd_gradients(factors: BtdFactors, obs: quant.ObservationSet, spec: quant.QuantizerSpec, cfg: SolverConfig):
    """Analytic objective gradients for the A, B, C blocks."""
    loc = obs.omega.locations
    ii, jj = loc[:, 0], loc[:, 1]
    a_fib = factors.A[:, ii, :]  # (R, N, L)
    b_fib = factors.B[:, jj, :]
    s_fib = np.einsum("rnl,rnl->rn", a_fib, b_fib)
    x_fib = np.maximum(np.einsum("rn,kr->nk", s_fib, factors.C), 0.0)
    _, gx = quant.nll_entry(obs.y, x_fib, spec)  # (N, K)

    g_c = np.einsum("nk,rn->kr", gx, s_fib) + 2.0 * cfg.lambda3 * factors.C
    gc_fib = gx @ factors.C  # (N, R)
    g_a = 2.0 * cfg.lambda1 * factors.A
    g_b = 2.0 * cfg.lambda2 * factors.B
    for r in range(factors.R):
        np.add.at(g_a[r], ii, gc_fib[:, r, None] * b_fib[r])
        np.add.at(g_b[r], jj, gc_fib[:, r, None] * a_fib[r])
    return g_a, g_b, g_c


def btd_solve(obs: quant.ObservationSet, spec: quant.QuantizerSpec, dims: BtdDims, cfg: SolverConfig):
    """Block-coordinate recovery; returns (factors, RadioMap, trace).

    C is initialized uniform on [0, 1]; A and B start at a tiny positive
    perturbation of zero (uniform on [0, 1e-6]) so the all-zero prediction
    plateau has a nonzero escape direction. Each iteration updates C, A, B
    in that order with projection onto the nonnegative orthant, and stops
    when the relative objective change drops below rel_tol.

    The trace is a list of (iteration, objective, wall_ms) tuples with entry
    0 recording the initial objective.
    """
    if len(obs.omega) < 1:
        raise ValueError("need at least one observed fiber")
    rng = np.random.default_rng(cfg.seed)
    factors = BtdFactors(
        A=rng.uniform(0.0, 1e-6, (dims.R, dims.I, dims.L)),
        B=rng.uniform(0.0, 1e-6, (dims.R, dims.J, dims.L)),
        C=rng.uniform(0.0, 1.0, (dims.K, dims.R)),
    )

    def objective(f):
        return btd_objective(f, obs, spec, cfg)

    steps = {"A": cfg.step_a, "B": cfg.step_b, "C": cfg.step_c}
    adaptive = cfg.optimizer == "adaptive"
    if adaptive:
        opts = {name: AdamState(getattr(factors, name).shape, steps[name]) for name in "CAB"}

    t0 = time.perf_counter()
    obj0 = objective(factors)
    if not np.isfinite(obj0):
        raise SolverDivergence(f"initial objective is not finite: {obj0}")
    trace = [(0, obj0, 0.0)]
    guard = 10.0 * max(obj0, 1.0)
    retries = 0

    prev = obj0
    quiet = 0
    for it in range(1, cfg.max_iters + 1):
        for name in ("C", "A", "B"):
            while True:
                before = getattr(factors, name).copy()
                grads = dict(zip("ABC", btd_gradients(factors, obs, spec, cfg)))
                if adaptive:
                    new = np.maximum(before - opts[name].direction(grads[name]), 0.0)
                    setattr(factors, name, new)
                    obj = objective(factors)
                else:

                    def block_obj(x, _name=name):
                        setattr(factors, _name, x)
                        return objective(factors)

                    new, obj = armijo_project(
                        before, grads[name], steps[name], block_obj, lambda x: np.maximum(x, 0.0)
                    )
                    setattr(factors, name, new)
                if np.isnan(obj):
                    raise SolverDivergence(
                        f"objective became NaN at iteration {it} during the {name} update"
                    )
                if obj > guard and retries < 3:
                    # divergence guard: undo the block, halve every step size,
                    # and retry the same block
                    setattr(factors, name, before)
                    retries += 1
                    for k in steps:
                        steps[k] *= 0.5
                    if adaptive:
                        for o in opts.values():
                            o.step *= 0.5
                    continue
                break
        trace.append((it, obj, (time.perf_counter() - t0) * 1e3))
        # the relative-change stop only arms once the objective has moved off
        # its initial plateau (near-zero spatial factors make early progress
        # invisible to the cost), and must hold for `patience` consecutive
        # iterations: adaptive steps give noisy per-iteration changes
        armed = obj <= obj0 * (1.0 - cfg.rel_tol)
        if armed and abs(obj - prev) < cfg.rel_tol * max(abs(prev), 1e-12):
            quiet += 1
            if quiet >= cfg.patience:
                break
        else:
            quiet = 0
        prev = obj

    return factors, btd_reconstruct(factors), trace


def write_trace_csv(path, trace) -> None:
    with open(path, "w") as fh:
        fh.write("iter,objective,wall_ms\n")
        for it, obj, ms in trace:
            fh.write(f"{it},{obj:.12g},{ms:.3f}\n")


# ---------------------------------------------------------------------------
# factor persistence: one tensor blob per matrix plus a JSON manifest


def save_factors(dirpath, factors: BtdFactors) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    R, I, L = factors.A.shape
    J = factors.B.shape[1]
    K = factors.C.shape[0]
    manifest = {"R": R, "L": L, "I": I, "J": J, "K": K}
    with open(d / "factors.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for r in range(R):
        save_map_blob(d / f"A_{r:02d}.qmap", factors.A[r])
        save_map_blob(d / f"B_{r:02d}.qmap", factors.B[r])
    save_map_blob(d / "C.qmap", factors.C)


def load_factors(dirpath) -> BtdFactors:
    d = Path(dirpath)
    with open(d / "factors.json") as fh:
        man = json.load(fh)
    A = np.stack([load_map_blob(d / f"A_{r:02d}.qmap")[:, :, 0] for r in range(man["R"])])
    B = np.stack([load_map_blob(d / f"B_{r:02d}.qmap")[:, :, 0] for r in range(man["R"])])
    C = load_map_blob(d / "C.qmap")[:, :, 0]
    return BtdFactors(A, B, C)
