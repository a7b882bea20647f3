"""Dense generative prior for spatial loss fields, and recovery through it.

The generator is a frozen stack of dense layers with elementwise activations
and a sigmoid output, mapping a latent code z (length D) to an I x J field in
(0, 1). Forward evaluation and the reverse-mode vector-Jacobian product are
hand-written so the solver needs no autodiff framework. Recovery alternates a
projected-gradient step on the nonnegative PSD matrix C with an unconstrained
step on the latent codes Z.
"""

from __future__ import annotations

import base64
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import quant
from .optim import AdamState, SolverDivergence, armijo_project
from .simkit import RadioMap

log = logging.getLogger(__name__)

_ACT_LIPSCHITZ = {"relu": 1.0, "tanh": 1.0, "identity": 1.0, "sigmoid": 0.25}


def _activate(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-pre))
    if name == "tanh":
        return np.tanh(pre)
    if name == "identity":
        return pre
    raise ValueError(f"unknown activation tag {name!r}")


def _activate_grad(name: str, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (pre > 0).astype(np.float64)
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "tanh":
        return 1.0 - np.square(out)
    if name == "identity":
        return np.ones_like(pre)
    raise ValueError(f"unknown activation tag {name!r}")


@dataclass(frozen=True)
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray | None
    activation: str

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("layer weight must be a matrix")
        object.__setattr__(self, "weight", w)
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float64)
            if b.shape != (w.shape[0],):
                raise ValueError("bias length must match the layer's output size")
            object.__setattr__(self, "bias", b)
        if self.activation not in _ACT_LIPSCHITZ:
            raise ValueError(f"unknown activation tag {self.activation!r}")


@dataclass(frozen=True)
class GeneratorNet:
    """Frozen dense generator; output reshaped row-major to I x J.

    The final activation must be sigmoid so generated fields live in (0, 1).
    """

    layers: tuple[DenseLayer, ...]
    out_shape: tuple[int, int]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("generator needs at least one layer")
        for prev, cur in zip(layers, layers[1:]):
            if cur.weight.shape[1] != prev.weight.shape[0]:
                raise ValueError(
                    f"layer input size {cur.weight.shape[1]} does not match "
                    f"previous output size {prev.weight.shape[0]}"
                )
        if layers[-1].activation != "sigmoid":
            raise ValueError("output layer must use a sigmoid activation")
        I, J = self.out_shape
        if layers[-1].weight.shape[0] != I * J:
            raise ValueError(f"final layer emits {layers[-1].weight.shape[0]} values, grid needs {I * J}")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]


@dataclass
class DgmVars:
    """Solver unknowns: latent codes Z (R, D) and nonnegative PSDs C (K, R)."""

    Z: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=np.float64)
        self.C = np.asarray(self.C, dtype=np.float64)
        if self.Z.ndim != 2 or self.C.ndim != 2 or self.C.shape[1] != self.Z.shape[0]:
            raise ValueError("Z must be (R, D) and C must be (K, R)")

    def copy(self) -> "DgmVars":
        return DgmVars(self.Z.copy(), self.C.copy())


@dataclass(frozen=True)
class DgmConfig:
    mu1: float = 1e-3  # latent-code regularization (soft ball constraint)
    mu2: float = 1e-3  # PSD regularization
    step_z: float = 0.006
    step_c: float = 0.003
    optimizer: str = "adaptive"
    max_iters: int = 300
    rel_tol: float = 1e-3
    patience: int = 5  # consecutive sub-tolerance iterations required to stop
    seed: int = 0
    max_restarts: int = 3

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.optimizer not in ("adaptive", "plain-gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def _forward_cached(net: GeneratorNet, z: np.ndarray):
    h = np.asarray(z, dtype=np.float64)
    if h.shape != (net.input_dim,):
        raise ValueError(f"latent code must have length {net.input_dim}, got {h.shape}")
    pres, outs = [], []
    for layer in net.layers:
        pre = layer.weight @ h
        if layer.bias is not None:
            pre = pre + layer.bias
        h = _activate(layer.activation, pre)
        pres.append(pre)
        outs.append(h)
    return h, pres, outs


def gen_forward(net: GeneratorNet, z: np.ndarray) -> np.ndarray:
    """Evaluate the generator: I x J field with entries in (0, 1)."""
    out, _, _ = _forward_cached(net, z)
    return out.reshape(net.out_shape)


def gen_vjp(net: GeneratorNet, z: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product d<upstream, g(z)>/dz via a reverse sweep."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != net.out_shape:
        raise ValueError(f"upstream must match the {net.out_shape} output grid")
    _, pres, outs = _forward_cached(net, z)
    g = upstream.ravel()
    for layer, pre, out in zip(reversed(net.layers), reversed(pres), reversed(outs)):
        g = layer.weight.T @ (g * _activate_grad(layer.activation, pre, out))
    return g


def spectral_norm(w: np.ndarray, tol: float = 1e-6, max_iters: int = 5000) -> float:
    """Largest singular value by power iteration on w^T w."""
    w = np.asarray(w, dtype=np.float64)
    v = np.full(w.shape[1], 1.0 / np.sqrt(w.shape[1]))
    sigma = 0.0
    for _ in range(max_iters):
        u = w @ v
        v_new = w.T @ u
        norm = np.linalg.norm(v_new)
        if norm == 0:
            return 0.0
        v_new /= norm
        sigma_new = np.linalg.norm(w @ v_new)
        if abs(sigma_new - sigma) <= tol * max(sigma_new, 1.0):
            return float(sigma_new)
        sigma, v = sigma_new, v_new
    return float(sigma)


def lipschitz_product(net) -> float:
    """Product of per-layer activation Lipschitz constants and spectral norms.

    Accepts a GeneratorNet or any iterable of DenseLayer.
    """
    layers = net.layers if isinstance(net, GeneratorNet) else tuple(net)
    p = 1.0
    for layer in layers:
        p *= _ACT_LIPSCHITZ[layer.activation] * spectral_norm(layer.weight)
    return p


def _predict_fibers(svals: np.ndarray, C: np.ndarray, locations: np.ndarray) -> np.ndarray:
    loc = np.asarray(locations, dtype=np.int64).reshape(-1, 2)
    s_fib = svals[:, loc[:, 0], loc[:, 1]]  # (R, N)
    return np.einsum("rn,kr->nk", s_fib, C), s_fib


def dgm_reconstruct(net: GeneratorNet, v: DgmVars) -> RadioMap:
    svals = np.stack([gen_forward(net, z) for z in v.Z])
    return RadioMap(np.maximum(np.einsum("rij,kr->ijk", svals, v.C), 0.0))


def dgm_objective(v: DgmVars, net: GeneratorNet, obs: quant.ObservationSet, spec: quant.QuantizerSpec, cfg: DgmConfig) -> float:
    """Observed-fiber negative log-likelihood plus mu1|Z|^2 + mu2|C|^2."""
    svals = np.stack([gen_forward(net, z) for z in v.Z])
    x_fib, _ = _predict_fibers(svals, v.C, obs.omega.locations)
    nll, _ = quant.nll_entry(obs.y, np.maximum(x_fib, 0.0), spec)
    return (
        float(nll.sum())
        + cfg.mu1 * float(np.sum(np.square(v.Z)))
        + cfg.mu2 * float(np.sum(np.square(v.C)))
    )


def dgm_gradients(v: DgmVars, net: GeneratorNet, obs: quant.ObservationSet, spec: quant.QuantizerSpec, cfg: DgmConfig):
    """Analytic gradients (g_Z, g_C) of the regularized objective."""
    loc = obs.omega.locations
    svals = np.stack([gen_forward(net, z) for z in v.Z])
    x_fib, s_fib = _predict_fibers(svals, v.C, loc)
    _, gx = quant.nll_entry(obs.y, np.maximum(x_fib, 0.0), spec)  # (N, K)

    g_c = np.einsum("nk,rn->kr", gx, s_fib) + 2.0 * cfg.mu2 * v.C
    gc_fib = gx @ v.C  # (N, R)
    g_z = 2.0 * cfg.mu1 * v.Z
    I, J = net.out_shape
    for r in range(v.Z.shape[0]):
        upstream = np.zeros((I, J))
        np.add.at(upstream, (loc[:, 0], loc[:, 1]), gc_fib[:, r])
        g_z[r] += gen_vjp(net, v.Z[r], upstream)
    return g_z, g_c


def dgm_solve(obs: quant.ObservationSet, spec: quant.QuantizerSpec, net: GeneratorNet, R: int, cfg: DgmConfig):
    """Alternating recovery of (Z, C); returns (DgmVars, RadioMap, trace).

    Latents start standard normal and C uniform on [0, 1]. Each iteration
    takes a projected step on C and an unconstrained step on Z. If the
    objective blows up past 10x its initial value, the solve restarts with a
    redrawn latent init (seed incremented) and halved step sizes, up to
    max_restarts times; NaN objectives abort.
    """
    if len(obs.omega) < 1:
        raise ValueError("need at least one observed fiber")
    last_err = None
    for attempt in range(cfg.max_restarts + 1):
        scale = 0.5 ** attempt
        run_cfg = DgmConfig(
            mu1=cfg.mu1,
            mu2=cfg.mu2,
            step_z=cfg.step_z * scale,
            step_c=cfg.step_c * scale,
            optimizer=cfg.optimizer,
            max_iters=cfg.max_iters,
            rel_tol=cfg.rel_tol,
            patience=cfg.patience,
            seed=cfg.seed + attempt,
            max_restarts=0,
        )
        try:
            return _dgm_solve_once(obs, spec, net, R, run_cfg)
        except SolverDivergence as err:
            last_err = err
            if attempt < cfg.max_restarts:
                log.warning(
                    "solver diverged (%s); restarting with redrawn latents (seed %d) and halved steps",
                    err,
                    cfg.seed + attempt + 1,
                )
    raise SolverDivergence(f"solver diverged after {cfg.max_restarts} restarts: {last_err}")


def _dgm_solve_once(obs, spec, net, R, cfg: DgmConfig):
    rng = np.random.default_rng(cfg.seed)
    v = DgmVars(
        Z=rng.standard_normal((R, net.input_dim)),
        C=rng.uniform(0.0, 1.0, (obs.y.shape[1], R)),
    )

    def objective(vv):
        return dgm_objective(vv, net, obs, spec, cfg)

    adaptive = cfg.optimizer == "adaptive"
    if adaptive:
        opts = {"C": AdamState(v.C.shape, cfg.step_c), "Z": AdamState(v.Z.shape, cfg.step_z)}

    t0 = time.perf_counter()
    obj0 = objective(v)
    if not np.isfinite(obj0):
        raise SolverDivergence(f"initial objective is not finite: {obj0}")
    trace = [(0, obj0, 0.0)]
    guard = 10.0 * max(obj0, 1.0)

    prev = obj0
    quiet = 0
    for it in range(1, cfg.max_iters + 1):
        for name in ("C", "Z"):
            g_z, g_c = dgm_gradients(v, net, obs, spec, cfg)
            grad = g_c if name == "C" else g_z
            cur = getattr(v, name)
            project = (lambda x: np.maximum(x, 0.0)) if name == "C" else (lambda x: x)
            if adaptive:
                setattr(v, name, project(cur - opts[name].direction(grad)))
                obj = objective(v)
            else:

                def block_obj(x, _name=name):
                    setattr(v, _name, x)
                    return objective(v)

                new, obj = armijo_project(cur, grad, cfg.step_c if name == "C" else cfg.step_z, block_obj, project)
                setattr(v, name, new)
            if np.isnan(obj):
                raise SolverDivergence(f"objective became NaN at iteration {it} during the {name} update")
            if obj > guard:
                raise SolverDivergence(f"objective rose above 10x initial at iteration {it}")
        trace.append((it, obj, (time.perf_counter() - t0) * 1e3))
        armed = obj <= obj0 * (1.0 - cfg.rel_tol)
        if armed and abs(obj - prev) < cfg.rel_tol * max(abs(prev), 1e-12):
            quiet += 1
            if quiet >= cfg.patience:
                break
        else:
            quiet = 0
        prev = obj

    return v, dgm_reconstruct(net, v), trace


# ---------------------------------------------------------------------------
# generator weight files: a JSON manifest plus one float32 little-endian blob
# holding every tensor row-major, concatenated in manifest order (weight then
# bias per layer). The blob lives in a sidecar file or base64-embedded.

FORMAT_VERSION = 1


def save_generator(path, net: GeneratorNet, embed: bool = False) -> None:
    path = Path(path)
    chunks = []
    layer_entries = []
    for layer in net.layers:
        chunks.append(np.ascontiguousarray(layer.weight, dtype="<f4").tobytes())
        if layer.bias is not None:
            chunks.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
        layer_entries.append(
            {
                "rows": int(layer.weight.shape[0]),
                "cols": int(layer.weight.shape[1]),
                "activation": layer.activation,
                "has_bias": layer.bias is not None,
            }
        )
    blob = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "D": net.input_dim,
        "I": net.out_shape[0],
        "J": net.out_shape[1],
        "layers": layer_entries,
    }
    if embed:
        manifest["blob_base64"] = base64.b64encode(blob).decode("ascii")
    else:
        sidecar = path.with_suffix(path.suffix + ".bin") if path.suffix != ".bin" else path
        manifest["blob_file"] = sidecar.name
        sidecar.write_bytes(blob)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_generator(path) -> GeneratorNet:
    path = Path(path)
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported generator format version {manifest.get('format_version')}")
    if "blob_base64" in manifest:
        blob = base64.b64decode(manifest["blob_base64"])
    else:
        blob = (path.parent / manifest["blob_file"]).read_bytes()
    data = np.frombuffer(blob, dtype="<f4")
    layers = []
    pos = 0
    for entry in manifest["layers"]:
        rows, cols = entry["rows"], entry["cols"]
        w = data[pos : pos + rows * cols].reshape(rows, cols).astype(np.float64)
        pos += rows * cols
        b = None
        if entry["has_bias"]:
            b = data[pos : pos + rows].astype(np.float64)
            pos += rows
        layers.append(DenseLayer(w, b, entry["activation"]))
    if pos != data.size:
        raise ValueError(f"weight blob holds {data.size} floats, manifest consumes {pos}")
    return GeneratorNet(tuple(layers), (manifest["I"], manifest["J"]))
