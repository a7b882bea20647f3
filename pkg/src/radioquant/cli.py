"""Command-line harness: scenario generation, bin design, quantization,
recovery, parameter sweeps, and bound evaluation.

Configuration precedence is command-line flags > config file > built-in
defaults. Every command is deterministic given its config and seed. Exit
codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, btd, dgm, quant, simkit
from .optim import SolverDivergence


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "bits": 3,
    "sigma2": 1.7,
    "a": 1e-6,
    "rho": 0.1,
    "model": "btd",
    "L": 10,
    "n_trials": 10,
    "seed": None,  # defaults to the scenario's seed
    "workers": 1,
    "out": ".",
    "n_maps": 1000,
    "max_per_map": 20000,
    "delta": 0.1,
    "nu": 0.0,
}

SWEEP_AXES = ("rho", "bits", "eta", "Xc", "R", "Rhat")


# ---------------------------------------------------------------------------
# pipeline pieces shared by the subcommands


def design_scenario_bins(
    scen: simkit.Scenario,
    bits: int,
    sigma2: float,
    a: float,
    n_maps: int = 1000,
    max_per_map: int = 20000,
    randomize_emitters: bool = True,
) -> quant.QuantizerSpec:
    """Design boundaries from transformed entries pooled across simulated maps.

    Each map redraws the random scene (and optionally the emitter placement)
    from the scenario's parameter family; pooling the transformed entries
    before quantile extraction averages the per-map empirical CDFs.
    """
    pools = []
    for t in range(n_maps):
        scen_t = _randomize_emitters(scen, t) if randomize_emitters else scen
        radio_map, _, _ = simkit.generate_scene(scen_t, seed=scen.seed + 50_000 + t)
        m = quant.log_transform(radio_map.tensor, a).ravel()
        if m.size > max_per_map:
            keep = np.random.default_rng([scen.seed, 47, t]).choice(m.size, max_per_map, replace=False)
            m = m[keep]
        pools.append(m)
    return quant.make_quantizer(np.concatenate(pools), bits, a, sigma2)


def _randomize_emitters(scen: simkit.Scenario, index: int) -> simkit.Scenario:
    rng = np.random.default_rng([scen.seed, 41, index])
    emitters = tuple(
        simkit.Emitter(
            x=float(rng.uniform(0, scen.I - 1)),
            y=float(rng.uniform(0, scen.J - 1)),
            gamma=scen.emitters[r % len(scen.emitters)].gamma,
        )
        for r in range(scen.R)
    )
    return dataclasses.replace(scen, emitters=emitters)


def _with_emitter_count(scen: simkit.Scenario, R: int, salt: int) -> simkit.Scenario:
    rng = np.random.default_rng([scen.seed, 29, salt, R])
    emitters = tuple(
        simkit.Emitter(
            x=float(rng.uniform(0, scen.I - 1)),
            y=float(rng.uniform(0, scen.J - 1)),
            gamma=scen.emitters[r % len(scen.emitters)].gamma,
        )
        for r in range(R)
    )
    return dataclasses.replace(scen, R=R, emitters=emitters)


def _solver_config(overrides: dict | None, model: str, seed: int):
    """Build the solver config; options naming only the other model's fields
    are ignored so one experiment config can drive either solver."""
    overrides = dict(overrides or {})
    overrides.setdefault("seed", seed)
    cls = btd.SolverConfig if model == "btd" else dgm.DgmConfig
    valid = {f.name for f in dataclasses.fields(cls)}
    other = {f.name for f in dataclasses.fields(dgm.DgmConfig if model == "btd" else btd.SolverConfig)}
    unknown = set(overrides) - valid - other
    if unknown:
        raise ConfigError(f"unknown solver option(s): {sorted(unknown)}")
    try:
        return cls(**{k: v for k, v in overrides.items() if k in valid})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def sample_and_quantize(
    truth: simkit.RadioMap,
    qspec: quant.QuantizerSpec,
    rho: float,
    sample_seed,
    dither_seed: int,
) -> quant.ObservationSet:
    I, J, _ = truth.shape
    n = max(1, round(rho * I * J))
    omega = simkit.sample_fibers(I, J, n, "without", seed=sample_seed)
    fibers = truth.tensor[omega.locations[:, 0], omega.locations[:, 1], :]
    m_fib = quant.log_transform(fibers, qspec.a)
    return quant.quantize_fibers(m_fib, omega, qspec, seed=dither_seed)


def recover_map(
    obs: quant.ObservationSet,
    qspec: quant.QuantizerSpec,
    model: str,
    *,
    dims: btd.BtdDims | None = None,
    net: dgm.GeneratorNet | None = None,
    R: int | None = None,
    solver_cfg=None,
):
    """Dispatch to the requested solver; returns (reconstruction, trace)."""
    if model == "btd":
        if dims is None:
            raise ConfigError("tensor-model recovery needs factor dimensions")
        factors, recon, trace = btd.btd_solve(obs, qspec, dims, solver_cfg or btd.SolverConfig())
        return recon, trace
    if model == "dgm":
        if net is None:
            raise ConfigError("generative-model recovery needs a generator weight file")
        _, recon, trace = dgm.dgm_solve(obs, qspec, net, R, solver_cfg or dgm.DgmConfig())
        return recon, trace
    raise ConfigError(f"unknown model {model!r}")


def run_trial(
    scen: simkit.Scenario,
    qspec: quant.QuantizerSpec,
    rho: float,
    model: str,
    trial: int,
    base_seed: int,
    *,
    L: int = 10,
    R_hat: int | None = None,
    net: dgm.GeneratorNet | None = None,
    solver_overrides: dict | None = None,
) -> float:
    """One end-to-end generate / sense / recover pass; returns the LNRE."""
    truth, _, _ = simkit.generate_scene(scen, seed=scen.seed + 100_000 + trial)
    obs = sample_and_quantize(
        truth, qspec, rho, sample_seed=[base_seed, 3, trial], dither_seed=base_seed + 7700 + trial
    )
    solver_cfg = _solver_config(solver_overrides, model, seed=base_seed + trial)
    r_solve = R_hat if R_hat is not None else scen.R
    dims = btd.BtdDims(scen.I, scen.J, scen.K, R=r_solve, L=L)
    recon, _ = recover_map(obs, qspec, model, dims=dims, net=net, R=r_solve, solver_cfg=solver_cfg)
    return analysis.lnre(recon, truth, qspec.a)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(opts: dict) -> int:
    # the scene is fully determined by the scenario file; --seed only drives
    # sensing and solver randomness in the downstream commands
    scen = _load_scenario(opts)
    out = _outdir(opts)
    radio_map, slfs, psds = simkit.generate_scene(scen)
    simkit.save_map_blob(out / "truth.qmap", radio_map.tensor)
    simkit.save_map_blob(out / "slfs.qmap", np.stack([s.grid for s in slfs], axis=2))
    simkit.save_map_blob(out / "psds.qmap", np.stack([p.values for p in psds], axis=1)[:, :, None])
    simkit.save_scenario(out / "scenario.json", scen)
    print(f"wrote truth.qmap, slfs.qmap, psds.qmap, scenario.json to {out}")
    return 0


def cmd_design_bins(opts: dict) -> int:
    scen = _load_scenario(opts)
    qspec = design_scenario_bins(
        scen,
        bits=int(opts["bits"]),
        sigma2=float(opts["sigma2"]),
        a=float(opts["a"]),
        n_maps=int(opts["n_maps"]),
        max_per_map=int(opts["max_per_map"]),
    )
    out = _outdir(opts)
    quant.save_quantizer(out / "quantizer.json", qspec)
    print(f"wrote quantizer.json ({qspec.n_symbols} levels) to {out}")
    return 0


def cmd_quantize(opts: dict) -> int:
    scen = _load_scenario(opts)
    qspec = _load_quantizer(opts)
    out = _outdir(opts)
    seed = _opt_seed(opts, scen)
    truth, _, _ = simkit.generate_scene(scen)
    obs = sample_and_quantize(
        truth, qspec, float(opts["rho"]), sample_seed=[seed, 3], dither_seed=seed + 7700
    )
    quant.save_observations(out / "observations.json", obs)
    print(f"wrote observations.json ({len(obs.omega)} fibers) to {out}")
    return 0


def cmd_recover(opts: dict) -> int:
    scen = _load_scenario(opts)
    qspec = _load_quantizer(opts)
    out = _outdir(opts)
    obs_path = opts.get("observations") or out / "observations.json"
    if not Path(obs_path).exists():
        raise ConfigError(f"observations file not found: {obs_path}")
    obs = quant.load_observations(obs_path)
    model = opts["model"]
    net = _load_weights(opts) if model == "dgm" else None
    r_solve = int(opts["rhat"]) if opts.get("rhat") is not None else scen.R
    solver_cfg = _solver_config(opts.get("solver"), model, seed=_opt_seed(opts, scen))
    dims = btd.BtdDims(scen.I, scen.J, scen.K, R=r_solve, L=int(opts["L"]))
    recon, trace = recover_map(obs, qspec, model, dims=dims, net=net, R=r_solve, solver_cfg=solver_cfg)

    simkit.save_map_blob(out / "recon.qmap", recon.tensor)
    btd.write_trace_csv(out / "trace.csv", trace)
    truth, _, _ = simkit.generate_scene(scen)
    metrics = {
        "lnre": analysis.lnre(recon, truth, qspec.a),
        "iterations": trace[-1][0],
        "final_objective": trace[-1][1],
    }
    with open(out / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"recovered map: LNRE={metrics['lnre']:.4f} after {metrics['iterations']} iterations")
    return 0


def _sweep_value_scenario(scen: simkit.Scenario, axis: str, value) -> tuple[simkit.Scenario, dict]:
    """Scenario variant plus pipeline overrides for one sweep point."""
    if axis == "rho":
        return scen, {"rho": float(value)}
    if axis == "bits":
        return scen, {"bits": int(value)}
    if axis == "eta":
        return dataclasses.replace(scen, eta=float(value)), {}
    if axis == "Xc":
        return dataclasses.replace(scen, xc=float(value)), {}
    if axis == "R":
        return _with_emitter_count(scen, int(value), salt=1), {}
    if axis == "Rhat":
        return scen, {"R_hat": int(value)}
    raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def cmd_sweep(opts: dict) -> int:
    scen = _load_scenario(opts)
    sweep = opts.get("sweep") or {}
    axis = opts.get("axis") or sweep.get("axis")
    values = opts.get("values") or sweep.get("values")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError("sweep needs a non-empty list of axis values")
    n_trials = int(opts["n_trials"])
    model = opts["model"]
    base_seed = _opt_seed(opts, scen)
    net = _load_weights(opts) if model == "dgm" else None
    out = _outdir(opts)

    tasks = []
    for vi, value in enumerate(values):
        scen_v, over = _sweep_value_scenario(scen, axis, value)
        bits = int(over.get("bits", opts["bits"]))
        qspec = design_scenario_bins(
            scen_v,
            bits=bits,
            sigma2=float(opts["sigma2"]),
            a=float(opts["a"]),
            n_maps=int(opts["n_maps"]),
            max_per_map=int(opts["max_per_map"]),
        )
        for trial in range(n_trials):
            tasks.append((vi, value, trial, scen_v, qspec, over))

    rows = []
    failure = None
    workers = int(opts["workers"])
    try:
        if workers > 1:
            import concurrent.futures

            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                futs = [pool.submit(_sweep_task, t, opts, net) for t in tasks]
                for t, fut in zip(tasks, futs):
                    rows.append((t[0], t[1], t[2], fut.result()))
        else:
            for t in tasks:
                rows.append((t[0], t[1], t[2], _sweep_task(t, opts, net)))
    except (SolverDivergence, FloatingPointError) as exc:
        failure = exc

    _write_sweep_csvs(out, axis, rows, values)
    if failure is not None:
        print(f"sweep aborted after {len(rows)} trials: {failure}", file=sys.stderr)
        print(f"partial results retained in {out / 'sweep.csv'}", file=sys.stderr)
        return 3
    _plot_sweep(out, axis)
    print(f"wrote sweep.csv, sweep_summary.csv, sweep.png to {out}")
    return 0


def _sweep_task(task, opts: dict, net) -> float:
    _, _, trial, scen_v, qspec, over = task
    return run_trial(
        scen_v,
        qspec,
        rho=float(over.get("rho", opts["rho"])),
        model=opts["model"],
        trial=trial,
        base_seed=_opt_seed(opts, scen_v),
        L=int(opts["L"]),
        R_hat=over.get("R_hat"),
        net=net,
        solver_overrides=opts.get("solver"),
    )


def _write_sweep_csvs(out: Path, axis: str, rows, values) -> None:
    with open(out / "sweep.csv", "w") as fh:
        fh.write(f"{axis},trial,lnre\n")
        for _, value, trial, val in rows:
            fh.write(f"{_fmt(value)},{trial},{_fmt(val)}\n")
    with open(out / "sweep_summary.csv", "w") as fh:
        fh.write(f"{axis},mean_lnre,std_lnre,n\n")
        for vi, value in enumerate(values):
            got = [r[3] for r in rows if r[0] == vi]
            if not got:
                continue
            fh.write(f"{_fmt(value)},{_fmt(float(np.mean(got)))},{_fmt(float(np.std(got)))},{len(got)}\n")


def _plot_sweep(out: Path, axis: str) -> None:
    # the plot is rendered purely from the summary CSV
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs, means, stds = [], [], []
    with open(out / "sweep_summary.csv") as fh:
        next(fh)
        for line in fh:
            v, m, s, _ = line.strip().split(",")
            xs.append(float(v))
            means.append(float(m))
            stds.append(float(s))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(xs, means, yerr=stds, marker="o", capsize=3)
    ax.set_xlabel(axis)
    ax.set_ylabel("LNRE")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out / "sweep.png", metadata={"Date": None})
    plt.close(fig)


def cmd_bounds(opts: dict) -> int:
    scen = _load_scenario(opts)
    qspec = _load_quantizer(opts)
    out = _outdir(opts)
    model = opts["model"]
    values = opts.get("values")
    if not values:
        raise ConfigError("bounds needs --values with sample counts N")

    truth, slfs, psds = simkit.generate_scene(scen)
    beta = max(s.frobenius() for s in slfs)
    kappa = max(p.norm() for p in psds)
    alpha = float(truth.tensor.max())
    constants = quant.compute_constants(qspec, alpha)

    net = _load_weights(opts) if model == "dgm" else None
    rows = []
    for n in values:
        p = analysis.BoundParams(
            I=scen.I,
            J=scen.J,
            K=scen.K,
            N=int(n),
            R=scen.R,
            beta=beta,
            kappa=kappa,
            alpha=alpha,
            a=qspec.a,
            delta=float(opts["delta"]),
            nu=float(opts["nu"]),
            L=int(opts["L"]),
            D=net.input_dim if net else None,
            P=dgm.lipschitz_product(net) if net else None,
            q=(math.sqrt(net.input_dim) + 3.0) if net else None,
        )
        tau = analysis.tau_btd(p) if model == "btd" else analysis.tau_dgm(p)
        bound = analysis.error_bound(p, tau, constants)
        achieved = ""
        if opts.get("achieved"):
            rho = int(n) / (scen.I * scen.J)
            achieved = _fmt(
                run_trial(
                    scen,
                    qspec,
                    rho,
                    model,
                    trial=0,
                    base_seed=_opt_seed(opts, scen),
                    L=int(opts["L"]),
                    net=net,
                    solver_overrides=opts.get("solver"),
                )
            )
        rows.append((int(n), tau, bound, achieved))

    with open(out / "bounds.csv", "w") as fh:
        fh.write("N,tau,bound,lnre_achieved\n")
        for n, tau, bound, achieved in rows:
            fh.write(f"{n},{_fmt(tau)},{_fmt(bound)},{achieved}\n")
    print(f"wrote bounds.csv to {out}")
    return 0


# ---------------------------------------------------------------------------
# option plumbing


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _outdir(opts: dict) -> Path:
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _opt_seed(opts: dict, scen: simkit.Scenario) -> int:
    return int(opts["seed"]) if opts.get("seed") is not None else scen.seed


def _load_scenario(opts: dict) -> simkit.Scenario:
    path = opts.get("scenario")
    if not path:
        raise ConfigError("no scenario file given (--scenario or config key 'scenario')")
    if not Path(path).exists():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        return simkit.load_scenario(path)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad scenario file {path}: {exc}") from exc


def _load_quantizer(opts: dict) -> quant.QuantizerSpec:
    path = opts.get("quantizer") or Path(opts["out"]) / "quantizer.json"
    if not Path(path).exists():
        raise ConfigError(f"quantizer file not found: {path}")
    try:
        return quant.load_quantizer(path)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad quantizer file {path}: {exc}") from exc


def _load_weights(opts: dict) -> dgm.GeneratorNet:
    path = opts.get("weights")
    if not path:
        raise ConfigError("model=dgm needs a generator weight file (--weights)")
    if not Path(path).exists():
        raise ConfigError(f"generator weight file not found: {path}")
    try:
        return dgm.load_generator(path)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad generator weight file {path}: {exc}") from exc


def _merge_options(args: argparse.Namespace) -> dict:
    cfg = {}
    if args.config:
        if not Path(args.config).exists():
            raise ConfigError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad config file {args.config}: {exc}") from exc
        base = Path(args.config).parent
        for key in ("scenario", "quantizer", "weights", "observations"):
            if cfg.get(key) and not Path(cfg[key]).is_absolute():
                cfg[key] = str(base / cfg[key])
    opts = dict(DEFAULTS)
    opts.update({k: v for k, v in cfg.items() if v is not None})
    for key, val in vars(args).items():
        if key in ("command", "config", "func"):
            continue
        if val is not None:
            opts[key] = val
    if "values" in opts and isinstance(opts["values"], str):
        opts["values"] = [float(v) if "." in v or "e" in v.lower() else int(v) for v in opts["values"].split(",")]
    return opts


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radioquant", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="generate the ground-truth scene")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("design-bins", help="design quantizer boundaries from simulated maps")
    common(p)
    p.add_argument("--bits", type=int)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--n-maps", dest="n_maps", type=int)
    p.set_defaults(func=cmd_design_bins)

    p = sub.add_parser("quantize", help="sample fibers and quantize them")
    common(p)
    p.add_argument("--rho", type=float)
    p.add_argument("--quantizer")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("recover", help="recover the map from observations")
    common(p)
    p.add_argument("--model", choices=("btd", "dgm"))
    p.add_argument("--quantizer")
    p.add_argument("--observations", help="observations JSON (default <out>/observations.json)")
    p.add_argument("--weights")
    p.add_argument("--L", type=int)
    p.add_argument("--rhat", type=int)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("sweep", help="LNRE sweep over a parameter axis")
    common(p)
    p.add_argument("--model", choices=("btd", "dgm"))
    p.add_argument("--axis", choices=SWEEP_AXES)
    p.add_argument("--values", help="comma-separated axis values")
    p.add_argument("--n-trials", dest="n_trials", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--bits", type=int)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--weights")
    p.add_argument("--L", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bounds", help="evaluate recoverability bounds over N")
    common(p)
    p.add_argument("--model", choices=("btd", "dgm"))
    p.add_argument("--quantizer")
    p.add_argument("--values", help="comma-separated sample counts N")
    p.add_argument("--weights")
    p.add_argument("--L", type=int)
    p.add_argument("--achieved", action="store_true", default=None)
    p.set_defaults(func=cmd_bounds)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _merge_options(args)
        return args.func(opts)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverDivergence as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
