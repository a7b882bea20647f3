"""Acceptance suite: one test per release criterion, each printing a pass line
and enforcing its runtime budget. Run with `pytest tests/test_acceptance.py -v`.

No trained generator is required: generative-model checks build small random
dense networks in-process.
"""

import json
import time

import numpy as np
import pytest

import radioquant as rq
from radioquant import cli

from conftest import btd_truth, design_family_bins, observe, random_dense_net, simple_spec

ORACLE_SOLVER = dict(max_iters=900, rel_tol=1e-9, step_c=0.01, step_a=0.02, step_b=0.02)


def _report(name, t0, budget):
    elapsed = time.perf_counter() - t0
    print(f"[acceptance] {name}: PASS ({elapsed:.2f}s, budget {budget:.0f}s)")
    assert elapsed < budget, f"{name} exceeded its runtime budget: {elapsed:.1f}s"


def _solve_family_trial(spec, seed, rho, dims):
    _, truth = btd_truth(dims.I, dims.J, dims.K, dims.R, dims.L, seed)
    obs = observe(truth, spec, rho, seed)
    cfg = rq.SolverConfig(seed=seed, **ORACLE_SOLVER)
    _, recon, _ = rq.btd_solve(obs, spec, dims, cfg)
    return rq.lnre(recon, truth, spec.a)


def _trend_ok(means, max_inversions=1):
    inversions = sum(1 for a, b in zip(means, means[1:]) if b > a)
    return inversions <= max_inversions


def test_likelihood_kernel_normalization_and_gradient():
    """Sum over symbols is 1 within 1e-12; analytic slope matches a
    finite-difference oracle to 1e-6 relative."""
    t0 = time.perf_counter()
    spec = simple_spec(sigma2=1.7, bins=(-2.0, -0.6, 0.0, 0.9, 2.1), a=1e-6)
    ms = np.linspace(-6.0, 6.0, 1000)
    total = rq.link_prob_all(ms, spec).sum(axis=1)
    assert np.abs(total - 1.0).max() < 1e-12

    rng = np.random.default_rng(0)
    ms = rng.uniform(-4.0, 4.0, 500)
    h = 1e-3
    worst = 0.0
    for q in range(1, spec.n_symbols + 1):
        an = rq.link_grad(q, ms, spec)
        fd = (
            rq.link_prob(q, ms - 2 * h, spec)
            - 8 * rq.link_prob(q, ms - h, spec)
            + 8 * rq.link_prob(q, ms + h, spec)
            - rq.link_prob(q, ms + 2 * h, spec)
        ) / (12 * h)
        keep = np.abs(fd) > 1e-8
        worst = max(worst, float((np.abs(an - fd)[keep] / np.abs(fd)[keep]).max()))
    assert worst < 1e-6
    _report("likelihood kernel", t0, 1.0)


def test_dither_fidelity():
    """Empirical symbol frequencies over 1e5 draws sit within four multinomial
    standard deviations of the link probabilities, for 20 (m, spec) pairs."""
    t0 = time.perf_counter()
    specs = [
        simple_spec(sigma2=1.7, bins=(-1.0, 0.0, 0.8, 2.0), a=1e-6),
        simple_spec(sigma2=0.5, bins=(-2.0, 0.5), a=1e-6),
    ]
    n = 100_000
    pair = 0
    for spec in specs:
        for m in np.linspace(-2.5, 3.0, 10):
            y = rq.dither_quantize(np.full(n, m), spec, seed=500 + pair)
            counts = np.bincount(y, minlength=spec.n_symbols + 1)[1:]
            probs = rq.link_prob_all(np.array([m]), spec)[0]
            sd = np.sqrt(probs * (1 - probs) / n)
            assert np.all(np.abs(counts / n - probs) <= 4 * sd + 1e-9), f"pair {pair}"
            pair += 1
    assert pair == 20
    _report("dither fidelity", t0, 10.0)


def test_transform_bilipschitz_property():
    """Transformed-vs-raw distance ratios stay inside [1/(alpha+a), 1/a] on
    1e3 random nonnegative tensor pairs, no violations."""
    t0 = time.perf_counter()
    alpha, a = 5.0, 0.5
    rng = np.random.default_rng(1)
    violations = 0
    for _ in range(1000):
        x = rng.uniform(0, alpha, (4, 4, 3))
        y = rng.uniform(0, alpha, (4, 4, 3))
        ratio = np.linalg.norm(rq.log_transform(x, a) - rq.log_transform(y, a)) / np.linalg.norm(x - y)
        if not (1 / (alpha + a) - 1e-12 <= ratio <= 1 / a + 1e-12):
            violations += 1
    assert violations == 0
    _report("bi-Lipschitz transform", t0, 5.0)


def test_gradient_correctness_both_models():
    """Analytic block gradients match central finite differences within 1e-4
    relative on small instances of both map models."""
    t0 = time.perf_counter()
    spec = simple_spec(sigma2=0.8, bins=(-1.5, -0.5, 0.5), a=0.1)

    # tensor model: 6x6x4, R=2, L=2
    rng = np.random.default_rng(2)
    factors = rq.BtdFactors(
        rng.uniform(0.1, 1.0, (2, 6, 2)), rng.uniform(0.1, 1.0, (2, 6, 2)), rng.uniform(0.1, 1.0, (4, 2))
    )
    omega = rq.sample_fibers(6, 6, 18, "without", seed=3)
    fib = rq.btd_predict(factors, omega.locations)
    obs = rq.quantize_fibers(rq.log_transform(fib, spec.a), omega, spec, seed=4)
    cfg = rq.SolverConfig(lambda1=1e-3, lambda2=1e-3, lambda3=1e-3)
    grads = dict(zip("ABC", rq.btd_gradients(factors, obs, spec, cfg)))
    h = 1e-6
    for name in "ABC":
        block = getattr(factors, name)
        fd = np.zeros_like(block)
        for idx in np.ndindex(block.shape):
            orig = block[idx]
            block[idx] = orig + h
            up = rq.btd_objective(factors, obs, spec, cfg)
            block[idx] = orig - h
            dn = rq.btd_objective(factors, obs, spec, cfg)
            block[idx] = orig
            fd[idx] = (up - dn) / (2 * h)
        assert np.linalg.norm(grads[name] - fd) / np.linalg.norm(fd) < 1e-4

    # generative model: 6x6 grid, R=2, D=5
    net = random_dense_net(6, 6, 5, seed=5)
    v = rq.DgmVars(Z=rng.standard_normal((2, 5)), C=rng.uniform(0.1, 1.0, (4, 2)))
    svals = np.stack([rq.gen_forward(net, z) for z in v.Z])
    x = np.einsum("rij,kr->ijk", svals, v.C)
    fib = x[omega.locations[:, 0], omega.locations[:, 1], :]
    obs = rq.quantize_fibers(rq.log_transform(fib, spec.a), omega, spec, seed=6)
    dcfg = rq.DgmConfig(mu1=1e-3, mu2=1e-3)
    g_z, g_c = rq.dgm_gradients(v, net, obs, spec, dcfg)
    for name, grad in (("Z", g_z), ("C", g_c)):
        block = getattr(v, name)
        fd = np.zeros_like(block)
        for idx in np.ndindex(block.shape):
            orig = block[idx]
            block[idx] = orig + h
            up = rq.dgm_objective(v, net, obs, spec, dcfg)
            block[idx] = orig - h
            dn = rq.dgm_objective(v, net, obs, spec, dcfg)
            block[idx] = orig
            fd[idx] = (up - dn) / (2 * h)
        assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4
    _report("gradient correctness", t0, 30.0)


def test_btd_recovery_oracle():
    """Exactly low-rank truth (32x32x16, R=2, L=3), 8-bit quantization with
    dither variance 0.5, 30% fiber sampling: LNRE below 0.05 in at least
    9 of 10 seeds."""
    t0 = time.perf_counter()
    dims = rq.BtdDims(32, 32, 16, R=2, L=3)
    spec = design_family_bins(
        lambda s: btd_truth(dims.I, dims.J, dims.K, dims.R, dims.L, s), bits=8, sigma2=0.5
    )
    lnres = [_solve_family_trial(spec, seed, 0.30, dims) for seed in range(10)]
    passed = sum(1 for v in lnres if v < 0.05)
    print(f"[acceptance] recovery LNREs: {np.round(lnres, 4).tolist()}")
    assert passed >= 9, f"only {passed}/10 seeds under 0.05: {lnres}"
    _report("recovery oracle", t0, 120.0)


def test_bit_sweep_trend():
    """Mean LNRE over 5 paired seeds is non-increasing in the bit width
    B in {1, 2, 4, 8} (at most one adjacent inversion), 20% sampling."""
    t0 = time.perf_counter()
    dims = rq.BtdDims(32, 32, 16, R=2, L=3)
    means = []
    for bits in (1, 2, 4, 8):
        spec = design_family_bins(
            lambda s: btd_truth(dims.I, dims.J, dims.K, dims.R, dims.L, s), bits=bits, sigma2=0.5
        )
        lnres = [_solve_family_trial(spec, seed, 0.20, dims) for seed in range(5)]
        means.append(float(np.mean(lnres)))
    print(f"[acceptance] bit-sweep mean LNREs {dict(zip((1, 2, 4, 8), np.round(means, 4)))}")
    assert _trend_ok(means), f"bit sweep not monotone: {means}"
    _report("bit-sweep trend", t0, 600.0)


def test_sample_sweep_trend():
    """Mean LNRE over 5 paired seeds is non-increasing in the sampling
    fraction rho in {3, 5, 10, 20}% at 3-bit quantization."""
    t0 = time.perf_counter()
    dims = rq.BtdDims(32, 32, 16, R=2, L=3)
    spec = design_family_bins(
        lambda s: btd_truth(dims.I, dims.J, dims.K, dims.R, dims.L, s), bits=3, sigma2=0.5
    )
    means = []
    for rho in (0.03, 0.05, 0.10, 0.20):
        lnres = [_solve_family_trial(spec, seed, rho, dims) for seed in range(5)]
        means.append(float(np.mean(lnres)))
    print(f"[acceptance] sample-sweep mean LNREs {dict(zip((3, 5, 10, 20), np.round(means, 4)))}")
    assert _trend_ok(means), f"sample sweep not monotone: {means}"
    _report("sample-sweep trend", t0, 600.0)


def test_bin_utilization():
    """Boundaries designed on pooled simulated maps give held-out per-level
    occupancies within [0.5, 1.5] of the uniform share for B in {1, 2, 3}."""
    t0 = time.perf_counter()
    make = lambda s: btd_truth(24, 24, 8, 2, 2, s)
    pool = np.concatenate(
        [rq.log_transform(make(100 + t)[1].tensor, 1e-6).ravel() for t in range(20)]
    )
    heldout = np.concatenate(
        [rq.log_transform(make(500 + t)[1].tensor, 1e-6).ravel() for t in range(5)]
    )
    for bits in (1, 2, 3):
        bins = rq.design_bins(pool, bits)
        counts = np.bincount(np.searchsorted(bins[1:-1], heldout), minlength=2 ** bits)
        share = heldout.size / 2 ** bits
        assert counts.min() >= 0.5 * share and counts.max() <= 1.5 * share, f"B={bits}: {counts}"
    _report("bin utilization", t0, 60.0)


def test_bound_calculator_and_divergence_sandwich():
    """The ideal-model error bound scales exactly as 1/sqrt(N); the channel
    divergences satisfy f_alpha/4 * MSE <= Hellinger^2 <= KL on 1e3 pairs."""
    t0 = time.perf_counter()
    consts = rq.LinkConstants(u_alpha=2.0, l_alpha=1.5, f_alpha=0.3, m_range=(-1, 1))
    p1 = rq.BoundParams(I=51, J=51, K=64, N=260, R=6, beta=10, kappa=10, alpha=5, a=1e-6, delta=0.1, nu=0.0, L=10)
    p4 = rq.BoundParams(I=51, J=51, K=64, N=1040, R=6, beta=10, kappa=10, alpha=5, a=1e-6, delta=0.1, nu=0.0, L=10)
    tau = rq.tau_btd(p1)
    assert rq.error_bound(p1, tau, consts) / rq.error_bound(p4, tau, consts) == 2.0

    spec = simple_spec(sigma2=1.0, bins=(-0.8, 0.0, 0.9), a=0.5)
    kernel = rq.compute_constants(spec, alpha=4.0)
    lo, hi = kernel.m_range
    rng = np.random.default_rng(7)
    for _ in range(1000):
        m_est = rng.uniform(lo, hi, 1)
        m_tru = rng.uniform(lo, hi, 1)
        kl, hell = rq.empirical_kl(m_est, m_tru, spec)
        mse = float(np.mean((m_est - m_tru) ** 2))
        assert kernel.f_alpha / 4 * mse <= hell + 1e-12
        assert hell <= kl + 1e-12
    _report("bound calculator", t0, 5.0)


def test_sweep_determinism(tmp_path):
    """Running the same sweep twice produces byte-identical CSV output."""
    t0 = time.perf_counter()
    scen = rq.Scenario(
        I=10, J=10, K=6, R=2,
        emitters=(rq.Emitter(2, 2, 2.0), rq.Emitter(7, 6, 2.2)),
        xc=25.0, eta=4.0, n_subbands=2, beta=20.0, kappa=2.0, seed=3, psd_floor=1e-3,
    )
    scen_path = tmp_path / "scenario.json"
    rq.save_scenario(scen_path, scen)
    exp = tmp_path / "exp.json"
    exp.write_text(json.dumps({
        "solver": {"max_iters": 30, "step_c": 0.01, "step_a": 0.02, "step_b": 0.02},
        "n_maps": 6, "L": 2,
    }))
    args = ["sweep", "--config", str(exp), "--scenario", str(scen_path),
            "--axis", "rho", "--values", "0.2,0.3", "--n-trials", "2",
            "--bits", "2", "--seed", "11"]
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert cli.main(args + ["--out", str(out1)]) == 0
    assert cli.main(args + ["--out", str(out2)]) == 0
    assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()
    assert (out1 / "sweep_summary.csv").read_bytes() == (out2 / "sweep_summary.csv").read_bytes()
    _report("sweep determinism", t0, 120.0)
