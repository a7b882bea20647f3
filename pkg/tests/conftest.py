"""Shared builders for solver and acceptance tests."""

import numpy as np
import pytest

import radioquant as rq

A_OFFSET = 1e-6
DITHER_VAR = 0.5


def btd_truth(I, J, K, R, L, seed, scale=0.1, decades=1.8):
    """Exactly low-rank ground truth with log-uniform spectra.

    Spatial factors are uniform on [0.1, 1] and rescaled so each component
    field peaks at 1; spectra span `decades` decades below a common power
    scale, mirroring the skew of measured radio maps.
    """
    rng = np.random.default_rng([seed, 5])
    A = rng.uniform(0.1, 1.0, (R, I, L))
    B = rng.uniform(0.1, 1.0, (R, J, L))
    for r in range(R):
        s = np.sqrt((A[r] @ B[r].T).max())
        A[r] /= s
        B[r] /= s
    C = 10.0 ** rng.uniform(-decades, 0.0, (K, R)) * scale
    factors = rq.BtdFactors(A, B, C)
    return factors, rq.btd_reconstruct(factors)


def design_family_bins(truth_fn, bits, a=A_OFFSET, sigma2=DITHER_VAR, n_maps=30, seed=999):
    """Boundaries from transformed entries pooled over fresh truth draws."""
    pool = [rq.log_transform(truth_fn(seed + t)[1].tensor, a).ravel() for t in range(n_maps)]
    return rq.make_quantizer(np.concatenate(pool), bits, a, sigma2)


def observe(truth, spec, rho, seed):
    """Sample distinct fibers at fraction rho and quantize them."""
    I, J, _ = truth.shape
    omega = rq.sample_fibers(I, J, round(rho * I * J), "without", seed=[seed, 1])
    fibers = truth.tensor[omega.locations[:, 0], omega.locations[:, 1], :]
    return rq.quantize_fibers(rq.log_transform(fibers, spec.a), omega, spec, seed=seed + 70)


def random_dense_net(I, J, D, seed, hidden=32):
    """Small random two-layer generator with tanh hidden and sigmoid output."""
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, 1.5 / np.sqrt(D), (hidden, D))
    b1 = rng.normal(0.0, 0.3, hidden)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), (I * J, hidden))
    b2 = rng.normal(0.0, 0.3, I * J)
    return rq.GeneratorNet(
        (rq.DenseLayer(w1, b1, "tanh"), rq.DenseLayer(w2, b2, "sigmoid")), (I, J)
    )


def simple_spec(sigma2=1.0, bins=(0.0,), a=1.0):
    full = np.concatenate([[-np.inf], np.asarray(bins, dtype=float), [np.inf]])
    return rq.QuantizerSpec(a=a, sigma2=sigma2, bins=full)


@pytest.fixture
def two_symbol_spec():
    """Single threshold at zero, unit dither variance."""
    return simple_spec()
