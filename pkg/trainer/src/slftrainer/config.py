"""Training configuration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for simulated-SLF generation and generator training.

    Defaults follow the synthetic-experiment recipe: 5000 simulated fields
    with decorrelation distance in [30, 100] m, shadowing std in [3, 8] dB,
    pathloss exponent in [2, 2.5]; Adam with batch size 128 for 250 epochs,
    discriminator/generator learning rates 4e-4 and 1e-4, latent dimension 256.
    """

    n_samples: int = 5000
    grid: tuple[int, int] = (51, 51)
    xc_range: tuple[float, float] = (30.0, 100.0)
    eta_range: tuple[float, float] = (3.0, 8.0)
    gamma_range: tuple[float, float] = (2.0, 2.5)
    epochs: int = 250
    batch_size: int = 128
    lr_generator: float = 1e-4
    lr_discriminator: float = 4e-4
    latent_dim: int = 256
    architecture: str = "gan-conv"  # or "mlp"
    objective: str = "gan"  # or "autoencoder" (mlp only)
    hidden_sizes: tuple[int, ...] = (512, 1024, 2048)
    export_path: str | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("xc_range", "eta_range", "gamma_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty: ({lo}, {hi})")
        if self.latent_dim < 1:
            raise ValueError("latent dimension must be at least 1")
        if self.architecture not in ("gan-conv", "mlp"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.objective not in ("gan", "autoencoder"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.n_samples < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("n_samples, epochs, and batch_size must be positive")


def load_config(path) -> TrainConfig:
    raw = json.loads(Path(path).read_text())
    for key in ("grid", "xc_range", "eta_range", "gamma_range", "hidden_sizes"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return TrainConfig(**raw)
