"""Training loops: adversarial and autoencoder objectives.

Both loops log per-epoch losses and persist them next to the export path. A
non-finite loss aborts the run after writing a checkpoint of the latest
weights, so long runs are not lost to a late blow-up.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .config import TrainConfig
from .data import make_training_set
from .models import ConvDiscriminator, MlpDiscriminator, MlpEncoder, build_generator

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, message, checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


def _loader(samples: np.ndarray, batch_size: int, generator: torch.Generator):
    data = torch.from_numpy(samples).float()
    ds = torch.utils.data.TensorDataset(data)
    return torch.utils.data.DataLoader(ds, batch_size=batch_size, shuffle=True, generator=generator)


def _checkpoint(path_hint, generator, tag):
    path = Path(path_hint or "generator").with_suffix(f".{tag}.ckpt")
    torch.save(generator.state_dict(), path)
    return path


def _write_loss_log(path_hint, header, rows):
    path = Path(path_hint or "generator").with_suffix(".losses.csv")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row) + "\n")
    return path


def train(config: TrainConfig, samples: np.ndarray | None = None):
    """Train a generator per the config; returns (generator, loss_rows).

    `samples` overrides the simulated training set (useful for tests and for
    pre-generated data).
    """
    torch.manual_seed(config.seed)
    if samples is None:
        samples = make_training_set(config)
    generator = build_generator(config)
    if config.objective == "autoencoder":
        if config.architecture != "mlp":
            raise ValueError("the autoencoder objective trains the dense generator only")
        rows = _train_autoencoder(config, generator, samples)
    else:
        rows = _train_gan(config, generator, samples)
    _write_loss_log(config.export_path, rows[0], rows[1])
    return generator, rows[1]


def _train_gan(config: TrainConfig, generator, samples):
    disc = ConvDiscriminator() if config.architecture == "gan-conv" else MlpDiscriminator(config.grid)
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr_generator, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr_discriminator, betas=(0.5, 0.999))
    bce = nn.BCELoss()
    loader = _loader(samples, config.batch_size, torch.Generator().manual_seed(config.seed))

    rows = []
    for epoch in range(config.epochs):
        d_losses, g_losses = [], []
        for (real,) in loader:
            n = real.shape[0]
            z = torch.randn(n, config.latent_dim)
            fake = generator(z)

            opt_d.zero_grad()
            loss_d = bce(disc(real), torch.ones(n)) + bce(disc(fake.detach()), torch.zeros(n))
            loss_d.backward()
            opt_d.step()

            opt_g.zero_grad()
            loss_g = bce(disc(fake), torch.ones(n))
            loss_g.backward()
            opt_g.step()

            d_losses.append(loss_d.item())
            g_losses.append(loss_g.item())
        d_mean, g_mean = float(np.mean(d_losses)), float(np.mean(g_losses))
        rows.append((epoch, d_mean, g_mean))
        if not (np.isfinite(d_mean) and np.isfinite(g_mean)):
            ckpt = _checkpoint(config.export_path, generator, f"epoch{epoch}")
            raise TrainingDiverged(
                f"loss became non-finite at epoch {epoch}; checkpoint saved to {ckpt}", ckpt
            )
        if epoch % 25 == 0:
            log.info("epoch %d: d_loss %.4f g_loss %.4f", epoch, d_mean, g_mean)
    return "epoch,d_loss,g_loss", rows


def _train_autoencoder(config: TrainConfig, generator, samples):
    encoder = MlpEncoder(config.latent_dim, config.grid)
    params = list(encoder.parameters()) + list(generator.parameters())
    opt = torch.optim.Adam(params, lr=config.lr_generator)
    mse = nn.MSELoss()
    loader = _loader(samples, config.batch_size, torch.Generator().manual_seed(config.seed))

    rows = []
    for epoch in range(config.epochs):
        losses = []
        for (real,) in loader:
            opt.zero_grad()
            recon = generator(encoder(real))
            loss = mse(recon, real)
            loss.backward()
            opt.step()
            losses.append(loss.item())
        mean = float(np.mean(losses))
        rows.append((epoch, mean))
        if not np.isfinite(mean):
            ckpt = _checkpoint(config.export_path, generator, f"epoch{epoch}")
            raise TrainingDiverged(
                f"loss became non-finite at epoch {epoch}; checkpoint saved to {ckpt}", ckpt
            )
        if epoch % 25 == 0:
            log.info("epoch %d: recon_loss %.6f", epoch, mean)
    return "epoch,recon_loss", rows
