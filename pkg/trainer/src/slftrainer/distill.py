"""Distill a convolutional teacher generator into a dense student.

The runtime consumes dense-layer generators only, so convolutional teachers
are compressed by regressing a dense student onto teacher outputs over
sampled latent codes (mean-square loss in field space).
"""

from __future__ import annotations

import logging

import numpy as np
import torch
from torch import nn

from .models import MlpGenerator

log = logging.getLogger(__name__)


def distill_to_dense(
    teacher: nn.Module,
    hidden_sizes=(512, 1024),
    steps: int = 2000,
    batch_size: int = 64,
    lr: float = 1e-3,
    seed: int = 0,
):
    """Returns (student MlpGenerator, per-step losses)."""
    torch.manual_seed(seed)
    teacher.eval()
    student = MlpGenerator(teacher.latent_dim, teacher.grid, hidden_sizes)
    opt = torch.optim.Adam(student.parameters(), lr=lr)
    mse = nn.MSELoss()
    losses = []
    for step in range(steps):
        z = torch.randn(batch_size, teacher.latent_dim)
        with torch.no_grad():
            target = teacher(z)
        opt.zero_grad()
        loss = mse(student(z), target)
        loss.backward()
        opt.step()
        losses.append(loss.item())
        if step % 200 == 0:
            log.info("distill step %d: mse %.6f", step, losses[-1])
    return student, np.asarray(losses)
