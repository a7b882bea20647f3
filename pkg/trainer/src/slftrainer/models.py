"""Generator and discriminator networks.

The convolutional pair mirrors the synthetic-experiment design: a stack of
transposed-convolution blocks (each followed by batch normalization and ReLU)
ending in a plain convolution with sigmoid output for the generator, and
convolution blocks with batch normalization and leaky ReLU for the
discriminator. The convolutional generator maps a 256-dimensional latent code
to a 51 x 51 field. The dense generator is a four-layer perceptron whose
weights export directly to the runtime's dense weight format.
"""

from __future__ import annotations

import torch
from torch import nn


class MlpGenerator(nn.Module):
    """Dense generator: latent code -> flattened field in (0, 1)."""

    def __init__(self, latent_dim: int, grid: tuple[int, int], hidden_sizes=(512, 1024, 2048)):
        super().__init__()
        self.latent_dim = latent_dim
        self.grid = tuple(grid)
        sizes = [latent_dim, *hidden_sizes, self.grid[0] * self.grid[1]]
        layers = []
        for i in range(len(sizes) - 1):
            layers.append(nn.Linear(sizes[i], sizes[i + 1]))
            layers.append(nn.ReLU() if i < len(sizes) - 2 else nn.Sigmoid())
        self.net = nn.Sequential(*layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.net(z).view(-1, *self.grid)


class MlpEncoder(nn.Module):
    """Field -> latent code; the autoencoder counterpart of MlpGenerator."""

    def __init__(self, latent_dim: int, grid: tuple[int, int], hidden_sizes=(512,)):
        super().__init__()
        sizes = [grid[0] * grid[1], *hidden_sizes, latent_dim]
        layers = []
        for i in range(len(sizes) - 1):
            layers.append(nn.Linear(sizes[i], sizes[i + 1]))
            if i < len(sizes) - 2:
                layers.append(nn.ReLU())
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x.flatten(1))


class MlpDiscriminator(nn.Module):
    def __init__(self, grid: tuple[int, int], hidden_sizes=(512, 256)):
        super().__init__()
        sizes = [grid[0] * grid[1], *hidden_sizes, 1]
        layers = []
        for i in range(len(sizes) - 1):
            layers.append(nn.Linear(sizes[i], sizes[i + 1]))
            layers.append(nn.LeakyReLU(0.2) if i < len(sizes) - 2 else nn.Sigmoid())
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x.flatten(1)).squeeze(1)


def _deconv_block(c_in, c_out, kernel, stride, pad):
    return [
        nn.ConvTranspose2d(c_in, c_out, kernel, stride, pad, bias=False),
        nn.BatchNorm2d(c_out),
        nn.ReLU(inplace=True),
    ]


def _conv_block(c_in, c_out, kernel, stride, pad):
    return [
        nn.Conv2d(c_in, c_out, kernel, stride, pad, bias=False),
        nn.BatchNorm2d(c_out),
        nn.LeakyReLU(0.2, inplace=True),
    ]


class ConvGenerator(nn.Module):
    """Transposed-convolution generator for 51 x 51 fields (latent dim 256)."""

    GRID = (51, 51)

    def __init__(self, latent_dim: int = 256):
        super().__init__()
        self.latent_dim = latent_dim
        self.grid = self.GRID
        self.net = nn.Sequential(
            *_deconv_block(latent_dim, 128, 3, 1, 0),  # 1 -> 3
            *_deconv_block(128, 64, 4, 2, 1),          # 3 -> 6
            *_deconv_block(64, 32, 4, 2, 1),           # 6 -> 12
            *_deconv_block(32, 16, 4, 2, 0),           # 12 -> 26
            *_deconv_block(16, 2, 4, 2, 0),            # 26 -> 54
            nn.Conv2d(2, 1, 4, 1, 0),                  # 54 -> 51
            nn.Sigmoid(),
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.net(z.view(-1, self.latent_dim, 1, 1)).squeeze(1)


class ConvDiscriminator(nn.Module):
    """Convolutional critic matched to the 51 x 51 generator."""

    def __init__(self):
        super().__init__()
        self.net = nn.Sequential(
            *_conv_block(1, 16, 4, 2, 1),    # 51 -> 25
            *_conv_block(16, 32, 4, 2, 1),   # 25 -> 12
            *_conv_block(32, 64, 4, 2, 1),   # 12 -> 6
            *_conv_block(64, 128, 4, 2, 1),  # 6 -> 3
            nn.Conv2d(128, 1, 3, 1, 0),      # 3 -> 1
            nn.Sigmoid(),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x.unsqueeze(1)).flatten(1).squeeze(1)


def build_generator(config) -> nn.Module:
    if config.architecture == "gan-conv":
        if tuple(config.grid) != ConvGenerator.GRID:
            raise ValueError(
                f"the convolutional generator is fixed to {ConvGenerator.GRID} grids; "
                "use architecture='mlp' for other sizes"
            )
        return ConvGenerator(config.latent_dim)
    return MlpGenerator(config.latent_dim, config.grid, config.hidden_sizes)
