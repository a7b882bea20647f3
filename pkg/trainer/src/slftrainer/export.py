"""Export dense generators to the runtime weight format.

The file contract: a JSON manifest {format_version, D, I, J, layers:[{rows,
cols, activation, has_bias}]} plus one float32 little-endian blob holding
every tensor row-major, concatenated in manifest order (weight then bias per
layer). The blob lives in a `.bin` sidecar by default or base64-embedded in
the manifest. Only dense generators export; convolutional generators must be
distilled into a dense student first.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .models import MlpGenerator

FORMAT_VERSION = 1

_ACTIVATION_TAGS = {nn.ReLU: "relu", nn.Sigmoid: "sigmoid", nn.Tanh: "tanh", nn.Identity: "identity"}


def _dense_layers(generator: MlpGenerator):
    """Yield (Linear, activation tag) pairs from the generator stack."""
    modules = list(generator.net)
    out = []
    i = 0
    while i < len(modules):
        mod = modules[i]
        if not isinstance(mod, nn.Linear):
            raise ValueError(f"unexpected module {type(mod).__name__} in a dense generator")
        tag = "identity"
        if i + 1 < len(modules):
            nxt = type(modules[i + 1])
            if nxt not in _ACTIVATION_TAGS:
                raise ValueError(f"unsupported activation {nxt.__name__}")
            tag = _ACTIVATION_TAGS[nxt]
            i += 1
        out.append((mod, tag))
        i += 1
    return out


def export_dense(generator, path, embed: bool = False) -> Path:
    """Write the generator's weights; returns the manifest path."""
    if not isinstance(generator, MlpGenerator):
        raise ValueError(
            "only dense generators export directly; distill convolutional "
            "generators into a dense student first (see distill_to_dense)"
        )
    path = Path(path)
    chunks = []
    layer_entries = []
    for linear, tag in _dense_layers(generator):
        w = linear.weight.detach().cpu().numpy().astype("<f4")
        chunks.append(np.ascontiguousarray(w).tobytes())
        has_bias = linear.bias is not None
        if has_bias:
            chunks.append(linear.bias.detach().cpu().numpy().astype("<f4").tobytes())
        layer_entries.append(
            {
                "rows": int(w.shape[0]),
                "cols": int(w.shape[1]),
                "activation": tag,
                "has_bias": has_bias,
            }
        )
    blob = b"".join(chunks)
    I, J = generator.grid
    manifest = {
        "format_version": FORMAT_VERSION,
        "D": generator.latent_dim,
        "I": I,
        "J": J,
        "layers": layer_entries,
    }
    if embed:
        manifest["blob_base64"] = base64.b64encode(blob).decode("ascii")
    else:
        sidecar = path.with_suffix(path.suffix + ".bin")
        sidecar.write_bytes(blob)
        manifest["blob_file"] = sidecar.name
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


@torch.no_grad()
def forward_fields(generator, z: np.ndarray) -> np.ndarray:
    """Trainer-side forward pass on a batch of latent codes (numpy in/out)."""
    generator.eval()
    return generator(torch.from_numpy(np.asarray(z, dtype=np.float32))).cpu().numpy()
