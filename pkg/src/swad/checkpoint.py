"""Checkpoint persistence: a text manifest plus a raw float64 parameter blob.

The blob is little-endian float64 in a fixed order (encoder layers, then
decoder layers, weights before bias; stage-2 checkpoints append the mask
network and the final mask values). The manifest records the architecture
and a SHA-256 of the blob so corrupt or mismatched files fail loudly.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from . import nn
from .autoencoder import AutoencoderModel
from .feature_mask import FeatureMask, FmModule
from .numerics import SwadError

MANIFEST_NAME = "manifest.txt"
PARAMS_NAME = "params.bin"


class CheckpointError(SwadError):
    """Missing, corrupt, or structurally inconsistent checkpoint."""


@dataclass
class CheckpointBundle:
    model: AutoencoderModel
    fm: FmModule | None
    mask: FeatureMask | None
    meta: dict

    @property
    def stage(self) -> int:
        return int(self.meta["stage"])


def _blob_arrays(model: AutoencoderModel, fm: FmModule | None,
                 mask: FeatureMask | None) -> list[np.ndarray]:
    arrays = list(model.params())
    if fm is not None:
        arrays.extend(fm.params())
    if mask is not None:
        arrays.append(mask.values.reshape(1, -1))
    return arrays


def save_checkpoint(ckpt_dir, model: AutoencoderModel, meta: dict,
                    fm: FmModule | None = None, mask: FeatureMask | None = None) -> str:
    """Write manifest + parameter blob into ``ckpt_dir``; returns the dir path."""
    if (fm is None) != (mask is None):
        raise CheckpointError("stage-2 checkpoints need both the mask network and the mask")
    os.makedirs(ckpt_dir, exist_ok=True)
    arrays = _blob_arrays(model, fm, mask)
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    param_count = sum(a.size for a in arrays)

    record = dict(meta)
    record.update(
        stage=2 if fm is not None else 1,
        input_dim=model.input_dim,
        latent_dim=model.latent_dim,
        hidden_dim=model.encoder_layers[0].out_dim,
        leaky_slope=model.encoder_layers[0].slope,
        output_activation=model.decoder_layers[-1].activation,
        fm_hidden=",".join(str(l.out_dim) for l in (fm.mask_net[:-1] if fm else [])),
        param_count=param_count,
        params_sha256=hashlib.sha256(blob).hexdigest(),
    )
    lines = ["[checkpoint]"] + [f"{key} = {record[key]}" for key in sorted(record)]
    with open(os.path.join(ckpt_dir, PARAMS_NAME), "wb") as f:
        f.write(blob)
    with open(os.path.join(ckpt_dir, MANIFEST_NAME), "w") as f:
        f.write("\n".join(lines) + "\n")
    return str(ckpt_dir)


def _read_manifest(path) -> dict:
    meta: dict = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("["):
                continue
            key, _, value = line.partition(" = ")
            meta[key] = value
    return meta


def _take(flat: np.ndarray, offset: int, shape: tuple[int, int]) -> tuple[np.ndarray, int]:
    size = shape[0] * shape[1]
    if offset + size > flat.size:
        raise CheckpointError("parameter blob too short for the declared architecture")
    return flat[offset : offset + size].reshape(shape).copy(), offset + size


def load_checkpoint(ckpt_dir) -> CheckpointBundle:
    """Rebuild the model (and stage-2 mask artifacts) from a checkpoint dir."""
    manifest_path = os.path.join(ckpt_dir, MANIFEST_NAME)
    params_path = os.path.join(ckpt_dir, PARAMS_NAME)
    if not os.path.exists(manifest_path) or not os.path.exists(params_path):
        raise CheckpointError(f"no checkpoint at {ckpt_dir}")
    meta = _read_manifest(manifest_path)
    blob = open(params_path, "rb").read()
    if hashlib.sha256(blob).hexdigest() != meta.get("params_sha256"):
        raise CheckpointError(f"{params_path}: blob hash does not match manifest")
    param_count = int(meta["param_count"])
    if len(blob) != param_count * 8:
        raise CheckpointError(
            f"{params_path}: {len(blob)} bytes for {param_count} parameters"
        )
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)

    input_dim = int(meta["input_dim"])
    latent_dim = int(meta["latent_dim"])
    hidden_dim = int(meta["hidden_dim"])
    slope = float(meta["leaky_slope"])
    out_act = meta["output_activation"]

    def read_layers(dims_acts, offset):
        layers = []
        for (d_in, d_out, act) in dims_acts:
            w, offset = _take(flat, offset, (d_in, d_out))
            b, offset = _take(flat, offset, (1, d_out))
            layers.append(nn.DenseLayer(w, b, act, slope))
        return layers, offset

    offset = 0
    enc, offset = read_layers(
        [(input_dim, hidden_dim, nn.LEAKY_RELU), (hidden_dim, latent_dim, nn.SIGMOID)], offset
    )
    dec, offset = read_layers(
        [(latent_dim, hidden_dim, nn.LEAKY_RELU), (hidden_dim, input_dim, out_act)], offset
    )
    model = AutoencoderModel(enc, dec, input_dim, latent_dim)

    fm = None
    mask = None
    if int(meta["stage"]) == 2:
        fm_hidden = [int(h) for h in meta.get("fm_hidden", "").split(",") if h.strip()]
        dims = [latent_dim, *fm_hidden, latent_dim]
        specs = []
        for i in range(len(dims) - 1):
            act = nn.LINEAR if i == len(dims) - 2 else nn.LEAKY_RELU
            specs.append((dims[i], dims[i + 1], act))
        fm_layers, offset = read_layers(specs, offset)
        fm = FmModule(fm_layers)
        values, offset = _take(flat, offset, (1, latent_dim))
        mask = FeatureMask.from_values(values[0])
    if offset != flat.size:
        raise CheckpointError(f"{params_path}: {flat.size - offset} unused trailing values")
    return CheckpointBundle(model, fm, mask, meta)
