"""Stage-1 model: a shallow dense autoencoder trained on normal data only.

Architecture: D -> hidden (leaky ReLU) -> L (sigmoid) -> hidden (leaky ReLU)
-> D. The sigmoid latent keeps codes bounded, which the stage-2 feature-mask
training relies on. Early stopping tracks anomaly-detection quality (ROC-AUC
on a labeled validation split) rather than the raw loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .detector import ScoreSet, auc, reconstruction_errors
from .numerics import Rng, TrainingDivergedError


@dataclass
class AutoencoderModel:
    encoder_layers: list[nn.DenseLayer]
    decoder_layers: list[nn.DenseLayer]
    input_dim: int
    latent_dim: int

    def encode(self, x: np.ndarray) -> np.ndarray:
        out, _ = nn.forward(self.encoder_layers, x)
        return out

    def decode(self, z: np.ndarray) -> np.ndarray:
        out, _ = nn.forward(self.decoder_layers, z)
        return out

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(x))

    def params(self) -> list[np.ndarray]:
        return nn.layer_params(self.encoder_layers) + nn.layer_params(self.decoder_layers)

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def restore(self, snapshot: list[np.ndarray]) -> None:
        for p, s in zip(self.params(), snapshot):
            p[...] = s


@dataclass
class TrainReport:
    """Per-epoch history of one training run."""

    epochs_run: int = 0
    train_loss: list[float] = field(default_factory=list)
    val_auc: list[float] = field(default_factory=list)
    best_epoch: int | None = None


def build(
    input_dim: int,
    latent_dim: int,
    hidden: int = 256,
    rng: Rng | None = None,
    leaky_slope: float = 0.2,
    output_activation: str = nn.LEAKY_RELU,
) -> AutoencoderModel:
    """Initialize the four-layer autoencoder (defaults: hidden=256, L=128)."""
    if input_dim < 1 or latent_dim < 1 or hidden < 1:
        raise ValueError(
            f"dimensions must be >= 1, got D={input_dim}, L={latent_dim}, hidden={hidden}"
        )
    rng = rng if rng is not None else Rng(0)
    enc = [
        nn.dense(input_dim, hidden, nn.LEAKY_RELU, rng.split("encoder/0"), leaky_slope),
        nn.dense(hidden, latent_dim, nn.SIGMOID, rng.split("encoder/1")),
    ]
    dec = [
        nn.dense(latent_dim, hidden, nn.LEAKY_RELU, rng.split("decoder/0"), leaky_slope),
        nn.dense(hidden, input_dim, output_activation, rng.split("decoder/1"), leaky_slope),
    ]
    return AutoencoderModel(enc, dec, input_dim, latent_dim)


def encode(model: AutoencoderModel, x: np.ndarray) -> np.ndarray:
    return model.encode(x)


def decode(model: AutoencoderModel, z: np.ndarray) -> np.ndarray:
    return model.decode(z)


class EarlyStopper:
    """Tracks the best (earliest-argmax) validation score with patience."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_score = -np.inf
        self.best_epoch: int | None = None
        self._since_best = 0

    def update(self, epoch: int, score: float) -> bool:
        """Record ``score``; returns True when this epoch is a new best."""
        if score > self.best_score:
            self.best_score = score
            self.best_epoch = epoch
            self._since_best = 0
            return True
        self._since_best += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self._since_best >= self.patience


def _epoch_batches(x: np.ndarray, batch_size: int, perm: np.ndarray):
    for start in range(0, x.shape[0], batch_size):
        yield x[perm[start : start + batch_size]]


def train_stage1(
    model: AutoencoderModel,
    train_x: np.ndarray,
    val_split,
    batch_size: int = 512,
    max_epochs: int = 200,
    patience: int = 20,
    lr: float = 1e-3,
    rng: Rng | None = None,
) -> TrainReport:
    """Minimize reconstruction MSE with Adam; early-stop on validation AUC.

    ``val_split`` only needs labeled ``val_x``/``val_y`` attributes; scoring
    during training uses plain per-sample reconstruction errors (no feature
    weighting). The weights from the best validation epoch are restored
    before returning.
    """
    if train_x.shape[0] == 0:
        raise ValueError("training set is empty")
    rng = rng if rng is not None else Rng(0)
    report = TrainReport()
    if max_epochs <= 0:
        return report

    layers = model.encoder_layers + model.decoder_layers
    params = model.params()
    adam = nn.AdamState(params, lr=lr)
    stopper = EarlyStopper(patience)
    best_params = model.snapshot()

    for epoch in range(max_epochs):
        perm = rng.split(f"epoch/{epoch}").permutation(train_x.shape[0])
        for xb in _epoch_batches(train_x, batch_size, perm):
            out, tape = nn.forward(layers, xb, capture=True)
            batch_loss = nn.mse_loss(out, xb)
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}"
                )
            grads, _ = nn.backward(layers, tape, nn.mse_loss_grad(out, xb))
            nn.adam_step(adam, params, nn.flatten_grads(grads))

        full_out, _ = nn.forward(layers, train_x)
        report.train_loss.append(nn.mse_loss(full_out, train_x))
        val_scores = ScoreSet(reconstruction_errors(model, val_split.val_x), val_split.val_y)
        report.val_auc.append(auc(val_scores))
        report.epochs_run = epoch + 1

        if stopper.update(epoch, report.val_auc[-1]):
            best_params = model.snapshot()
        if stopper.should_stop:
            break

    report.best_epoch = stopper.best_epoch
    model.restore(best_params)
    return report
