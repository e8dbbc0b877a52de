"""Stage-2 model: learns a per-feature importance mask over the latent space.

A small mask network maps each latent code to feature logits; a per-sample
softmax and a batch mean turn those into a single mask in [0,1]^L that sums
to one. Training reconstructs the original inputs from mask-scaled latents
through a fresh decoder-shaped learning network, so features that matter for
reconstruction earn the large mask entries. Stage-1 weights are never
touched: the latents come in as constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .autoencoder import EarlyStopper, TrainReport
from .numerics import Rng, ShapeError, TrainingDivergedError


@dataclass
class FeatureMask:
    """Importance vector in [0,1]^L plus its descending-value ranking."""

    values: np.ndarray
    ranking: np.ndarray

    @classmethod
    def from_values(cls, values: np.ndarray) -> "FeatureMask":
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        # Descending value; equal values keep ascending index order.
        ranking = np.lexsort((np.arange(values.size), -values))
        return cls(values, ranking)


@dataclass
class FmModule:
    """Mask network over latent codes with batch-mean aggregation."""

    mask_net: list[nn.DenseLayer]
    aggregation: str = "batch_mean"

    def params(self) -> list[np.ndarray]:
        return nn.layer_params(self.mask_net)


@dataclass
class LearnNet:
    """Reconstruction network for mask training; decoder-shaped, fresh weights."""

    layers: list[nn.DenseLayer] = field(default_factory=list)

    def params(self) -> list[np.ndarray]:
        return nn.layer_params(self.layers)


def build_fm(latent_dim: int, rng: Rng, hidden: tuple[int, ...] = (),
             leaky_slope: float = 0.2) -> FmModule:
    """Mask network: single linear L->L layer by default, optional deeper stack."""
    dims = [latent_dim, *hidden, latent_dim]
    layers = []
    for i in range(len(dims) - 1):
        act = nn.LINEAR if i == len(dims) - 2 else nn.LEAKY_RELU
        layers.append(nn.dense(dims[i], dims[i + 1], act, rng.split(f"fm/{i}"), leaky_slope))
    return FmModule(layers)


def build_learn_net(latent_dim: int, hidden: int, output_dim: int, rng: Rng,
                    leaky_slope: float = 0.2, output_activation: str = nn.LEAKY_RELU) -> LearnNet:
    """Same architecture as the stage-1 decoder, independently initialized."""
    return LearnNet([
        nn.dense(latent_dim, hidden, nn.LEAKY_RELU, rng.split("g/0"), leaky_slope),
        nn.dense(hidden, output_dim, output_activation, rng.split("g/1"), leaky_slope),
    ])


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def fm_forward(fm: FmModule, z_batch: np.ndarray) -> np.ndarray:
    """Mask row for a latent batch: mean over per-sample softmax distributions."""
    if z_batch.ndim != 2 or z_batch.shape[0] < 1:
        raise ShapeError(f"fm_forward needs a non-empty 2-D batch, got {z_batch.shape}")
    logits, _ = nn.forward(fm.mask_net, z_batch)
    return np.mean(_softmax_rows(logits), axis=0, keepdims=True)


def select_top_k(mask: FeatureMask, k: int) -> np.ndarray:
    """Indices of the k most important features (ties favor the lower index)."""
    if not 1 <= k <= mask.values.size:
        raise ValueError(f"k must be in [1, {mask.values.size}], got {k}")
    return mask.ranking[:k].copy()


def stage2_loss_and_grads(fm: FmModule, g: LearnNet, zb: np.ndarray, xb: np.ndarray):
    """Masked-reconstruction loss on one batch with its analytic gradients.

    Returns ``(loss, fm_grads, g_grads)`` where the gradient lists follow the
    layer order of each network (weights before bias).
    """
    logits, fm_tape = nn.forward(fm.mask_net, zb, capture=True)
    soft = _softmax_rows(logits)
    mask_row = np.mean(soft, axis=0, keepdims=True)
    z_weighted = zb * mask_row
    out, g_tape = nn.forward(g.layers, z_weighted, capture=True)
    loss = nn.mse_loss(out, xb)

    g_grads, d_zw = nn.backward(g.layers, g_tape, nn.mse_loss_grad(out, xb))
    # Broadcast mask: every sample shares the row, so gradients sum over rows.
    d_mask = np.sum(d_zw * zb, axis=0, keepdims=True)
    d_soft = np.broadcast_to(d_mask / zb.shape[0], soft.shape)
    # Row-wise softmax Jacobian product.
    d_logits = soft * (d_soft - np.sum(d_soft * soft, axis=1, keepdims=True))
    fm_grads, _ = nn.backward(fm.mask_net, fm_tape, d_logits)
    return loss, fm_grads, g_grads


def _stage2_batch_step(fm: FmModule, g: LearnNet, zb: np.ndarray, xb: np.ndarray,
                       adam: nn.AdamState, params: list[np.ndarray]) -> float:
    loss, fm_grads, g_grads = stage2_loss_and_grads(fm, g, zb, xb)
    if not np.isfinite(loss):
        raise TrainingDivergedError("non-finite mask-training loss")
    nn.adam_step(adam, params, nn.flatten_grads(fm_grads) + nn.flatten_grads(g_grads))
    return loss


def _stage2_loss(fm: FmModule, g: LearnNet, z: np.ndarray, x: np.ndarray) -> float:
    out, _ = nn.forward(g.layers, z * fm_forward(fm, z))
    return nn.mse_loss(out, x)


def train_stage2(
    fm: FmModule,
    g: LearnNet,
    z_train: np.ndarray,
    x_train: np.ndarray,
    batch_size: int = 512,
    max_epochs: int = 100,
    patience: int = 20,
    lr: float = 1e-3,
    rng: Rng | None = None,
    val_scorer=None,
) -> tuple[FeatureMask, TrainReport]:
    """Jointly train the mask network and learning network on frozen latents.

    With ``val_scorer`` (a ``FeatureMask -> float`` callable, higher is
    better) training early-stops like stage 1 and restores the best weights;
    without it the full epoch budget runs, which is the right mode when
    (k, tau) get swept afterwards. The returned mask aggregates the whole
    training set, not just the last minibatch.
    """
    if z_train.shape[0] != x_train.shape[0]:
        raise ShapeError(
            f"latent/input row mismatch: {z_train.shape[0]} vs {x_train.shape[0]}"
        )
    if z_train.shape[0] == 0:
        raise ValueError("training set is empty")
    rng = rng if rng is not None else Rng(0)
    report = TrainReport()
    if max_epochs <= 0:
        return FeatureMask.from_values(fm_forward(fm, z_train)[0]), report

    params = fm.params() + g.params()
    adam = nn.AdamState(params, lr=lr)
    stopper = EarlyStopper(patience)

    def snapshot():
        return [p.copy() for p in params]

    best_params = snapshot()

    for epoch in range(max_epochs):
        perm = rng.split(f"epoch/{epoch}").permutation(z_train.shape[0])
        for start in range(0, z_train.shape[0], batch_size):
            rows = perm[start : start + batch_size]
            _stage2_batch_step(fm, g, z_train[rows], x_train[rows], adam, params)

        report.train_loss.append(_stage2_loss(fm, g, z_train, x_train))
        report.epochs_run = epoch + 1
        if val_scorer is not None:
            mask = FeatureMask.from_values(fm_forward(fm, z_train)[0])
            report.val_auc.append(float(val_scorer(mask)))
            if stopper.update(epoch, report.val_auc[-1]):
                best_params = snapshot()
            if stopper.should_stop:
                break

    if val_scorer is not None:
        report.best_epoch = stopper.best_epoch
        for p, s in zip(params, best_params):
            p[...] = s
    return FeatureMask.from_values(fm_forward(fm, z_train)[0]), report


def write_mask(path, mask: FeatureMask) -> None:
    """Plain-text export: one ``index value`` pair per line, best feature first."""
    with open(path, "w") as f:
        for idx in mask.ranking:
            f.write(f"{idx} {float(mask.values[idx])!r}\n")


def read_mask(path) -> FeatureMask:
    pairs = []
    with open(path) as f:
        for line in f:
            idx, value = line.split()
            pairs.append((int(idx), float(value)))
    values = np.zeros(len(pairs))
    for idx, value in pairs:
        values[idx] = value
    return FeatureMask.from_values(values)
