"""End-to-end experiment machinery shared by the CLI commands and the tests.

One "run" is: build a one-class split for a seed, train the autoencoder on
the normal rows, train the latent feature mask on the frozen encoder's codes,
then evaluate (k, tau) cells by decoding soft-selected latents. Grid cells
over a frozen model are independent, so the sweep can fan out over a thread
pool sized by the SWAD_THREADS environment variable (absent means serial).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import autoencoder, detector, feature_mask
from .config import RunConfig
from .data import (
    RawDataset,
    load_cifar10,
    load_csv,
    load_idx,
    make_one_class_split,
    OneClassSplit,
)
from .detector import ScoreSet, WeightingConfig, auc
from .feature_mask import FeatureMask
from .numerics import Rng
from .report import SweepCell, SweepReport


def load_datasets(cfg: RunConfig) -> tuple[RawDataset, RawDataset]:
    """Canonical train/test datasets per the config's dataset kind."""
    ds = cfg.dataset
    if ds.kind == "idx":
        return (
            load_idx(ds.train_images, ds.train_labels),
            load_idx(ds.test_images, ds.test_labels),
        )
    if ds.kind == "csv":
        return (
            load_csv(ds.train_csv, ds.label_column),
            load_csv(ds.test_csv, ds.label_column),
        )
    return load_cifar10(ds.data_dir)


@dataclass
class TrainedRun:
    """Everything produced by one seed's two-stage training."""

    seed: int
    split: OneClassSplit
    model: autoencoder.AutoencoderModel
    fm: feature_mask.FmModule
    mask: FeatureMask
    stage1_report: autoencoder.TrainReport
    stage2_report: autoencoder.TrainReport


def train_run(
    cfg: RunConfig,
    train_raw: RawDataset,
    test_raw: RawDataset,
    seed: int,
    normal_class: int | None = None,
    latent_dim: int | None = None,
) -> TrainedRun:
    """Run both training stages for one seed; data split and weights re-seed together."""
    normal_class = normal_class if normal_class is not None else cfg.dataset.normal_class
    latent_dim = latent_dim if latent_dim is not None else cfg.model.latent_dim
    m, t = cfg.model, cfg.training
    rng = Rng(seed)

    split = make_one_class_split(
        train_raw, test_raw, normal_class, cfg.dataset.val_fraction, rng.split("split")
    )
    model = autoencoder.build(
        split.train_x.shape[1], latent_dim, m.hidden_dim, rng.split("weights"),
        m.leaky_slope, m.output_activation,
    )
    stage1_report = autoencoder.train_stage1(
        model, split.train_x, split,
        batch_size=t.batch_size, max_epochs=t.max_epochs, patience=t.patience,
        lr=t.lr, rng=rng.split("stage1"),
    )

    z_train = model.encode(split.train_x)
    fm = feature_mask.build_fm(latent_dim, rng.split("fm"), m.fm_hidden, m.leaky_slope)
    g = feature_mask.build_learn_net(
        latent_dim, m.hidden_dim, split.train_x.shape[1], rng.split("g"),
        m.leaky_slope, m.output_activation,
    )

    val_scorer = None
    if t.monitor_k is not None and t.monitor_tau is not None:
        monitor_k = min(t.monitor_k, latent_dim)

        def val_scorer(mask: FeatureMask) -> float:
            cfg_w = WeightingConfig.from_mask(mask, monitor_k, t.monitor_tau)
            scores = detector.score(model, mask, cfg_w, split.val_x, split.val_y)
            return auc(scores)

    mask, stage2_report = feature_mask.train_stage2(
        fm, g, z_train, split.train_x,
        batch_size=t.batch_size, max_epochs=t.stage2_epochs, patience=t.patience,
        lr=t.lr, rng=rng.split("stage2"), val_scorer=val_scorer,
    )
    return TrainedRun(seed, split, model, fm, mask, stage1_report, stage2_report)


def _pool_size() -> int:
    raw = os.environ.get("SWAD_THREADS", "").strip()
    if not raw:
        return 1
    return max(1, int(raw))


def evaluate_cells(
    model: autoencoder.AutoencoderModel,
    mask: FeatureMask,
    split: OneClassSplit,
    cells: list[tuple[int, float]],
) -> list[tuple[float, float]]:
    """(val AUC, test AUC) per (k, tau) cell; encodes each partition once."""
    z_val = model.encode(split.val_x)
    z_test = model.encode(split.test_x)

    def one_cell(cell: tuple[int, float]) -> tuple[float, float]:
        k, tau = cell
        cfg_w = WeightingConfig.from_mask(mask, k, tau)
        val = auc(ScoreSet(
            detector.errors_from_latents(model, z_val, split.val_x, cfg_w), split.val_y))
        test = auc(ScoreSet(
            detector.errors_from_latents(model, z_test, split.test_x, cfg_w), split.test_y))
        return val, test

    workers = _pool_size()
    if workers == 1:
        return [one_cell(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one_cell, cells))


def sweep_runs(
    runs: list[tuple[int, autoencoder.AutoencoderModel, FeatureMask, OneClassSplit]],
    k_grid: tuple[int, ...],
    tau_grid: tuple[float, ...],
) -> SweepReport:
    """Evaluate the full (k, tau) grid for each seed's trained model."""
    if not k_grid or not tau_grid:
        raise ValueError("sweep grids must be non-empty")
    cells = [(k, tau) for k in k_grid for tau in tau_grid]
    report = SweepReport(
        k_grid=tuple(k_grid),
        tau_grid=tuple(tau_grid),
        seeds=tuple(seed for seed, *_ in runs),
        cells=[SweepCell(k, tau) for k, tau in cells],
    )
    for _, model, mask, split in runs:
        results = evaluate_cells(model, mask, split, cells)
        for cell, (val, test) in zip(report.cells, results):
            cell.val_aucs.append(val)
            cell.test_aucs.append(test)
    return report


def vanilla_test_auc(model: autoencoder.AutoencoderModel, split: OneClassSplit) -> float:
    """Plain reconstruction-error AUC on the test partition."""
    scores = ScoreSet(detector.reconstruction_errors(model, split.test_x), split.test_y)
    return auc(scores)
