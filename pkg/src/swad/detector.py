"""Inference pipeline: soft latent weighting, anomaly scoring, AUC, thresholds.

A sample's anomaly score is the squared Euclidean distance between the sample
and the decoding of its soft-selected latent code: the top-k latent features
keep their values, the remaining ones are scaled by tau. tau=1 (or k=L)
collapses to plain autoencoder scoring, which is the reference point the
evaluation commands compare against.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError


@dataclass
class WeightingConfig:
    """Soft-selection hyperparameters: keep top-k features, scale the rest by tau.

    tau spans [0, 1]: 0 removes non-selected features outright, 1 is the
    plain-autoencoder degenerate case used for baseline comparisons.
    """

    k: int
    tau: float
    selected_indices: np.ndarray | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if self.selected_indices is not None:
            idx = np.asarray(self.selected_indices, dtype=np.intp)
            if len(np.unique(idx)) != self.k or len(idx) != self.k:
                raise ValueError(
                    f"selected_indices must hold exactly k={self.k} distinct indices"
                )
            self.selected_indices = idx

    @classmethod
    def vanilla(cls, latent_dim: int) -> "WeightingConfig":
        """All features selected at full weight: identical to plain AE scoring."""
        return cls(k=latent_dim, tau=1.0, selected_indices=np.arange(latent_dim))

    @classmethod
    def from_mask(cls, mask, k: int, tau: float) -> "WeightingConfig":
        """Derive the selected set from a feature mask's importance ranking."""
        return cls(k=k, tau=tau, selected_indices=np.asarray(mask.ranking[:k], dtype=np.intp))


@dataclass
class ScoreSet:
    """Per-sample anomaly scores with optional binary labels (1 = abnormal)."""

    errors: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.errors)):
            raise ValueError("scores contain non-finite values")
        if np.any(self.errors < 0):
            raise ValueError("scores must be non-negative")
        if self.labels is not None:
            self.labels = np.asarray(self.labels).reshape(-1).astype(np.int64)
            if self.labels.shape[0] != self.errors.shape[0]:
                raise ShapeError(
                    f"{self.labels.shape[0]} labels for {self.errors.shape[0]} scores"
                )


@dataclass
class Threshold:
    epsilon_0: float
    source: str = "validation_fit"


def weight_latent(z: np.ndarray, cfg: WeightingConfig) -> np.ndarray:
    """Scale non-selected latent columns by tau, keep selected columns verbatim."""
    if cfg.selected_indices is None:
        raise ValueError("WeightingConfig carries no selected_indices; build it via from_mask/vanilla")
    if cfg.selected_indices.size and (
        cfg.selected_indices.min() < 0 or cfg.selected_indices.max() >= z.shape[1]
    ):
        raise IndexError(
            f"selected index out of range for latent dim {z.shape[1]}: {cfg.selected_indices}"
        )
    weights = np.full((1, z.shape[1]), cfg.tau)
    weights[0, cfg.selected_indices] = 1.0
    return z * weights


def reconstruction_errors(model, x: np.ndarray) -> np.ndarray:
    """Plain per-row squared reconstruction error (no latent weighting)."""
    d = x - model.reconstruct(x)
    return np.sum(d * d, axis=1)


def errors_from_latents(model, z: np.ndarray, x: np.ndarray, cfg: WeightingConfig) -> np.ndarray:
    """Scores from precomputed latents; lets grid sweeps encode once per model."""
    d = x - model.decode(weight_latent(z, cfg))
    return np.sum(d * d, axis=1)


def score(model, mask, cfg: WeightingConfig, x: np.ndarray,
          labels: np.ndarray | None = None) -> ScoreSet:
    """Per-sample weighted-reconstruction errors (no averaging across samples)."""
    if cfg.selected_indices is None:
        if mask is None:
            raise ValueError("either a feature mask or explicit selected_indices is required")
        cfg = WeightingConfig.from_mask(mask, cfg.k, cfg.tau)
    return ScoreSet(errors_from_latents(model, model.encode(x), x, cfg), labels)


def _midranks(values: np.ndarray) -> np.ndarray:
    # Tied values share the average of their 1-based positions.
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    group_start = np.cumsum(counts) - counts
    return group_start[inverse] + (counts[inverse] + 1) / 2.0


def auc(scores: ScoreSet) -> float:
    """Rank-based ROC-AUC: P(abnormal score > normal score) + 1/2 P(tie)."""
    if scores.labels is None:
        raise ValueError("AUC requires labels")
    labels = scores.labels
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"AUC needs both classes; got {n_pos} abnormal and {n_neg} normal"
        )
    ranks = _midranks(scores.errors)
    u = float(np.sum(ranks[labels == 1])) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def fit_threshold(val_scores: ScoreSet, objective: str = "max_balanced_accuracy") -> Threshold:
    """Pick the score cut maximizing balanced accuracy on labeled validation data.

    Candidates are midpoints between consecutive distinct scores; ties resolve
    to the smallest cut. With a single distinct score the cut degenerates to
    that value (balanced accuracy 0.5).
    """
    if objective != "max_balanced_accuracy":
        raise ValueError(f"unknown threshold objective {objective!r}")
    if val_scores.labels is None:
        raise ValueError("threshold fitting requires labels")
    labels = val_scores.labels
    abnormal = np.sort(val_scores.errors[labels == 1])
    normal = np.sort(val_scores.errors[labels == 0])
    if abnormal.size == 0 or normal.size == 0:
        raise ValueError("threshold fitting needs both classes in the validation set")

    distinct = np.unique(val_scores.errors)
    if distinct.size == 1:
        return Threshold(float(distinct[0]))
    cuts = (distinct[:-1] + distinct[1:]) / 2.0
    tpr = 1.0 - np.searchsorted(abnormal, cuts, side="right") / abnormal.size
    tnr = np.searchsorted(normal, cuts, side="right") / normal.size
    balanced = (tpr + tnr) / 2.0
    # argmax returns the first maximum; cuts ascend, so ties pick the smaller cut
    return Threshold(float(cuts[int(np.argmax(balanced))]))


def detect(scores: ScoreSet, thr: Threshold) -> np.ndarray:
    """1 where the score strictly exceeds the threshold, else 0."""
    return (scores.errors > thr.epsilon_0).astype(np.int64)


def write_scores_csv(path, scores: ScoreSet, sample_ids=None) -> None:
    """Score export: ``sample_id,score,label`` rows."""
    n = scores.errors.shape[0]
    ids = sample_ids if sample_ids is not None else range(n)
    labels = scores.labels if scores.labels is not None else [""] * n
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["sample_id", "score", "label"])
        for sid, err, lab in zip(ids, scores.errors, labels):
            writer.writerow([sid, repr(float(err)), lab])
