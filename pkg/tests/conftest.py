"""Shared fixtures: synthetic one-class image datasets written as IDX files."""

from __future__ import annotations

import numpy as np
import pytest

from swad.data import write_idx

SIDE = 6  # synthetic images are SIDE x SIDE


def class_pattern(label: int, side: int = SIDE) -> np.ndarray:
    """A distinct smooth grayscale pattern per class."""
    yy, xx = np.mgrid[0:side, 0:side] / (side - 1)
    if label == 0:
        img = 220 * (1 - yy) * (1 - xx)
    elif label == 1:
        img = 220 * yy * xx
    else:
        img = 110 + 100 * np.sin(2 * np.pi * xx * (label + 1))
    return np.clip(img, 0, 255)


def make_synthetic_arrays(n_per_class: int, classes: int, seed: int,
                          noise: float = 12.0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for label in range(classes):
        base = class_pattern(label).reshape(-1)
        jitter = rng.normal(0.0, noise, size=(n_per_class, base.size))
        images.append(np.clip(base + jitter, 0, 255).astype(np.uint8))
        labels.append(np.full(n_per_class, label, dtype=np.uint8))
    x = np.concatenate(images)
    y = np.concatenate(labels)
    perm = rng.permutation(x.shape[0])
    return x[perm], y[perm]


@pytest.fixture
def synthetic_idx_dataset(tmp_path):
    """Canonical-style train/test IDX files for a 3-class toy image problem."""
    train_x, train_y = make_synthetic_arrays(n_per_class=120, classes=3, seed=11)
    test_x, test_y = make_synthetic_arrays(n_per_class=40, classes=3, seed=12)
    paths = {
        "train_images": tmp_path / "train-images-idx3-ubyte",
        "train_labels": tmp_path / "train-labels-idx1-ubyte",
        "test_images": tmp_path / "t10k-images-idx3-ubyte",
        "test_labels": tmp_path / "t10k-labels-idx1-ubyte",
    }
    write_idx(paths["train_images"], paths["train_labels"], train_x, train_y, SIDE, SIDE)
    write_idx(paths["test_images"], paths["test_labels"], test_x, test_y, SIDE, SIDE)
    return paths


def write_config(path, out_dir, dataset_paths, overrides=None) -> str:
    """Write a small-but-real run config for the synthetic dataset.

    ``overrides`` maps (section, key) tuples to values; None removes a key.
    """
    values = {
        ("dataset", "kind"): "idx",
        ("dataset", "train_images"): dataset_paths["train_images"],
        ("dataset", "train_labels"): dataset_paths["train_labels"],
        ("dataset", "test_images"): dataset_paths["test_images"],
        ("dataset", "test_labels"): dataset_paths["test_labels"],
        ("dataset", "normal_class"): 0,
        ("dataset", "val_fraction"): 0.2,
        ("model", "latent_dim"): 4,
        ("model", "hidden_dim"): 16,
        ("training", "lr"): 1e-3,
        ("training", "batch_size"): 64,
        ("training", "max_epochs"): 30,
        ("training", "patience"): 10,
        ("training", "stage2_epochs"): 30,
        ("training", "seeds"): "1,2",
        ("sweep", "k_grid"): "1,2,4",
        ("sweep", "tau_grid"): "0.0,0.5,1.0",
        ("output", "out_dir"): out_dir,
    }
    values.update(overrides or {})
    sections: dict[str, list[str]] = {}
    for (section, key), value in values.items():
        if value is None:
            continue
        sections.setdefault(section, []).append(f"{key} = {value}")
    text = "\n".join(
        f"[{section}]\n" + "\n".join(lines) for section, lines in sections.items()
    )
    with open(path, "w") as f:
        f.write(text + "\n")
    return str(path)


@pytest.fixture(autouse=True)
def _single_threaded_sweep(monkeypatch):
    # Tests pin the worker pool unless they set SWAD_THREADS themselves.
    monkeypatch.delenv("SWAD_THREADS", raising=False)
