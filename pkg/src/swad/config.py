"""Run configuration: flat sectioned key/value files, strictly validated.

Unknown sections or keys are hard errors so typos fail fast instead of
silently running with defaults. The full schema is documented in the README.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

from .numerics import SwadError


class ConfigError(SwadError):
    """Invalid, missing, or unknown configuration values."""


@dataclass
class DatasetSpec:
    kind: str = "idx"
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    train_csv: str = ""
    test_csv: str = ""
    label_column: str = "label"
    data_dir: str = ""
    normal_class: int = 0
    val_fraction: float = 0.1


@dataclass
class ModelSpec:
    latent_dim: int = 128
    hidden_dim: int = 256
    leaky_slope: float = 0.2
    output_activation: str = "leaky_relu"
    fm_hidden: tuple[int, ...] = ()


@dataclass
class TrainingSpec:
    lr: float = 1e-3
    batch_size: int = 512
    max_epochs: int = 200
    patience: int = 20
    stage2_epochs: int = 100
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    monitor_k: int | None = None
    monitor_tau: float | None = None


@dataclass
class SweepSpec:
    k_grid: tuple[int, ...] = ()
    tau_grid: tuple[float, ...] = ()
    latent_grid: tuple[int, ...] = ()
    normal_classes: tuple[int, ...] = ()


@dataclass
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    training: TrainingSpec = field(default_factory=TrainingSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    out_dir: str = "runs/out"
    source_path: str = ""

    def k_grid(self, latent_dim: int | None = None) -> tuple[int, ...]:
        """Configured k grid (clamped to the latent dim), or the default fractions."""
        latent = latent_dim if latent_dim is not None else self.model.latent_dim
        if self.sweep.k_grid:
            return tuple(k for k in self.sweep.k_grid if k <= latent) or (latent,)
        return default_k_grid(latent)

    def tau_grid(self) -> tuple[float, ...]:
        if self.sweep.tau_grid:
            return self.sweep.tau_grid
        return tuple(i / 10.0 for i in range(11))

    def latent_grid(self) -> tuple[int, ...]:
        if self.sweep.latent_grid:
            return self.sweep.latent_grid
        return (self.model.latent_dim,)

    def sha256(self) -> str:
        """Digest of the experiment-defining values (output location excluded)."""
        canon = repr((self.dataset, self.model, self.training, self.sweep))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def default_k_grid(latent: int) -> tuple[int, ...]:
    """Six selected-feature counts spanning small fractions up to the full dim."""
    raw = [latent // 16, latent // 8, latent // 4, latent // 2, (3 * latent) // 4, latent]
    grid: list[int] = []
    for k in raw:
        k = max(1, k)
        if k not in grid:
            grid.append(k)
    return tuple(grid)


def _parse_int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(part) for part in raw.split(",") if part.strip() != "")


def _parse_float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(part) for part in raw.split(",") if part.strip() != "")


_CONVERTERS = {
    "dataset": {
        "kind": str,
        "train_images": str,
        "train_labels": str,
        "test_images": str,
        "test_labels": str,
        "train_csv": str,
        "test_csv": str,
        "label_column": str,
        "data_dir": str,
        "normal_class": int,
        "val_fraction": float,
    },
    "model": {
        "latent_dim": int,
        "hidden_dim": int,
        "leaky_slope": float,
        "output_activation": str,
        "fm_hidden": _parse_int_list,
    },
    "training": {
        "lr": float,
        "batch_size": int,
        "max_epochs": int,
        "patience": int,
        "stage2_epochs": int,
        "seeds": _parse_int_list,
        "monitor_k": int,
        "monitor_tau": float,
    },
    "sweep": {
        "k_grid": _parse_int_list,
        "tau_grid": _parse_float_list,
        "latent_grid": _parse_int_list,
        "normal_classes": _parse_int_list,
    },
    "output": {
        "out_dir": str,
    },
}

_DATASET_KINDS = ("idx", "csv", "cifar10")
_REQUIRED_DATASET_KEYS = {
    "idx": ("train_images", "train_labels", "test_images", "test_labels"),
    "csv": ("train_csv", "test_csv"),
    "cifar10": ("data_dir",),
}


def parse_config(path) -> RunConfig:
    """Read and validate a run configuration file."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not read:
        raise ConfigError(f"config file not found: {path}")

    cfg = RunConfig(source_path=str(path))
    sections = {
        "dataset": cfg.dataset,
        "model": cfg.model,
        "training": cfg.training,
        "sweep": cfg.sweep,
    }
    for section in parser.sections():
        if section not in _CONVERTERS:
            raise ConfigError(
                f"unknown config section [{section}]; expected one of {sorted(_CONVERTERS)}"
            )
        for key, raw in parser.items(section):
            conv = _CONVERTERS[section].get(key)
            if conv is None:
                raise ConfigError(
                    f"unknown key {key!r} in [{section}]; "
                    f"allowed: {sorted(_CONVERTERS[section])}"
                )
            try:
                value = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None
            if section == "output":
                cfg.out_dir = value
            else:
                setattr(sections[section], key, value)

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    d, m, t = cfg.dataset, cfg.model, cfg.training
    if d.kind not in _DATASET_KINDS:
        raise ConfigError(f"dataset kind must be one of {_DATASET_KINDS}, got {d.kind!r}")
    for key in _REQUIRED_DATASET_KEYS[d.kind]:
        if not getattr(d, key):
            raise ConfigError(f"dataset kind {d.kind!r} requires [dataset] {key}")
    if not 0.0 < d.val_fraction <= 0.5:
        raise ConfigError(f"val_fraction must be in (0, 0.5], got {d.val_fraction}")
    if m.latent_dim < 1 or m.hidden_dim < 1:
        raise ConfigError(
            f"model dims must be >= 1, got latent={m.latent_dim}, hidden={m.hidden_dim}"
        )
    if not 0.0 < m.leaky_slope < 1.0:
        raise ConfigError(f"leaky_slope must be in (0, 1), got {m.leaky_slope}")
    if m.output_activation not in ("leaky_relu", "linear"):
        raise ConfigError(
            f"output_activation must be leaky_relu or linear, got {m.output_activation!r}"
        )
    if t.lr <= 0:
        raise ConfigError(f"lr must be > 0, got {t.lr}")
    if t.batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {t.batch_size}")
    if t.max_epochs < 0 or t.stage2_epochs < 0 or t.patience < 0:
        raise ConfigError("epoch budgets and patience must be >= 0")
    if not t.seeds:
        raise ConfigError("seeds list must be non-empty")
    if (t.monitor_k is None) != (t.monitor_tau is None):
        raise ConfigError("monitor_k and monitor_tau must be set together")
    if t.monitor_k is not None and not 1 <= t.monitor_k <= m.latent_dim:
        raise ConfigError(f"monitor_k must be in [1, {m.latent_dim}], got {t.monitor_k}")
    if t.monitor_tau is not None and not 0.0 <= t.monitor_tau <= 1.0:
        raise ConfigError(f"monitor_tau must be in [0, 1], got {t.monitor_tau}")
    for k in cfg.sweep.k_grid:
        if not 1 <= k <= m.latent_dim:
            raise ConfigError(f"k grid value {k} outside [1, {m.latent_dim}]")
    for tau in cfg.tau_grid():
        if not 0.0 <= tau <= 1.0:
            raise ConfigError(f"tau grid value {tau} outside [0, 1]")
    if not cfg.k_grid() or not cfg.tau_grid():
        raise ConfigError("sweep grids must be non-empty")
    for latent in cfg.latent_grid():
        if latent < 1:
            raise ConfigError(f"latent grid value {latent} must be >= 1")
