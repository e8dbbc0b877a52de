"""Report emission: delimited outputs plus rendered figures next to them.

Every emitter writes under the caller-supplied directory only. Figures use
the Agg backend with empty PNG metadata so identical runs produce identical
bytes.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_PNG_KWARGS = {"dpi": 130, "metadata": {"Software": None}}


@dataclass
class SweepCell:
    k: int
    tau: float
    val_aucs: list[float] = field(default_factory=list)  # per seed
    test_aucs: list[float] = field(default_factory=list)

    @property
    def mean_val(self) -> float:
        return float(np.mean(self.val_aucs))

    @property
    def std_val(self) -> float:
        return float(np.std(self.val_aucs))

    @property
    def mean_test(self) -> float:
        return float(np.mean(self.test_aucs))

    @property
    def std_test(self) -> float:
        return float(np.std(self.test_aucs))


@dataclass
class SweepReport:
    """Full (k, tau) grid with per-seed AUCs and the validation-argmax cell."""

    k_grid: tuple[int, ...]
    tau_grid: tuple[float, ...]
    seeds: tuple[int, ...]
    cells: list[SweepCell]

    def cell(self, k: int, tau: float) -> SweepCell:
        for c in self.cells:
            if c.k == k and c.tau == tau:
                return c
        raise KeyError(f"no sweep cell (k={k}, tau={tau})")

    def argmax_cell(self) -> SweepCell:
        """Cell with the highest mean validation AUC (first on ties)."""
        best = self.cells[0]
        for c in self.cells[1:]:
            if c.mean_val > best.mean_val:
                best = c
        return best


def write_surface_csv(path, report: SweepReport) -> None:
    """Per-seed sweep surface: ``k,tau,seed,val_auc,test_auc`` rows."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["k", "tau", "seed", "val_auc", "test_auc"])
        for cell in report.cells:
            for seed, val_auc, test_auc in zip(report.seeds, cell.val_aucs, cell.test_aucs):
                writer.writerow([cell.k, repr(cell.tau), seed, repr(val_auc), repr(test_auc)])


def write_sweep_summary(path, report: SweepReport) -> None:
    best = report.argmax_cell()
    lines = [
        "[sweep]",
        f"k_grid = {','.join(str(k) for k in report.k_grid)}",
        f"tau_grid = {','.join(repr(t) for t in report.tau_grid)}",
        f"seeds = {','.join(str(s) for s in report.seeds)}",
        f"best_k = {best.k}",
        f"best_tau = {best.tau!r}",
        f"best_val_auc_mean = {best.mean_val!r}",
        f"best_val_auc_std = {best.std_val!r}",
        f"best_test_auc_mean = {best.mean_test!r}",
        f"best_test_auc_std = {best.std_test!r}",
    ]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _surface_grid(report: SweepReport, attr: str) -> np.ndarray:
    grid = np.zeros((len(report.tau_grid), len(report.k_grid)))
    for j, k in enumerate(report.k_grid):
        for i, tau in enumerate(report.tau_grid):
            grid[i, j] = getattr(report.cell(k, tau), attr)
    return grid


def plot_sweep_surface(path, report: SweepReport) -> None:
    """Validation/test AUC heatmaps over (k, tau) with the best cell marked."""
    val = _surface_grid(report, "mean_val")
    test = _surface_grid(report, "mean_test")
    best = report.argmax_cell()
    bi = report.tau_grid.index(best.tau)
    bj = report.k_grid.index(best.k)

    fig, axes = plt.subplots(1, 2, figsize=(10, 4), constrained_layout=True)
    for ax, grid, title in ((axes[0], val, "validation AUC"), (axes[1], test, "test AUC")):
        im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
        ax.scatter([bj], [bi], marker="o", s=60, facecolors="none", edgecolors="black")
        ax.set_xticks(range(len(report.k_grid)), [str(k) for k in report.k_grid])
        ax.set_yticks(range(len(report.tau_grid)), [f"{t:.1f}" for t in report.tau_grid])
        ax.set_xlabel("k (selected features)")
        ax.set_ylabel("tau (non-selected weight)")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.savefig(path, **_PNG_KWARGS)
    plt.close(fig)


def plot_training_curves(path, stage1_report, stage2_report=None) -> None:
    """Loss and validation-AUC trajectories for one seed's training run."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.6), constrained_layout=True)
    axes[0].plot(range(1, len(stage1_report.train_loss) + 1), stage1_report.train_loss,
                 label="stage 1")
    if stage2_report is not None and stage2_report.train_loss:
        axes[0].plot(range(1, len(stage2_report.train_loss) + 1), stage2_report.train_loss,
                     label="stage 2")
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("training loss")
    axes[0].set_yscale("log")
    axes[0].legend(loc="best")
    axes[0].grid(True, alpha=0.3)

    if stage1_report.val_auc:
        axes[1].plot(range(1, len(stage1_report.val_auc) + 1), stage1_report.val_auc,
                     label="stage 1")
    if stage2_report is not None and stage2_report.val_auc:
        axes[1].plot(range(1, len(stage2_report.val_auc) + 1), stage2_report.val_auc,
                     label="stage 2")
    if stage1_report.best_epoch is not None:
        axes[1].axvline(stage1_report.best_epoch + 1, color="gray", linestyle=":", alpha=0.8)
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("validation AUC")
    axes[1].legend(loc="best")
    axes[1].grid(True, alpha=0.3)
    fig.savefig(path, **_PNG_KWARGS)
    plt.close(fig)


def write_latdim_csv(path, rows: list[dict]) -> None:
    """Latent-dimension study table: one row per dimension."""
    fields = ["latent_dim", "ae_auc_mean", "ae_auc_std", "swad_auc_mean", "swad_auc_std"]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([row["latent_dim"]] + [repr(float(row[k])) for k in fields[1:]])


def plot_latdim(path, rows: list[dict]) -> None:
    dims = [row["latent_dim"] for row in rows]
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    ax.errorbar(dims, [r["ae_auc_mean"] for r in rows], yerr=[r["ae_auc_std"] for r in rows],
                marker="o", capsize=3, label="plain AE")
    ax.errorbar(dims, [r["swad_auc_mean"] for r in rows], yerr=[r["swad_auc_std"] for r in rows],
                marker="s", capsize=3, label="selected+weighted")
    ax.set_xscale("log", base=2)
    ax.set_xticks(dims, [str(d) for d in dims])
    ax.set_xlabel("latent dimension")
    ax.set_ylabel("test AUC (averaged)")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.savefig(path, **_PNG_KWARGS)
    plt.close(fig)


def write_eval_report(path, result: dict) -> None:
    lines = ["[eval]"] + [f"{key} = {result[key]}" for key in sorted(result)]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def ensure_out_dir(out_dir) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return str(out_dir)
