"""Command-line surface: train, eval, sweep, latdim.

Exit codes are a stable contract: 0 success, 2 configuration/input errors,
3 numeric failures (diverged training). All artifacts land under the
configured output directory.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

import numpy as np

from . import detector, feature_mask, pipeline, report
from .checkpoint import CheckpointBundle, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, parse_config
from .data import DataError, make_one_class_split, write_split_manifest
from .detector import WeightingConfig, auc, detect, fit_threshold
from .numerics import Rng, SwadError, TrainingDivergedError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _write_history_csv(path, stage1, stage2) -> None:
    with open(path, "w", newline="") as f:
        f.write("stage,epoch,train_loss,val_auc\n")
        for stage, rep in ((1, stage1), (2, stage2)):
            for i, loss in enumerate(rep.train_loss):
                val = repr(rep.val_auc[i]) if i < len(rep.val_auc) else ""
                f.write(f"{stage},{i + 1},{loss!r},{val}\n")


def _train_all_seeds(cfg: RunConfig, train_raw, test_raw, parallel: bool):
    seeds = cfg.training.seeds
    if not parallel or len(seeds) == 1:
        return [pipeline.train_run(cfg, train_raw, test_raw, seed) for seed in seeds]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=len(seeds)) as pool:
        return list(pool.map(
            lambda seed: pipeline.train_run(cfg, train_raw, test_raw, seed), seeds))


def cmd_train(cfg: RunConfig, args) -> int:
    train_raw, test_raw = pipeline.load_datasets(cfg)
    out_dir = report.ensure_out_dir(cfg.out_dir)
    runs = _train_all_seeds(cfg, train_raw, test_raw,
                            parallel=bool(getattr(args, "parallel_seeds", False)))
    for seed, run in zip(cfg.training.seeds, runs):
        ckpt_dir = os.path.join(out_dir, f"ckpt_seed{seed}")
        save_checkpoint(
            ckpt_dir, run.model,
            meta={
                "seed": seed,
                "normal_class": run.split.normal_class,
                "config_sha256": cfg.sha256(),
            },
            fm=run.fm, mask=run.mask,
        )
        write_split_manifest(
            os.path.join(out_dir, f"split_seed{seed}.txt"),
            run.split, seed, cfg.dataset.val_fraction,
        )
        feature_mask.write_mask(os.path.join(out_dir, f"mask_seed{seed}.txt"), run.mask)
        _write_history_csv(
            os.path.join(out_dir, f"train_history_seed{seed}.csv"),
            run.stage1_report, run.stage2_report,
        )
        report.plot_training_curves(
            os.path.join(out_dir, f"train_curves_seed{seed}.png"),
            run.stage1_report, run.stage2_report,
        )

        s1, s2 = run.stage1_report, run.stage2_report
        best_val = s1.val_auc[s1.best_epoch] if s1.best_epoch is not None else float("nan")
        print(f"seed {seed} stage 1: epochs={s1.epochs_run} "
              f"final_loss={s1.train_loss[-1] if s1.train_loss else float('nan'):.6g} "
              f"best_val_auc={best_val:.4f}")
        s2_val = f" val_auc={s2.val_auc[-1]:.4f}" if s2.val_auc else ""
        print(f"seed {seed} stage 2: epochs={s2.epochs_run} "
              f"final_loss={s2.train_loss[-1] if s2.train_loss else float('nan'):.6g}{s2_val}")
        print(f"seed {seed} checkpoint: {ckpt_dir}")
    return EXIT_OK


def _rebuild_split(cfg: RunConfig, bundle: CheckpointBundle, args, datasets=None):
    train_raw, test_raw = datasets if datasets is not None else pipeline.load_datasets(cfg)
    seed = int(bundle.meta["seed"])
    normal_class = int(bundle.meta["normal_class"])
    # The manifest owns the split identity; a conflicting override would score
    # the checkpoint against a split it was never trained for.
    if getattr(args, "normal_class", None) not in (None, normal_class):
        raise ConfigError(
            f"--normal-class {args.normal_class} conflicts with the checkpoint "
            f"(trained with normal class {normal_class})"
        )
    split = make_one_class_split(
        train_raw, test_raw, normal_class, cfg.dataset.val_fraction,
        Rng(seed).split("split"),
    )
    return split, seed


def _weighting(bundle: CheckpointBundle, k: int, tau: float) -> WeightingConfig:
    latent = bundle.model.latent_dim
    if k < latent and bundle.mask is None:
        raise DataError(
            f"checkpoint is stage-1 only; k={k} < L={latent} needs a trained feature mask"
        )
    if bundle.mask is not None:
        return WeightingConfig.from_mask(bundle.mask, k, tau)
    return WeightingConfig(k=k, tau=tau, selected_indices=np.arange(latent))


def cmd_eval(cfg: RunConfig, args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    k = args.k if args.k is not None else bundle.model.latent_dim
    tau = args.tau if args.tau is not None else 1.0
    if not 1 <= k <= bundle.model.latent_dim:
        raise ConfigError(f"--k must be in [1, {bundle.model.latent_dim}], got {k}")
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"--tau must be in [0, 1], got {tau}")
    split, seed = _rebuild_split(cfg, bundle, args)
    cfg_w = _weighting(bundle, k, tau)

    val_scores = detector.score(bundle.model, bundle.mask, cfg_w, split.val_x, split.val_y)
    threshold = fit_threshold(val_scores)
    test_scores = detector.score(bundle.model, bundle.mask, cfg_w, split.test_x, split.test_y)
    test_auc = auc(test_scores)
    decisions = detect(test_scores, threshold)
    labels = test_scores.labels
    tp = int(np.sum((decisions == 1) & (labels == 1)))
    tn = int(np.sum((decisions == 0) & (labels == 0)))
    fp = int(np.sum((decisions == 1) & (labels == 0)))
    fn = int(np.sum((decisions == 0) & (labels == 1)))

    out_dir = report.ensure_out_dir(cfg.out_dir)
    tag = f"seed{seed}_k{k}_tau{tau!r}"
    detector.write_scores_csv(os.path.join(out_dir, f"scores_{tag}.csv"), test_scores)
    report.write_eval_report(
        os.path.join(out_dir, f"eval_{tag}.txt"),
        {
            "seed": seed, "k": k, "tau": repr(tau),
            "test_auc": repr(test_auc),
            "threshold": repr(threshold.epsilon_0),
            "tp": tp, "tn": tn, "fp": fp, "fn": fn,
        },
    )
    print(f"seed {seed} k={k} tau={tau}: test_auc={test_auc:.4f} "
          f"threshold={threshold.epsilon_0:.6g} tp={tp} tn={tn} fp={fp} fn={fn}")
    return EXIT_OK


def _discover_checkpoints(cfg: RunConfig, args) -> list[str]:
    if args.checkpoints:
        return list(args.checkpoints)
    found = sorted(glob.glob(os.path.join(cfg.out_dir, "ckpt_seed*")))
    if not found:
        raise ConfigError(
            f"no checkpoints given and none found under {cfg.out_dir} (expected ckpt_seed*)"
        )
    return found


def cmd_sweep(cfg: RunConfig, args) -> int:
    ckpt_dirs = _discover_checkpoints(cfg, args)
    datasets = pipeline.load_datasets(cfg)
    runs = []
    for ckpt_dir in ckpt_dirs:
        bundle = load_checkpoint(ckpt_dir)
        if bundle.stage != 2 or bundle.mask is None:
            raise DataError(f"{ckpt_dir}: sweep needs stage-2 checkpoints")
        split, seed = _rebuild_split(cfg, bundle, args, datasets)
        runs.append((seed, bundle.model, bundle.mask, split))

    sweep = pipeline.sweep_runs(
        runs, cfg.k_grid(runs[0][1].latent_dim), cfg.tau_grid()
    )
    out_dir = report.ensure_out_dir(cfg.out_dir)
    report.write_surface_csv(os.path.join(out_dir, "surface.csv"), sweep)
    report.write_sweep_summary(os.path.join(out_dir, "sweep_summary.txt"), sweep)
    report.plot_sweep_surface(os.path.join(out_dir, "sweep_surface.png"), sweep)

    best = sweep.argmax_cell()
    print(f"best cell: k={best.k} tau={best.tau} "
          f"val_auc={best.mean_val:.4f}±{best.std_val:.4f} "
          f"test_auc={best.mean_test:.4f}±{best.std_test:.4f}")
    return EXIT_OK


def cmd_latdim(cfg: RunConfig, args) -> int:
    train_raw, test_raw = pipeline.load_datasets(cfg)
    if getattr(args, "normal_class", None) is not None:
        classes = (args.normal_class,)
    else:
        classes = cfg.sweep.normal_classes or tuple(
            int(c) for c in np.unique(train_raw.class_labels)
        )
    out_dir = report.ensure_out_dir(cfg.out_dir)

    detail_rows = []
    summary_rows = []
    for latent in cfg.latent_grid():
        class_ae: list[float] = []
        class_swad: list[float] = []
        for normal_class in classes:
            runs = [
                pipeline.train_run(cfg, train_raw, test_raw, seed,
                                   normal_class=normal_class, latent_dim=latent)
                for seed in cfg.training.seeds
            ]
            sweep = pipeline.sweep_runs(
                [(r.seed, r.model, r.mask, r.split) for r in runs],
                cfg.k_grid(latent), cfg.tau_grid(),
            )
            best = sweep.argmax_cell()
            ae_aucs = [pipeline.vanilla_test_auc(r.model, r.split) for r in runs]
            for r, ae_auc, swad_auc in zip(runs, ae_aucs, best.test_aucs):
                detail_rows.append((latent, normal_class, r.seed, ae_auc, swad_auc,
                                    best.k, best.tau))
            class_ae.append(float(np.mean(ae_aucs)))
            class_swad.append(best.mean_test)
            print(f"latent {latent} class {normal_class}: "
                  f"ae={class_ae[-1]:.4f} best(k={best.k}, tau={best.tau}) "
                  f"swad={best.mean_test:.4f}")
        summary_rows.append({
            "latent_dim": latent,
            "ae_auc_mean": float(np.mean(class_ae)),
            "ae_auc_std": float(np.std(class_ae)),
            "swad_auc_mean": float(np.mean(class_swad)),
            "swad_auc_std": float(np.std(class_swad)),
        })
        print(f"latent {latent}: ae={summary_rows[-1]['ae_auc_mean']:.4f} "
              f"swad={summary_rows[-1]['swad_auc_mean']:.4f}")

    with open(os.path.join(out_dir, "latdim_detail.csv"), "w", newline="") as f:
        f.write("latent_dim,normal_class,seed,ae_test_auc,swad_test_auc,best_k,best_tau\n")
        for latent, cls, seed, ae_auc, swad_auc, k, tau in detail_rows:
            f.write(f"{latent},{cls},{seed},{ae_auc!r},{swad_auc!r},{k},{tau!r}\n")
    report.write_latdim_csv(os.path.join(out_dir, "latdim_auc.csv"), summary_rows)
    report.plot_latdim(os.path.join(out_dir, "latdim_auc.png"), summary_rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swad",
        description="Two-stage autoencoder anomaly detection with latent feature "
                    "selection and soft weighting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--normal-class", type=int, default=None,
                       help="override the normal class")

    p_train = sub.add_parser("train", help="run both training stages for every seed")
    common(p_train)
    p_train.add_argument("--seed", type=int, default=None, help="train only this seed")
    p_train.add_argument("--parallel-seeds", action="store_true",
                         help="train the seeds concurrently (they are independent)")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate one checkpoint at a (k, tau)")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p_eval.add_argument("--k", type=int, default=None, help="selected-feature count")
    p_eval.add_argument("--tau", type=float, default=None, help="non-selected weight")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="evaluate the (k, tau) grid over checkpoints")
    common(p_sweep)
    p_sweep.add_argument("--checkpoints", nargs="*", default=None,
                         help="checkpoint directories (default: out_dir/ckpt_seed*)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_lat = sub.add_parser("latdim", help="full pipeline across latent dimensions")
    common(p_lat)
    p_lat.set_defaults(func=cmd_latdim)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.out is not None:
            cfg.out_dir = args.out
        if args.normal_class is not None:
            cfg.dataset.normal_class = args.normal_class
        if getattr(args, "seed", None) is not None:
            cfg.training.seeds = (args.seed,)
        return args.func(cfg, args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SwadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
