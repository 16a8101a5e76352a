"""Command-line experiment harness.

Subcommands cover the full experiment surface: training, evaluation, the
ensembling sweep, the output-width ablation, paired comparisons, gradient
verification, and dataset generation. Every run writes a manifest echoing
the resolved configuration, so any result can be reproduced from its run
directory alone. Reports and checkpoints are byte-stable under a fixed
seed; wall-clock timings live only in the manifest.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config
from .errors import AwmetaError, ConfigError
from .gradcheck import BLOCKS, DEFAULT_TOLERANCE, run_gradcheck
from .maml import MetaModel, evaluate, evaluate_sweep, train
from .protonet import ProtoModel, evaluate_proto, train_proto
from .reports import (
    report_row,
    write_ablate_csv,
    write_compare_csv,
    write_curve_csv,
    write_gradcheck_csv,
    write_manifest,
    write_report_csv,
)
from .rng import make_rng
from .synth import save_features

OUT_ENV = "AWMETA_OUT"

# compare forces these onto config B so both sides share data and protocol
_SHARED_COMPARE_FIELDS = (
    "seed",
    "shots",
    "queries",
    "eval_ns",
    "eval_episodes",
    "j_repeats",
    "ensemble_method",
    "compare_seeds",
    "data_train",
    "data_val",
    "data_test",
    "synth_d",
    "synth_train_classes",
    "synth_val_classes",
    "synth_test_classes",
    "synth_per_class",
    "synth_mean_scale",
    "synth_noise_sigma",
)


def _out_dir(args, command: str) -> Path:
    if args.out:
        path = Path(args.out)
    else:
        path = Path(os.environ.get(OUT_ENV, "runs")) / command
    path.mkdir(parents=True, exist_ok=True)
    return path


def _overrides(pairs: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
        key, _, value = pair.partition("=")
        out[key.strip()] = value.strip()
    return out


def _load(args) -> ExperimentConfig:
    return load_config(args.config, _overrides(args.set))


def _add_common(parser):
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    parser.add_argument("--out", help=f"run directory (default ${OUT_ENV}/<command> or runs/<command>)")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering")


def _dataset_label(cfg: ExperimentConfig) -> str:
    return Path(cfg.data_test).name if cfg.data_test else "synth-test"


def _run_training(cfg: ExperimentConfig, train_ds, val_ds):
    spec = cfg.episode_spec()
    rng = make_rng(cfg.seed, "train")
    model = cfg.build_model(train_ds.feature_dim, train_ds.class_count)
    if cfg.backend == "protonet":
        return train_proto(
            train_ds, spec, model, cfg.outer_config(),
            cfg.resolved_lambda, cfg.resolved_ema_rate, rng,
            val_ds=val_ds, val_interval=cfg.val_interval, val_episodes=cfg.val_episodes,
        ), spec
    return train(
        train_ds, spec, model, cfg.inner_config(), cfg.outer_config(), cfg.mode, rng,
        val_ds=val_ds, semantic_cfg=cfg.semantic_config(train_ds.class_count),
        val_interval=cfg.val_interval, val_episodes=cfg.val_episodes,
    ), spec


def _eval_model(cfg: ExperimentConfig, model, ds, n: int):
    rng = make_rng(cfg.seed, "eval", n)
    if isinstance(model, ProtoModel):
        return evaluate_proto(model, ds, n, cfg.shots, cfg.queries, cfg.eval_episodes, rng)
    return evaluate(
        model, ds, n, cfg.shots, cfg.queries, cfg.eval_episodes,
        cfg.j_repeats, cfg.ensemble_method, rng, cfg.inner_config(),
    )


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, "train")
    started = time.perf_counter()
    train_ds, val_ds, _ = cfg.datasets()
    result, spec = _run_training(cfg, train_ds, val_ds)
    save_checkpoint(result.best_model, out / "checkpoint_best.ckpt")
    save_checkpoint(result.model, out / "checkpoint_final.ckpt")
    write_curve_csv(out / "curve.csv", result.curve, spec.cardinality_pool)
    warnings = []
    if result.stalled:
        warnings.append("validation accuracy stayed near chance through the trailing window")
    last = result.curve[-1] if result.curve else None
    manifest = {
        "command": "train",
        "config": cfg.to_flat_dict(),
        "seed": cfg.seed,
        "wall_time_s": round(time.perf_counter() - started, 3),
        "best_step": result.best_step,
        "stalled": result.stalled,
        "warnings": warnings,
        "validation": None if last is None else {
            "step": last.step,
            "per_n": {str(n): acc for n, acc in sorted(last.val_acc.items())},
            "sum": last.val_acc_sum,
        },
        "outputs": ["checkpoint_best.ckpt", "checkpoint_final.ckpt", "curve.csv"],
    }
    if not args.no_figures and result.curve:
        from . import figures

        figures.save_curve_figure(result.curve, spec.cardinality_pool, out / "curve.png")
        manifest["outputs"].append("curve.png")
    write_manifest(out / "manifest.json", manifest)
    for warning in warnings:
        print(f"warning: {warning}")
    print(f"train: best step {result.best_step}, outputs in {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, "eval")
    started = time.perf_counter()
    model = load_checkpoint(args.checkpoint)
    _, _, test_ds = cfg.datasets()
    label = _dataset_label(cfg)
    rows, cells = [], []
    for n in cfg.eval_ns:
        res = _eval_model(cfg, model, test_ds, n)
        rows.append(report_row(label, res))
        cells.append(res)
        print(f"eval: {n}-way {cfg.shots}-shot {res.method}/J{res.j_repeats} "
              f"acc {res.acc_mean:.4f} +- {res.acc_std:.4f}")
    write_report_csv(out / "report.csv", rows)
    manifest = {
        "command": "eval",
        "config": cfg.to_flat_dict(),
        "checkpoint": str(args.checkpoint),
        "seed": cfg.seed,
        "wall_time_s": round(time.perf_counter() - started, 3),
        "cells": [
            {
                "n": r.n, "method": r.method, "j_repeats": r.j_repeats,
                "acc_mean": r.acc_mean, "acc_std": r.acc_std, "ci95": r.ci95,
            }
            for r in cells
        ],
        "outputs": ["report.csv"],
    }
    if not args.no_figures and cells:
        from . import figures

        figures.save_report_figure(cells, out / "report.png")
        manifest["outputs"].append("report.png")
    write_manifest(out / "manifest.json", manifest)
    return 0


def cmd_sweep_ensemble(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, "sweep-ensemble")
    started = time.perf_counter()
    model = load_checkpoint(args.checkpoint)
    if not isinstance(model, MetaModel):
        raise ConfigError("the ensembling sweep needs a gradient-based checkpoint")
    repeats = [int(tok) for tok in args.repeats.split(",")]
    methods = [tok.strip() for tok in args.methods.split(",")]
    _, _, test_ds = cfg.datasets()
    label = _dataset_label(cfg)
    rows, manifest_cells = [], []
    for n in cfg.eval_ns:
        rng = make_rng(cfg.seed, "eval", n)
        cells = evaluate_sweep(
            model, test_ds, n, cfg.shots, cfg.queries, cfg.eval_episodes,
            repeats, methods, rng, cfg.inner_config(),
        )
        for j in sorted(set(repeats)):
            for method in methods:
                res = cells[(j, method)]
                rows.append(report_row(label, res))
                manifest_cells.append(
                    {"n": n, "method": method, "j_repeats": j,
                     "acc_mean": res.acc_mean, "acc_std": res.acc_std, "ci95": res.ci95}
                )
        if not args.no_figures:
            from . import figures

            figures.save_sweep_figure(cells, out / f"sweep_n{n}.png")
    write_report_csv(out / "sweep.csv", rows)
    write_manifest(out / "manifest.json", {
        "command": "sweep-ensemble",
        "config": cfg.to_flat_dict(),
        "checkpoint": str(args.checkpoint),
        "seed": cfg.seed,
        "wall_time_s": round(time.perf_counter() - started, 3),
        "cells": manifest_cells,
        "outputs": ["sweep.csv"],
    })
    print(f"sweep-ensemble: {len(rows)} cells, outputs in {out}")
    return 0


def cmd_ablate_o(args) -> int:
    cfg = _load(args)
    if cfg.backend != "maml" or cfg.mode != "anyway":
        raise ConfigError("the output-width ablation trains anyway-mode gradient models")
    out = _out_dir(args, "ablate-o")
    o_list = [int(tok) for tok in args.o_list.split(",")]
    rows, times = [], {}
    for o in o_list:
        cfg_o = replace(cfg, o=o).validate()
        started = time.perf_counter()
        train_ds, val_ds, test_ds = cfg_o.datasets()
        result, _ = _run_training(cfg_o, train_ds, val_ds)
        times[str(o)] = round(time.perf_counter() - started, 3)
        save_checkpoint(result.best_model, out / f"checkpoint_o{o}.ckpt")
        for n in cfg_o.eval_ns:
            res = _eval_model(cfg_o, result.best_model, test_ds, n)
            rows.append((o, n, cfg_o.shots, res.episodes, res.acc_mean, res.acc_std))
            print(f"ablate-o: O={o} {n}-way acc {res.acc_mean:.4f} +- {res.acc_std:.4f}")
    write_ablate_csv(out / "ablate.csv", rows)
    manifest = {
        "command": "ablate-o",
        "config": cfg.to_flat_dict(),
        "o_list": o_list,
        "seed": cfg.seed,
        "train_time_s_per_o": times,
        "outputs": ["ablate.csv"] + [f"checkpoint_o{o}.ckpt" for o in o_list],
    }
    if not args.no_figures and rows:
        from . import figures

        figures.save_ablate_figure(rows, out / "ablate.png")
        manifest["outputs"].append("ablate.png")
    write_manifest(out / "manifest.json", manifest)
    return 0


def cmd_compare(args) -> int:
    overrides = _overrides(args.set)
    cfg_a = load_config(args.config_a, overrides)
    cfg_b = load_config(args.config_b, overrides)
    shared = {name: getattr(cfg_a, name) for name in _SHARED_COMPARE_FIELDS}
    cfg_b = replace(cfg_b, **shared).validate()
    out = _out_dir(args, "compare")
    started = time.perf_counter()
    per_n_a: dict[int, list[float]] = {n: [] for n in cfg_a.eval_ns}
    per_n_b: dict[int, list[float]] = {n: [] for n in cfg_a.eval_ns}
    for offset in range(cfg_a.compare_seeds):
        seed = cfg_a.seed + offset
        for cfg, sink in ((cfg_a, per_n_a), (cfg_b, per_n_b)):
            cfg_s = replace(cfg, seed=seed).validate()
            train_ds, val_ds, test_ds = cfg_s.datasets()
            result, _ = _run_training(cfg_s, train_ds, val_ds)
            for n in cfg_a.eval_ns:
                sink[n].append(_eval_model(cfg_s, result.best_model, test_ds, n).acc_mean)
    import numpy as np

    rows = []
    for n in cfg_a.eval_ns:
        a = np.asarray(per_n_a[n])
        b = np.asarray(per_n_b[n])
        delta = a - b
        ddof = 1 if a.size > 1 else 0
        rows.append((
            n, cfg_a.shots,
            float(a.mean()), float(a.std(ddof=ddof)),
            float(b.mean()), float(b.std(ddof=ddof)),
            float(delta.mean()), float(delta.std(ddof=ddof)),
            a.size,
        ))
        print(f"compare: {n}-way A {a.mean():.4f} B {b.mean():.4f} delta {delta.mean():+.4f}")
    write_compare_csv(out / "compare.csv", rows)
    label_a = Path(args.config_a).stem if args.config_a else "A"
    label_b = Path(args.config_b).stem if args.config_b else "B"
    manifest = {
        "command": "compare",
        "config_a": cfg_a.to_flat_dict(),
        "config_b": cfg_b.to_flat_dict(),
        "seeds": [cfg_a.seed + i for i in range(cfg_a.compare_seeds)],
        "wall_time_s": round(time.perf_counter() - started, 3),
        "outputs": ["compare.csv"],
    }
    if not args.no_figures and rows:
        from . import figures

        figures.save_compare_figure(rows, label_a, label_b, out / "compare.png")
        manifest["outputs"].append("compare.png")
    write_manifest(out / "manifest.json", manifest)
    return 0


def cmd_gradcheck(args) -> int:
    out = _out_dir(args, "gradcheck")
    results = run_gradcheck(
        seed=args.seed, trials=args.trials, tolerance=args.tolerance, corrupt_block=args.corrupt,
    )
    rows = [(r.block, r.max_rel_err, r.tolerance, "pass" if r.passed else "FAIL") for r in results]
    write_gradcheck_csv(out / "gradcheck.csv", rows)
    write_manifest(out / "manifest.json", {
        "command": "gradcheck",
        "seed": args.seed,
        "trials": args.trials,
        "tolerance": args.tolerance,
        "corrupt_block": args.corrupt,
        "blocks": {r.block: r.max_rel_err for r in results},
        "outputs": ["gradcheck.csv"],
    })
    for r in results:
        print(f"gradcheck: {r.block} max rel err {r.max_rel_err:.3e} "
              f"({'pass' if r.passed else 'FAIL'})")
    return 0 if all(r.passed for r in results) else 1


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    datasets = dict(zip(("train", "val", "test"), cfg.datasets()))
    ds = datasets[args.split]
    Path(args.out_file).parent.mkdir(parents=True, exist_ok=True)
    save_features(ds, args.out_file)
    total = sum(block.shape[0] for block in ds.classes)
    print(f"gen-data: wrote {ds.class_count} classes, {total} examples "
          f"({ds.feature_dim}-d) to {args.out_file}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="awmeta",
        description="episodic meta-learning engine with variable task cardinality",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write curve + checkpoints")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint across cardinalities")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-ensemble", help="repeat-count x ensemble-method accuracy table")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--repeats", default="1,2,3,6,12,18", help="comma list of repeat counts")
    p.add_argument("--methods", default="original,softmax,max", help="comma list of methods")
    p.set_defaults(func=cmd_sweep_ensemble)

    p = sub.add_parser("ablate-o", help="train per output width and compare accuracy")
    _add_common(p)
    p.add_argument("--o-list", default="10,20,30", help="comma list of output widths")
    p.set_defaults(func=cmd_ablate_o)

    p = sub.add_parser("compare", help="paired multi-seed comparison of two configs")
    _add_common(p)
    p.add_argument("--config-a", required=True)
    p.add_argument("--config-b", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--corrupt", choices=BLOCKS, help="corrupt one block (negative control)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-data", help="write a synthetic split as a feature file")
    _add_common(p)
    p.add_argument("--out-file", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="train")
    p.set_defaults(func=cmd_gen_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AwmetaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
