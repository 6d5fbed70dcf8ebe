"""Command-line entry point.

Subcommands: ``train``, ``eval``, ``bound-check``, ``noise-sweep``,
``perf-sweep``. Every command reads a flat key-value config file; the
shared flags override individual fields. Outputs are one JSON RunRecord
per run plus one aggregated CSV per sweep, all written atomically, with
seeds processed in deterministic order.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import RunConfig, config_for_seed, resolve_config
from .data import Dataset, inject_noise, take_rows
from .errors import ConfigError, ContractError, HclError
from .ioutil import atomic_write_text, parse_kv_text, sha256_file
from .metrics import EvalReport
from .mi import (
    BoundTrainSpec,
    GaussianPairSpec,
    RingProtoSpec,
    check_sup_bound,
    check_unsup_bound,
    reports_to_csv,
)
from .model import load_checkpoint, save_checkpoint
from .numeric import make_rng
from .train import (
    RunRecord,
    build_dataset,
    dataset_checksum,
    metrics_csv,
    replay_eval,
    run_training,
)


def _load_pairs(path: str) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from None
    return parse_kv_text(text, source=path)


def _ensure_out(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


# ---------------------------------------------------------------------------
# train


def cmd_train(pairs: dict[str, str],
              overrides: dict[str, str] | None = None) -> list[RunRecord]:
    cfg = resolve_config(pairs, overrides)
    out = _ensure_out(cfg)
    base = build_dataset(cfg)
    data_sha = dataset_checksum(base)
    records = []
    for seed in cfg.seeds:
        result = run_training(cfg, seed, base)
        stem = f"run-{cfg.method}-seed{seed}"
        ckpt_path = os.path.join(out, f"{stem}.ckpt")
        snapshot = config_for_seed(cfg, seed)
        save_checkpoint(result.params, ckpt_path,
                        extra={"config": snapshot, "seed": seed})
        record = RunRecord(
            config=snapshot, seed=seed, trace=result.trace,
            report=result.report, wall_seconds=result.wall_seconds,
            checksums={"checkpoint": sha256_file(ckpt_path),
                       "dataset": data_sha},
        )
        atomic_write_text(os.path.join(out, f"{stem}.json"), record.to_json())
        records.append(record)
        print(f"{stem}: f1={result.report.f1:.4f} auc={result.report.auc:.4f} "
              f"({result.wall_seconds:.1f}s)")
    atomic_write_text(os.path.join(out, f"metrics-{cfg.method}.csv"),
                      metrics_csv(records))
    f1s = [r.report.f1 for r in records]
    print(f"{cfg.method}: mean f1={np.mean(f1s):.4f} "
          f"std={np.std(f1s):.4f} over {len(f1s)} seeds")
    return records


# ---------------------------------------------------------------------------
# eval


def cmd_eval(checkpoint: str, data: str | None = None,
             out_dir: str | None = None) -> EvalReport:
    params, extra = load_checkpoint(checkpoint)
    if "config" not in extra or "seed" not in extra:
        raise ContractError(
            f"{checkpoint} has no embedded run config; it was not written "
            "by the train command"
        )
    overrides: dict[str, str] = {}
    if data is not None:
        overrides["manifest"] = data
        overrides["synthetic"] = ""
    cfg = resolve_config(dict(extra["config"]), overrides)
    seed = int(extra["seed"])
    report = replay_eval(cfg, seed, params)
    body = {
        "checkpoint": os.path.basename(checkpoint),
        "seed": seed,
        "f1": report.f1,
        "auc": report.auc,
        "per_label": list(report.per_label),
        "n_eval": report.n_eval,
    }
    target = out_dir if out_dir is not None else os.path.dirname(checkpoint) or "."
    os.makedirs(target, exist_ok=True)
    stem = os.path.splitext(os.path.basename(checkpoint))[0]
    atomic_write_text(os.path.join(target, f"eval-{stem}.json"),
                      json.dumps(body, indent=2, sort_keys=True) + "\n")
    print(f"eval {stem}: f1={report.f1:.4f} auc={report.auc:.4f} "
          f"n={report.n_eval}")
    return report


# ---------------------------------------------------------------------------
# bound-check


def cmd_bound_check(pairs: dict[str, str],
                    overrides: dict[str, str] | None = None) -> str:
    cfg = resolve_config(pairs, overrides)
    out = _ensure_out(cfg)
    if cfg.bound_temperature is not None:
        tau = cfg.bound_temperature
    else:
        # the label-weighted check needs the wide-temperature regime; the
        # two-view check trains best sharp
        tau = 1.0 if cfg.bound_kind == "sup" else 0.1
    spec = BoundTrainSpec(epochs=cfg.bound_epochs, temperature=tau,
                          seeds=tuple(cfg.seeds),
                          tolerance=cfg.bound_tolerance)
    if cfg.bound_kind == "unsup":
        reports = check_unsup_bound(GaussianPairSpec(), spec, cfg.bound_sizes)
        text = reports_to_csv(reports, "unsup_loss")
    else:
        reports = check_sup_bound(RingProtoSpec(), spec)
        text = reports_to_csv(reports, "sup_loss")
    path = os.path.join(out, f"bounds-{cfg.bound_kind}.csv")
    atomic_write_text(path, text)
    n_ok = sum(r.satisfied for r in reports)
    print(f"bound-check {cfg.bound_kind}: {n_ok}/{len(reports)} satisfied "
          f"-> {path}")
    return text


# ---------------------------------------------------------------------------
# noise-sweep


def cmd_noise_sweep(pairs: dict[str, str],
                    overrides: dict[str, str] | None = None) -> str:
    cfg = resolve_config(pairs, overrides)
    out = _ensure_out(cfg)
    base = build_dataset(cfg)
    if base.n_views != 1:
        raise ConfigError(
            "config field 'manifest': the noise sweep builds its own views "
            "by corrupting a single-view dataset; got a two-view source"
        )
    merged = dict(pairs)
    if overrides:
        merged.update(overrides)
    rows = []
    reports: dict[tuple[float, str], list[EvalReport]] = {}
    for level in cfg.noise_levels:
        # two independent corruptions per level, shared by every method and
        # seed: the first is the single-view input and doubles as view one,
        # the second corrupts the same clean features again to make view two
        noise_rng = make_rng(1_000_000 * cfg.data_seed
                             + int(round(level * 1000)))
        noisy1 = inject_noise(base.views[0], level, noise_rng)
        noisy2 = inject_noise(base.views[0], level, noise_rng)
        for entry in cfg.methods:
            method, _, mode = entry.partition("@")
            mode = mode or cfg.mode
            views = [noisy1] if mode == "single-view" else [noisy1, noisy2]
            noisy = Dataset(views=views, labels=base.labels,
                            labeled_mask=base.labeled_mask,
                            name=base.name, meta=base.meta)
            variant = resolve_config(merged, {
                "methods": method, "method": method, "mode": mode,
            })
            for seed in cfg.seeds:
                result = run_training(variant, seed, noisy)
                rows.append((level, entry, seed, result.report))
                reports.setdefault((level, entry), []).append(result.report)
            f1s = [r.f1 for r in reports[(level, entry)]]
            print(f"noise {level:g} {entry}: mean f1={np.mean(f1s):.4f} "
                  f"std={np.std(f1s):.4f}")

    lines = ["level,method,seed,f1,auc"]
    for level, method, seed, rep in rows:
        lines.append(f"{level!r},{method},{seed},{rep.f1!r},{rep.auc!r}")
    text = "\n".join(lines) + "\n"
    atomic_write_text(os.path.join(out, "noise_sweep.csv"), text)

    summary = ["level,method,f1_mean,f1_std,auc_mean,auc_std"]
    for (level, method), reps in reports.items():
        f1s = [r.f1 for r in reps]
        aucs = [r.auc for r in reps]
        summary.append(
            f"{level!r},{method},{float(np.mean(f1s))!r},{float(np.std(f1s))!r},"
            f"{float(np.mean(aucs))!r},{float(np.std(aucs))!r}"
        )
    atomic_write_text(os.path.join(out, "noise_summary.csv"),
                      "\n".join(summary) + "\n")
    return text


# ---------------------------------------------------------------------------
# perf-sweep


def _fit_r2(x, y, degree: int):
    coeffs = np.polyfit(x, y, degree)
    pred = np.polyval(coeffs, x)
    ss_res = float(np.sum((np.asarray(y) - pred) ** 2))
    ss_tot = float(np.sum((np.asarray(y) - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return [float(c) for c in coeffs], r2


def _timed_run(merged: dict[str, str], extra: dict[str, str],
               sub: Dataset, reps: int = 3) -> float:
    """Best-of-``reps`` wall clock for one training variant."""
    variant = resolve_config(merged, extra)
    best = None
    for _ in range(reps):
        result = run_training(variant, 0, sub)
        if best is None or result.wall_seconds < best:
            best = result.wall_seconds
    return best


def cmd_perf_sweep(pairs: dict[str, str],
                   overrides: dict[str, str] | None = None) -> dict:
    cfg = resolve_config(pairs, overrides)
    out = _ensure_out(cfg)
    if min(cfg.perf_train_sizes) < 32:
        raise ConfigError(
            "config field 'perf_train_sizes': sizes must be >= 32"
        )
    need = max(max(cfg.perf_train_sizes), max(cfg.perf_neg_sizes) + 2)
    base = build_dataset(cfg)
    if base.n < need:
        raise ConfigError(
            f"config field 'n_samples': the sweep needs at least {need} "
            f"rows, the dataset has {base.n}"
        )
    merged = dict(pairs)
    if overrides:
        merged.update(overrides)
    # timings isolate the contrastive path: one view, no label term
    common = {"method": "hcl-u", "mode": "single-view",
              "view1_aug": "none", "view2_aug": "none"}

    rows = []
    # cost per epoch is iterations x fixed batch work, so it scales with
    # the labeled-set size
    train_times = []
    for size in cfg.perf_train_sizes:
        sub = take_rows(base, np.arange(size))
        extra = dict(common)
        extra.update({
            "n_labeled": str(size - 16), "batch_size": "64",
            "neg_size": str(cfg.perf_neg_fixed),
            "epochs": str(cfg.perf_epochs), "seeds": "0",
        })
        seconds = _timed_run(merged, extra, sub)
        train_times.append(seconds)
        rows.append(("train-size", size, seconds))
        print(f"perf train-size {size}: {seconds:.4f}s")

    # a pool of k+1 anchors with k negatives each gives the k^2 regime
    neg_times = []
    for k in cfg.perf_neg_sizes:
        extra = dict(common)
        extra.update({
            "n_labeled": "1", "batch_size": "1", "neg_size": str(k),
            "epochs": str(cfg.perf_epochs * 10), "seeds": "0",
        })
        seconds = _timed_run(merged, extra, base)
        neg_times.append(seconds)
        rows.append(("neg-size", k, seconds))
        print(f"perf neg-size {k}: {seconds:.4f}s")

    lines = ["sweep,size,seconds"]
    for sweep, size, seconds in rows:
        lines.append(f"{sweep},{size},{seconds!r}")
    atomic_write_text(os.path.join(out, "perf.csv"), "\n".join(lines) + "\n")

    lin_coeffs, lin_r2 = _fit_r2(cfg.perf_train_sizes, train_times, 1)
    quad_coeffs, quad_r2 = _fit_r2(cfg.perf_neg_sizes, neg_times, 2)
    fits = {
        "train_size": {"coefficients": lin_coeffs, "r_squared": lin_r2},
        "neg_size": {"coefficients": quad_coeffs, "r_squared": quad_r2},
    }
    atomic_write_text(os.path.join(out, "perf_fits.json"),
                      json.dumps(fits, indent=2, sort_keys=True) + "\n")
    print(f"perf fits: train-size linear R2={lin_r2:.4f}, "
          f"neg-size quadratic R2={quad_r2:.4f}")
    return fits


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcl",
        description="weighted contrastive learning experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="key-value config file")
        p.add_argument("--seed", help="comma-separated seed list override")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--method", help="method override")
        p.add_argument("--alpha", help="unsupervised weight override")
        p.add_argument("--beta", help="supervised weight override")
        p.add_argument("--neg-size", dest="neg_size",
                       help="negative-set size override (int or 'full')")
        p.add_argument("--epochs", help="epoch count override")

    for name in ("train", "bound-check", "noise-sweep", "perf-sweep"):
        add_common(sub.add_parser(name))

    p_eval = sub.add_parser("eval")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", help="dataset manifest to evaluate on")
    p_eval.add_argument("--out", help="output directory")
    return parser


def _overrides(args) -> dict[str, str]:
    mapping = {
        "seed": "seeds", "out": "out_dir", "method": "method",
        "alpha": "alpha", "beta": "beta", "neg_size": "neg_size",
        "epochs": "epochs",
    }
    out = {}
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    return out


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            cmd_eval(args.checkpoint, data=args.data, out_dir=args.out)
            return 0
        pairs = _load_pairs(args.config)
        overrides = _overrides(args)
        if args.command == "train":
            cmd_train(pairs, overrides)
        elif args.command == "bound-check":
            cmd_bound_check(pairs, overrides)
        elif args.command == "noise-sweep":
            cmd_noise_sweep(pairs, overrides)
        else:
            cmd_perf_sweep(pairs, overrides)
        return 0
    except HclError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
