"""Command-line entry points: train, eval, sweep, geometry, inspect.

Thread caps (RAU_NUM_THREADS or --single-thread) are applied to the BLAS
environment variables before any numerical module is imported, so the heavy
imports happen inside the command handlers.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from pathlib import Path

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_thread_cap(single_thread: bool) -> None:
    cap = "1" if single_thread else os.environ.get("RAU_NUM_THREADS")
    if cap is None:
        return
    for name in _THREAD_ENV_VARS:
        os.environ.setdefault(name, cap)


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file; flags override its values")
    parser.add_argument("--dataset", type=Path, help="interaction file (TSV/CSV)")
    parser.add_argument("--format", choices=["tsv", "csv"], help="dataset format (default: by suffix)")
    parser.add_argument("--objective", choices=["rau", "directau", "bpr"])
    parser.add_argument("--encoder", choices=["mf", "lightgcn"])
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--gamma-user", type=float)
    parser.add_argument("--gamma-item", type=float)
    parser.add_argument("--dim", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--max-epochs", type=int)
    parser.add_argument("--patience", type=int)
    parser.add_argument("--weight-decay", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--num-layers", type=int, help="propagation rounds for the graph encoder")
    parser.add_argument("--fixed-epochs", action="store_true", default=None,
                        help="skip validation-based early stopping")
    parser.add_argument("--out-dir", type=Path, default=Path("runs"))


_CONFIG_FLAG_FIELDS = (
    "objective", "encoder", "alpha", "beta", "gamma_user", "gamma_item", "dim", "lr",
    "batch_size", "max_epochs", "patience", "weight_decay", "seed", "num_layers",
    "fixed_epochs",
)


def _resolve_train_config(args):
    from .trainer import TrainConfig

    payload = {}
    if args.config:
        payload.update(json.loads(args.config.read_text(encoding="utf-8")))
    for name in _CONFIG_FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            payload[name] = value
    return TrainConfig.from_dict(payload), payload


def _load_split(args, cfg):
    from .data import load_interactions, split_per_user

    dataset_path = args.dataset or (json.loads(args.config.read_text()) if args.config else {}).get("dataset")
    if dataset_path is None:
        raise ValueError("no dataset given: pass --dataset or a config with a 'dataset' key")
    dataset_path = Path(dataset_path)
    if not dataset_path.exists():
        raise ValueError(f"dataset path does not exist: {dataset_path}")
    ds = load_interactions(dataset_path, format=args.format)
    return split_per_user(ds, seed=cfg.seed), dataset_path


def _run_dir(base: Path, cfg) -> Path:
    from .hypersphere import config_hash

    return base / f"{config_hash(cfg.to_dict())}-seed{cfg.seed}"


def cmd_train(args) -> int:
    from .data import write_split_manifest
    from .evaluation import evaluate
    from .hypersphere import save_checkpoint
    from .trainer import fit, write_diagnostics_csv

    cfg, _ = _resolve_train_config(args)
    split, dataset_path = _load_split(args, cfg)
    report, user_table, item_table = fit(split, cfg)

    out = _run_dir(args.out_dir, cfg)
    out.mkdir(parents=True, exist_ok=True)
    sidecar_config = dict(cfg.to_dict(), dataset=str(dataset_path))
    save_checkpoint(out, user_table, item_table, cfg.seed, sidecar_config)
    report.to_json(out / "report.json")
    write_diagnostics_csv(report, out / "diagnostics.csv", cfg.eval_k_for_stopping)
    write_split_manifest(split, out / "split_manifest.json")

    print(f"run directory: {out}")
    print(f"epochs run: {report.epochs_run}, best epoch: {report.best_epoch}")
    if report.best_val is not None:
        print(f"best validation: {report.best_val}")
    score_mode = "dot" if cfg.objective == "bpr" else "cosine"
    all_users, all_items = _encode_checkpoint(split, user_table, item_table, cfg)
    test_report = evaluate(split, all_users, all_items, part="test", score_mode=score_mode)
    test_report.to_json(out / "test_metrics.json")
    print(test_report.format_table())
    return 0


def _encode_checkpoint(split, user_table, item_table, cfg):
    from .encoders import GraphEncoderConfig, build_norm_adjacency, lightgcn_propagate

    if cfg.encoder == "mf":
        return user_table.values, item_table.values
    adjacency = build_norm_adjacency(split.train)
    return lightgcn_propagate(user_table, item_table, adjacency,
                              GraphEncoderConfig(num_layers=cfg.num_layers))


def cmd_eval(args) -> int:
    from .data import load_interactions, split_per_user
    from .evaluation import evaluate
    from .hypersphere import load_checkpoint
    from .trainer import TrainConfig

    user_table, item_table, sidecar = load_checkpoint(args.checkpoint)
    cfg = TrainConfig.from_dict(sidecar["config"])
    dataset_path = args.dataset or sidecar["config"].get("dataset")
    if dataset_path is None:
        raise ValueError("no dataset given: pass --dataset or use a checkpoint that records one")
    ds = load_interactions(dataset_path, format=args.format)
    split = split_per_user(ds, seed=cfg.seed)
    all_users, all_items = _encode_checkpoint(split, user_table, item_table, cfg)
    score_mode = args.score_mode or ("dot" if cfg.objective == "bpr" else "cosine")
    report = evaluate(split, all_users, all_items, ks=tuple(args.k), part=args.part,
                      score_mode=score_mode)
    print(report.format_table())
    if args.out:
        report.to_json(args.out)
    if args.out_csv:
        report.to_csv(args.out_csv)
    return 0


def _sweep_point(task):
    """Fit one grid point and report its validation/test metrics."""
    from .evaluation import evaluate
    from .trainer import TrainConfig, fit

    split, payload, ks, stopping_k = task
    cfg = TrainConfig.from_dict(payload)
    report, user_table, item_table = fit(split, cfg)
    all_users, all_items = _encode_checkpoint(split, user_table, item_table, cfg)
    test_report = evaluate(split, all_users, all_items, ks=tuple(ks), part="test")
    best_ndcg = report.best_val[f"ndcg@{stopping_k}"] if report.best_val else float("nan")
    return {
        "alpha": payload["alpha"], "beta": payload["beta"],
        "gamma_user": payload["gamma_user"], "gamma_item": payload["gamma_item"],
        f"best_val_ndcg@{stopping_k}": best_ndcg,
        **{f"test_recall@{k}": test_report.recall[k] for k in ks},
        **{f"test_ndcg@{k}": test_report.ndcg[k] for k in ks},
    }


def cmd_sweep(args) -> int:
    base_cfg, base_payload = _resolve_train_config(args)
    split, _ = _load_split(args, base_cfg)
    gamma_pairs = [_parse_gamma_ratio(token) for token in args.gamma_ratios]
    grid = list(itertools.product(args.alpha_values, args.beta_values, gamma_pairs))
    stopping_k = base_cfg.eval_k_for_stopping

    tasks = []
    for alpha, beta, (gamma_user, gamma_item) in grid:
        payload = dict(base_payload, alpha=alpha, beta=beta,
                       gamma_user=gamma_user, gamma_item=gamma_item, objective="rau")
        payload.pop("dataset", None)
        tasks.append((split, payload, tuple(args.k), stopping_k))

    env_cap = os.environ.get("RAU_NUM_THREADS")
    workers = min(args.workers, int(env_cap)) if env_cap else args.workers
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(task) for task in tasks]

    best_index = max(range(len(rows)), key=lambda i: rows[i][f"best_val_ndcg@{stopping_k}"])
    columns = list(rows[0].keys()) + ["best"]
    lines = [",".join(columns)]
    for index, row in enumerate(rows):
        cells = [repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in columns[:-1]]
        cells.append("*" if index == best_index else "")
        lines.append(",".join(cells))
    csv_text = "\n".join(lines) + "\n"
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(csv_text, encoding="utf-8")
    print(csv_text, end="")
    print(f"best grid point: {rows[best_index]}")
    return 0


def _parse_gamma_ratio(token: str) -> tuple[float, float]:
    try:
        user_part, item_part = token.split("/")
        return float(user_part), float(item_part)
    except ValueError as exc:
        raise ValueError(f"bad gamma ratio {token!r}: expected e.g. 0.7/0.3") from exc


def cmd_geometry(args) -> int:
    from .geometry import (CircleConfig, config_metrics, sweep_moving_point, sweep_to_csv,
                           verification_to_json, verify_low_variance_claim)

    rows = sweep_moving_point(tuple(args.fixed), args.step)
    verification = verify_low_variance_claim(rows)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    sweep_to_csv(rows, args.out_dir / "sweep.csv")
    verification_to_json(verification, args.out_dir / "verification.json")
    print(f"rows: {len(rows)}")
    print(f"uniform-loss minimum at {verification.min_loss_angle_deg} deg, "
          f"variance there {verification.variance_at_min:.3e}, "
          f"rank correlation {verification.rank_correlation:.4f}")
    if args.case:
        loss, variance = config_metrics(CircleConfig(tuple(args.case)))
        print(f"case {args.case}: uniform_loss={loss:.6f} kernel_variance={variance:.6f}")
    return 0


def cmd_inspect(args) -> int:
    from .data import load_interactions, split_per_user, write_split_manifest

    ds = load_interactions(args.dataset, format=args.format)
    degrees = [ds.items_for_user(u).size for u in range(ds.num_users)]
    density = ds.num_interactions / (ds.num_users * ds.num_items)
    print(f"users: {ds.num_users}")
    print(f"items: {ds.num_items}")
    print(f"interactions: {ds.num_interactions}")
    print(f"density: {density:.6f}")
    print(f"interactions per user: min={min(degrees)} mean={ds.num_interactions / ds.num_users:.2f} "
          f"max={max(degrees)}")
    if args.split_seed is not None:
        split = split_per_user(ds, seed=args.split_seed)
        print(f"split (seed {args.split_seed}): train={split.train.num_interactions} "
              f"validation={split.validation.num_interactions} test={split.test.num_interactions}")
        if args.manifest:
            write_split_manifest(split, args.manifest)
            print(f"manifest written to {args.manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sphererec",
                                     description="Hypersphere embedding trainer for implicit feedback")
    parser.add_argument("--single-thread", action="store_true",
                        help="cap BLAS threads at 1 for bit-reproducible runs")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="fit embeddings and write a checkpoint")
    _add_train_flags(train)
    train.set_defaults(func=cmd_train)

    evaluate = sub.add_parser("eval", help="score a checkpoint with full ranking")
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    evaluate.add_argument("--dataset", type=Path)
    evaluate.add_argument("--format", choices=["tsv", "csv"])
    evaluate.add_argument("--part", choices=["validation", "test"], default="test")
    evaluate.add_argument("--k", type=int, nargs="+", default=[20, 50])
    evaluate.add_argument("--score-mode", choices=["cosine", "dot"])
    evaluate.add_argument("--out", type=Path, help="also write the report as JSON")
    evaluate.add_argument("--out-csv", type=Path, help="also write the report as CSV")
    evaluate.set_defaults(func=cmd_eval)

    sweep = sub.add_parser("sweep", help="grid-search the loss weights")
    _add_train_flags(sweep)
    sweep.add_argument("--alpha-values", type=float, nargs="+", default=[0.0])
    sweep.add_argument("--beta-values", type=float, nargs="+", default=[0.0])
    sweep.add_argument("--gamma-ratios", type=str, nargs="+", default=["0.5/0.5"])
    sweep.add_argument("--k", type=int, nargs="+", default=[20, 50])
    sweep.add_argument("--out", type=Path, default=Path("sweep.csv"))
    sweep.add_argument("--workers", type=int, default=1,
                       help="parallel fits (RAM-bound; RAU_NUM_THREADS caps this too)")
    sweep.set_defaults(func=cmd_sweep)

    geometry = sub.add_parser("geometry", help="unit-circle uniformity/variance sweep")
    geometry.add_argument("--fixed", type=float, nargs=2, default=[0.0, 120.0])
    geometry.add_argument("--step", type=float, default=1.0)
    geometry.add_argument("--case", type=float, nargs="+",
                          help="extra point configuration to report metrics for")
    geometry.add_argument("--out-dir", type=Path, default=Path("geometry_out"))
    geometry.set_defaults(func=cmd_geometry)

    inspect = sub.add_parser("inspect", help="summarize an interaction file")
    inspect.add_argument("--dataset", type=Path, required=True)
    inspect.add_argument("--format", choices=["tsv", "csv"])
    inspect.add_argument("--split-seed", type=int)
    inspect.add_argument("--manifest", type=Path)
    inspect.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_thread_cap(args.single_thread)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
