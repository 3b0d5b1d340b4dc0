"""Command-line interface: ``modkit <command>``.

Commands: ``train``, ``similarity``, ``cluster``, ``compare``, ``sweep``,
``baseline``, ``aggregate``.  Every command writes its artifacts under
``--out`` and finishes by (re)writing ``manifest.json`` there, listing all
artifact paths with SHA-256 hashes.  On failure the process exits nonzero
after printing a single JSON error object to stderr.

``--config`` files are JSON.  ``sweep``/``baseline``/``compare``/
``aggregate`` configs mirror :class:`modkit.experiment.SweepConfig`;
``train``/``similarity`` configs take the flat keys documented in
``_TRAIN_DEFAULTS`` below (dataset selection plus training settings).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path

from . import __version__
from .errors import ModkitError, ValidationError
from .experiment import (SweepConfig, aggregate, compare_runs, load_dataset,
                         random_baseline, run_sweep, table1_grid,
                         write_manifest, FULL_SEEDS)
from .model import TrainConfig, evaluate, init_mlp, load_model, save_model, train
from .modularity import ClusterConfig, cluster, save_cluster_result
from .similarity import (compute_all, load_similarity, save_similarity,
                         similarity_to_csv)

_TRAIN_DEFAULTS = {
    "dataset": "synthetic-digits",
    "data_dir": None,
    "dataset_seed": 776,
    "limit_train": 10000,
    "limit_test": 10000,
    "l2": 0.0,
    "l1": 0.0,
    "dropout": 0.0,
    "epochs": 20,
    "batch_size": 128,
    "lr": 0.1,
    "momentum": 0.9,
    "seed": 0,
    "sim_batch": 512,
}


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}")


def _train_job(args) -> dict:
    job = dict(_TRAIN_DEFAULTS)
    overrides = _read_config(args.config)
    unknown = set(overrides) - set(job)
    if unknown:
        raise ValidationError(f"unknown train config keys: {sorted(unknown)}")
    job.update(overrides)
    if args.seed is not None:
        job["seed"] = args.seed
    if args.limit_train is not None:
        job["limit_train"] = args.limit_train
    return job


def _job_datasets(job: dict):
    cfg = SweepConfig(family="dropout", values=[0.0], seeds=[0],
                      dataset=job["dataset"], data_dir=job["data_dir"],
                      dataset_seed=job["dataset_seed"],
                      limit_train=job["limit_train"],
                      limit_test=job["limit_test"])
    return load_dataset(cfg)


def _cmd_train(args) -> None:
    job = _train_job(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_ds, test_ds = _job_datasets(job)
    tc = TrainConfig(l2=job["l2"], l1=job["l1"], dropout=job["dropout"],
                     epochs=job["epochs"], batch_size=job["batch_size"],
                     lr=job["lr"], momentum=job["momentum"], seed=job["seed"])
    model0 = init_mlp(job["seed"], dropout_p=tc.dropout)
    model, history = train(model0, train_ds, tc, test_ds=test_ds)
    metrics = evaluate(model, test_ds)
    save_model(model, out / "model.mlp", train_config=tc, history=history)
    with open(out / "metrics.json", "w") as fh:
        json.dump({"metrics": metrics.to_dict(), "config": job},
                  fh, sort_keys=True, indent=2)
        fh.write("\n")
    write_manifest(out)
    print(f"trained model -> {out / 'model.mlp'} "
          f"(test accuracy {metrics.accuracy:.4f})")


def _cmd_similarity(args) -> None:
    job = _train_job(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, _ = load_model(args.model)
    _, test_ds = _job_datasets(job)
    sims = compute_all(model, test_ds, batch_size=job["sim_batch"])
    for sm in sims:
        stem = f"{sm.layer}_{sm.tag}"
        save_similarity(sm, out / f"{stem}.simmat")
        similarity_to_csv(sm, out / f"{stem}.csv")
    write_manifest(out)
    print(f"wrote {len(sims)} similarity matrices -> {out}")


def _cmd_cluster(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    src = Path(args.similarity)
    files = sorted(src.glob("*.simmat")) if src.is_dir() else [src]
    if not files:
        raise ValidationError(f"no .simmat files under {src}")
    overrides = _read_config(args.config)
    allowed = {"steps_per_unit", "target_entropy", "refresh_every",
               "ablation_single_init", "eig_tol", "eig_max_iter"}
    unknown = set(overrides) - allowed
    if unknown:
        raise ValidationError(f"unknown cluster config keys: {sorted(unknown)}")
    for path in files:
        sm = load_similarity(path)
        cfg = ClusterConfig(seed=args.seed if args.seed is not None else 0,
                            mc_steps=args.mc_steps, **overrides)
        res = cluster(sm, cfg)
        target = out / (path.stem + ".cluster.json")
        save_cluster_result(res, target)
        print(f"{path.name}: Q*={res.q_star:.6f} "
              f"num_clusters={res.num_clusters:.3f} -> {target.name}")
    write_manifest(out)


def _cmd_compare(args) -> None:
    out = args.out or (Path(args.runs) / "tables")
    paths = compare_runs(args.runs, out)
    write_manifest(Path(out))
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")


def _sweep_config(args) -> SweepConfig:
    raw = _read_config(args.config)
    if raw:
        cfg = SweepConfig.from_dict(raw)
    else:
        cfg = SweepConfig.build(args.family or "dropout",
                                full_grid=args.full_grid)
    if args.full_grid:
        cfg.values = table1_grid(cfg.family)
        cfg.seeds = list(FULL_SEEDS)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.limit_train is not None:
        cfg.limit_train = args.limit_train
    if args.mc_steps is not None:
        cfg.mc_steps = args.mc_steps
    return cfg


def _cmd_sweep(args) -> None:
    cfg = _sweep_config(args)
    out = Path(args.out)
    records = run_sweep(cfg, out, workers=args.workers)
    write_manifest(out)
    kept = sum(1 for r in records if r.kept)
    failed = sum(1 for r in records if r.failed)
    print(f"sweep complete: {len(records)} records "
          f"({kept} kept, {failed} failed) -> {out}")


def _cmd_baseline(args) -> None:
    cfg = _sweep_config(args)
    out = Path(args.out)
    records = random_baseline(cfg, out, count=args.count,
                              seed0=args.seed if args.seed is not None else 0,
                              workers=args.workers)
    write_manifest(out)
    print(f"baseline complete: {len(records)} untrained records -> {out}")


def _cmd_aggregate(args) -> None:
    paths = aggregate(args.runs, args.out)
    write_manifest(Path(args.out) if args.out else Path(args.runs) / "tables")
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modkit",
        description="Detect functional modules in small feedforward classifiers.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, out_required=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel worker processes")
        p.add_argument("--limit-train", type=int, dest="limit_train",
                       help="use only the first N training items")
        p.add_argument("--mc-steps", type=int, dest="mc_steps",
                       help="refinement steps per clustering run")
        p.add_argument("--full-grid", action="store_true", dest="full_grid",
                       help="use the full reference value grid and 9 seeds")

    p = sub.add_parser("train", help="train one classifier")
    add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("similarity", help="compute the 16 similarity matrices")
    add_common(p)
    p.add_argument("--model", required=True, help="path to a model file")
    p.set_defaults(func=_cmd_similarity)

    p = sub.add_parser("cluster", help="cluster similarity matrices")
    add_common(p)
    p.add_argument("--similarity", required=True,
                   help=".simmat file or directory of them")
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("compare", help="method-agreement tables from run records")
    add_common(p, out_required=False)
    p.add_argument("--runs", required=True, help="sweep output directory")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("sweep", help="run a regularization sweep")
    add_common(p)
    p.add_argument("--family", choices=["l2", "l1", "dropout"],
                   help="sweep family when no config file is given")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("baseline", help="analyze untrained models")
    add_common(p)
    p.add_argument("--family", choices=["l2", "l1", "dropout"],
                   help="config family when no config file is given")
    p.add_argument("--count", type=int, help="number of untrained models")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("aggregate", help="build analysis CSVs from run records")
    add_common(p, out_required=False)
    p.add_argument("--runs", required=True, help="sweep output directory")
    p.set_defaults(func=_cmd_aggregate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except ModkitError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr)
        sys.stderr.write("\n")
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        traceback.print_exc()
        json.dump({"error": "InternalError",
                   "message": f"{type(exc).__name__}: {exc}"}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
