"""End-to-end regularization sweeps and result aggregation.

A sweep trains one model per (regularization value, seed), evaluates it,
flags it discarded when test accuracy falls below 0.80, computes all
sixteen similarity matrices (8 method variants x 2 layers) on held-out
data, clusters each, and persists everything under a content-hashed run
directory so completed records are skipped on rerun.  Untrained baselines
run the same analysis on freshly initialized models.

``aggregate`` turns a directory of run records into deterministic CSV
tables: Q* and effective cluster count versus regularization (with
untrained-baseline statistics alongside), 8x8 method-agreement matrices
(trained, and trained minus random when a baseline exists), and model
metrics versus regularization.  Re-aggregation of the same records is
byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__
from .clustersim import agreement_difference, method_agreement
from .data import Dataset, load_idx, synthetic_blobs, synthetic_digits
from .errors import ModkitError, TrainingDivergedError, ValidationError
from .model import TrainConfig, evaluate, init_mlp, save_model, train
from .modularity import (ClusterConfig, ClusterResult, Partition, cluster,
                         save_cluster_result)
from .numerics import RandomSource
from .similarity import METHOD_ORDER, compute_all, save_similarity

__all__ = [
    "TABLE1_GRIDS", "table1_grid", "desk_grid", "percent_regularization",
    "SweepConfig", "RunRecord", "load_dataset", "run_sweep", "random_baseline",
    "aggregate", "compare_runs", "write_manifest", "cluster_result_from_dict",
    "read_agreement_csv",
]

logger = logging.getLogger("modkit.experiment")

ACCURACY_FLOOR = 0.80

TABLE1_GRIDS = {
    "l2": tuple(np.logspace(-5, -1, 9)),
    "l1": tuple(np.logspace(-5, -2, 7)),
    "dropout": tuple(np.linspace(0.05, 0.7, 14)),
}
FAMILY_LOG_RANGE = {"l2": (-5.0, -1.0), "l1": (-5.0, -2.0)}
FULL_SEEDS = tuple(range(9))
DESK_SEEDS = (0, 1, 2)


def table1_grid(family: str) -> list[float]:
    """The full reference value grid for one sweep family."""
    if family not in TABLE1_GRIDS:
        raise ValidationError(f"unknown sweep family {family!r}")
    return [float(v) for v in TABLE1_GRIDS[family]]


def desk_grid(family: str) -> list[float]:
    """Every other full-grid value: the quick desk-scale subset."""
    return table1_grid(family)[::2]


def percent_regularization(family: str, value: float) -> float:
    """Map a raw regularization value onto the percent axis in [0, 100].

    Dropout maps linearly (p * 100).  The weight penalties map
    log-linearly with 0% at 1e-5 and 100% at the family maximum (1e-1 for
    l2, 1e-2 for l1), so l2 = 1e-3 lands at exactly 50%.
    """
    if family == "dropout":
        pct = float(value) * 100.0
    elif family in FAMILY_LOG_RANGE:
        if value <= 0.0:
            raise ValidationError(f"{family} value must be positive, got {value}")
        lo, hi = FAMILY_LOG_RANGE[family]
        pct = 100.0 * (math.log10(value) - lo) / (hi - lo)
    else:
        raise ValidationError(f"unknown sweep family {family!r}")
    return min(max(pct, 0.0), 100.0)


@dataclass
class SweepConfig:
    """Everything that pins a sweep: family, grid, seeds, data, analysis.

    Defaults are desk scale; ``SweepConfig.build(family, full_grid=True)``
    selects the full reference grid with nine seeds.
    """

    family: str = "dropout"
    values: list = field(default_factory=lambda: desk_grid("dropout"))
    seeds: list = field(default_factory=lambda: list(DESK_SEEDS))
    dataset: str = "synthetic-digits"
    data_dir: str | None = None
    dataset_seed: int = 776
    limit_train: int | None = 10000
    limit_test: int | None = 10000
    epochs: int = 20
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    l2_base: float = 1e-5
    sim_batch: int = 512
    mc_steps: int | None = None
    steps_per_unit: int = 100
    target_entropy: float = 0.15
    refresh_every: int = 512
    ablation: bool = False
    accuracy_floor: float = ACCURACY_FLOOR
    baseline_count: int = 50

    def __post_init__(self):
        if self.family not in ("l2", "l1", "dropout"):
            raise ValidationError(f"unknown sweep family {self.family!r}")
        self.values = [float(v) for v in self.values]
        self.seeds = [int(s) for s in self.seeds]
        if not self.values or not self.seeds:
            raise ValidationError("values and seeds must be non-empty")

    @classmethod
    def build(cls, family: str, full_grid: bool = False, **overrides) -> "SweepConfig":
        values = overrides.pop("values", None)
        seeds = overrides.pop("seeds", None)
        if values is None:
            values = table1_grid(family) if full_grid else desk_grid(family)
        if seeds is None:
            seeds = list(FULL_SEEDS) if full_grid else list(DESK_SEEDS)
        return cls(family=family, values=values, seeds=seeds, **overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown sweep config fields: {sorted(unknown)}")
        return cls(**d)

    def train_config(self, value: float, seed: int) -> TrainConfig:
        """The training settings implied by one grid value of this family."""
        l2, l1, p = 0.0, 0.0, 0.0
        if self.family == "l2":
            l2 = value
        elif self.family == "l1":
            l2, l1 = self.l2_base, value
        else:
            l2, p = self.l2_base, value
        return TrainConfig(l2=l2, l1=l1, dropout=p, epochs=self.epochs,
                           batch_size=self.batch_size, lr=self.lr,
                           momentum=self.momentum, seed=int(seed))

    def cluster_config(self, seed: int) -> ClusterConfig:
        return ClusterConfig(seed=int(seed), mc_steps=self.mc_steps,
                             steps_per_unit=self.steps_per_unit,
                             target_entropy=self.target_entropy,
                             refresh_every=self.refresh_every,
                             ablation_single_init=self.ablation)


@dataclass
class RunRecord:
    """Persisted summary of one (setting, seed) analysis."""

    key: str
    family: str
    value: float
    percent: float | None
    seed: int
    untrained: bool
    kept: bool
    failed: bool = False
    error: str | None = None
    config: dict = field(default_factory=dict)
    metrics: dict | None = None
    cluster_summary: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    code_version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(**d)


_dataset_cache: dict = {}


def load_dataset(cfg: SweepConfig) -> tuple[Dataset, Dataset]:
    """(train, test) pair for a sweep config, with deterministic limits.

    ``synthetic-digits`` and ``blobs`` are generated from the config's
    dataset seed: one shared class-distribution stream, independent
    train/test sample streams.  ``mnist`` reads the standard IDX pairs
    (gzipped or plain) from ``data_dir``.  Limits take the first N items.
    """
    key = (cfg.dataset, cfg.data_dir, cfg.dataset_seed, cfg.limit_train,
           cfg.limit_test)
    if key in _dataset_cache:
        return _dataset_cache[key]
    n_train = cfg.limit_train or 10000
    n_test = cfg.limit_test or 10000
    root = RandomSource(cfg.dataset_seed)
    classes = root.derive("classes")
    if cfg.dataset == "synthetic-digits":
        train_ds = synthetic_digits(n_train, root.derive("train"),
                                    template_rng=classes)
        test_ds = synthetic_digits(n_test, root.derive("test"),
                                   template_rng=classes)
    elif cfg.dataset == "blobs":
        train_ds = synthetic_blobs(10, n_train, 784, 0.08,
                                   root.derive("train"), means_rng=classes)
        test_ds = synthetic_blobs(10, n_test, 784, 0.08,
                                  root.derive("test"), means_rng=classes)
    elif cfg.dataset == "mnist":
        if not cfg.data_dir:
            raise ValidationError("dataset 'mnist' requires data_dir")
        train_ds = _load_idx_pair(Path(cfg.data_dir), "train-images-idx3-ubyte",
                                  "train-labels-idx1-ubyte", "mnist-train")
        test_ds = _load_idx_pair(Path(cfg.data_dir), "t10k-images-idx3-ubyte",
                                 "t10k-labels-idx1-ubyte", "mnist-test")
        if cfg.limit_train:
            train_ds = train_ds.take(min(cfg.limit_train, train_ds.n))
        if cfg.limit_test:
            test_ds = test_ds.take(min(cfg.limit_test, test_ds.n))
    else:
        raise ValidationError(f"unknown dataset {cfg.dataset!r}")
    _dataset_cache[key] = (train_ds, test_ds)
    return train_ds, test_ds


def _load_idx_pair(root: Path, images: str, labels: str, name: str) -> Dataset:
    def find(stem: str) -> Path:
        for cand in (root / stem, root / (stem + ".gz")):
            if cand.exists():
                return cand
        raise ValidationError(f"missing {stem}[.gz] under {root}")
    return load_idx(find(images), find(labels), name=name)


def record_key(cfg: SweepConfig, family: str, value: float, seed: int,
               untrained: bool) -> str:
    """Content hash identifying one record; changes when behavior would."""
    tc = cfg.train_config(value, seed) if not untrained else None
    payload = {
        "family": family,
        "value": repr(float(value)),
        "seed": int(seed),
        "untrained": bool(untrained),
        "dataset": cfg.dataset,
        "dataset_seed": cfg.dataset_seed,
        "limit_train": cfg.limit_train,
        "limit_test": cfg.limit_test,
        "train": tc.to_dict() if tc else None,
        "sim_batch": cfg.sim_batch,
        "mc_steps": cfg.mc_steps,
        "steps_per_unit": cfg.steps_per_unit,
        "target_entropy": repr(cfg.target_entropy),
        "refresh_every": cfg.refresh_every,
        "ablation": cfg.ablation,
        "accuracy_floor": repr(cfg.accuracy_floor),
        "code_version": __version__,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def _record_dir(out_dir: Path, family: str, key: str) -> Path:
    return Path(out_dir) / "runs" / family / key


def _write_record(rdir: Path, record: RunRecord) -> None:
    with open(rdir / "record.json", "w") as fh:
        json.dump(record.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_record(rdir: Path) -> RunRecord | None:
    path = rdir / "record.json"
    if not path.exists():
        return None
    with open(path) as fh:
        return RunRecord.from_dict(json.load(fh))


def run_one(cfg: SweepConfig, family: str, value: float, seed: int,
            out_dir, untrained: bool = False) -> RunRecord:
    """Execute (or resume) one record: train, evaluate, similarities, clusters."""
    out_dir = Path(out_dir)
    key = record_key(cfg, family, value, seed, untrained)
    rdir = _record_dir(out_dir, family, key)
    existing = _load_record(rdir)
    if existing is not None and existing.key == key and not existing.failed:
        logger.info("resume: skipping completed record %s/%s", family, key)
        return existing
    rdir.mkdir(parents=True, exist_ok=True)
    (rdir / "sim").mkdir(exist_ok=True)
    (rdir / "clusters").mkdir(exist_ok=True)
    t_start = time.perf_counter()
    timing: dict = {}

    percent = None if untrained else percent_regularization(family, value)
    train_ds, test_ds = load_dataset(cfg)
    base = RunRecord(key=key, family=family, value=float(value), percent=percent,
                     seed=int(seed), untrained=untrained, kept=False,
                     config=cfg.to_dict())

    if untrained:
        model = init_mlp(seed)
        history: list = []
    else:
        tc = cfg.train_config(value, seed)
        limited = train_ds.take(min(cfg.limit_train or train_ds.n, train_ds.n))
        t0 = time.perf_counter()
        try:
            model, history = train(init_mlp(seed, dropout_p=tc.dropout),
                                   limited, tc, test_ds=test_ds)
        except TrainingDivergedError as exc:
            base.failed = True
            base.error = str(exc)
            _write_record(rdir, base)
            logger.warning("record %s failed: %s", key, exc)
            return base
        timing["train_s"] = time.perf_counter() - t0

    metrics = evaluate(model, test_ds)
    base.metrics = metrics.to_dict()
    base.kept = untrained or metrics.accuracy >= cfg.accuracy_floor

    model_path = rdir / "model.mlp"
    save_model(model, model_path,
               train_config=None if untrained else cfg.train_config(value, seed),
               history=history)
    base.files["model"] = str(model_path.relative_to(out_dir))

    t0 = time.perf_counter()
    sims = compute_all(model, test_ds, batch_size=cfg.sim_batch)
    timing["similarity_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    job_rng = RandomSource(seed)
    for sm in sims:
        stem = f"{sm.layer}_{sm.tag}"
        sim_path = rdir / "sim" / f"{stem}.simmat"
        save_similarity(sm, sim_path)
        base.files[f"sim/{stem}"] = str(sim_path.relative_to(out_dir))
        cc = cfg.cluster_config(job_rng.derive("cluster", sm.layer, sm.tag).seed)
        res = cluster(sm, cc)
        cl_path = rdir / "clusters" / f"{stem}.json"
        save_cluster_result(res, cl_path)
        base.files[f"clusters/{stem}"] = str(cl_path.relative_to(out_dir))
        base.cluster_summary[stem] = {
            "q_star": res.q_star,
            "num_clusters": res.num_clusters,
            "n_pruned": int(res.pruned.size),
            "degenerate": res.degenerate,
        }
    timing["cluster_s"] = time.perf_counter() - t0
    timing["total_s"] = time.perf_counter() - t_start

    _write_record(rdir, base)
    with open(rdir / "timing.json", "w") as fh:
        json.dump(timing, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return base


def _run_job(args) -> dict:
    cfg_dict, family, value, seed, out_dir, untrained = args
    cfg = SweepConfig.from_dict(cfg_dict)
    return run_one(cfg, family, value, seed, out_dir, untrained).to_dict()


def run_sweep(cfg: SweepConfig, out_dir, workers: int = 1) -> list[RunRecord]:
    """All (value, seed) records of a sweep; resumable and parallelizable.

    Jobs are independent (each owns derived random streams and its own
    directory), so results do not depend on ``workers``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg.to_dict(), cfg.family, float(v), int(s), str(out_dir), False)
            for v in cfg.values for s in cfg.seeds]
    return _execute(jobs, workers)


def random_baseline(cfg: SweepConfig, out_dir, count: int | None = None,
                    seed0: int = 0, workers: int = 1) -> list[RunRecord]:
    """Untrained-model records (same downstream analysis), seeds seed0..+count."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if count is None:
        count = cfg.baseline_count
    if count < 0:
        raise ValidationError("baseline count must be non-negative")
    jobs = [(cfg.to_dict(), "baseline", 0.0, int(seed0 + i), str(out_dir), True)
            for i in range(count)]
    return _execute(jobs, workers)


def _execute(jobs: list, workers: int) -> list[RunRecord]:
    if workers <= 1:
        return [RunRecord.from_dict(_run_job(job)) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [RunRecord.from_dict(d) for d in pool.map(_run_job, jobs)]


def _iter_records(results_dir: Path):
    for path in sorted(Path(results_dir).glob("runs/*/*/record.json")):
        with open(path) as fh:
            yield path.parent, RunRecord.from_dict(json.load(fh))


def cluster_result_from_dict(d: dict) -> ClusterResult:
    """Rebuild a ClusterResult (partition, pruning) from its JSON form."""
    clusters = d["clusters"]
    kept = sorted(int(u) for members in clusters for u in members)
    pos = {u: i for i, u in enumerate(kept)}
    labels = np.zeros(len(kept), dtype=np.int64)
    for j, members in enumerate(clusters):
        for u in members:
            labels[pos[int(u)]] = j
    partition = Partition.from_membership(labels) if kept else \
        Partition(np.zeros((0, 0)))
    return ClusterResult(
        q_star=float(d["q_star"]), partition=partition,
        num_clusters=float(d["num_clusters"]),
        kept=np.asarray(kept, dtype=np.int64),
        pruned=np.asarray([int(u) for u in d["pruned"]], dtype=np.int64),
        n_original=int(d["n_original"]), degenerate=bool(d["degenerate"]),
        log=d.get("log", {}))


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / math.sqrt(arr.size))


def _load_group_results(rdir: Path, record: RunRecord, layer: str) -> dict:
    out = {}
    for tag in METHOD_ORDER:
        path = rdir / "clusters" / f"{layer}_{tag}.json"
        if not path.exists():
            continue
        with open(path) as fh:
            out[tag] = cluster_result_from_dict(json.load(fh))
    return out


def _write_agreement_csv(path: Path, matrix: np.ndarray, tags, n_groups: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# n_groups={n_groups}\n")
        writer = csv.writer(fh)
        writer.writerow(["method", *tags])
        for i, tag in enumerate(tags):
            writer.writerow([tag, *(_fmt(v) for v in matrix[i])])


def read_agreement_csv(path) -> tuple[np.ndarray, list[str], dict]:
    """Read an agreement CSV back as (matrix, tags, meta)."""
    meta: dict = {}
    rows = []
    tags: list[str] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for part in line[1:].split():
                    if "=" in part:
                        k, v = part.split("=", 1)
                        meta[k] = v
                continue
            cells = line.split(",")
            if not tags and cells[0] == "method":
                tags = cells[1:]
                continue
            rows.append([float(c) for c in cells[1:]])
    return np.asarray(rows, dtype=np.float64), tags, meta


def _collect_records(results_dir) -> tuple[list, list]:
    """Non-failed records split into (trained, baseline) lists."""
    results_dir = Path(results_dir)
    trained: list[tuple[Path, RunRecord]] = []
    baseline: list[tuple[Path, RunRecord]] = []
    for rdir, record in _iter_records(results_dir):
        if record.failed:
            continue
        (baseline if record.untrained else trained).append((rdir, record))
    if not trained and not baseline:
        raise ModkitError(f"no usable run records under {results_dir}")
    return trained, baseline


def aggregate(results_dir, out_dir=None) -> dict:
    """Build the analysis CSVs from persisted records; bit-stable on rerun.

    Writes q_vs_reg.csv, numclusters_vs_reg.csv, metrics_vs_reg.csv,
    agreement.csv, agreement_raw.csv, and (when untrained baselines exist)
    agreement_minus_random.csv.  Trained records enter the Q*/agreement
    tables only when kept; metrics cover all non-failed trained records.
    Returns a dict of table names to paths.
    """
    results_dir = Path(results_dir)
    out_dir = Path(out_dir) if out_dir else results_dir / "tables"
    out_dir.mkdir(parents=True, exist_ok=True)
    trained, baseline = _collect_records(results_dir)

    layers = ("h1", "h2")
    paths: dict[str, Path] = {}

    # Q* and cluster-count tables with baseline columns alongside.
    base_q: dict[tuple[str, str], list[float]] = {}
    base_nc: dict[tuple[str, str], list[float]] = {}
    for _, record in baseline:
        for stem, summary in record.cluster_summary.items():
            layer, tag = stem.split("_", 1)
            base_q.setdefault((layer, tag), []).append(summary["q_star"])
            base_nc.setdefault((layer, tag), []).append(summary["num_clusters"])

    def baseline_cols(table: dict, layer: str, tag: str) -> list[str]:
        vals = table.get((layer, tag))
        if not vals:
            return ["", "", ""]
        arr = np.asarray(vals)
        return [_fmt(arr.mean()), _fmt(arr.std(ddof=1) if arr.size > 1 else 0.0),
                str(arr.size)]

    groups: dict[tuple[str, float], list[RunRecord]] = {}
    for _, record in trained:
        if record.kept:
            groups.setdefault((record.family, record.value), []).append(record)

    for name, field_name, base_table in (
            ("q_vs_reg", "q_star", base_q),
            ("numclusters_vs_reg", "num_clusters", base_nc)):
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["family", "value", "percent", "layer", "method",
                             f"{field_name}_mean", f"{field_name}_stderr", "n",
                             "baseline_mean", "baseline_std", "baseline_n"])
            for (family, value) in sorted(groups):
                records = groups[(family, value)]
                percent = percent_regularization(family, value)
                for layer in layers:
                    for tag in METHOD_ORDER:
                        vals = [r.cluster_summary[f"{layer}_{tag}"][field_name]
                                for r in records
                                if f"{layer}_{tag}" in r.cluster_summary]
                        if not vals:
                            continue
                        mean, stderr = _mean_stderr(vals)
                        writer.writerow([
                            family, _fmt(value), _fmt(percent), layer, tag,
                            _fmt(mean), _fmt(stderr), len(vals),
                            *baseline_cols(base_table, layer, tag)])
        paths[name] = path

    # Metrics table over all non-failed trained records.
    path = out_dir / "metrics_vs_reg.csv"
    metric_names = ("accuracy", "mean_loss", "l2_norm", "l1_norm", "sparsity")
    all_groups: dict[tuple[str, float], list[RunRecord]] = {}
    for _, record in trained:
        all_groups.setdefault((record.family, record.value), []).append(record)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["family", "value", "percent", "n", "n_discarded"]
        for mname in metric_names:
            header += [f"{mname}_mean", f"{mname}_stderr"]
        writer.writerow(header)
        for (family, value) in sorted(all_groups):
            records = all_groups[(family, value)]
            row = [family, _fmt(value),
                   _fmt(percent_regularization(family, value)),
                   len(records), sum(1 for r in records if not r.kept)]
            for mname in metric_names:
                mean, stderr = _mean_stderr([r.metrics[mname] for r in records])
                row += [_fmt(mean), _fmt(stderr)]
            writer.writerow(row)
    paths["metrics_vs_reg"] = path

    paths.update(
        {k: Path(v) for k, v in
         _write_agreement_tables(trained, baseline, out_dir).items()})
    return {name: str(p) for name, p in paths.items()}


def _write_agreement_tables(trained, baseline, out_dir: Path) -> dict:
    layers = ("h1", "h2")

    def agreement_groups(entries):
        for rdir, record in entries:
            for layer in layers:
                results = _load_group_results(rdir, record, layer)
                if results:
                    yield f"{record.key}/{layer}", results

    paths: dict[str, Path] = {}
    kept_trained = [(rdir, r) for rdir, r in trained if r.kept]
    trained_agreement = method_agreement(agreement_groups(kept_trained))
    path = out_dir / "agreement.csv"
    _write_agreement_csv(path, trained_agreement.matrix, trained_agreement.tags,
                         trained_agreement.n_groups)
    paths["agreement"] = path

    path = out_dir / "agreement_raw.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "method_a", "method_b", "score"])
        for group_id, tag_a, tag_b, score in trained_agreement.raw_scores:
            writer.writerow([group_id, tag_a, tag_b, _fmt(score)])
    paths["agreement_raw"] = path

    if baseline:
        baseline_agreement = method_agreement(agreement_groups(baseline))
        diff = agreement_difference(trained_agreement, baseline_agreement)
        path = out_dir / "agreement_minus_random.csv"
        _write_agreement_csv(path, diff, trained_agreement.tags,
                             min(trained_agreement.n_groups,
                                 baseline_agreement.n_groups))
        paths["agreement_minus_random"] = path
    else:
        logger.warning("no untrained baseline records; "
                       "agreement_minus_random.csv not written")
    return {name: str(p) for name, p in paths.items()}


def compare_runs(results_dir, out_dir=None) -> dict:
    """Just the method-agreement tables from a directory of run records."""
    results_dir = Path(results_dir)
    out_dir = Path(out_dir) if out_dir else results_dir / "tables"
    out_dir.mkdir(parents=True, exist_ok=True)
    trained, baseline = _collect_records(results_dir)
    return _write_agreement_tables(trained, baseline, out_dir)


def write_manifest(out_dir) -> Path:
    """List every artifact under ``out_dir`` with its SHA-256 and size."""
    out_dir = Path(out_dir)
    artifacts = []
    for path in sorted(out_dir.rglob("*")):
        if not path.is_file() or path.name == "manifest.json":
            continue
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        artifacts.append({"path": path.relative_to(out_dir).as_posix(),
                          "sha256": digest, "bytes": path.stat().st_size})
    manifest = {"code_version": __version__, "artifacts": artifacts}
    target = out_dir / "manifest.json"
    with open(target, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return target
