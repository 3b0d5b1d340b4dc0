#!/usr/bin/env python3
"""Render analysis figures from aggregation tables and cluster artifacts.

Standalone on purpose: this script reads only the documented artifact
schemas (the ``*_vs_reg`` and ``agreement*`` CSV tables, per-matrix
similarity CSVs, cluster-result JSON), never the library internals, so
it can be pointed at any conforming run directory.

Driven by a figure-spec JSON file::

    {"kind": "q_vs_reg",
     "inputs": {"table": "runs/tables/q_vs_reg.csv"},
     "out": "figs/q_vs_reg_h1.png",
     "style": {"layer": "h1"}}

Kinds: q_vs_reg, num_clusters, metrics, agreement, agreement_diff,
heatmap_sorted_similarity.  Output format follows the ``out`` suffix
(PNG or SVG); rendering is deterministic, so identical inputs give
byte-identical images.
"""

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

METHODS = ("cov_raw", "cov_norm", "isens_raw", "isens_norm",
           "osens_raw", "osens_norm", "hess_raw", "hess_norm")

# One hue per method family: cool hues upstream, warm hues downstream.
METHOD_COLORS = {
    "cov_raw": "#1f77b4", "cov_norm": "#5ca3d6",
    "isens_raw": "#2ca02c", "isens_norm": "#74c476",
    "osens_raw": "#d62728", "osens_norm": "#ef8a8a",
    "hess_raw": "#ff7f0e", "hess_norm": "#ffbb78",
}
FAMILY_STYLES = ("-", "--", ":", "-.")
METRIC_NAMES = ("accuracy", "mean_loss", "l2_norm", "l1_norm", "sparsity")


class SchemaError(Exception):
    """An input file or figure spec does not match the documented schema."""


def _style(spec: dict) -> dict:
    style = spec.get("style", {})
    if not isinstance(style, dict):
        raise SchemaError("figure spec 'style' must be an object")
    return style


def _input(spec: dict, name: str) -> Path:
    inputs = spec.get("inputs")
    if not isinstance(inputs, dict) or name not in inputs:
        raise SchemaError(f"figure spec needs inputs[{name!r}]")
    path = Path(inputs[name])
    if not path.exists():
        raise SchemaError(f"input file not found: {path}")
    return path


def _float(row: dict, col: str, path) -> float:
    try:
        return float(row[col])
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{path}: bad value in column {col!r}: "
                          f"{row.get(col)!r}") from exc


def read_table(path, required: list) -> list:
    """Rows of a headed CSV table, failing on any missing named column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        for col in required:
            if col not in cols:
                raise SchemaError(f"{path}: missing column {col!r}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def read_grid_csv(path):
    """A '#'-headed square grid CSV: returns (matrix, meta dict)."""
    meta: dict = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for part in line[1:].split():
                    if "=" in part:
                        key, val = part.split("=", 1)
                        meta[key] = val
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise SchemaError(f"{path}: non-numeric grid row") from exc
    grid = np.asarray(rows, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise SchemaError(f"{path}: expected a square grid, got {grid.shape}")
    return grid, meta


def read_agreement(path):
    """An agreement CSV: returns (matrix, method tags, meta dict)."""
    meta: dict = {}
    tags: list = []
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for part in line[1:].split():
                    if "=" in part:
                        key, val = part.split("=", 1)
                        meta[key] = val
                continue
            cells = line.split(",")
            if not tags:
                if cells[0] != "method":
                    raise SchemaError(f"{path}: missing column 'method'")
                tags = cells[1:]
                continue
            try:
                rows.append([float(c) for c in cells[1:]])
            except ValueError as exc:
                raise SchemaError(f"{path}: non-numeric agreement row") from exc
    matrix = np.asarray(rows, dtype=np.float64)
    if not tags or matrix.shape != (len(tags), len(tags)):
        raise SchemaError(f"{path}: tag row and matrix shape disagree")
    return matrix, tags, meta


def sort_by_cluster(grid: np.ndarray, clusters: list, pruned: list):
    """Permute a similarity grid so cluster members are contiguous.

    Clusters are laid out by size descending (ties keep their given
    order); pruned units form a trailing block.  Returns the permuted
    grid, the permutation (new position -> original index), and the
    internal block-boundary indices.
    """
    order: list = []
    boundaries: list = []
    for members in sorted(clusters, key=len, reverse=True):
        order.extend(int(u) for u in members)
        boundaries.append(len(order))
    order.extend(int(u) for u in pruned)
    n = grid.shape[0]
    if sorted(order) != list(range(n)):
        raise SchemaError(f"cluster membership covers {len(order)} units, "
                          f"grid has {n}")
    boundaries = [b for b in boundaries if 0 < b < n]
    perm = np.asarray(order, dtype=np.int64)
    return grid[np.ix_(perm, perm)], perm, boundaries


def _percent_axis(ax):
    ax.set_xlabel("regularization (%)")
    ax.grid(True, alpha=0.25, linewidth=0.5)


def _curve_panels(spec, path, value_col, ylabel):
    rows = read_table(path, ["family", "value", "percent", "layer", "method",
                             f"{value_col}_mean", f"{value_col}_stderr", "n"])
    layer = _style(spec).get("layer", "h1")
    rows = [r for r in rows if r["layer"] == layer]
    if not rows:
        raise SchemaError(f"{path}: no rows for layer {layer!r}")
    has_baseline = "baseline_mean" in rows[0]
    families = sorted({r["family"] for r in rows})
    methods = [m for m in METHODS if any(r["method"] == m for r in rows)]
    if not methods:
        raise SchemaError(f"{path}: no known methods in column 'method'")

    fig, axes = plt.subplots(2, 4, figsize=(14, 6.5), sharex=True,
                             sharey=True)
    for ax in axes.ravel()[len(methods):]:
        ax.set_visible(False)
    for ax, method in zip(axes.ravel(), methods):
        sub = [r for r in rows if r["method"] == method]
        band = None
        if has_baseline and sub[0]["baseline_mean"]:
            mean = _float(sub[0], "baseline_mean", path)
            std = _float(sub[0], "baseline_std", path)
            band = (mean - 3.0 * std, mean + 3.0 * std)
            ax.axhspan(band[0], band[1], color="0.88", zorder=0)
        elif has_baseline:
            print(f"warning: {path}: empty baseline columns for {method}; "
                  "band omitted", file=sys.stderr)
        for fi, family in enumerate(families):
            pts = sorted(((_float(r, "percent", path),
                           _float(r, f"{value_col}_mean", path),
                           _float(r, f"{value_col}_stderr", path))
                          for r in sub if r["family"] == family))
            if not pts:
                continue
            xs, ys, errs = zip(*pts)
            label = family if len(families) > 1 else None
            ax.errorbar(xs, ys, yerr=errs, color=METHOD_COLORS[method],
                        linestyle=FAMILY_STYLES[fi % len(FAMILY_STYLES)],
                        marker="o", markersize=3.5, capsize=2.5,
                        linewidth=1.4, label=label)
        ax.set_title(method, fontsize=10)
        _percent_axis(ax)
        if len(families) > 1:
            ax.legend(fontsize=7)
    if not has_baseline:
        print(f"warning: {path}: no baseline columns; bands omitted",
              file=sys.stderr)
    for ax in axes[:, 0]:
        ax.set_ylabel(ylabel)
    fig.suptitle(f"{ylabel} vs regularization, layer {layer}")
    fig.tight_layout()
    return fig


def fig_q_vs_reg(spec):
    return _curve_panels(spec, _input(spec, "table"), "q_star", "Q*")


def fig_num_clusters(spec):
    return _curve_panels(spec, _input(spec, "table"), "num_clusters",
                         "effective clusters")


def fig_metrics(spec):
    path = _input(spec, "table")
    required = ["family", "value", "percent", "n", "n_discarded"]
    required += [f"{m}_mean" for m in METRIC_NAMES]
    required += [f"{m}_stderr" for m in METRIC_NAMES]
    rows = read_table(path, required)
    families = sorted({r["family"] for r in rows})
    fig, axes = plt.subplots(1, len(METRIC_NAMES), figsize=(16, 3.2))
    for ax, metric in zip(axes, METRIC_NAMES):
        for fi, family in enumerate(families):
            pts = sorted(((_float(r, "percent", path),
                           _float(r, f"{metric}_mean", path),
                           _float(r, f"{metric}_stderr", path))
                          for r in rows if r["family"] == family))
            xs, ys, errs = zip(*pts)
            label = family if len(families) > 1 else None
            ax.errorbar(xs, ys, yerr=errs, marker="o", markersize=3.5,
                        capsize=2.5, linewidth=1.4,
                        linestyle=FAMILY_STYLES[fi % len(FAMILY_STYLES)],
                        color="#444444", label=label)
        ax.set_title(metric, fontsize=10)
        _percent_axis(ax)
        if len(families) > 1:
            ax.legend(fontsize=7)
    fig.suptitle("training metrics vs regularization")
    fig.tight_layout()
    return fig


def _agreement_panel(matrix, tags, title, diverging):
    fig, ax = plt.subplots(figsize=(7.6, 6.6))
    if diverging:
        vmax = float(np.nanmax(np.abs(matrix))) if np.isfinite(matrix).any() \
            else 1.0
        vmax = vmax or 1.0
        cmap = matplotlib.colormaps["coolwarm"].copy()
        norm = {"vmin": -vmax, "vmax": vmax}
    else:
        vmax = 1.0
        cmap = matplotlib.colormaps["viridis"].copy()
        norm = {"vmin": 0.0, "vmax": 1.0}
    cmap.set_bad("0.85")
    im = ax.imshow(matrix, cmap=cmap, **norm)
    ax.set_xticks(range(len(tags)), tags, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(tags)), tags, fontsize=8)
    for i in range(len(tags)):
        for j in range(len(tags)):
            v = matrix[i, j]
            if math.isnan(v):
                continue
            # Saturated cells get white text: viridis is dark at the low
            # end, coolwarm at both extremes.
            dark = abs(v) > 0.6 * vmax if diverging else v < 0.55
            ax.text(j, i, f"{v:.2f}", ha="center", va="center",
                    fontsize=7, color="white" if dark else "black")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_title(title)
    fig.tight_layout()
    return fig


def fig_agreement(spec):
    path = _input(spec, "table")
    matrix, tags, meta = read_agreement(path)
    title = _style(spec).get(
        "title", f"method agreement (n_groups={meta.get('n_groups', '?')})")
    return _agreement_panel(matrix, tags, title, diverging=False)


def fig_agreement_diff(spec):
    path = _input(spec, "table")
    matrix, tags, meta = read_agreement(path)
    title = _style(spec).get("title", "method agreement, trained minus random")
    return _agreement_panel(matrix, tags, title, diverging=True)


def fig_sorted_heatmap(spec):
    grid, meta = read_grid_csv(_input(spec, "similarity"))
    cl_path = _input(spec, "clusters")
    try:
        payload = json.loads(cl_path.read_text())
        clusters = payload["clusters"]
        pruned = payload.get("pruned", [])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SchemaError(f"{cl_path}: not a cluster-result JSON "
                          f"({exc})") from exc
    permuted, perm, boundaries = sort_by_cluster(grid, clusters, pruned)

    sorted_csv = _style(spec).get("sorted_csv")
    if sorted_csv:
        with open(sorted_csv, "w") as fh:
            fh.write(f"# method={meta.get('method', '?')} "
                     f"layer={meta.get('layer', '?')} n={grid.shape[0]} "
                     f"order={','.join(str(int(u)) for u in perm)} "
                     f"boundaries={','.join(str(b) for b in boundaries)}\n")
            for row in permuted:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    fig, ax = plt.subplots(figsize=(6.6, 6.0))
    im = ax.imshow(permuted, cmap="viridis")
    for b in boundaries:
        ax.axhline(b - 0.5, color="red", linewidth=0.7)
        ax.axvline(b - 0.5, color="red", linewidth=0.7)
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_xlabel("unit (sorted by cluster)")
    ax.set_ylabel("unit (sorted by cluster)")
    ax.set_title(_style(spec).get(
        "title",
        f"{meta.get('method', '?')} {meta.get('layer', '?')}, sorted"))
    fig.tight_layout()
    return fig


KINDS = {
    "q_vs_reg": fig_q_vs_reg,
    "num_clusters": fig_num_clusters,
    "metrics": fig_metrics,
    "agreement": fig_agreement,
    "agreement_diff": fig_agreement_diff,
    "heatmap_sorted_similarity": fig_sorted_heatmap,
}


def render(spec: dict) -> Path:
    """Render one figure spec to its output image; returns the path."""
    kind = spec.get("kind")
    if kind not in KINDS:
        raise SchemaError(f"unknown figure kind {kind!r}; "
                          f"expected one of {sorted(KINDS)}")
    if "out" not in spec:
        raise SchemaError("figure spec needs 'out'")
    out = Path(spec["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    fig = KINDS[kind](spec)
    # SVG would embed a timestamp by default; pin it off for determinism.
    metadata = {"Date": None} if out.suffix == ".svg" else None
    fig.savefig(out, dpi=150, metadata=metadata)
    plt.close(fig)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="Render one figure from a spec JSON.")
    parser.add_argument("--spec", required=True,
                        help="path to a figure-spec JSON file")
    args = parser.parse_args(argv)
    try:
        spec = json.loads(Path(args.spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: unreadable figure spec: {exc}", file=sys.stderr)
        return 2
    if not isinstance(spec, dict):
        print("error: figure spec must be a JSON object", file=sys.stderr)
        return 2
    try:
        out = render(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
