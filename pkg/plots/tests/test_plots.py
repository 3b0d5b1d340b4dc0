import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

PLOTS_DIR = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(PLOTS_DIR))

import render  # noqa: E402

Q_HEADER = ("family,value,percent,layer,method,q_star_mean,q_star_stderr,n,"
            "baseline_mean,baseline_std,baseline_n")


def q_table(tmp_path, baseline=True, name="q_vs_reg.csv"):
    lines = [Q_HEADER if baseline else Q_HEADER.rsplit(",baseline_mean", 1)[0]]
    for method, q0, q5 in (("cov_norm", 0.11, 0.24), ("hess_raw", 0.05, 0.09)):
        for value, pct, q in ((0.0, 0.0, q0), (0.5, 50.0, q5)):
            row = f"dropout,{value},{pct},h1,{method},{q},0.01,3"
            if baseline:
                row += ",0.08,0.012,50"
            lines.append(row)
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return path


def agreement_table(tmp_path, name="agreement.csv", nan_cell=False):
    tags = list(render.METHODS)
    rng = np.random.default_rng(7)
    m = rng.uniform(0.2, 0.9, size=(8, 8))
    m = (m + m.T) / 2.0
    np.fill_diagonal(m, 1.0)
    if nan_cell:
        m[0, 7] = m[7, 0] = np.nan
    path = tmp_path / name
    with open(path, "w") as fh:
        fh.write("# n_groups=12\n")
        fh.write("method," + ",".join(tags) + "\n")
        for tag, row in zip(tags, m):
            fh.write(tag + "," + ",".join(repr(float(v)) for v in row) + "\n")
    return path


def two_block_inputs(tmp_path):
    grid = np.zeros((4, 4))
    for a, b in ((0, 1), (2, 3)):
        grid[a, b] = grid[b, a] = 1.0
    sim = tmp_path / "sim.csv"
    with open(sim, "w") as fh:
        fh.write("# method=cov_norm layer=h1 n=4 sample_count=0 model_hash=\n")
        for row in grid:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    clusters = tmp_path / "clusters.json"
    clusters.write_text(json.dumps({
        "q_star": 0.5, "num_clusters": 2.0, "n_original": 4,
        "clusters": [[0, 1], [2, 3]], "pruned": [], "degenerate": False,
        "log": {}}))
    return sim, clusters


def spec_for(kind, out, **inputs):
    return {"kind": kind, "inputs": {k: str(v) for k, v in inputs.items()},
            "out": str(out)}


class TestSortByCluster:
    def test_two_block_exact(self):
        grid = np.array([[0, 0, 1, 0],
                         [0, 0, 0, 1],
                         [1, 0, 0, 0],
                         [0, 1, 0, 0]], dtype=float)
        permuted, perm, boundaries = render.sort_by_cluster(
            grid, [[0, 2], [1, 3]], [])
        assert list(perm) == [0, 2, 1, 3]
        assert boundaries == [2]
        assert np.array_equal(permuted[:2, :2], np.array([[0, 1], [1, 0.]]))
        assert np.array_equal(permuted[:2, 2:], np.zeros((2, 2)))
        assert np.array_equal(permuted[2:, :2], np.zeros((2, 2)))

    def test_size_descending_with_pruned(self):
        grid = np.arange(36, dtype=float).reshape(6, 6)
        grid = (grid + grid.T) / 2.0
        permuted, perm, boundaries = render.sort_by_cluster(
            grid, [[5], [1, 2, 4]], [0, 3])
        assert list(perm) == [1, 2, 4, 5, 0, 3]
        assert boundaries == [3, 4]
        assert np.array_equal(permuted, grid[np.ix_(perm, perm)])

    def test_single_cluster_identity_permutation(self):
        grid = np.ones((3, 3))
        permuted, perm, boundaries = render.sort_by_cluster(
            grid, [[0, 1, 2]], [])
        assert list(perm) == [0, 1, 2]
        assert boundaries == []
        assert np.array_equal(permuted, grid)

    def test_permutation_is_bijection(self):
        grid = np.zeros((7, 7))
        _, perm, _ = render.sort_by_cluster(grid, [[6, 0], [2, 1, 5]], [4, 3])
        assert sorted(perm) == list(range(7))

    def test_membership_mismatch(self):
        with pytest.raises(render.SchemaError, match="covers 3 units"):
            render.sort_by_cluster(np.zeros((4, 4)), [[0, 1, 2]], [])

    def test_duplicate_unit_rejected(self):
        with pytest.raises(render.SchemaError):
            render.sort_by_cluster(np.zeros((4, 4)), [[0, 1], [1, 2]], [3])


class TestCurveFigures:
    def test_q_vs_reg_renders_png(self, tmp_path):
        out = tmp_path / "fig.png"
        got = render.render(spec_for("q_vs_reg", out, table=q_table(tmp_path)))
        assert got == out
        assert out.stat().st_size > 0

    def test_rerender_is_byte_identical(self, tmp_path):
        table = q_table(tmp_path)
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        render.render(spec_for("q_vs_reg", a, table=table))
        render.render(spec_for("q_vs_reg", b, table=table))
        assert a.read_bytes() == b.read_bytes()

    def test_missing_baseline_warns_but_renders(self, tmp_path, capsys):
        table = q_table(tmp_path, baseline=False)
        out = tmp_path / "fig.png"
        render.render(spec_for("q_vs_reg", out, table=table))
        assert out.stat().st_size > 0
        assert "baseline" in capsys.readouterr().err

    def test_missing_column_named_in_error(self, tmp_path):
        path = tmp_path / "broken.csv"
        lines = q_table(tmp_path).read_text().splitlines()
        header = lines[0].replace("percent,", "")
        rows = [",".join(c for i, c in enumerate(line.split(","))
                         if i != 2) for line in lines[1:]]
        path.write_text("\n".join([header] + rows) + "\n")
        with pytest.raises(render.SchemaError, match="'percent'"):
            render.render(spec_for("q_vs_reg", tmp_path / "x.png", table=path))

    def test_unknown_layer_rejected(self, tmp_path):
        spec = spec_for("q_vs_reg", tmp_path / "x.png",
                        table=q_table(tmp_path))
        spec["style"] = {"layer": "h9"}
        with pytest.raises(render.SchemaError, match="h9"):
            render.render(spec)

    def test_num_clusters_renders(self, tmp_path):
        lines = q_table(tmp_path).read_text().replace("q_star", "num_clusters")
        table = tmp_path / "numclusters_vs_reg.csv"
        table.write_text(lines)
        out = tmp_path / "nc.png"
        render.render(spec_for("num_clusters", out, table=table))
        assert out.stat().st_size > 0

    def test_metrics_renders(self, tmp_path):
        header = ["family", "value", "percent", "n", "n_discarded"]
        for m in render.METRIC_NAMES:
            header += [f"{m}_mean", f"{m}_stderr"]
        rows = []
        for value, pct in ((0.0, 0.0), (0.5, 50.0)):
            row = ["dropout", str(value), str(pct), "3", "0"]
            row += [str(0.1 * (i + 1)) for i in range(2 * len(render.METRIC_NAMES))]
            rows.append(",".join(row))
        table = tmp_path / "metrics_vs_reg.csv"
        table.write_text(",".join(header) + "\n" + "\n".join(rows) + "\n")
        out = tmp_path / "metrics.png"
        render.render(spec_for("metrics", out, table=table))
        assert out.stat().st_size > 0


class TestAgreementFigures:
    def test_agreement_renders(self, tmp_path):
        out = tmp_path / "agree.png"
        render.render(spec_for("agreement", out,
                               table=agreement_table(tmp_path)))
        assert out.stat().st_size > 0

    def test_nan_cells_tolerated(self, tmp_path):
        out = tmp_path / "agree.png"
        render.render(spec_for("agreement", out,
                               table=agreement_table(tmp_path, nan_cell=True)))
        assert out.stat().st_size > 0

    def test_agreement_diff_renders(self, tmp_path):
        tags = list(render.METHODS)
        path = tmp_path / "diff.csv"
        rng = np.random.default_rng(3)
        m = rng.uniform(-0.4, 0.4, size=(8, 8))
        m = (m + m.T) / 2.0
        with open(path, "w") as fh:
            fh.write("method," + ",".join(tags) + "\n")
            for tag, row in zip(tags, m):
                fh.write(tag + "," +
                         ",".join(repr(float(v)) for v in row) + "\n")
        out = tmp_path / "diff.png"
        render.render(spec_for("agreement_diff", out, table=path))
        assert out.stat().st_size > 0

    def test_header_without_method_column(self, tmp_path):
        path = tmp_path / "agree.csv"
        path.write_text("tag,a,b\nx,1,2\n")
        with pytest.raises(render.SchemaError, match="'method'"):
            render.render(spec_for("agreement", tmp_path / "x.png",
                                   table=path))


class TestSortedHeatmap:
    def test_two_block_end_to_end(self, tmp_path):
        sim, clusters = two_block_inputs(tmp_path)
        out = tmp_path / "heat.png"
        sorted_csv = tmp_path / "sorted.csv"
        spec = spec_for("heatmap_sorted_similarity", out,
                        similarity=sim, clusters=clusters)
        spec["style"] = {"sorted_csv": str(sorted_csv)}
        render.render(spec)
        assert out.stat().st_size > 0
        grid, meta = render.read_grid_csv(sorted_csv)
        assert meta["boundaries"] == "2"
        assert grid[0, 1] == 1.0 and grid[2, 3] == 1.0
        assert np.array_equal(grid[:2, 2:], np.zeros((2, 2)))
        assert np.array_equal(grid[2:, :2], np.zeros((2, 2)))

    def test_sorted_csv_reloads_via_grid_reader(self, tmp_path):
        sim, clusters = two_block_inputs(tmp_path)
        sorted_csv = tmp_path / "sorted.csv"
        spec = spec_for("heatmap_sorted_similarity", tmp_path / "h.png",
                        similarity=sim, clusters=clusters)
        spec["style"] = {"sorted_csv": str(sorted_csv)}
        render.render(spec)
        grid, meta = render.read_grid_csv(sorted_csv)
        assert grid.shape == (4, 4)
        assert meta["order"] == "0,1,2,3"

    def test_bad_cluster_json(self, tmp_path):
        sim, _ = two_block_inputs(tmp_path)
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"q_star": 0.5}))
        with pytest.raises(render.SchemaError, match="cluster-result"):
            render.render(spec_for("heatmap_sorted_similarity",
                                   tmp_path / "x.png",
                                   similarity=sim, clusters=bad))

    def test_non_square_grid(self, tmp_path):
        path = tmp_path / "rect.csv"
        path.write_text("1.0,2.0,3.0\n4.0,5.0,6.0\n")
        _, clusters = two_block_inputs(tmp_path)
        with pytest.raises(render.SchemaError, match="square"):
            render.render(spec_for("heatmap_sorted_similarity",
                                   tmp_path / "x.png",
                                   similarity=path, clusters=clusters))


class TestSpecHandling:
    def test_unknown_kind(self, tmp_path):
        with pytest.raises(render.SchemaError, match="unknown figure kind"):
            render.render({"kind": "pie", "inputs": {}, "out": "x.png"})

    def test_missing_input_named(self, tmp_path):
        with pytest.raises(render.SchemaError, match="inputs\\['table'\\]"):
            render.render({"kind": "q_vs_reg", "inputs": {},
                           "out": str(tmp_path / "x.png")})

    def test_missing_out(self, tmp_path):
        with pytest.raises(render.SchemaError, match="'out'"):
            render.render({"kind": "q_vs_reg",
                           "inputs": {"table": str(q_table(tmp_path))}})

    def test_nonexistent_input_file(self, tmp_path):
        with pytest.raises(render.SchemaError, match="not found"):
            render.render(spec_for("q_vs_reg", tmp_path / "x.png",
                                   table=tmp_path / "nope.csv"))


class TestScriptInterface:
    def run_script(self, *argv):
        return subprocess.run(
            [sys.executable, str(PLOTS_DIR / "render.py"), *argv],
            capture_output=True, text=True)

    def test_happy_path(self, tmp_path):
        out = tmp_path / "fig.png"
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps(
            spec_for("q_vs_reg", out, table=q_table(tmp_path))))
        proc = self.run_script("--spec", str(spec))
        assert proc.returncode == 0, proc.stderr
        assert "wrote" in proc.stdout
        assert out.stat().st_size > 0

    def test_schema_error_exit_2(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"kind": "pie", "inputs": {},
                                    "out": str(tmp_path / "x.png")}))
        proc = self.run_script("--spec", str(spec))
        assert proc.returncode == 2
        assert proc.stderr.startswith("error:")

    def test_unreadable_spec_exit_2(self, tmp_path):
        proc = self.run_script("--spec", str(tmp_path / "missing.json"))
        assert proc.returncode == 2
        assert "unreadable" in proc.stderr
