"""Graph-modularity clustering of unit-similarity matrices.

A similarity matrix becomes a weighted graph adjacency by zeroing the
diagonal, dropping units with no remaining mass, and normalizing the rest
to total mass 1.  The quality of a partition P (columns = clusters) is

    Q = Tr(P^T A P) - Tr(P^T A 1 1^T A P)

which is zero for the single-cluster partition and grows as within-cluster
mass exceeds what the units' total masses predict.

Clustering runs in two stages: a greedy spectral splitter (recursively
bisect clusters by the sign pattern of the leading eigenvector of the
centered block, keeping only splits that raise Q) followed by stochastic
single-unit refinement at a fixed move-entropy (see
:func:`monte_carlo_modules`).  The reported partition is the best scorer,
under the exact Q above, among every stage's output, so the final Q never
falls below any intermediate stage's.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import ClusteringError, EigenConvergenceError, ValidationError
from .numerics import RandomSource, discrete_entropy, leading_eigenvector, \
    validate_symmetric
from .similarity import SimilarityMatrix

__all__ = [
    "Adjacency", "Partition", "ClusterConfig", "ClusterResult", "McResult",
    "adjacency_from_similarity", "modularity_score", "greedy_spectral_modules",
    "monte_carlo_modules", "cluster", "num_clusters",
    "brute_force_best_partition", "save_cluster_result", "load_cluster_result",
]

logger = logging.getLogger("modkit.modularity")

BRUTE_FORCE_LIMIT = 10


@dataclass
class Adjacency:
    """Normalized graph over the non-pruned units of a similarity matrix.

    ``matrix`` is (m, m), symmetric, non-negative, zero diagonal, total
    mass 1 (within accumulation noise).  ``kept``/``pruned`` map its rows
    back to original unit indices; pruned units had no off-diagonal mass.
    """

    matrix: np.ndarray
    kept: np.ndarray
    pruned: np.ndarray
    n_original: int

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def degenerate(self) -> bool:
        return self.m == 0

    def row_masses(self) -> np.ndarray:
        return self.matrix.sum(axis=1)


class Partition:
    """Assignment of m units to clusters, stored as an (m, c) matrix.

    Rows sum to 1.  Hard partitions (every row one-hot) are produced by the
    optimizers and expose a ``membership`` label vector; soft matrices are
    accepted for scoring.  Hard partitions are canonicalized: clusters are
    numbered in order of first appearance and empty columns are dropped.
    """

    def __init__(self, matrix: np.ndarray):
        matrix = np.ascontiguousarray(np.asarray(matrix, dtype=np.float64))
        if matrix.ndim != 2:
            raise ValidationError(f"partition matrix must be 2-d, got {matrix.shape}")
        m, c = matrix.shape
        if m > 0:
            if c == 0:
                raise ValidationError("partition of units needs at least one column")
            if matrix.min() < -1e-12 or matrix.max() > 1.0 + 1e-12:
                raise ValidationError("partition entries must lie in [0, 1]")
            rows = matrix.sum(axis=1)
            if np.max(np.abs(rows - 1.0)) > 1e-9:
                raise ValidationError("partition rows must sum to 1")
        self.matrix = matrix

    @classmethod
    def from_membership(cls, labels, n_units: int | None = None) -> "Partition":
        """Build a hard partition from integer labels, canonicalizing order.

        Labels may be arbitrary non-negative integers (gaps allowed); they
        are renumbered by first appearance.
        """
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValidationError("labels must be a 1-d integer vector")
        if n_units is not None and labels.size != n_units:
            raise ValidationError(f"expected {n_units} labels, got {labels.size}")
        m = labels.size
        if m == 0:
            return cls(np.zeros((0, 0)))
        if labels.min() < 0:
            raise ValidationError("labels must be non-negative")
        remap: dict[int, int] = {}
        canon = np.empty(m, dtype=np.int64)
        for i, lab in enumerate(labels):
            lab = int(lab)
            if lab not in remap:
                remap[lab] = len(remap)
            canon[i] = remap[lab]
        matrix = np.zeros((m, len(remap)))
        matrix[np.arange(m), canon] = 1.0
        part = cls(matrix)
        part._membership = canon
        return part

    @classmethod
    def single_cluster(cls, m: int) -> "Partition":
        return cls.from_membership(np.zeros(m, dtype=np.int64))

    @property
    def n_units(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @property
    def is_hard(self) -> bool:
        return bool(np.all((self.matrix == 0.0) | (self.matrix == 1.0)))

    @property
    def membership(self) -> np.ndarray:
        if not hasattr(self, "_membership"):
            if not self.is_hard:
                raise ValidationError("soft partition has no membership vector")
            if self.n_units == 0:
                self._membership = np.zeros(0, dtype=np.int64)
            else:
                self._membership = np.argmax(self.matrix, axis=1).astype(np.int64)
        return self._membership

    def clusters(self) -> list[np.ndarray]:
        """Unit indices of each cluster, in canonical column order."""
        lab = self.membership
        return [np.flatnonzero(lab == j) for j in range(self.n_columns)]

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return (self.matrix.shape == other.matrix.shape
                and bool(np.array_equal(self.matrix, other.matrix)))

    def __repr__(self):
        return f"Partition(n_units={self.n_units}, n_columns={self.n_columns})"


def adjacency_from_similarity(sm) -> Adjacency:
    """Diagonal-free, pruned, mass-normalized adjacency of a similarity matrix.

    Accepts a :class:`SimilarityMatrix` or a raw symmetric non-negative
    ndarray.  Units whose off-diagonal row mass is exactly zero are pruned
    (their rows and columns removed); the remainder is scaled to total
    mass 1.  With no mass anywhere the result is degenerate (m = 0).
    """
    values = sm.values if isinstance(sm, SimilarityMatrix) else np.asarray(sm, dtype=np.float64)
    a = np.array(values, dtype=np.float64, copy=True)
    validate_symmetric(a, tol=1e-9)
    if a.size and float(a.min()) < -1e-12:
        raise ValidationError(f"similarity has negative entry {a.min()!r}")
    a = np.maximum((a + a.T) / 2.0, 0.0)
    n = a.shape[0]
    np.fill_diagonal(a, 0.0)
    row_mass = a.sum(axis=1)
    kept = np.flatnonzero(row_mass > 0.0)
    pruned = np.flatnonzero(row_mass == 0.0)
    if kept.size == 0:
        return Adjacency(np.zeros((0, 0)), kept, pruned, n)
    sub = a[np.ix_(kept, kept)]
    total = float(sub.sum())
    return Adjacency(sub / total, kept, pruned, n)


def _as_matrix(adj) -> np.ndarray:
    return adj.matrix if isinstance(adj, Adjacency) else np.asarray(adj, dtype=np.float64)


def modularity_score(adj, partition) -> float:
    """Q of a (possibly soft) partition under the matrix formula above.

    This single implementation scores every partition the package reports,
    so equal partitions always receive bit-identical Q.
    """
    a = _as_matrix(adj)
    p = partition.matrix if isinstance(partition, Partition) else \
        np.asarray(partition, dtype=np.float64)
    if a.shape[0] == 0:
        return 0.0
    if p.shape[0] != a.shape[0]:
        raise ValidationError(
            f"partition has {p.shape[0]} rows for {a.shape[0]} units")
    x = a @ p
    term1 = float(np.sum(p * x))
    y = a.sum(axis=1) @ p
    term2 = float(np.sum(y * y))
    return term1 - term2


def num_clusters(partition: Partition) -> float:
    """Effective cluster count: exp of the entropy of cluster sizes.

    Uses column masses r_j = (1^T P)_j / m; equal halves give 2.0, one
    cluster gives 1.0.  An empty partition yields 0.0.
    """
    m = partition.n_units
    if m == 0:
        return 0.0
    r = partition.matrix.sum(axis=0) / m
    r = r[r > 0.0]
    return float(np.exp(discrete_entropy(r)))


def greedy_spectral_modules(adj: Adjacency, eig_tol: float = 1e-10,
                            eig_max_iter: int = 10000) -> Partition:
    """Recursive spectral splitting on the centered mass matrix.

    Maintains a stack of clusters, initially the single full cluster.  For
    each popped cluster i the split candidate is the sign pattern (zeros
    count as positive) of the leading eigenvector of ``B[i, i]`` where
    ``B = A - d d^T`` and ``d`` the row masses; the split is kept only when
    it strictly raises Q, in which case both halves are pushed.  A cluster
    whose eigensolve fails to converge is left whole (with a warning), as
    is any single-signed one.
    """
    m = adj.m
    if m == 0:
        return Partition(np.zeros((0, 0)))
    a = adj.matrix
    d = adj.row_masses()
    b = a - np.outer(d, d)
    labels = np.zeros(m, dtype=np.int64)
    next_label = 1
    stack = [0]
    while stack:
        cid = stack.pop()
        idx = np.flatnonzero(labels == cid)
        if idx.size <= 1:
            continue
        sub = b[np.ix_(idx, idx)]
        try:
            _, vec = leading_eigenvector(sub, tol=eig_tol, max_iter=eig_max_iter)
        except EigenConvergenceError as exc:
            logger.warning("leaving cluster of %d units unsplit: %s", idx.size, exc)
            continue
        plus = vec >= 0.0
        if plus.all() or not plus.any():
            continue
        delta = -2.0 * float(sub[plus][:, ~plus].sum())
        if delta > 0.0:
            labels[idx[~plus]] = next_label
            stack.append(cid)
            stack.append(next_label)
            next_label += 1
    return Partition.from_membership(labels)


class McResult(NamedTuple):
    """Outcome of one stochastic refinement run."""

    partition: Partition
    best_q: float
    final_partition: Partition
    stats: dict


def monte_carlo_modules(adj: Adjacency, p_init: Partition, steps: int,
                        rng: RandomSource, target_entropy: float = 0.15,
                        refresh_every: int = 512) -> McResult:
    """Entropy-tempered single-unit reassignment from an initial partition.

    Each step picks a uniform random unit, scores moving it into every
    cluster (plus one empty cluster while fewer than m exist) by the new
    partition's Q, and samples the move from a softmax over those scores
    whose temperature is solved so the move entropy equals
    ``target_entropy``.  When tied top scores put an entropy floor above
    the target, sampling runs at the coldest bracket temperature (uniform
    over the tied best moves); when every score is equal the move is
    uniform over all candidates.  The best partition ever scored is
    tracked and returned, so ``best_q >= Q(p_init)``.

    ``stats`` counts best updates, degenerate steps, entropy-floor steps,
    and spawned clusters.
    """
    if adj.degenerate:
        raise ClusteringError("cannot refine a degenerate (empty) adjacency")
    if steps < 0:
        raise ValidationError(f"steps must be non-negative, got {steps}")
    if p_init.n_units != adj.m:
        raise ValidationError(
            f"initial partition covers {p_init.n_units} units, adjacency has {adj.m}")
    if not p_init.is_hard:
        raise ValidationError("refinement needs a hard initial partition")
    labels = Partition.from_membership(p_init.membership).membership.copy()
    units = rng.integers(0, adj.m, size=steps)
    uniforms = rng.uniform(size=steps)
    best_labels, best_q, final_labels, stats = kernels.mc_refine(
        adj.matrix, adj.row_masses(), labels, adj.m, float(target_entropy),
        np.ascontiguousarray(units), np.ascontiguousarray(uniforms),
        int(refresh_every))
    return McResult(
        partition=Partition.from_membership(best_labels),
        best_q=float(best_q),
        final_partition=Partition.from_membership(final_labels),
        stats={"best_updates": int(stats[0]), "degenerate_steps": int(stats[1]),
               "entropy_floor_steps": int(stats[2]), "spawned": int(stats[3])})


@dataclass
class ClusterConfig:
    """Settings for the full clustering pipeline."""

    seed: int = 0
    mc_steps: int | None = None
    steps_per_unit: int = 100
    target_entropy: float = 0.15
    eig_tol: float = 1e-10
    eig_max_iter: int = 10000
    refresh_every: int = 512
    ablation_single_init: bool = False

    def resolve_steps(self, m: int) -> int:
        if self.mc_steps is not None:
            if self.mc_steps < 0:
                raise ValidationError("mc_steps must be non-negative")
            return int(self.mc_steps)
        return int(self.steps_per_unit) * m


@dataclass
class ClusterResult:
    """Final clustering of one similarity matrix.

    ``q_star`` is the exact :func:`modularity_score` of ``partition`` (the
    best stage output).  ``num_clusters`` is the effective count
    ``exp(H(sizes))``.  ``kept``/``pruned`` are original unit indices;
    ``degenerate`` marks matrices with no off-diagonal mass (then
    ``q_star`` is 0 and the partition is empty).  ``log`` records stage
    scores and refinement statistics.
    """

    q_star: float
    partition: Partition
    num_clusters: float
    kept: np.ndarray
    pruned: np.ndarray
    n_original: int
    degenerate: bool
    log: dict = field(default_factory=dict)

    def clusters_original_indices(self) -> list[list[int]]:
        """Clusters as lists of original unit indices, canonical order."""
        return [[int(self.kept[u]) for u in members]
                for members in self.partition.clusters()]


def cluster(sm, config: ClusterConfig | None = None) -> ClusterResult:
    """Run the full pipeline on one similarity matrix.

    Stages: adjacency construction, spectral splitting, stochastic
    refinement seeded from the spectral partition, and optionally (for
    ablation studies) a second refinement chain from the single-cluster
    partition.  The returned partition is the argmax of the exact Q over
    all stage outputs, so its score is monotone over stages by
    construction.
    """
    config = config or ClusterConfig()
    adj = adjacency_from_similarity(sm)
    meta = {}
    if isinstance(sm, SimilarityMatrix):
        meta = {"method": sm.tag, "layer": sm.layer,
                "sample_count": sm.sample_count, "model_hash": sm.model_hash}
    log: dict = {"backend": kernels.BACKEND, **meta}
    if adj.degenerate:
        return ClusterResult(
            q_star=0.0, partition=Partition(np.zeros((0, 0))), num_clusters=0.0,
            kept=adj.kept, pruned=adj.pruned, n_original=adj.n_original,
            degenerate=True, log={**log, "reason": "no off-diagonal mass"})
    rng = RandomSource(config.seed)
    steps = config.resolve_steps(adj.m)
    log["mc_steps"] = steps

    p_spec = greedy_spectral_modules(adj, eig_tol=config.eig_tol,
                                     eig_max_iter=config.eig_max_iter)
    candidates = [("spectral", p_spec, modularity_score(adj, p_spec))]

    mc = monte_carlo_modules(adj, p_spec, steps, rng.derive("mc"),
                             target_entropy=config.target_entropy,
                             refresh_every=config.refresh_every)
    candidates.append(("mc", mc.partition, modularity_score(adj, mc.partition)))
    log["mc_stats"] = mc.stats
    log["q_mc_tracked"] = mc.best_q

    if config.ablation_single_init:
        mc_single = monte_carlo_modules(
            adj, Partition.single_cluster(adj.m), steps, rng.derive("mc-single"),
            target_entropy=config.target_entropy,
            refresh_every=config.refresh_every)
        candidates.append(("mc_single", mc_single.partition,
                           modularity_score(adj, mc_single.partition)))
        log["mc_single_stats"] = mc_single.stats

    for name, _, q in candidates:
        log[f"q_{name}"] = q
    best_name, best_p, best_q = max(candidates, key=lambda item: item[2])
    log["chosen_stage"] = best_name
    return ClusterResult(
        q_star=best_q, partition=best_p, num_clusters=num_clusters(best_p),
        kept=adj.kept, pruned=adj.pruned, n_original=adj.n_original,
        degenerate=False, log=log)


def _set_partitions(m: int):
    """Yield every partition of m items as restricted-growth label vectors."""
    a = np.zeros(m, dtype=np.int64)
    b = np.zeros(m, dtype=np.int64)
    while True:
        yield a
        i = m - 1
        while i > 0 and a[i] == b[i] + 1:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        prefix_max = max(int(b[i]), int(a[i]))
        for j in range(i + 1, m):
            a[j] = 0
            b[j] = prefix_max


def brute_force_best_partition(adj) -> tuple[float, Partition]:
    """Exhaustive maximum-Q partition by enumerating all set partitions.

    Intended as an oracle for small graphs; refuses more than
    ``BRUTE_FORCE_LIMIT`` units (the Bell number explodes).  The winning
    partition is re-scored with :func:`modularity_score` so the value is
    directly comparable with pipeline outputs.
    """
    a = _as_matrix(adj)
    m = a.shape[0]
    if m == 0:
        return 0.0, Partition(np.zeros((0, 0)))
    if m > BRUTE_FORCE_LIMIT:
        raise ClusteringError(
            f"brute force limited to {BRUTE_FORCE_LIMIT} units, got {m}")
    d = np.ascontiguousarray(a.sum(axis=1))
    a = np.ascontiguousarray(a)
    best_q = -np.inf
    best_labels = np.zeros(m, dtype=np.int64)
    for labels in _set_partitions(m):
        q = kernels.partition_q(a, d, labels, int(labels.max()) + 1)
        if q > best_q:
            best_q = q
            best_labels = labels.copy()
    part = Partition.from_membership(best_labels)
    return modularity_score(a, part), part


def save_cluster_result(res: ClusterResult, path) -> None:
    """Write a cluster result as deterministic JSON (original unit indices)."""
    payload = {
        "q_star": float(res.q_star),
        "num_clusters": float(res.num_clusters),
        "n_original": int(res.n_original),
        "clusters": res.clusters_original_indices(),
        "pruned": [int(u) for u in res.pruned],
        "degenerate": bool(res.degenerate),
        "log": _json_safe(res.log),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_cluster_result(path) -> dict:
    """Read a cluster-result JSON back as a plain dict."""
    with open(path) as fh:
        return json.load(fh)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    return obj
