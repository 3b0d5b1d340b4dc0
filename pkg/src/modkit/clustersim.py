"""Element-centric comparison of cluster assignments across methods.

Two partitions of the same units are compared by giving every element an
affinity vector over elements -- the stationary distribution of a
personalized diffusion with restart ``alpha`` on the cluster-induced graph
(each cluster a uniform clique with self-loops) -- and scoring
``1 - mean corrected-L1 distance`` between matched elements' affinities.
For hard partitions the diffusion has the closed form

    p_i = (1 - alpha) e_i + alpha * uniform(cluster of i)

because the cluster-clique transition matrix is idempotent; the corrected
L1 divides by the maximal possible distance ``2 * alpha``.  Identical
partitions score 1; unrelated ones score near 0.

``method_agreement`` averages these scores over many (model, layer) groups
into the 8x8 matrix over similarity-method tags, and
``agreement_difference`` subtracts a baseline agreement matrix cell-wise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .modularity import ClusterResult, Partition
from .similarity import METHOD_ORDER

__all__ = [
    "element_affinities", "element_similarity", "result_similarity",
    "aligned_memberships", "MethodAgreement", "method_agreement",
    "agreement_difference",
]

logger = logging.getLogger("modkit.clustersim")

DEFAULT_ALPHA = 0.9


def element_affinities(partition: Partition, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Per-element affinity vectors of a hard partition, rows = elements.

    Row i is ``(1-alpha) e_i + alpha * uniform(cluster of i)``; each row
    sums to 1.
    """
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    labels = partition.membership
    m = labels.size
    sizes = np.bincount(labels)
    p = np.zeros((m, m))
    for i in range(m):
        members = labels == labels[i]
        p[i, members] = alpha / sizes[labels[i]]
        p[i, i] += 1.0 - alpha
    return p


def element_similarity(pa: Partition, pb: Partition,
                       alpha: float = DEFAULT_ALPHA) -> float:
    """Element-centric similarity of two hard partitions of the same units.

    Computed in closed form from the cluster contingency table, which
    agrees with the explicit diffusion to rounding error.  Symmetric in
    its arguments; 1.0 for identical partitions.
    """
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    if pa.n_units != pb.n_units:
        raise ValidationError(
            f"partitions cover {pa.n_units} and {pb.n_units} units")
    m = pa.n_units
    if m == 0:
        raise ValidationError("cannot compare partitions of zero units")
    la, lb = pa.membership, pb.membership
    cont = np.zeros((int(la.max()) + 1, int(lb.max()) + 1))
    np.add.at(cont, (la, lb), 1.0)
    size_a = cont.sum(axis=1)[la]
    size_b = cont.sum(axis=0)[lb]
    overlap = cont[la, lb]
    l1 = (overlap * np.abs(1.0 / size_a - 1.0 / size_b)
          + (size_a - overlap) / size_a
          + (size_b - overlap) / size_b)
    return float(np.mean(1.0 - l1 / 2.0))


def aligned_memberships(res_a: ClusterResult, res_b: ClusterResult):
    """Membership vectors of two results restricted to their common units.

    Units pruned by either result are excluded from both.  Returns
    ``(labels_a, labels_b, common_original_indices)``.  Raises when the
    results describe different unit universes or share no units.
    """
    if res_a.n_original != res_b.n_original:
        raise ValidationError(
            f"results cover {res_a.n_original} and {res_b.n_original} units")
    common = np.intersect1d(res_a.kept, res_b.kept)
    if common.size == 0:
        raise ValidationError("no units survive pruning in both results")
    pos_a = {int(u): k for k, u in enumerate(res_a.kept)}
    pos_b = {int(u): k for k, u in enumerate(res_b.kept)}
    mem_a = res_a.partition.membership
    mem_b = res_b.partition.membership
    la = np.array([mem_a[pos_a[int(u)]] for u in common], dtype=np.int64)
    lb = np.array([mem_b[pos_b[int(u)]] for u in common], dtype=np.int64)
    return la, lb, common


def result_similarity(res_a: ClusterResult, res_b: ClusterResult,
                      alpha: float = DEFAULT_ALPHA) -> float:
    """Element similarity of two cluster results after pruning alignment."""
    la, lb, _ = aligned_memberships(res_a, res_b)
    return element_similarity(Partition.from_membership(la),
                              Partition.from_membership(lb), alpha=alpha)


@dataclass
class MethodAgreement:
    """Mean pairwise agreement between similarity methods.

    ``matrix`` is 8x8 over ``tags`` (symmetric, unit diagonal); cells with
    no contributing group are NaN.  ``counts`` holds per-cell group counts
    and ``raw_scores`` the underlying (group_id, tag_a, tag_b, score) rows.
    """

    matrix: np.ndarray
    tags: tuple
    n_groups: int
    counts: np.ndarray
    raw_scores: list = field(default_factory=list)

    def cell(self, tag_a: str, tag_b: str) -> float:
        ia, ib = self.tags.index(tag_a), self.tags.index(tag_b)
        return float(self.matrix[ia, ib])


def method_agreement(groups, alpha: float = DEFAULT_ALPHA,
                     tags=METHOD_ORDER) -> MethodAgreement:
    """Average pairwise partition agreement over (model, layer) groups.

    ``groups`` is an iterable of ``(group_id, {method_tag: ClusterResult})``.
    A group missing a method (or holding a degenerate result) contributes
    nothing to that method's cells; such methods are logged and excluded.
    The diagonal is exactly 1 wherever the method appears at all.
    """
    tags = tuple(tags)
    k = len(tags)
    sums = np.zeros((k, k))
    counts = np.zeros((k, k), dtype=np.int64)
    raw: list[tuple[str, str, str, float]] = []
    n_groups = 0
    for group_id, results in groups:
        n_groups += 1
        present = []
        for tag in tags:
            res = results.get(tag)
            if res is None or res.degenerate or res.kept.size == 0:
                logger.warning("group %s: method %s missing or degenerate; excluded",
                               group_id, tag)
                continue
            present.append(tag)
        for xi, tag_a in enumerate(present):
            ia = tags.index(tag_a)
            sums[ia, ia] += 1.0
            counts[ia, ia] += 1
            for tag_b in present[xi + 1:]:
                ib = tags.index(tag_b)
                score = result_similarity(results[tag_a], results[tag_b],
                                          alpha=alpha)
                raw.append((str(group_id), tag_a, tag_b, score))
                sums[ia, ib] += score
                sums[ib, ia] += score
                counts[ia, ib] += 1
                counts[ib, ia] += 1
    with np.errstate(invalid="ignore"):
        matrix = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return MethodAgreement(matrix=matrix, tags=tags, n_groups=n_groups,
                           counts=counts, raw_scores=raw)


def agreement_difference(trained: MethodAgreement,
                         baseline: MethodAgreement) -> np.ndarray:
    """Cell-wise ``trained - baseline`` agreement; tags must match."""
    if trained.tags != baseline.tags:
        raise ValidationError("agreement matrices index different method tags")
    return trained.matrix - baseline.matrix
