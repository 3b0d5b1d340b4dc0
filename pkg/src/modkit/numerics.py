"""Deterministic randomness and small numerical routines.

This module owns the package's randomness (a seeded generator wrapper with
hash-derived substreams) and a few widely shared numerics: stable softmax,
discrete entropy, the entropy-targeted temperature solve used during
stochastic refinement, categorical sampling, and a hand-rolled shifted
power iteration that returns the eigenvector of the algebraically largest
eigenvalue of a symmetric matrix.
"""

from __future__ import annotations

import hashlib

import numpy as np

from . import kernels
from .errors import (AsymmetricMatrixError, DegenerateScoresError,
                     EigenConvergenceError, ProbabilityVectorError,
                     TemperatureBracketError, ValidationError)

__all__ = [
    "RandomSource", "softmax", "discrete_entropy", "solve_temperature",
    "categorical_sample", "leading_eigenvector", "validate_symmetric",
]


class RandomSource:
    """A seeded random generator with named, independent substreams.

    Wraps ``numpy.random.Generator`` (PCG64).  ``derive`` hashes the parent
    seed together with string labels to produce a child seed, so substreams
    are independent of each other and of the order in which the parent is
    consumed.  Two sources built from the same seed and derivation path
    yield identical draws on every platform.
    """

    def __init__(self, seed: int):
        if not isinstance(seed, (int, np.integer)):
            raise ValidationError(f"seed must be an integer, got {type(seed).__name__}")
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, *labels) -> "RandomSource":
        """Child source keyed by this seed and the given labels."""
        if not labels:
            raise ValidationError("derive() needs at least one label")
        text = str(self.seed) + "".join("/" + str(lab) for lab in labels)
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        return RandomSource(int.from_bytes(digest[:8], "big"))

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high=high, size=size, dtype=np.int64)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size=size)

    def permutation(self, n: int):
        return self.generator.permutation(n)

    def __repr__(self):
        return f"RandomSource(seed={self.seed})"


def softmax(v) -> np.ndarray:
    """Numerically stable softmax of a 1-d vector of finite scores."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValidationError("softmax expects a non-empty 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValidationError("softmax scores must be finite")
    return kernels.softmax(np.ascontiguousarray(v))


def discrete_entropy(p) -> float:
    """Shannon entropy (natural log) of a probability vector.

    Entries must be non-negative and sum to 1 within 1e-9; zero entries
    contribute zero.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ProbabilityVectorError("entropy expects a non-empty 1-d vector")
    if not np.all(np.isfinite(p)):
        raise ProbabilityVectorError("probabilities must be finite")
    if np.any(p < -1e-12):
        raise ProbabilityVectorError(f"negative probability {p.min()!r}")
    total = float(np.sum(p))
    if abs(total - 1.0) > 1e-9:
        raise ProbabilityVectorError(f"probabilities sum to {total!r}, not 1")
    return float(kernels.entropy(np.ascontiguousarray(np.maximum(p, 0.0))))


def solve_temperature(scores, target_entropy: float, tol: float = 1e-6,
                      bracket: tuple[float, float] = (1e-12, 1e12)) -> float:
    """Temperature tau such that softmax(scores/tau) has a target entropy.

    The target is clamped to ``[1e-6, log(len(scores)) - 1e-6]``; entropy is
    monotone in tau so a bisection on log(tau) over ``bracket`` converges.
    Raises :class:`DegenerateScoresError` when all scores are equal and
    :class:`TemperatureBracketError` (reporting the achievable entropy range)
    when the clamped target lies outside what the bracket can reach, for
    example when tied top scores put an entropy floor above the target.
    """
    s = np.ascontiguousarray(np.asarray(scores, dtype=np.float64))
    if s.ndim != 1 or s.size == 0:
        raise ValidationError("solve_temperature expects a non-empty 1-d vector")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0.0 < lo < hi):
        raise ValidationError(f"invalid bracket {bracket!r}")
    tau, status = kernels.solve_entropy_temperature(
        s, float(target_entropy), lo, hi, float(tol), 200)
    if status == kernels.TEMP_OK:
        return float(tau)
    if status == kernels.TEMP_DEGENERATE:
        raise DegenerateScoresError(
            "all scores are equal; entropy is fixed at log(k) for every tau")
    achievable = (kernels.softmax_entropy(s, lo), kernels.softmax_entropy(s, hi))
    k = s.size
    clamped = min(max(float(target_entropy), 1e-6), float(np.log(k)) - 1e-6)
    if status == kernels.TEMP_BELOW_FLOOR:
        msg = (f"target entropy {clamped!r} is below the achievable floor "
               f"{achievable[0]!r} (tied top scores)")
    elif status == kernels.TEMP_ABOVE_CEILING:
        msg = (f"target entropy {clamped!r} is above the achievable ceiling "
               f"{achievable[1]!r} for bracket {bracket!r}")
    else:
        msg = f"bisection did not converge to {clamped!r} within tolerance {tol!r}"
    raise TemperatureBracketError(msg, clamped, achievable, (lo, hi))


def categorical_sample(p, rng: RandomSource) -> int:
    """Draw one index from a probability vector using inverse-CDF sampling."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ProbabilityVectorError("categorical_sample expects a non-empty vector")
    if np.any(p < -1e-12):
        raise ProbabilityVectorError(f"negative probability {p.min()!r}")
    total = float(np.sum(p))
    if abs(total - 1.0) > 1e-9:
        raise ProbabilityVectorError(f"probabilities sum to {total!r}, not 1")
    u = float(rng.uniform())
    cum = np.cumsum(np.maximum(p, 0.0))
    idx = int(np.searchsorted(cum, u, side="right"))
    return min(idx, p.size - 1)


def validate_symmetric(m: np.ndarray, tol: float = 1e-10) -> None:
    """Raise unless ``m`` is square and symmetric within ``tol`` (scaled)."""
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {m.shape}")
    if m.size == 0:
        return
    scale = max(1.0, float(np.max(np.abs(m))))
    gap = float(np.max(np.abs(m - m.T)))
    if gap > tol * scale:
        raise AsymmetricMatrixError(
            f"matrix is not symmetric: max |M - M^T| = {gap!r} exceeds "
            f"{tol!r} * {scale!r}")


def leading_eigenvector(m: np.ndarray, tol: float = 1e-10,
                        max_iter: int = 10000) -> tuple[float, np.ndarray]:
    """Eigenpair of the algebraically largest eigenvalue of a symmetric matrix.

    Shifted power iteration: iterating ``(M + shift*I) v`` with
    ``shift = ||M||_1`` makes the most-positive eigenvalue of M dominant,
    which is the one whose eigenvector sign pattern drives cluster splits.
    The start vector is the fixed sequence ``(1, 1/2, ..., 1/n)`` normalized,
    so results are reproducible.  Convergence is declared when the residual
    ``||Mv - lam*v||`` falls below ``tol * max(||M||_1, 1)``; the returned
    vector has unit norm and its first nonzero component positive.
    """
    m = np.asarray(m, dtype=np.float64)
    validate_symmetric(m, tol=1e-10)
    n = m.shape[0]
    if n == 0:
        raise ValidationError("cannot take the eigenvector of an empty matrix")
    if n == 1:
        return float(m[0, 0]), np.ones(1)
    norm1 = float(np.max(np.sum(np.abs(m), axis=0)))
    scale = max(norm1, 1.0)
    shift = norm1
    v = 1.0 / np.arange(1.0, n + 1.0)
    v /= np.linalg.norm(v)
    lam = 0.0
    resid = np.inf
    for _ in range(max_iter):
        r = m @ v
        lam = float(v @ r)
        resid = float(np.linalg.norm(r - lam * v))
        if resid <= tol * scale:
            break
        w = r + shift * v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            break
        v = w / nw
    else:
        raise EigenConvergenceError(
            f"power iteration did not converge: residual {resid!r} after "
            f"{max_iter} iterations (tolerance {tol * scale!r})",
            residual=resid, iterations=max_iter)
    if resid > tol * scale:
        raise EigenConvergenceError(
            f"power iteration stalled with residual {resid!r} "
            f"(tolerance {tol * scale!r})", residual=resid, iterations=max_iter)
    nz = np.nonzero(v)[0]
    if nz.size and v[nz[0]] < 0.0:
        v = -v
    return lam, v
