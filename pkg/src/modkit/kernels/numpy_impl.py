"""Pure-numpy reference implementations of the clustering hot loops.

Every function here has a numba twin in :mod:`modkit.kernels.numba_impl`
with the same name, signature, and semantics.  The numpy versions are the
behavioural reference: they are written with vectorized operations but make
the same decisions (same candidate ordering, same tie-breaking, same
pre-drawn randomness) as the compiled loops, so the two backends produce
identical partitions on the same inputs up to floating-point noise.

Inputs are plain ndarrays; validation happens in the calling modules.
"""

from __future__ import annotations

import math

import numpy as np

NUMBA_COMPILED = False

# Statuses returned by solve_entropy_temperature.
TEMP_OK = 0
TEMP_DEGENERATE = 1
TEMP_BELOW_FLOOR = 2
TEMP_ABOVE_CEILING = 3
TEMP_NO_CONVERGENCE = 4


def entropy(p):
    """Shannon entropy (natural log) of a probability vector.

    Zero entries contribute zero.  No validation is performed here.
    """
    total = 0.0
    for i in range(p.size):
        if p[i] > 0.0:
            total -= p[i] * math.log(p[i])
    return total


def softmax(x):
    """Numerically stable softmax of a 1-d array."""
    z = x - np.max(x)
    w = np.exp(z)
    return w / np.sum(w)


def softmax_entropy(scores, tau):
    """Entropy of ``softmax(scores / tau)`` without forming tiny logs.

    Uses ``H = log(sum w) - sum(w * z) / sum(w)`` with ``z = scores/tau``
    shifted by its max, which is exact for underflowed weights.
    """
    z = scores / tau
    z = z - np.max(z)
    w = np.exp(z)
    total = np.sum(w)
    return math.log(total) - float(np.sum(w * z)) / total


def solve_entropy_temperature(scores, target, lo, hi, tol, max_iter):
    """Find tau so that the entropy of softmax(scores/tau) hits a target.

    The target is clamped to ``[1e-6, log(K) - 1e-6]`` where ``K`` is the
    number of scores.  Entropy is monotone increasing in tau, so the search
    is a bisection on ``log(tau)`` over ``[lo, hi]``.

    Returns ``(tau, status)`` where status is one of

    * ``TEMP_OK`` -- converged, ``|H(tau) - target| <= tol``;
    * ``TEMP_DEGENERATE`` -- all scores equal, no tau shapes them;
    * ``TEMP_BELOW_FLOOR`` -- even ``tau = lo`` gives entropy above the
      target (tied argmaxes put a floor on entropy); tau is ``lo``;
    * ``TEMP_ABOVE_CEILING`` -- even ``tau = hi`` stays below the target;
      tau is ``hi``;
    * ``TEMP_NO_CONVERGENCE`` -- bisection exhausted ``max_iter``.
    """
    k = scores.size
    if float(np.max(scores)) == float(np.min(scores)):
        return hi, TEMP_DEGENERATE
    t = target
    low_clamp = 1e-6
    high_clamp = math.log(k) - 1e-6
    if t < low_clamp:
        t = low_clamp
    if t > high_clamp:
        t = high_clamp
    h_lo = softmax_entropy(scores, lo)
    if h_lo > t + tol:
        return lo, TEMP_BELOW_FLOOR
    if h_lo >= t - tol:
        return lo, TEMP_OK
    h_hi = softmax_entropy(scores, hi)
    if h_hi < t - tol:
        return hi, TEMP_ABOVE_CEILING
    if h_hi <= t + tol:
        return hi, TEMP_OK
    log_lo = math.log(lo)
    log_hi = math.log(hi)
    mid = math.exp(0.5 * (log_lo + log_hi))
    for _ in range(max_iter):
        mid = math.exp(0.5 * (log_lo + log_hi))
        h = softmax_entropy(scores, mid)
        if abs(h - t) <= tol:
            return mid, TEMP_OK
        if h < t:
            log_lo = math.log(mid)
        else:
            log_hi = math.log(mid)
    return mid, TEMP_NO_CONVERGENCE


def partition_q(adj, dvec, labels, n_clusters):
    """Modularity of a hard partition given as a label vector.

    ``Q = sum_j (W_j - D_j^2)`` with ``W_j`` the total adjacency mass inside
    cluster j (both orders of each pair) and ``D_j`` the summed row masses
    ``dvec`` of its members.  ``adj`` must have a zero diagonal and unit
    total mass for Q to be a modularity; the formula itself is general.
    """
    w = np.zeros(n_clusters)
    d = np.zeros(n_clusters)
    m = labels.size
    for u in range(m):
        lu = labels[u]
        row = adj[u]
        s = 0.0
        for v in range(m):
            if labels[v] == lu:
                s += row[v]
        w[lu] += s
        d[lu] += dvec[u]
    q = 0.0
    for j in range(n_clusters):
        q += w[j] - d[j] * d[j]
    return q


def _recompute_aggregates(adj, dvec, labels, n_active):
    """Exact per-cluster masses (W, D) and modularity from scratch."""
    m = labels.size
    w = np.zeros(n_active)
    d = np.zeros(n_active)
    for u in range(m):
        lu = labels[u]
        row = adj[u]
        s = 0.0
        for v in range(m):
            if labels[v] == lu:
                s += row[v]
        w[lu] += s
        d[lu] += dvec[u]
    q = float(np.sum(w) - np.sum(d * d))
    return w, d, q


def mc_refine(adj, dvec, labels0, cap, target_entropy, units, uniforms,
              refresh_every):
    """Stochastic single-unit reassignment search over partitions.

    Runs ``len(units)`` steps.  At step t the unit ``units[t]`` is offered
    every existing cluster plus (when fewer than ``cap`` clusters exist) one
    fresh empty cluster; each candidate is scored by the exact modularity
    delta of the move, a temperature is solved so the softmax over candidate
    scores has entropy ``target_entropy``, and the move is sampled with the
    pre-drawn uniform ``uniforms[t]``.  Cluster labels stay compact: when a
    cluster empties, higher labels shift down by one.

    The best scoring partition ever *evaluated* (not merely sampled) is
    tracked and returned, so the result never scores below the initial
    partition.  Aggregates are recomputed from scratch every
    ``refresh_every`` steps to cancel floating-point drift.

    Returns ``(best_labels, best_q, final_labels, stats)`` with ``stats``
    = ``[best updates, degenerate steps, entropy-floor steps, spawns]``.
    Label vectors are compact but not first-use canonical.
    """
    m = labels0.size
    n_steps = units.size
    labels = labels0.copy()
    n_active = int(np.max(labels)) + 1 if m > 0 else 0
    w_agg = np.zeros(cap + 1)
    d_agg = np.zeros(cap + 1)
    counts = np.zeros(cap + 1, dtype=np.int64)
    w0, d0, q_cur = _recompute_aggregates(adj, dvec, labels, n_active)
    w_agg[:n_active] = w0
    d_agg[:n_active] = d0
    for u in range(m):
        counts[labels[u]] += 1
    best_q = q_cur
    best_labels = labels.copy()
    stats = np.zeros(4, dtype=np.int64)

    for t in range(n_steps):
        if refresh_every > 0 and t > 0 and t % refresh_every == 0:
            w0, d0, q_cur = _recompute_aggregates(adj, dvec, labels, n_active)
            w_agg[:n_active] = w0
            d_agg[:n_active] = d0
        i = units[t]
        a = labels[i]
        di = dvec[i]
        s = np.bincount(labels, weights=adj[i], minlength=n_active)
        spawn = n_active < cap
        ncand = n_active + 1 if spawn else n_active
        dq = np.empty(ncand)
        dq[:n_active] = (2.0 * (s - s[a])
                         + 2.0 * di * (d_agg[a] - d_agg[:n_active])
                         - 2.0 * di * di)
        dq[a] = 0.0
        if spawn:
            dq[n_active] = -2.0 * s[a] + 2.0 * di * d_agg[a] - 2.0 * di * di
        track = dq.copy()
        track[a] = -np.inf
        jb = int(np.argmax(track))
        if q_cur + dq[jb] > best_q:
            best_q = q_cur + dq[jb]
            best_labels = labels.copy()
            best_labels[i] = jb
            stats[0] += 1
        tau, status = solve_entropy_temperature(
            dq, target_entropy, 1e-12, 1e12, 1e-6, 200)
        if status == TEMP_DEGENERATE:
            p = np.full(ncand, 1.0 / ncand)
            stats[1] += 1
        else:
            if status == TEMP_BELOW_FLOOR:
                stats[2] += 1
            p = softmax(dq / tau)
        cum = np.cumsum(p)
        js = int(np.searchsorted(cum, uniforms[t], side="right"))
        if js >= ncand:
            js = ncand - 1
        if js != a:
            if js == n_active:
                n_active += 1
                w_agg[js] = 0.0
                d_agg[js] = 0.0
                counts[js] = 0
                stats[3] += 1
            sjs = s[js] if js < s.size else 0.0
            w_agg[a] -= 2.0 * s[a]
            d_agg[a] -= di
            counts[a] -= 1
            w_agg[js] += 2.0 * sjs
            d_agg[js] += di
            counts[js] += 1
            labels[i] = js
            q_cur += dq[js]
            if counts[a] == 0:
                labels[labels > a] -= 1
                for j in range(a, n_active - 1):
                    w_agg[j] = w_agg[j + 1]
                    d_agg[j] = d_agg[j + 1]
                    counts[j] = counts[j + 1]
                n_active -= 1
    return best_labels, best_q, labels, stats
