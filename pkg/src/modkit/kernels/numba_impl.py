"""Numba-compiled implementations of the clustering hot loops.

Same names, signatures, and semantics as :mod:`modkit.kernels.numpy_impl`;
see that module for the full contracts.  The loops are written explicitly
so the compiled code makes the same candidate-ordering and tie-breaking
decisions as the vectorized reference.

Importing this module raises ``ImportError`` when numba is unavailable;
the package falls back to the numpy backend in that case.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NUMBA_COMPILED = True

TEMP_OK = 0
TEMP_DEGENERATE = 1
TEMP_BELOW_FLOOR = 2
TEMP_ABOVE_CEILING = 3
TEMP_NO_CONVERGENCE = 4


@njit(cache=True)
def entropy(p):
    total = 0.0
    for i in range(p.size):
        if p[i] > 0.0:
            total -= p[i] * math.log(p[i])
    return total


@njit(cache=True)
def softmax(x):
    n = x.size
    mx = x[0]
    for i in range(1, n):
        if x[i] > mx:
            mx = x[i]
    w = np.empty(n)
    total = 0.0
    for i in range(n):
        w[i] = math.exp(x[i] - mx)
        total += w[i]
    for i in range(n):
        w[i] /= total
    return w


@njit(cache=True)
def softmax_entropy(scores, tau):
    n = scores.size
    mx = scores[0] / tau
    for i in range(1, n):
        z = scores[i] / tau
        if z > mx:
            mx = z
    total = 0.0
    dot = 0.0
    for i in range(n):
        z = scores[i] / tau - mx
        w = math.exp(z)
        total += w
        dot += w * z
    return math.log(total) - dot / total


@njit(cache=True)
def solve_entropy_temperature(scores, target, lo, hi, tol, max_iter):
    k = scores.size
    mx = scores[0]
    mn = scores[0]
    for i in range(1, k):
        if scores[i] > mx:
            mx = scores[i]
        if scores[i] < mn:
            mn = scores[i]
    if mx == mn:
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


@njit(cache=True)
def partition_q(adj, dvec, labels, n_clusters):
    w = np.zeros(n_clusters)
    d = np.zeros(n_clusters)
    m = labels.size
    for u in range(m):
        lu = labels[u]
        s = 0.0
        for v in range(m):
            if labels[v] == lu:
                s += adj[u, v]
        w[lu] += s
        d[lu] += dvec[u]
    q = 0.0
    for j in range(n_clusters):
        q += w[j] - d[j] * d[j]
    return q


@njit(cache=True)
def _refresh(adj, dvec, labels, n_active, w_agg, d_agg):
    m = labels.size
    for j in range(n_active):
        w_agg[j] = 0.0
        d_agg[j] = 0.0
    for u in range(m):
        lu = labels[u]
        s = 0.0
        for v in range(m):
            if labels[v] == lu:
                s += adj[u, v]
        w_agg[lu] += s
        d_agg[lu] += dvec[u]
    q = 0.0
    for j in range(n_active):
        q += w_agg[j] - d_agg[j] * d_agg[j]
    return q


@njit(cache=True)
def mc_refine(adj, dvec, labels0, cap, target_entropy, units, uniforms,
              refresh_every):
    m = labels0.size
    n_steps = units.size
    labels = labels0.copy()
    n_active = 0
    for u in range(m):
        if labels[u] + 1 > n_active:
            n_active = labels[u] + 1
    w_agg = np.zeros(cap + 1)
    d_agg = np.zeros(cap + 1)
    counts = np.zeros(cap + 1, dtype=np.int64)
    q_cur = _refresh(adj, dvec, labels, n_active, w_agg, d_agg)
    for u in range(m):
        counts[labels[u]] += 1
    best_q = q_cur
    best_labels = labels.copy()
    stats = np.zeros(4, dtype=np.int64)
    s = np.zeros(cap + 1)
    dq = np.zeros(cap + 1)

    for t in range(n_steps):
        if refresh_every > 0 and t > 0 and t % refresh_every == 0:
            q_cur = _refresh(adj, dvec, labels, n_active, w_agg, d_agg)
        i = units[t]
        a = labels[i]
        di = dvec[i]
        for j in range(n_active):
            s[j] = 0.0
        for u in range(m):
            s[labels[u]] += adj[i, u]
        spawn = n_active < cap
        ncand = n_active + 1 if spawn else n_active
        sa = s[a]
        for j in range(n_active):
            if j == a:
                dq[j] = 0.0
            else:
                dq[j] = (2.0 * (s[j] - sa)
                         + 2.0 * di * (d_agg[a] - d_agg[j])
                         - 2.0 * di * di)
        if spawn:
            dq[n_active] = -2.0 * sa + 2.0 * di * d_agg[a] - 2.0 * di * di
        jb = -1
        bv = -np.inf
        for j in range(ncand):
            if j != a and dq[j] > bv:
                bv = dq[j]
                jb = j
        if jb >= 0 and q_cur + dq[jb] > best_q:
            best_q = q_cur + dq[jb]
            best_labels = labels.copy()
            best_labels[i] = jb
            stats[0] += 1
        tau, status = solve_entropy_temperature(
            dq[:ncand], target_entropy, 1e-12, 1e12, 1e-6, 200)
        if status == TEMP_DEGENERATE:
            p = np.full(ncand, 1.0 / ncand)
            stats[1] += 1
        else:
            if status == TEMP_BELOW_FLOOR:
                stats[2] += 1
            p = softmax(dq[:ncand] / tau)
        u_t = uniforms[t]
        cum = 0.0
        js = ncand - 1
        for j in range(ncand):
            cum += p[j]
            if u_t < cum:
                js = j
                break
        if js != a:
            if js == n_active:
                n_active += 1
                w_agg[js] = 0.0
                d_agg[js] = 0.0
                counts[js] = 0
                s[js] = 0.0
                stats[3] += 1
            w_agg[a] -= 2.0 * s[a]
            d_agg[a] -= di
            counts[a] -= 1
            w_agg[js] += 2.0 * s[js]
            d_agg[js] += di
            counts[js] += 1
            labels[i] = js
            q_cur += dq[js]
            if counts[a] == 0:
                for u in range(m):
                    if labels[u] > a:
                        labels[u] -= 1
                for j in range(a, n_active - 1):
                    w_agg[j] = w_agg[j + 1]
                    d_agg[j] = d_agg[j + 1]
                    counts[j] = counts[j + 1]
                n_active -= 1
    return best_labels, best_q, labels, stats
