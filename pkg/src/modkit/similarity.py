"""Pairwise unit-similarity matrices over the hidden layers of a classifier.

Four base methods, each yielding a symmetric non-negative (n, n) matrix over
the units of one hidden layer, evaluated on held-out data:

* ``cov`` -- absolute covariance of unit activities:
  ``S_ij = |sum_k (h_ki - hbar_i)(h_kj - hbar_j)| / (K - 1)``;
* ``isens`` -- input sensitivity, ``S = |mean_k J_k J_k^T|`` where ``J_k``
  is the Jacobian of the layer's activity with respect to the input;
* ``osens`` -- output sensitivity, ``S = |mean_k J_k^T J_k|`` where ``J_k``
  is the Jacobian of the logits with respect to the layer's activity;
* ``hess`` -- absolute mean Hessian of the loss with respect to the
  layer's activity, ``S = |mean_k H_k|``.

The absolute value is applied *after* averaging, so oppositely signed
contributions may cancel.  Each method also has a normalized variant
``S_ij / max(sqrt(S_ii S_jj), 1e-12)``.  ``cov`` and ``isens`` depend only
on what feeds the layer (upstream); ``osens`` and ``hess`` only on what the
layer feeds (downstream).

The network is piecewise linear between ReLU gate flips, so the Jacobians
are exact products of weight matrices gated by the activation masks, and
the loss Hessian with respect to hidden activity is exactly
``J^T (diag(q) - q q^T) J`` with ``q`` the softmax probabilities.
``compute_all`` evaluates all methods in one streamed pass using closed
forms that never materialize per-sample Jacobians.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .data import Dataset, make_batches
from .errors import ModelIOError, ValidationError
from .model import ForwardTrace, MlpModel, forward, model_hash, softmax_logits

__all__ = [
    "METHOD_BASES", "LAYERS", "METHOD_ORDER", "UPSTREAM_METHODS",
    "DOWNSTREAM_METHODS", "method_tag", "SimilarityMatrix", "activations",
    "hidden_jacobian_wrt_input", "output_jacobian_wrt_hidden",
    "loss_hessian_wrt_hidden", "sim_cov", "sim_input_sensitivity",
    "sim_output_sensitivity", "sim_hessian", "normalize", "compute_all",
    "save_similarity", "load_similarity", "similarity_to_csv",
    "load_similarity_csv",
]

SIM_MAGIC = b"MODKSIM1"
NORMALIZE_EPS = 1e-12

METHOD_BASES = ("cov", "isens", "osens", "hess")
LAYERS = ("h1", "h2")


def method_tag(base: str, normalized: bool) -> str:
    """Canonical name of a method variant, e.g. ``cov_raw`` / ``cov_norm``."""
    if base not in METHOD_BASES:
        raise ValidationError(f"unknown method base {base!r}")
    return f"{base}_{'norm' if normalized else 'raw'}"


METHOD_ORDER = tuple(method_tag(b, n) for b in METHOD_BASES for n in (False, True))
UPSTREAM_METHODS = METHOD_ORDER[:4]
DOWNSTREAM_METHODS = METHOD_ORDER[4:]


@dataclass
class SimilarityMatrix:
    """A symmetric non-negative unit-similarity matrix plus provenance."""

    values: np.ndarray
    method: str
    normalized: bool
    layer: str | None = None
    sample_count: int = 0
    model_hash: str = ""

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValidationError(f"similarity must be square, got {v.shape}")
        if v.size:
            gap = float(np.max(np.abs(v - v.T)))
            scale = max(1.0, float(np.max(np.abs(v))))
            if gap > 1e-9 * scale:
                raise ValidationError(f"similarity asymmetric: max gap {gap!r}")
            if float(v.min()) < -1e-12:
                raise ValidationError(f"similarity has negative entry {v.min()!r}")
            v = np.maximum((v + v.T) / 2.0, 0.0)
        self.values = v
        if self.method not in METHOD_BASES:
            raise ValidationError(f"unknown method {self.method!r}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def tag(self) -> str:
        return method_tag(self.method, self.normalized)


def activations(trace: ForwardTrace, layer: str) -> np.ndarray:
    """The analyzed activity matrix (K, n) of one hidden layer."""
    if layer == "h1":
        return trace.h1
    if layer == "h2":
        return trace.h2
    raise ValidationError(f"unknown layer {layer!r}")


def hidden_jacobian_wrt_input(model: MlpModel, trace: ForwardTrace,
                              layer: str) -> np.ndarray:
    """Per-sample Jacobian of a hidden layer's activity w.r.t. the input.

    Shapes: (K, n1, d) for h1, (K, n2, d) for h2.  Exact wherever no
    pre-activation sits exactly at zero (gates are constant there).
    """
    m1, m2 = trace.m1, trace.m2
    if layer == "h1":
        return m1[:, :, None] * model.w1[None, :, :]
    if layer == "h2":
        inner = model.w2[None, :, :] * m2[:, :, None] * m1[:, None, :]
        return inner @ model.w1
    raise ValidationError(f"unknown layer {layer!r}")


def output_jacobian_wrt_hidden(model: MlpModel, trace: ForwardTrace,
                               layer: str) -> np.ndarray:
    """Per-sample Jacobian of the logits w.r.t. a hidden layer's activity.

    Shapes: (K, out, n).  For h2 this is the constant readout matrix.
    """
    k = trace.m1.shape[0]
    if layer == "h2":
        return np.broadcast_to(model.w3, (k,) + model.w3.shape).copy()
    if layer == "h1":
        return (model.w3[None, :, :] * trace.m2[:, None, :]) @ model.w2
    raise ValidationError(f"unknown layer {layer!r}")


def loss_hessian_wrt_hidden(model: MlpModel, trace: ForwardTrace, layer: str,
                            labels=None) -> np.ndarray:
    """Per-sample Hessian of the loss w.r.t. a hidden layer's activity.

    Equals ``J^T (diag(q) - q q^T) J`` with ``q = softmax(logits)`` and J
    the logit Jacobian for the layer; the softmax cross-entropy curvature
    does not depend on the label (``labels`` is accepted for interface
    symmetry) and weight penalties contribute nothing here.
    """
    q = softmax_logits(trace.logits)
    j = output_jacobian_wrt_hidden(model, trace, layer)
    jq = j * q[:, :, None]
    term1 = np.einsum("koi,koj->kij", jq, j)
    g = np.einsum("koi,ko->ki", j, q)
    return term1 - g[:, :, None] * g[:, None, :]


def _finish(total: np.ndarray, count: int, method: str, layer: str | None,
            mhash: str) -> SimilarityMatrix:
    s = np.abs(total / count)
    s = (s + s.T) / 2.0
    return SimilarityMatrix(s, method=method, normalized=False, layer=layer,
                            sample_count=count, model_hash=mhash)


def sim_cov(h: np.ndarray, *, layer: str | None = None,
            model_hash: str = "") -> SimilarityMatrix:
    """Absolute covariance similarity from an activity matrix (K, n)."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 2:
        raise ValidationError("sim_cov needs a (K, n) matrix with K >= 2")
    centered = h - h.mean(axis=0)
    total = centered.T @ centered
    return _finish(total, h.shape[0] - 1, "cov", layer, model_hash)


def sim_input_sensitivity(jac: np.ndarray, *, layer: str | None = None,
                          model_hash: str = "") -> SimilarityMatrix:
    """|mean_k J_k J_k^T| from a Jacobian stack (K, n, d)."""
    jac = np.asarray(jac, dtype=np.float64)
    if jac.ndim != 3:
        raise ValidationError("expected a (K, n, d) Jacobian stack")
    total = np.einsum("kid,kjd->ij", jac, jac)
    return _finish(total, jac.shape[0], "isens", layer, model_hash)


def sim_output_sensitivity(jac: np.ndarray, *, layer: str | None = None,
                           model_hash: str = "") -> SimilarityMatrix:
    """|mean_k J_k^T J_k| from a Jacobian stack (K, out, n)."""
    jac = np.asarray(jac, dtype=np.float64)
    if jac.ndim != 3:
        raise ValidationError("expected a (K, out, n) Jacobian stack")
    total = np.einsum("koi,koj->ij", jac, jac)
    return _finish(total, jac.shape[0], "osens", layer, model_hash)


def sim_hessian(hess: np.ndarray, *, layer: str | None = None,
                model_hash: str = "") -> SimilarityMatrix:
    """|mean_k H_k| from a Hessian stack (K, n, n)."""
    hess = np.asarray(hess, dtype=np.float64)
    if hess.ndim != 3 or hess.shape[1] != hess.shape[2]:
        raise ValidationError("expected a (K, n, n) Hessian stack")
    return _finish(hess.sum(axis=0), hess.shape[0], "hess", layer, model_hash)


def normalize(sm: SimilarityMatrix, eps: float = NORMALIZE_EPS) -> SimilarityMatrix:
    """Self-similarity-normalized variant: ``S_ij / max(sqrt(S_ii S_jj), eps)``.

    Units with zero self-similarity get zero rows and columns rather than
    NaNs; the result keeps a unit diagonal elsewhere.
    """
    if sm.normalized:
        raise ValidationError("matrix is already normalized")
    diag = np.diag(sm.values)
    denom = np.maximum(np.sqrt(np.outer(diag, diag)), eps)
    return SimilarityMatrix(sm.values / denom, method=sm.method, normalized=True,
                            layer=sm.layer, sample_count=sm.sample_count,
                            model_hash=sm.model_hash)


def compute_all(model: MlpModel, ds: Dataset, batch_size: int = 512,
                layers=LAYERS) -> list[SimilarityMatrix]:
    """All eight similarity variants per requested layer, in one data pass.

    Uses streaming closed forms (gate co-occurrence counts, softmax moment
    accumulators) so memory stays at a few (n, n) buffers regardless of
    dataset size.  Results are independent of ``batch_size`` up to
    float64 accumulation noise.  Output order: for each layer, method bases
    in ``METHOD_BASES`` order, raw then normalized.
    """
    if ds.dim != model.dims[0]:
        raise ValidationError(f"dataset dim {ds.dim} != model input {model.dims[0]}")
    if ds.n < 2:
        raise ValidationError("need at least 2 samples")
    layers = tuple(layers)
    for layer in layers:
        if layer not in LAYERS:
            raise ValidationError(f"unknown layer {layer!r}")
    mhash = model_hash(model)
    w1, w2, w3 = model.weights()
    n1, n2 = w1.shape[0], w2.shape[0]
    n_out = w3.shape[0]
    g1 = w1 @ w1.T
    c3 = w3.T @ w3

    k_total = 0
    sum_h = {layer: np.zeros(n1 if layer == "h1" else n2) for layer in layers}
    sum_hh = {layer: np.zeros((s.size, s.size)) for layer, s in sum_h.items()}
    sum_m1m1 = np.zeros((n1, n1))
    sum_m2m2 = np.zeros((n2, n2))
    acc_isens2 = np.zeros((n2, n2))
    sum_q = np.zeros(n_out)
    sum_qq = np.zeros((n_out, n_out))
    acc_hess1 = np.zeros((n2, n2))

    need_h1 = "h1" in layers
    need_h2 = "h2" in layers
    for idx in make_batches(ds.n, batch_size):
        trace = forward(model, ds.inputs[idx], mode="eval")
        k_total += idx.size
        m1, m2 = trace.m1, trace.m2
        for layer in layers:
            h = activations(trace, layer)
            sum_h[layer] += h.sum(axis=0)
            sum_hh[layer] += h.T @ h
        if need_h1:
            sum_m1m1 += m1.T @ m1
            sum_m2m2 += m2.T @ m2
            q = softmax_logits(trace.logits)
            u = w3[None, :, :] * m2[:, None, :]
            acc_hess1 += np.einsum("ko,koi,koj->ij", q, u, u)
            g = np.einsum("koi,ko->ki", u, q)
            acc_hess1 -= g.T @ g
        if need_h2:
            t = w2[None, :, :] * m2[:, :, None] * m1[:, None, :]
            tg = t @ g1
            acc_isens2 += (tg @ t.transpose(0, 2, 1)).sum(axis=0)
            if not need_h1:
                q = softmax_logits(trace.logits)
            sum_q += q.sum(axis=0)
            sum_qq += q.T @ q

    out: list[SimilarityMatrix] = []
    for layer in layers:
        sh, shh = sum_h[layer], sum_hh[layer]
        cov_total = shh - np.outer(sh, sh) / k_total
        raw = {"cov": _finish(cov_total, k_total - 1, "cov", layer, mhash)}
        if layer == "h1":
            raw["isens"] = _finish(g1 * sum_m1m1, k_total, "isens", layer, mhash)
            raw["osens"] = _finish(w2.T @ (c3 * sum_m2m2) @ w2, k_total,
                                   "osens", layer, mhash)
            raw["hess"] = _finish(w2.T @ acc_hess1 @ w2, k_total,
                                  "hess", layer, mhash)
        else:
            raw["isens"] = _finish(acc_isens2, k_total, "isens", layer, mhash)
            raw["osens"] = _finish(c3 * float(k_total), k_total,
                                   "osens", layer, mhash)
            raw["hess"] = _finish(w3.T @ (np.diag(sum_q) - sum_qq) @ w3,
                                  k_total, "hess", layer, mhash)
        for base in METHOD_BASES:
            out.append(raw[base])
            out.append(normalize(raw[base]))
    return out


def save_similarity(sm: SimilarityMatrix, path) -> None:
    """Write the binary container: magic, JSON header, row-major <f8 grid."""
    header = {
        "method": sm.method,
        "normalized": sm.normalized,
        "layer": sm.layer,
        "n": sm.n,
        "sample_count": sm.sample_count,
        "model_hash": sm.model_hash,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SIM_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(sm.values, dtype="<f8").tobytes())


def load_similarity(path) -> SimilarityMatrix:
    """Read a binary similarity container written by :func:`save_similarity`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != SIM_MAGIC:
        raise ModelIOError(f"{path}: not a similarity file (bad magic {blob[:8]!r})")
    (hlen,) = struct.unpack_from("<I", blob, 8)
    try:
        header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelIOError(f"{path}: unreadable header: {exc}") from exc
    n = int(header["n"])
    offset = 12 + hlen
    if len(blob) - offset != n * n * 8:
        raise ModelIOError(
            f"{path}: payload is {len(blob) - offset} bytes, expected {n * n * 8}")
    values = np.frombuffer(blob, dtype="<f8", count=n * n,
                           offset=offset).reshape(n, n).copy()
    return SimilarityMatrix(values, method=header["method"],
                            normalized=bool(header["normalized"]),
                            layer=header.get("layer"),
                            sample_count=int(header.get("sample_count", 0)),
                            model_hash=header.get("model_hash", ""))


def similarity_to_csv(sm: SimilarityMatrix, path) -> None:
    """Export as CSV: one ``#``-prefixed provenance line, then the grid."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# method={sm.tag} layer={sm.layer} n={sm.n} "
                 f"sample_count={sm.sample_count} model_hash={sm.model_hash}\n")
        for row in sm.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_similarity_csv(path) -> tuple[np.ndarray, dict]:
    """Read a CSV written by :func:`similarity_to_csv`; returns (grid, meta)."""
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
            rows.append([float(v) for v in line.split(",")])
    grid = np.asarray(rows, dtype=np.float64)
    if grid.ndim != 2 or (grid.size and grid.shape[0] != grid.shape[1]):
        raise ModelIOError(f"{path}: expected a square grid, got {grid.shape}")
    return grid, meta
