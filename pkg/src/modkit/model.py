"""A small two-hidden-layer ReLU classifier trained with SGD + momentum.

The default architecture is 784-64-64-10.  Training minimizes mean softmax
cross-entropy plus ``l2 * sum(w^2)`` and ``l1 * sum(|w|)`` penalties over
weight matrices (biases are never penalized); dropout is the inverted kind,
scaling surviving units by ``1/(1-p)`` at train time so evaluation is a
plain forward pass.  All arithmetic is float64 and every random draw comes
from named substreams of the config seed, so training is bit-reproducible.

Model files are a self-describing container: a magic string, a JSON header
(schema version, byte order, dtype, shapes, training provenance), then raw
little-endian float64 parameter buffers.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from .data import Dataset, make_batches
from .errors import ModelIOError, TrainingDivergedError, ValidationError
from .numerics import RandomSource

__all__ = [
    "MlpModel", "ForwardTrace", "TrainConfig", "EvalMetrics",
    "init_mlp", "forward", "loss_and_grads", "train", "evaluate",
    "save_model", "load_model", "model_hash",
]

MODEL_MAGIC = b"MODKMLP1"
PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")
SPARSITY_BAND = 1e-3


@dataclass
class TrainConfig:
    """Optimization settings; the defaults are the reference recipe."""

    l2: float = 0.0
    l1: float = 0.0
    dropout: float = 0.0
    epochs: int = 20
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.dropout < 1.0):
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.l2 < 0.0 or self.l1 < 0.0:
            raise ValidationError("penalty coefficients must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValidationError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MlpModel:
    """Parameters of the classifier, ordered input to output."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    dropout_p: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.ascontiguousarray(
                np.asarray(getattr(self, name), dtype=np.float64)))
        d_in, h1 = self.w1.shape[1], self.w1.shape[0]
        h2, out = self.w2.shape[0], self.w3.shape[0]
        if (self.w2.shape[1] != h1 or self.w3.shape[1] != h2
                or self.b1.shape != (h1,) or self.b2.shape != (h2,)
                or self.b3.shape != (out,)):
            raise ValidationError("parameter shapes are inconsistent")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.w1.shape[1], self.w1.shape[0],
                self.w2.shape[0], self.w3.shape[0])

    @property
    def arch(self) -> str:
        return "-".join(str(d) for d in self.dims)

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def weights(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.w1, self.w2, self.w3

    def copy(self, dropout_p: float | None = None) -> "MlpModel":
        return MlpModel(*(getattr(self, n).copy() for n in PARAM_NAMES),
                        dropout_p=self.dropout_p if dropout_p is None else dropout_p,
                        seed=self.seed)


@dataclass
class ForwardTrace:
    """Per-layer records of one forward pass.

    ``h1``/``h2`` are the analyzed hidden activities: post-ReLU, and in
    train mode post-dropout (what the next layer actually consumed).
    ``m1``/``m2`` are the ReLU gates (1.0 where the pre-activation was
    strictly positive; exact zeros gate to 0).  ``drop1``/``drop2`` hold
    the scaled dropout masks in train mode, else None.
    """

    z1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray
    logits: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    mode: str
    drop1: np.ndarray | None = None
    drop2: np.ndarray | None = None


@dataclass
class EvalMetrics:
    """Headline evaluation numbers for one model on one dataset.

    ``mean_loss`` is the data term only (mean cross-entropy); penalties are
    weight functionals reported via the norms.  ``sparsity`` is the fraction
    of weight entries within ``[-1e-3, 1e-3]`` (biases excluded).
    """

    accuracy: float
    mean_loss: float
    l2_norm: float
    l1_norm: float
    sparsity: float

    def to_dict(self) -> dict:
        return asdict(self)


def init_mlp(seed: int, dropout_p: float = 0.0,
             dims: tuple[int, int, int, int] = (784, 64, 64, 10)) -> MlpModel:
    """Fresh model with uniform(+-sqrt(6/fan_in)) weights and zero biases.

    The draw order is fixed (w1, w2, w3) so a seed pins the model exactly.
    """
    rng = RandomSource(seed)
    d_in, h1, h2, out = dims
    shapes = ((h1, d_in), (h2, h1), (out, h2))
    weights = []
    for (rows, cols) in shapes:
        bound = float(np.sqrt(6.0 / cols))
        weights.append(rng.uniform(-bound, bound, size=(rows, cols)))
    return MlpModel(weights[0], np.zeros(h1), weights[1], np.zeros(h2),
                    weights[2], np.zeros(out), dropout_p=dropout_p, seed=int(seed))


def _dropout_mask(rng: RandomSource, shape, p: float) -> np.ndarray:
    keep = (rng.uniform(size=shape) >= p).astype(np.float64)
    return keep / (1.0 - p)


def forward(model: MlpModel, x: np.ndarray, mode: str = "eval",
            rng: RandomSource | None = None) -> ForwardTrace:
    """Run the network, recording activations, gates, and dropout masks.

    In ``eval`` mode dropout is the identity.  In ``train`` mode each hidden
    unit is zeroed independently with probability ``model.dropout_p`` and
    survivors are scaled by ``1/(1-p)``; an rng is then required.
    """
    if mode not in ("train", "eval"):
        raise ValidationError(f"mode must be 'train' or 'eval', got {mode!r}")
    for name in PARAM_NAMES:
        if not np.all(np.isfinite(getattr(model, name))):
            raise ValidationError(f"parameter {name} contains non-finite values")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dims[0]:
        raise ValidationError(
            f"inputs must be (batch, {model.dims[0]}), got {x.shape}")
    p = model.dropout_p
    use_dropout = mode == "train" and p > 0.0
    if use_dropout and rng is None:
        raise ValidationError("train-mode forward with dropout requires an rng")

    z1 = x @ model.w1.T + model.b1
    m1 = (z1 > 0.0).astype(np.float64)
    h1 = z1 * m1
    drop1 = drop2 = None
    if use_dropout:
        drop1 = _dropout_mask(rng, h1.shape, p)
        h1 = h1 * drop1
    z2 = h1 @ model.w2.T + model.b2
    m2 = (z2 > 0.0).astype(np.float64)
    h2 = z2 * m2
    if use_dropout:
        drop2 = _dropout_mask(rng, h2.shape, p)
        h2 = h2 * drop2
    logits = h2 @ model.w3.T + model.b3
    return ForwardTrace(z1=z1, h1=h1, z2=z2, h2=h2, logits=logits,
                        m1=m1, m2=m2, mode=mode, drop1=drop1, drop2=drop2)


def softmax_logits(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a logit matrix, numerically stable."""
    z = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=1, keepdims=True)


def _cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and the softmax probabilities."""
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    picked = logits[np.arange(logits.shape[0]), labels]
    loss = float(np.mean(lse - picked))
    q = np.exp(logits - lse[:, None])
    return loss, q


def _penalty(model: MlpModel, cfg: TrainConfig) -> float:
    total = 0.0
    for w in model.weights():
        total += cfg.l2 * float(np.sum(w * w)) + cfg.l1 * float(np.sum(np.abs(w)))
    return total


def loss_and_grads(model: MlpModel, x: np.ndarray, labels: np.ndarray,
                   cfg: TrainConfig, rng: RandomSource | None = None):
    """Objective value and its gradient for one batch (train-mode forward).

    The |w| subgradient at exactly zero is taken as zero.  Returns
    ``(loss, grads)`` with ``grads`` keyed like ``model.params()``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    trace = forward(model, x, mode="train", rng=rng)
    ce, q = _cross_entropy(trace.logits, labels)
    loss = ce + _penalty(model, cfg)
    b = x.shape[0]

    dy = q.copy()
    dy[np.arange(b), labels] -= 1.0
    dy /= b
    gw3 = dy.T @ trace.h2
    gb3 = dy.sum(axis=0)
    dh2 = dy @ model.w3
    if trace.drop2 is not None:
        dh2 = dh2 * trace.drop2
    dz2 = dh2 * trace.m2
    gw2 = dz2.T @ trace.h1
    gb2 = dz2.sum(axis=0)
    dh1 = dz2 @ model.w2
    if trace.drop1 is not None:
        dh1 = dh1 * trace.drop1
    dz1 = dh1 * trace.m1
    gw1 = dz1.T @ np.asarray(x, dtype=np.float64)
    gb1 = dz1.sum(axis=0)

    grads = {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2, "w3": gw3, "b3": gb3}
    for name, w in zip(("w1", "w2", "w3"), model.weights()):
        grads[name] = grads[name] + 2.0 * cfg.l2 * w + cfg.l1 * np.sign(w)
    return loss, grads


def train(model: MlpModel, train_ds: Dataset, cfg: TrainConfig,
          test_ds: Dataset | None = None):
    """SGD with momentum over shuffled minibatches; returns (model, history).

    The input model is not mutated.  ``history`` holds one record per epoch
    with the mean train objective (including penalties) and, when a test set
    is given, test accuracy.  Zero epochs return an unchanged copy.  A
    non-finite batch loss raises :class:`TrainingDivergedError`.
    """
    work = model.copy(dropout_p=cfg.dropout)
    vel = {name: np.zeros_like(p) for name, p in work.params().items()}
    root = RandomSource(cfg.seed)
    history: list[dict] = []
    for epoch in range(cfg.epochs):
        batches = make_batches(train_ds.n, cfg.batch_size, shuffle=True,
                               rng=root.derive("shuffle", epoch))
        drop_rng = root.derive("dropout", epoch)
        loss_sum = 0.0
        for bi, idx in enumerate(batches):
            try:
                loss, grads = loss_and_grads(work, train_ds.inputs[idx],
                                             train_ds.labels[idx], cfg,
                                             rng=drop_rng)
            except ValidationError:
                if any(not np.all(np.isfinite(p))
                       for p in work.params().values()):
                    raise TrainingDivergedError(
                        f"parameters became non-finite at epoch {epoch}, "
                        f"batch {bi}", epoch=epoch, batch=bi)
                raise
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss!r} at epoch {epoch}, batch {bi}",
                    epoch=epoch, batch=bi)
            for name in vel:
                vel[name] = cfg.momentum * vel[name] - cfg.lr * grads[name]
                getattr(work, name)[...] += vel[name]
            loss_sum += loss * idx.size
        record = {"epoch": epoch, "train_loss": loss_sum / train_ds.n}
        if test_ds is not None:
            record["test_accuracy"] = evaluate(work, test_ds).accuracy
        history.append(record)
    return work, history


def evaluate(model: MlpModel, ds: Dataset, batch_size: int = 4096) -> EvalMetrics:
    """Accuracy and mean cross-entropy on a dataset, plus weight statistics.

    Predictions use argmax with ties resolved to the lowest class index.
    """
    correct = 0
    loss_sum = 0.0
    for idx in make_batches(ds.n, batch_size):
        trace = forward(model, ds.inputs[idx], mode="eval")
        ce, _ = _cross_entropy(trace.logits, ds.labels[idx])
        loss_sum += ce * idx.size
        correct += int(np.sum(np.argmax(trace.logits, axis=1) == ds.labels[idx]))
    flat = np.concatenate([w.ravel() for w in model.weights()])
    return EvalMetrics(
        accuracy=correct / ds.n,
        mean_loss=loss_sum / ds.n,
        l2_norm=float(np.sqrt(np.sum(flat * flat))),
        l1_norm=float(np.sum(np.abs(flat))),
        sparsity=float(np.mean(np.abs(flat) <= SPARSITY_BAND)),
    )


def model_hash(model: MlpModel) -> str:
    """Short content hash over architecture and parameter bytes."""
    h = hashlib.sha256()
    h.update(model.arch.encode())
    h.update(repr(float(model.dropout_p)).encode())
    for name in PARAM_NAMES:
        h.update(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def save_model(model: MlpModel, path, train_config: TrainConfig | None = None,
               history: list | None = None) -> None:
    """Write the self-describing model container (see module docstring)."""
    header = {
        "schema": 1,
        "byte_order": "little",
        "dtype": "float64",
        "arch": model.arch,
        "dropout_p": float(model.dropout_p),
        "seed": model.seed,
        "train_config": train_config.to_dict() if train_config else None,
        "history": history,
        "params": [{"name": n, "shape": list(getattr(model, n).shape)}
                   for n in PARAM_NAMES],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in PARAM_NAMES:
            fh.write(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes())


def load_model(path):
    """Read a model container; returns ``(model, meta)``.

    ``meta`` carries the stored train_config dict and history (or None).
    Raises :class:`ModelIOError` on bad magic, truncation, or shape drift.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MODEL_MAGIC:
        raise ModelIOError(f"{path}: not a model file (bad magic {blob[:8]!r})")
    (hlen,) = struct.unpack_from("<I", blob, 8)
    try:
        header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelIOError(f"{path}: unreadable header: {exc}") from exc
    if header.get("schema") != 1 or header.get("dtype") != "float64":
        raise ModelIOError(f"{path}: unsupported schema {header.get('schema')!r}")
    offset = 12 + hlen
    arrays = {}
    for spec in header["params"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise ModelIOError(
                f"{path}: truncated payload for parameter {spec['name']!r}")
        arrays[spec["name"]] = np.frombuffer(
            blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise ModelIOError(f"{path}: {len(blob) - offset} trailing bytes")
    missing = [n for n in PARAM_NAMES if n not in arrays]
    if missing:
        raise ModelIOError(f"{path}: missing parameters {missing}")
    model = MlpModel(*(arrays[n] for n in PARAM_NAMES),
                     dropout_p=float(header.get("dropout_p", 0.0)),
                     seed=header.get("seed"))
    meta = {"train_config": header.get("train_config"),
            "history": header.get("history")}
    return model, meta
