"""Datasets: IDX image files, batching, and synthetic fixtures.

The IDX reader/writer handles the classic big-endian image/label format
(gzipped or plain) and reports malformed files with byte offsets.  Pixel
bytes are scaled to floats in [0, 1].

Two synthetic generators exist: ``synthetic_blobs`` (Gaussian class blobs,
used heavily in tests) and ``synthetic_digits`` (a deterministic 28x28
image-like dataset built from per-class bump templates with shifts,
amplitude jitter, and pixel noise) which serves as the desk-scale stand-in
when no real image corpus is on disk.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .errors import IdxFormatError, ValidationError
from .numerics import RandomSource

__all__ = [
    "Dataset", "load_idx", "save_idx", "make_batches",
    "synthetic_blobs", "synthetic_digits",
]

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Input matrix in [0, 1] with integer labels.

    ``inputs`` is (n, dim) float64, ``labels`` is (n,) int64.
    """

    inputs: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(np.asarray(self.inputs, dtype=np.float64))
        self.labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if self.inputs.ndim != 2:
            raise ValidationError(f"inputs must be 2-d, got shape {self.inputs.shape}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.inputs.shape[0]:
            raise ValidationError(
                f"labels shape {self.labels.shape} does not match "
                f"{self.inputs.shape[0]} input rows")
        if self.inputs.size and (self.inputs.min() < -1e-9 or self.inputs.max() > 1.0 + 1e-9):
            raise ValidationError(
                f"inputs must lie in [0, 1], got range "
                f"[{self.inputs.min()!r}, {self.inputs.max()!r}]")
        if self.labels.size and self.labels.min() < 0:
            raise ValidationError("labels must be non-negative")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def take(self, n: int) -> "Dataset":
        """First ``n`` items, deterministically."""
        if n < 0 or n > self.n:
            raise ValidationError(f"cannot take {n} of {self.n} items")
        return Dataset(self.inputs[:n], self.labels[:n], name=self.name)


def _read_file(path) -> bytes:
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(fh) as gz:
                return gz.read()
        return fh.read()


def _read_u32(buf: bytes, offset: int, what: str) -> int:
    if offset + 4 > len(buf):
        raise IdxFormatError(f"truncated file: expected 4 bytes for {what}", offset)
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(images_path, labels_path, name: str = "idx") -> Dataset:
    """Load an image/label IDX pair (gzipped or plain) as a Dataset.

    Pixels are scaled by 1/255 into [0, 1] and flattened row-major to
    (count, rows*cols).  Raises :class:`IdxFormatError` with a byte offset
    on bad magic numbers, truncation, or an image/label count mismatch.
    """
    ibuf = _read_file(images_path)
    magic = _read_u32(ibuf, 0, "images magic")
    if magic != IMAGES_MAGIC:
        raise IdxFormatError(
            f"bad images magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}", 0)
    count = _read_u32(ibuf, 4, "image count")
    rows = _read_u32(ibuf, 8, "row count")
    cols = _read_u32(ibuf, 12, "column count")
    need = 16 + count * rows * cols
    if len(ibuf) < need:
        raise IdxFormatError(
            f"truncated image payload: need {need} bytes, have {len(ibuf)}", 16)
    pixels = np.frombuffer(ibuf, dtype=np.uint8, count=count * rows * cols, offset=16)

    lbuf = _read_file(labels_path)
    lmagic = _read_u32(lbuf, 0, "labels magic")
    if lmagic != LABELS_MAGIC:
        raise IdxFormatError(
            f"bad labels magic 0x{lmagic:08x}, expected 0x{LABELS_MAGIC:08x}", 0)
    lcount = _read_u32(lbuf, 4, "label count")
    if lcount != count:
        raise IdxFormatError(
            f"count mismatch: {count} images but {lcount} labels", 4)
    if len(lbuf) < 8 + lcount:
        raise IdxFormatError(
            f"truncated label payload: need {8 + lcount} bytes, have {len(lbuf)}", 8)
    labels = np.frombuffer(lbuf, dtype=np.uint8, count=lcount, offset=8)

    inputs = pixels.astype(np.float64).reshape(count, rows * cols) / 255.0
    return Dataset(inputs, labels.astype(np.int64), name=name)


def save_idx(ds: Dataset, images_path, labels_path, rows: int, cols: int) -> None:
    """Write a Dataset as an IDX image/label pair (plain, not gzipped).

    Pixels are stored as ``round(value * 255)`` bytes, so a dataset whose
    values lie on the 1/255 grid (anything loaded by :func:`load_idx`, or
    the synthetic digits) round-trips bit-exactly.
    """
    if ds.dim != rows * cols:
        raise ValidationError(f"dataset dim {ds.dim} != {rows}*{cols}")
    if ds.labels.size and ds.labels.max() > 255:
        raise ValidationError("labels exceed one byte; cannot store as IDX")
    pixels = np.round(ds.inputs * 255.0).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, ds.n, rows, cols))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, ds.n))
        fh.write(ds.labels.astype(np.uint8).tobytes())


def make_batches(n: int, batch_size: int, shuffle: bool = False,
                 rng: RandomSource | None = None) -> list[np.ndarray]:
    """Index arrays covering ``range(n)`` in batches; the short tail is kept.

    With ``shuffle`` a permutation from ``rng`` is applied first.
    """
    if batch_size <= 0:
        raise ValidationError(f"batch_size must be positive, got {batch_size}")
    if n <= 0:
        raise ValidationError("cannot batch an empty dataset")
    if shuffle:
        if rng is None:
            raise ValidationError("shuffle=True requires an rng")
        order = rng.permutation(n)
    else:
        order = np.arange(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _balanced_labels(n_samples: int, n_classes: int, rng: RandomSource) -> np.ndarray:
    reps = -(-n_samples // n_classes)
    labels = np.tile(np.arange(n_classes, dtype=np.int64), reps)[:n_samples]
    return labels[rng.permutation(n_samples)]


def synthetic_blobs(n_classes: int, n_samples: int, dim: int, spread: float,
                    rng: RandomSource,
                    means_rng: RandomSource | None = None) -> Dataset:
    """Gaussian class blobs clipped to [0, 1], with balanced labels.

    Class means are drawn uniformly in [0.2, 0.8] per coordinate; samples
    add isotropic noise of scale ``spread``.  Class counts differ by at
    most one.  Pass the same ``means_rng`` to two calls (train/test) to
    sample both from identical class distributions.
    """
    if n_classes < 1 or n_samples < 1 or dim < 1:
        raise ValidationError("n_classes, n_samples, and dim must be positive")
    means_src = means_rng if means_rng is not None else rng
    means = means_src.derive("means").uniform(0.2, 0.8, size=(n_classes, dim))
    labels = _balanced_labels(n_samples, n_classes, rng.derive("labels"))
    noise = rng.derive("noise").normal(0.0, spread, size=(n_samples, dim))
    inputs = np.clip(means[labels] + noise, 0.0, 1.0)
    return Dataset(inputs, labels, name="blobs")


def synthetic_digits(n_samples: int, rng: RandomSource, side: int = 28,
                     noise: float = 0.12, max_shift: int = 3,
                     n_classes: int = 10,
                     template_rng: RandomSource | None = None) -> Dataset:
    """Deterministic image-like 10-class dataset on a ``side`` x ``side`` grid.

    Each class is a fixed template of 4-7 Gaussian bumps; each sample is the
    class template rolled by a random integer shift, scaled by a random
    amplitude, plus pixel noise, clipped to [0, 1] and quantized to the
    1/255 grid (so IDX round trips are exact).  Labels are balanced.  Pass
    the same ``template_rng`` to two calls (train/test) to sample both from
    the same class templates.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be positive")
    grid = np.arange(side, dtype=np.float64)
    yy, xx = np.meshgrid(grid, grid, indexing="ij")
    template_src = template_rng if template_rng is not None else rng
    templates = np.empty((n_classes, side, side))
    for c in range(n_classes):
        tr = template_src.derive("template", c)
        n_bumps = int(tr.integers(4, 8))
        img = np.zeros((side, side))
        for _ in range(n_bumps):
            cy, cx = tr.uniform(side * 0.18, side * 0.82, size=2)
            sigma = float(tr.uniform(side * 0.06, side * 0.13))
            amp = float(tr.uniform(0.5, 1.0))
            img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma ** 2))
        templates[c] = np.clip(img, 0.0, 1.0)

    labels = _balanced_labels(n_samples, n_classes, rng.derive("labels"))
    sr = rng.derive("samples")
    dys = sr.integers(-max_shift, max_shift + 1, size=n_samples)
    dxs = sr.integers(-max_shift, max_shift + 1, size=n_samples)
    amps = sr.uniform(0.7, 1.1, size=n_samples)
    pixel_noise = sr.normal(0.0, noise, size=(n_samples, side * side))

    rolled: dict[tuple[int, int, int], np.ndarray] = {}
    inputs = np.empty((n_samples, side * side))
    for k in range(n_samples):
        key = (int(labels[k]), int(dys[k]), int(dxs[k]))
        if key not in rolled:
            rolled[key] = np.roll(templates[key[0]], (key[1], key[2]),
                                  axis=(0, 1)).ravel()
        inputs[k] = rolled[key]
    inputs = np.clip(amps[:, None] * inputs + pixel_noise, 0.0, 1.0)
    inputs = np.round(inputs * 255.0) / 255.0
    return Dataset(inputs, labels, name="synthetic-digits")
