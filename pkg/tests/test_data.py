import gzip
import struct

import numpy as np
import pytest

from modkit.data import (Dataset, load_idx, make_batches, save_idx,
                         synthetic_blobs, synthetic_digits)
from modkit.errors import IdxFormatError, ValidationError
from modkit.numerics import RandomSource


class TestDataset:
    def test_coerces_dtypes(self):
        ds = Dataset([[0, 1], [1, 0]], [0, 1])
        assert ds.inputs.dtype == np.float64
        assert ds.labels.dtype == np.int64
        assert ds.n == 2 and ds.dim == 2

    def test_take_prefix(self):
        ds = Dataset(np.linspace(0, 1, 10).reshape(5, 2), np.arange(5))
        sub = ds.take(3)
        assert sub.n == 3
        assert np.array_equal(sub.inputs, ds.inputs[:3])
        with pytest.raises(ValidationError):
            ds.take(6)

    def test_rejects_bad_shapes_and_ranges(self):
        with pytest.raises(ValidationError):
            Dataset(np.zeros(4), np.zeros(4, dtype=int))
        with pytest.raises(ValidationError):
            Dataset(np.zeros((3, 2)), np.zeros(2, dtype=int))
        with pytest.raises(ValidationError):
            Dataset(np.full((2, 2), 1.5), np.zeros(2, dtype=int))
        with pytest.raises(ValidationError):
            Dataset(np.zeros((2, 2)), [-1, 0])


class TestMakeBatches:
    def test_tail_is_kept(self):
        batches = make_batches(10, 4)
        assert [b.size for b in batches] == [4, 4, 2]
        assert np.array_equal(np.concatenate(batches), np.arange(10))

    def test_exact_division(self):
        batches = make_batches(8, 4)
        assert [b.size for b in batches] == [4, 4]

    def test_shuffle_covers_everything(self):
        batches = make_batches(10, 3, shuffle=True, rng=RandomSource(1))
        flat = np.sort(np.concatenate(batches))
        assert np.array_equal(flat, np.arange(10))

    def test_shuffle_deterministic(self):
        b1 = make_batches(10, 3, shuffle=True, rng=RandomSource(2))
        b2 = make_batches(10, 3, shuffle=True, rng=RandomSource(2))
        assert all(np.array_equal(x, y) for x, y in zip(b1, b2))

    def test_validation(self):
        with pytest.raises(ValidationError):
            make_batches(10, 0)
        with pytest.raises(ValidationError):
            make_batches(0, 4)
        with pytest.raises(ValidationError):
            make_batches(10, 3, shuffle=True)


class TestIdx:
    def make_ds(self, n=7, side=4):
        rng = RandomSource(3)
        pixels = rng.integers(0, 256, size=(n, side * side)) / 255.0
        return Dataset(pixels, rng.integers(0, 10, size=n)), side

    def test_round_trip_exact(self, tmp_path):
        ds, side = self.make_ds()
        ip, lp = tmp_path / "im.idx", tmp_path / "lb.idx"
        save_idx(ds, ip, lp, side, side)
        back = load_idx(ip, lp)
        assert np.array_equal(back.inputs, ds.inputs)
        assert np.array_equal(back.labels, ds.labels)

    def test_gzip_transparent(self, tmp_path):
        ds, side = self.make_ds()
        ip, lp = tmp_path / "im.idx", tmp_path / "lb.idx"
        save_idx(ds, ip, lp, side, side)
        for p in (ip, lp):
            gz = p.with_suffix(".gz")
            gz.write_bytes(gzip.compress(p.read_bytes()))
        back = load_idx(ip.with_suffix(".gz"), lp.with_suffix(".gz"))
        assert np.array_equal(back.inputs, ds.inputs)

    def test_bad_magic_reports_offset(self, tmp_path):
        ip, lp = tmp_path / "im.idx", tmp_path / "lb.idx"
        ip.write_bytes(struct.pack(">IIII", 0xDEAD, 1, 2, 2) + b"\x00" * 4)
        lp.write_bytes(struct.pack(">II", 0x801, 1) + b"\x00")
        with pytest.raises(IdxFormatError) as err:
            load_idx(ip, lp)
        assert err.value.offset == 0
        assert "magic" in str(err.value)

    def test_truncated_payload(self, tmp_path):
        ip, lp = tmp_path / "im.idx", tmp_path / "lb.idx"
        ip.write_bytes(struct.pack(">IIII", 0x803, 2, 2, 2) + b"\x00" * 3)
        lp.write_bytes(struct.pack(">II", 0x801, 2) + b"\x00\x00")
        with pytest.raises(IdxFormatError):
            load_idx(ip, lp)

    def test_count_mismatch(self, tmp_path):
        ip, lp = tmp_path / "im.idx", tmp_path / "lb.idx"
        ip.write_bytes(struct.pack(">IIII", 0x803, 1, 1, 1) + b"\x00")
        lp.write_bytes(struct.pack(">II", 0x801, 3) + b"\x00" * 3)
        with pytest.raises(IdxFormatError) as err:
            load_idx(ip, lp)
        assert "mismatch" in str(err.value)

    def test_save_rejects_wrong_dim(self, tmp_path):
        ds, _ = self.make_ds(side=4)
        with pytest.raises(ValidationError):
            save_idx(ds, tmp_path / "a", tmp_path / "b", 3, 3)


class TestSyntheticBlobs:
    def test_deterministic(self):
        a = synthetic_blobs(3, 30, 5, 0.05, RandomSource(4))
        b = synthetic_blobs(3, 30, 5, 0.05, RandomSource(4))
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.labels, b.labels)

    def test_balanced_labels(self):
        ds = synthetic_blobs(3, 99, 4, 0.05, RandomSource(5))
        counts = np.bincount(ds.labels)
        assert np.array_equal(counts, [33, 33, 33])

    def test_near_balance_with_remainder(self):
        ds = synthetic_blobs(4, 10, 4, 0.05, RandomSource(6))
        counts = np.bincount(ds.labels, minlength=4)
        assert counts.max() - counts.min() <= 1

    def test_shared_means_rng_aligns_classes(self):
        shared = RandomSource(7)
        a = synthetic_blobs(3, 200, 4, 0.01, RandomSource(8), means_rng=shared)
        b = synthetic_blobs(3, 200, 4, 0.01, RandomSource(9), means_rng=shared)
        for c in range(3):
            ma = a.inputs[a.labels == c].mean(axis=0)
            mb = b.inputs[b.labels == c].mean(axis=0)
            assert np.max(np.abs(ma - mb)) < 0.02

    def test_validation(self):
        with pytest.raises(ValidationError):
            synthetic_blobs(0, 10, 4, 0.05, RandomSource(1))


class TestSyntheticDigits:
    def test_deterministic(self):
        a = synthetic_digits(20, RandomSource(10), side=12)
        b = synthetic_digits(20, RandomSource(10), side=12)
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.labels, b.labels)

    def test_values_quantized_to_byte_grid(self):
        ds = synthetic_digits(15, RandomSource(11), side=10)
        scaled = ds.inputs * 255.0
        assert np.max(np.abs(scaled - np.round(scaled))) < 1e-9
        assert ds.inputs.min() >= 0.0 and ds.inputs.max() <= 1.0

    def test_idx_round_trip_exact(self, tmp_path):
        ds = synthetic_digits(10, RandomSource(12), side=8)
        save_idx(ds, tmp_path / "i", tmp_path / "l", 8, 8)
        back = load_idx(tmp_path / "i", tmp_path / "l")
        assert np.array_equal(back.inputs, ds.inputs)

    def test_balanced_ten_classes(self):
        ds = synthetic_digits(40, RandomSource(13), side=10)
        assert np.array_equal(np.bincount(ds.labels), [4] * 10)

    def test_shared_templates_make_splits_consistent(self):
        shared = RandomSource(14)
        tr = synthetic_digits(500, RandomSource(15), template_rng=shared)
        te = synthetic_digits(500, RandomSource(16), template_rng=shared)
        # per-class mean images must nearly coincide across the two draws
        for c in range(10):
            ma = tr.inputs[tr.labels == c].mean(axis=0)
            mb = te.inputs[te.labels == c].mean(axis=0)
            assert np.corrcoef(ma, mb)[0, 1] > 0.85

    def test_distinct_rngs_give_distinct_templates(self):
        a = synthetic_digits(200, RandomSource(17))
        b = synthetic_digits(200, RandomSource(18))
        ma = a.inputs[a.labels == 0].mean(axis=0)
        mb = b.inputs[b.labels == 0].mean(axis=0)
        assert np.corrcoef(ma, mb)[0, 1] < 0.8

    def test_classes_are_separable(self):
        ds = synthetic_digits(400, RandomSource(19))
        means = np.stack([ds.inputs[ds.labels == c].mean(axis=0)
                          for c in range(10)])
        # nearest-mean classification should beat chance by a wide margin
        d2 = ((ds.inputs[:, None, :] - means[None]) ** 2).sum(axis=2)
        acc = (d2.argmin(axis=1) == ds.labels).mean()
        assert acc > 0.6
