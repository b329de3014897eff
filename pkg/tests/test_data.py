import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweepkit.data import (
    CIFAR_RECORD,
    LabeledDataset,
    cifar10_bytes,
    class_style,
    gen_shapes_dataset,
    load_cifar10_binary,
    load_dataset,
    load_ppm_dir,
    parse_cifar10_binary,
    read_ppm,
    save_dataset,
    save_ppm_dir,
    write_cifar10_binary,
    write_ppm,
)
from sweepkit.errors import FormatError, InvalidArgument


def cifar_records(n, seed=0):
    rng = np.random.default_rng(seed)
    rec = rng.integers(0, 256, (n, CIFAR_RECORD), dtype=np.uint8)
    rec[:, 0] = rng.integers(0, 10, n)
    return rec.tobytes()


class TestCifar:
    def test_ten_records(self, tmp_path):
        path = tmp_path / "data_batch_1.bin"
        path.write_bytes(cifar_records(10))
        ds = load_cifar10_binary(path)
        assert len(ds) == 10 and ds.dims == (32, 32, 3) and ds.num_classes == 10

    def test_planar_to_interleaved(self):
        rec = np.zeros(CIFAR_RECORD, np.uint8)
        rec[0] = 7
        rec[1 + 0 * 1024 + 5] = 11  # R plane, row 0, col 5
        rec[1 + 1 * 1024 + 32] = 22  # G plane, row 1, col 0
        rec[1 + 2 * 1024 + 1023] = 33  # B plane, last pixel
        ds = parse_cifar10_binary(rec.tobytes())
        assert ds.labels[0] == 7
        assert ds.images[0, 0, 5].tolist() == [11, 0, 0]
        assert ds.images[0, 1, 0].tolist() == [0, 22, 0]
        assert ds.images[0, 31, 31].tolist() == [0, 0, 33]

    def test_roundtrip_byte_exact(self, tmp_path):
        raw = cifar_records(25, seed=3)
        src = tmp_path / "in.bin"
        src.write_bytes(raw)
        out = tmp_path / "out.bin"
        write_cifar10_binary(load_cifar10_binary(src), out)
        assert out.read_bytes() == raw

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**32))
    def test_roundtrip_property(self, n, seed):
        raw = cifar_records(n, seed)
        assert cifar10_bytes(parse_cifar10_binary(raw)) == raw

    @pytest.mark.parametrize("cut", [1, 3072, CIFAR_RECORD + 5, 2 * CIFAR_RECORD - 1])
    def test_truncated(self, cut):
        with pytest.raises(FormatError):
            parse_cifar10_binary(cifar_records(2)[:cut])

    def test_empty(self):
        with pytest.raises(FormatError):
            parse_cifar10_binary(b"")

    def test_bad_label(self):
        raw = bytearray(cifar_records(3))
        raw[CIFAR_RECORD] = 10
        with pytest.raises(FormatError, match="label"):
            parse_cifar10_binary(bytes(raw))

    def test_directory_of_batches(self, tmp_path):
        (tmp_path / "b.bin").write_bytes(cifar_records(2, 1))
        (tmp_path / "a.bin").write_bytes(cifar_records(3, 2))
        ds = load_cifar10_binary(tmp_path)
        assert len(ds) == 5
        assert cifar10_bytes(ds) == cifar_records(3, 2) + cifar_records(2, 1)


class TestPpm:
    def test_roundtrip(self, tmp_path):
        img = np.random.default_rng(0).integers(0, 256, (5, 7, 3), dtype=np.uint8)
        write_ppm(tmp_path / "a.ppm", img)
        assert np.array_equal(read_ppm(tmp_path / "a.ppm"), img)
        gray = img[:, :, :1]
        write_ppm(tmp_path / "g.pgm", gray)
        assert np.array_equal(read_ppm(tmp_path / "g.pgm"), gray)

    def test_header_comments(self, tmp_path):
        body = bytes(range(12))
        (tmp_path / "c.ppm").write_bytes(b"P6\n# made by hand\n2 2 # size\n255\n" + body)
        assert read_ppm(tmp_path / "c.ppm").reshape(-1).tolist() == list(range(12))

    @pytest.mark.parametrize("raw", [b"P3\n1 1\n255\n\x00\x00\x00", b"P6\n2 2\n255\n\x00", b"P6\n2 2\n65535\n",
                                     b"P6\nx 2\n255\n", b"P6\n2"])
    def test_malformed(self, tmp_path, raw):
        (tmp_path / "bad.ppm").write_bytes(raw)
        with pytest.raises(FormatError):
            read_ppm(tmp_path / "bad.ppm")

    def test_directory_roundtrip(self, tmp_path):
        ds = gen_shapes_dataset(12, 4, (8, 8, 3), seed=1)
        save_ppm_dir(ds, tmp_path / "d")
        back = load_ppm_dir(tmp_path / "d", 4)
        assert np.array_equal(back.images, ds.images) and np.array_equal(back.labels, ds.labels)

    def test_manifest_errors(self, tmp_path):
        with pytest.raises(FormatError):
            load_ppm_dir(tmp_path)
        write_ppm(tmp_path / "a.ppm", np.zeros((2, 2, 3), np.uint8))
        (tmp_path / "labels.txt").write_text("a.ppm\n")
        with pytest.raises(FormatError):
            load_ppm_dir(tmp_path)
        (tmp_path / "labels.txt").write_text("a.ppm,5\n")
        with pytest.raises(FormatError):
            load_ppm_dir(tmp_path, num_classes=3)


class TestDatasetFile:
    def test_roundtrip_and_bytes(self, tmp_path):
        ds = gen_shapes_dataset(20, 5, (8, 8, 3), seed=2)
        save_dataset(ds, tmp_path / "a.swkd")
        back = load_dataset(tmp_path / "a.swkd")
        assert np.array_equal(back.images, ds.images) and np.array_equal(back.labels, ds.labels)
        save_dataset(back, tmp_path / "b.swkd")
        assert (tmp_path / "a.swkd").read_bytes() == (tmp_path / "b.swkd").read_bytes()

    def test_corruption(self, tmp_path):
        ds = gen_shapes_dataset(10, 5, (8, 8, 3), seed=2)
        save_dataset(ds, tmp_path / "a.swkd")
        raw = (tmp_path / "a.swkd").read_bytes()
        for bad in (raw[:10], raw[:-1], b"NOPE" + raw[4:]):
            (tmp_path / "b.swkd").write_bytes(bad)
            with pytest.raises(FormatError):
                load_dataset(tmp_path / "b.swkd")


class TestShapes:
    def test_balanced(self):
        ds = gen_shapes_dataset(1000, 10, seed=0)
        assert len(ds) == 1000 and ds.dims == (32, 32, 3)
        assert np.bincount(ds.labels).tolist() == [100] * 10

    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 12), st.integers(0, 30))
    def test_balanced_within_one(self, k, extra):
        ds = gen_shapes_dataset(k + extra, k, (8, 8, 3), seed=extra)
        counts = np.bincount(ds.labels, minlength=k)
        assert counts.max() - counts.min() <= 1

    def test_deterministic(self):
        a = gen_shapes_dataset(50, 10, seed=4)
        b = gen_shapes_dataset(50, 10, seed=4)
        assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
        c = gen_shapes_dataset(50, 10, seed=5)
        assert not np.array_equal(a.images, c.images)

    def test_class_styles_distinct(self):
        styles = [class_style(k) for k in range(36)]
        assert len(set(styles)) == 36

    def test_invalid_counts(self):
        with pytest.raises(InvalidArgument):
            gen_shapes_dataset(5, 10)
        with pytest.raises(InvalidArgument):
            gen_shapes_dataset(50, 1)

    def test_dataset_validation(self):
        with pytest.raises(InvalidArgument):
            LabeledDataset(np.zeros((2, 4, 4, 3), np.uint8), np.array([0, 3]), 3)
        with pytest.raises(InvalidArgument):
            LabeledDataset(np.zeros((2, 4, 4, 3), np.uint8), np.array([0]), 3)
