import numpy as np
import pytest

from eventforge.tensorio import TensorFormatError, load_tensors, save_tensors


def test_round_trip_multiple_arrays(tmp_path):
    path = tmp_path / "grid.tns"
    rng = np.random.default_rng(0)
    arrays = {
        "rgb": rng.standard_normal((1, 4, 4, 3)).astype(np.float32),
        "event": rng.standard_normal((3, 4, 4, 3)),
        "counts": rng.integers(0, 9, size=(3, 2, 8, 8)),
        "mask": (rng.random((4, 4)) > 0.5).astype(np.uint8),
    }
    save_tensors(path, arrays)
    loaded = load_tensors(path)
    assert set(loaded) == set(arrays)
    for name in arrays:
        assert loaded[name].dtype == arrays[name].dtype or name == "counts"
        assert np.array_equal(loaded[name], arrays[name])


def test_scalar_and_empty_shapes(tmp_path):
    path = tmp_path / "s.tns"
    save_tensors(path, {"scalar": np.float64(3.5).reshape(()), "empty": np.zeros((0, 4))})
    loaded = load_tensors(path)
    assert loaded["scalar"].shape == ()
    assert loaded["empty"].shape == (0, 4)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.tns"
    path.write_bytes(b"XXXX")
    with pytest.raises(TensorFormatError, match="magic"):
        load_tensors(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.tns"
    save_tensors(path, {"a": np.ones((4, 4))})
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(TensorFormatError, match="truncated"):
        load_tensors(path)


def test_unsupported_dtype(tmp_path):
    with pytest.raises(TensorFormatError, match="unsupported"):
        save_tensors(tmp_path / "c.tns", {"c": np.zeros(3, dtype=np.complex128)})
