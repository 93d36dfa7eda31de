import numpy as np
import pytest

from minwm.container import ContainerError, read_container, write_container


def test_roundtrip_bitwise(tmp_path):
    arrays = {
        "weights": np.random.default_rng(0).normal(size=(3, 4, 5)).astype(np.float32),
        "bias": np.zeros(7, dtype=np.float32),
    }
    path = tmp_path / "ckpt.mwm"
    write_container(path, arrays, meta={"stage": "bidir"})
    got, meta = read_container(path)
    assert set(got) == set(arrays)
    for k in arrays:
        assert got[k].shape == arrays[k].shape
        assert np.array_equal(got[k], arrays[k])
    assert meta == {"stage": "bidir"}


def test_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ContainerError):
        read_container(path)


def test_scalar_and_empty_meta(tmp_path):
    path = tmp_path / "s.mwm"
    write_container(path, {"x": np.float32(3.5).reshape(())})
    got, meta = read_container(path)
    assert got["x"].shape == ()
    assert float(got["x"]) == 3.5
    assert meta == {}
