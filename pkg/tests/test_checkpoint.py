import struct

import numpy as np
import pytest

from demonet.checkpoint import MAGIC, CheckpointError, load_params, save_params


def test_roundtrip(tmp_path):
    params = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b.W": np.ones((1,), np.float64),
              "scalar": np.float32(2.5)}
    save_params(tmp_path / "m.dmn", params)
    back = load_params(tmp_path / "m.dmn")
    assert list(back) == ["a", "b.W", "scalar"]
    assert np.array_equal(back["a"], params["a"]) and back["a"].dtype == np.float32
    assert back["scalar"].shape == () and back["scalar"] == 2.5


def test_layout(tmp_path):
    save_params(tmp_path / "m.dmn", {"w": np.array([[1.0, 2.0]], np.float32)})
    raw = (tmp_path / "m.dmn").read_bytes()
    expect = MAGIC + struct.pack("<I", 1) + b"w" + struct.pack("<III", 2, 1, 2) + struct.pack("<2f", 1, 2)
    assert raw == expect


def test_bad_magic(tmp_path):
    (tmp_path / "x").write_bytes(b"NOPE")
    with pytest.raises(CheckpointError, match="magic"):
        load_params(tmp_path / "x")


def test_truncated(tmp_path):
    save_params(tmp_path / "m.dmn", {"w": np.ones((4, 4), np.float32)})
    raw = (tmp_path / "m.dmn").read_bytes()
    for cut in (len(raw) - 3, 6, 12):
        (tmp_path / "t.dmn").write_bytes(raw[:cut])
        with pytest.raises(CheckpointError):
            load_params(tmp_path / "t.dmn")


def test_empty_file_after_magic(tmp_path):
    (tmp_path / "e.dmn").write_bytes(MAGIC)
    assert load_params(tmp_path / "e.dmn") == {}
