import numpy as np
import pytest

from hierdrive.checkpoint import CheckpointError, load_checkpoint, save_checkpoint


def test_roundtrip(tmp_path):
    path = tmp_path / "m.ckpt"
    meta = {"kind": "test", "config": {"dim": 8}}
    arrays = {
        "param/a": np.arange(6.0).reshape(2, 3),
        "param/b": np.array([3.5]),
        "opt/step": np.array([7.0]),
        "scalar": np.float64(2.25).reshape(()),
    }
    save_checkpoint(path, meta, arrays)
    meta2, arrays2 = load_checkpoint(path)
    assert meta2 == meta
    assert list(arrays2) == list(arrays)
    for k in arrays:
        assert np.array_equal(np.asarray(arrays[k]), arrays2[k]), k
        assert arrays2[k].shape == np.asarray(arrays[k]).shape


def test_deterministic_bytes(tmp_path):
    a = {"x": np.linspace(0, 1, 17), "y": np.ones((3, 3))}
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, {"seed": 0}, a)
    save_checkpoint(p2, {"seed": 0}, a)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"nope" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_truncated_file(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {}, {"a": np.ones(100)})
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError, match="truncated|corrupt"):
        load_checkpoint(path)


def test_unsupported_version(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {}, {})
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)
