"""Binary checkpoint format: roundtrips, corruption detection, atomicity."""

import numpy as np
import pytest

from fcenet.checkpoint import (MAGIC, load_checkpoint, load_weights_into,
                               save_checkpoint)
from fcenet.network import ModelConfig, ModelWeights
from fcenet.training import OptimConfig, OptimState


def _tensors(seed=0):
    rng = np.random.default_rng(seed)
    return [("a.w", rng.standard_normal((2, 3)).astype(np.float32)),
            ("a.b", rng.standard_normal(3).astype(np.float32)),
            ("scalar", np.asarray(0.5, dtype=np.float32))]


def test_roundtrip_values_exact(tmp_path):
    path = tmp_path / "t.fcen"
    cfg = {"base_channels": 8, "patch_size": 64}
    save_checkpoint(path, cfg, _tensors())
    cfg2, tensors, optim = load_checkpoint(path)
    assert cfg2 == cfg
    assert optim is None
    for name, arr in _tensors():
        assert tensors[name].dtype == np.float32
        assert np.array_equal(tensors[name], arr)
        assert tensors[name].shape == arr.shape


def test_write_read_write_byte_identical(tmp_path):
    p1, p2 = tmp_path / "a.fcen", tmp_path / "b.fcen"
    save_checkpoint(p1, {"k": 1}, _tensors())
    cfg, tensors, _ = load_checkpoint(p1)
    save_checkpoint(p2, cfg, list(tensors.items()))
    assert p1.read_bytes() == p2.read_bytes()


def test_optim_section_roundtrip(tmp_path):
    path = tmp_path / "o.fcen"
    tensors = _tensors()
    params = [type("P", (), {"data": arr})() for _, arr in tensors]
    state = OptimState(params, OptimConfig(steps=100, lr_init=1e-3, lr_min=1e-5))
    state.step = 42
    for m in state.m:
        m += 0.25
    save_checkpoint(path, {}, tensors, optim=state)
    _, _, optim = load_checkpoint(path)
    assert optim["step"] == 42
    assert optim["lr_init"] == 1e-3 and optim["total_steps"] == 100
    assert optim["beta1"] == state.beta1 and optim["beta2"] == state.beta2
    assert np.array_equal(optim["moments"]["a.w.m"], state.m[0])
    assert np.array_equal(optim["moments"]["a.w.v"], state.v[0])


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.fcen"
    save_checkpoint(path, {}, _tensors())
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


def test_bad_version_rejected(tmp_path):
    path = tmp_path / "bad.fcen"
    save_checkpoint(path, {}, _tensors())
    raw = bytearray(path.read_bytes())
    raw[4:8] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "bad.fcen"
    save_checkpoint(path, {}, _tensors())
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(ValueError, match="trailing"):
        load_checkpoint(path)


def test_truncation_rejected(tmp_path):
    path = tmp_path / "bad.fcen"
    save_checkpoint(path, {}, _tensors())
    raw = path.read_bytes()
    path.write_bytes(raw[:len(raw) - 7])
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_duplicate_names_rejected(tmp_path):
    with pytest.raises(ValueError, match="duplicate"):
        save_checkpoint(tmp_path / "d.fcen", {},
                        [("x", np.zeros(1, np.float32)),
                         ("x", np.ones(1, np.float32))])


def test_failed_write_leaves_no_partial_file(tmp_path):
    path = tmp_path / "keep.fcen"
    save_checkpoint(path, {"v": 1}, _tensors())
    before = path.read_bytes()

    class Boom:
        def __array__(self, dtype=None):
            raise RuntimeError("boom")
        ndim = 1
        shape = (1,)

    with pytest.raises(Exception):
        save_checkpoint(path, {"v": 2}, [("x", Boom())])
    assert path.read_bytes() == before  # original intact
    assert list(tmp_path.iterdir()) == [path]  # no temp litter


def test_load_weights_into_roundtrip_and_errors(tmp_path):
    cfg = ModelConfig(4, 1, 2, 16)
    w1 = ModelWeights(cfg, np.random.default_rng(1), dtype=np.float32)
    named = [(n, v.data) for n, v in w1.named_params()]
    path = tmp_path / "m.fcen"
    save_checkpoint(path, cfg.to_dict(), named)
    _, tensors, _ = load_checkpoint(path)

    w2 = ModelWeights(cfg, np.random.default_rng(2), dtype=np.float32)
    load_weights_into(w2, tensors)
    for (n1, v1), (n2, v2) in zip(w1.named_params(), w2.named_params()):
        assert n1 == n2
        assert np.array_equal(v1.data, v2.data)

    missing = dict(tensors)
    missing.pop("head.w")
    with pytest.raises(ValueError, match="missing"):
        load_weights_into(ModelWeights(cfg, np.random.default_rng(3)), missing)

    extra = dict(tensors)
    extra["bogus"] = np.zeros(1, np.float32)
    with pytest.raises(ValueError, match="unknown"):
        load_weights_into(ModelWeights(cfg, np.random.default_rng(4)), extra)

    bad = dict(tensors)
    bad["head.w"] = np.zeros((1, 1, 1, 1), np.float32)
    with pytest.raises(ValueError, match="shape"):
        load_weights_into(ModelWeights(cfg, np.random.default_rng(5)), bad)


def test_scalar_tensor_rank_zero(tmp_path):
    path = tmp_path / "s.fcen"
    save_checkpoint(path, {}, [("t", np.asarray(2.5, dtype=np.float32))])
    _, tensors, _ = load_checkpoint(path)
    assert tensors["t"].shape == ()
    assert float(tensors["t"]) == 2.5


def test_magic_constant():
    assert MAGIC == b"FCEN"
