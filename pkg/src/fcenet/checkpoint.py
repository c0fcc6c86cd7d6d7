"""Self-describing binary checkpoint.

Layout (all integers little-endian):
  magic "FCEN" | u32 version | u32 json-length | canonical config JSON
  | u32 tensor-count | tensor records | u8 optim-flag [| optim section]

Tensor record: u16 name-length | utf-8 name | u8 dtype-tag (0 = f32)
  | u8 rank | u32 dims... | payload (little-endian f32).

Optim section: u64 step | f64 lr_init, lr_min | u64 total_steps
  | f64 beta1, beta2, adam_eps | u32 count | tensor records (m then v per
  parameter, names suffixed ".m"/".v").

Writes are atomic (temp file + rename); identical state produces identical
bytes, so write -> read -> write roundtrips byte-exactly.
"""

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"FCEN"
VERSION = 1
DTYPE_F32 = 0


def _pack_tensor(buf, name, arr):
    nb = name.encode("utf-8")
    if len(nb) > 0xFFFF:
        raise ValueError("tensor name too long")
    buf += struct.pack("<H", len(nb))
    buf += nb
    buf += struct.pack("<BB", DTYPE_F32, arr.ndim)
    buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
    buf += np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _read(fh, n):
    b = fh.read(n)
    if len(b) != n:
        raise ValueError("corrupt checkpoint: truncated file")
    return b


def _unpack_tensor(fh):
    (nlen,) = struct.unpack("<H", _read(fh, 2))
    name = _read(fh, nlen).decode("utf-8")
    tag, rank = struct.unpack("<BB", _read(fh, 2))
    if tag != DTYPE_F32:
        raise ValueError(f"corrupt checkpoint: unknown dtype tag {tag}")
    dims = struct.unpack(f"<{rank}I", _read(fh, 4 * rank))
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    arr = np.frombuffer(_read(fh, 4 * count), dtype="<f4").reshape(dims)
    return name, arr.astype(np.float32)


def _atomic_write(path, payload):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, config_dict, named_tensors, optim=None):
    """named_tensors: ordered (name, ndarray) pairs; optim: OptimState or None."""
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", VERSION)
    cfg = json.dumps(config_dict, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf += struct.pack("<I", len(cfg))
    buf += cfg
    named_tensors = list(named_tensors)
    names = [n for n, _ in named_tensors]
    if len(set(names)) != len(names):
        raise ValueError("duplicate tensor names")
    buf += struct.pack("<I", len(named_tensors))
    for name, arr in named_tensors:
        _pack_tensor(buf, name, np.asarray(arr))
    if optim is None:
        buf += struct.pack("<B", 0)
    else:
        buf += struct.pack("<B", 1)
        buf += struct.pack("<Q", optim.step)
        buf += struct.pack("<dd", optim.lr_init, optim.lr_min)
        buf += struct.pack("<Q", optim.total_steps)
        buf += struct.pack("<ddd", optim.beta1, optim.beta2, optim.adam_eps)
        buf += struct.pack("<I", len(optim.m))
        for (name, _), m, v in zip(named_tensors, optim.m, optim.v):
            _pack_tensor(buf, name + ".m", m)
            _pack_tensor(buf, name + ".v", v)
    _atomic_write(path, bytes(buf))


def load_checkpoint(path):
    """-> (config_dict, {name: f32 array}, optim_dict | None)."""
    with open(path, "rb") as fh:
        if _read(fh, 4) != MAGIC:
            raise ValueError(f"corrupt checkpoint: bad magic in {path}")
        (version,) = struct.unpack("<I", _read(fh, 4))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (clen,) = struct.unpack("<I", _read(fh, 4))
        config = json.loads(_read(fh, clen).decode("utf-8"))
        (count,) = struct.unpack("<I", _read(fh, 4))
        tensors = {}
        for _ in range(count):
            name, arr = _unpack_tensor(fh)
            if name in tensors:
                raise ValueError(f"corrupt checkpoint: duplicate tensor {name}")
            tensors[name] = arr
        (flag,) = struct.unpack("<B", _read(fh, 1))
        optim = None
        if flag == 1:
            optim = {}
            (optim["step"],) = struct.unpack("<Q", _read(fh, 8))
            optim["lr_init"], optim["lr_min"] = struct.unpack("<dd", _read(fh, 16))
            (optim["total_steps"],) = struct.unpack("<Q", _read(fh, 8))
            optim["beta1"], optim["beta2"], optim["adam_eps"] = struct.unpack(
                "<ddd", _read(fh, 24))
            (mcount,) = struct.unpack("<I", _read(fh, 4))
            moments = {}
            for _ in range(2 * mcount):
                name, arr = _unpack_tensor(fh)
                moments[name] = arr
            optim["moments"] = moments
        elif flag != 0:
            raise ValueError("corrupt checkpoint: bad optimizer flag")
        if fh.read(1):
            raise ValueError("corrupt checkpoint: trailing bytes")
    return config, tensors, optim


def load_weights_into(weights, tensors):
    """Copy checkpoint arrays into a ModelWeights (casting to its dtype)."""
    seen = set()
    for name, var in weights.named_params():
        if name not in tensors:
            raise ValueError(f"checkpoint missing tensor {name}")
        arr = tensors[name]
        if arr.shape != var.data.shape:
            raise ValueError(f"tensor {name}: shape {arr.shape} != {var.data.shape}")
        var.data = arr.astype(var.data.dtype)
        seen.add(name)
    extra = set(tensors) - seen
    if extra:
        raise ValueError(f"checkpoint has unknown tensors: {sorted(extra)[:3]}")
