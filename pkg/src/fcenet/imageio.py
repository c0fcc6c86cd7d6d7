"""PNG read/write, normalized to [0,1] float32, channel-first layout."""

import os
import tempfile

import numpy as np
from PIL import Image


def read_image(path):
    """-> (1,H,W) for grayscale or (3,H,W) for color, in [0,1]."""
    with Image.open(path) as im:
        if im.mode == "I;16":
            arr = np.asarray(im, dtype=np.float64)[None] / 65535.0
        elif im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)[None] / 255.0
        else:
            if im.mode != "RGB":
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64).transpose(2, 0, 1) / 255.0
    return arr.astype(np.float32)


def write_image(path, arr, bits=8):
    """Write a (1|3,H,W) array in [0,1] as PNG; 16-bit is grayscale-only."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError("expected (1,H,W) or (3,H,W) array")
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    if bits == 16 and arr.shape[0] != 1:
        raise ValueError("16-bit output supports grayscale only")
    x = np.clip(arr, 0.0, 1.0)
    if bits == 8:
        q = np.round(x * 255.0).astype(np.uint8)
        im = (Image.fromarray(q[0], mode="L") if q.shape[0] == 1
              else Image.fromarray(q.transpose(1, 2, 0), mode="RGB"))
    else:
        q = np.round(x[0] * 65535.0).astype(np.uint16)
        im = Image.fromarray(q, mode="I;16")
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".png")
    try:
        with os.fdopen(fd, "wb") as fh:
            im.save(fh, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
