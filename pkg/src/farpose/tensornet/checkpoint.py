"""Binary checkpoints.

Layout: the 5-byte magic ``FPKT1``, a little-endian uint64 giving the manifest
length, the UTF-8 JSON manifest, then every parameter as little-endian float64
in manifest order. Manifest offsets are relative to the start of the data block.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from ..errors import ConfigError

MAGIC = b"FPKT1"


def dumps(state, meta=None):
    entries = []
    blobs = []
    offset = 0
    for name, arr in state.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": a.nbytes})
        blobs.append(a.tobytes())
        offset += a.nbytes
    manifest = json.dumps({"params": entries, "meta": meta or {}}, sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(manifest)) + manifest + b"".join(blobs)


def loads(buf):
    """Return (state dict, meta dict)."""
    if buf[:5] != MAGIC:
        raise ConfigError("not a farpose checkpoint (bad magic)")
    (n,) = struct.unpack("<Q", buf[5:13])
    manifest = json.loads(buf[13:13 + n].decode("utf-8"))
    data = memoryview(buf)[13 + n:]
    state = {}
    for e in manifest["params"]:
        lo, hi = e["offset"], e["offset"] + e["nbytes"]
        if hi > len(data):
            raise ConfigError(f"truncated checkpoint at {e['name']}")
        state[e["name"]] = np.frombuffer(data[lo:hi], dtype="<f8").astype(np.float64).reshape(e["shape"])
    return state, manifest.get("meta", {})


def save(path, state, meta=None):
    """Write atomically: temp file in the target directory, then rename."""
    buf = dumps(state, meta)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(buf)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path):
    with open(path, "rb") as f:
        return loads(f.read())
