"""Versioned checkpoint container.

Layout::

    MAGIC (12 bytes) | version (u32 LE) | header length (u64 LE) | header JSON | blobs

The header is canonical JSON (sorted keys, no whitespace) describing a nested
structure of dicts, lists and scalars in which every tensor or array is
replaced by a reference to a raw little-endian blob. Writing the same payload
twice produces identical bytes.
"""

from __future__ import annotations

import io
import json
import os
import struct
from pathlib import Path
from typing import Any, Union

import numpy as np
import torch

MAGIC = b"MASKOFFCKPT\n"
FORMAT_VERSION = 1

_TORCH_DTYPES = {
    "float32": torch.float32, "float64": torch.float64, "float16": torch.float16,
    "int64": torch.int64, "int32": torch.int32, "uint8": torch.uint8, "bool": torch.bool,
}


class CheckpointError(ValueError):
    pass


def _encode(obj: Any, blobs: list) -> Any:
    if isinstance(obj, torch.Tensor):
        t = obj.detach().cpu().contiguous()
        dtype = str(t.dtype).replace("torch.", "")
        if dtype not in _TORCH_DTYPES:
            raise CheckpointError(f"unsupported tensor dtype {t.dtype}")
        blobs.append(t.numpy().astype(t.numpy().dtype.newbyteorder("<"), copy=False).tobytes())
        return {"__tensor__": len(blobs) - 1, "dtype": dtype, "shape": list(t.shape)}
    if isinstance(obj, np.ndarray):
        arr = np.ascontiguousarray(obj)
        blobs.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
        return {"__array__": len(blobs) - 1, "dtype": arr.dtype.str.lstrip("<>|="), "shape": list(arr.shape)}
    if isinstance(obj, dict):
        if all(isinstance(k, str) for k in obj):
            # sorted so blob numbering (and hence the bytes) is canonical
            return {k: _encode(obj[k], blobs) for k in sorted(obj)}
        return {"__items__": [[_encode(k, blobs), _encode(v, blobs)] for k, v in obj.items()]}
    if isinstance(obj, tuple):
        return {"__tuple__": [_encode(v, blobs) for v in obj]}
    if isinstance(obj, list):
        return [_encode(v, blobs) for v in obj]
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise CheckpointError(f"cannot serialize {type(obj).__name__}")


def _decode(obj: Any, blobs: list) -> Any:
    if isinstance(obj, list):
        return [_decode(v, blobs) for v in obj]
    if not isinstance(obj, dict):
        return obj
    if "__tensor__" in obj:
        data = np.frombuffer(blobs[obj["__tensor__"]], dtype=np.dtype(obj["dtype"]).newbyteorder("<"))
        arr = data.astype(np.dtype(obj["dtype"]), copy=True).reshape(obj["shape"])
        return torch.from_numpy(arr)
    if "__array__" in obj:
        data = np.frombuffer(blobs[obj["__array__"]], dtype=np.dtype(obj["dtype"]).newbyteorder("<"))
        return data.astype(np.dtype(obj["dtype"]), copy=True).reshape(obj["shape"])
    if "__items__" in obj:
        return {_decode(k, blobs): _decode(v, blobs) for k, v in obj["__items__"]}
    if "__tuple__" in obj:
        return tuple(_decode(v, blobs) for v in obj["__tuple__"])
    return {k: _decode(v, blobs) for k, v in obj.items()}


def dumps(payload: dict) -> bytes:
    blobs: list = []
    tree = _encode(payload, blobs)
    index, offset = [], 0
    for b in blobs:
        index.append([offset, len(b)])
        offset += len(b)
    header = json.dumps({"blobs": index, "tree": tree}, sort_keys=True,
                        separators=(",", ":"), allow_nan=False).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
    buf.write(header)
    for b in blobs:
        buf.write(b)
    return buf.getvalue()


def loads(data: bytes) -> dict:
    if not data.startswith(MAGIC):
        raise CheckpointError("not a maskoff checkpoint (bad magic)")
    pos = len(MAGIC)
    version, hlen = struct.unpack_from("<IQ", data, pos)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version} (expected {FORMAT_VERSION})")
    pos += struct.calcsize("<IQ")
    header = json.loads(data[pos: pos + hlen].decode("utf-8"))
    base = pos + hlen
    blobs = [data[base + off: base + off + n] for off, n in header["blobs"]]
    if blobs and base + header["blobs"][-1][0] + header["blobs"][-1][1] != len(data):
        raise CheckpointError("checkpoint is truncated or has trailing data")
    return _decode(header["tree"], blobs)


def save_checkpoint(path: Union[str, os.PathLike], payload: dict) -> Path:
    """Atomically write ``payload`` to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(payload))
    os.replace(tmp, path)
    return path


def load_checkpoint(path: Union[str, os.PathLike]) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return loads(path.read_bytes())


def prefixed(state: dict, prefix: str) -> dict:
    return {f"{prefix}.{k}": v for k, v in state.items()}


def unprefixed(params: dict, prefix: str) -> dict:
    p = prefix + "."
    return {k[len(p):]: v for k, v in params.items() if k.startswith(p)}
