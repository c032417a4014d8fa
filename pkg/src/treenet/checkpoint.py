"""Weight checkpoints: architecture document + named float64 weight slots.

Layout (little-endian)::

    b"TNCK"                 magic
    u32                     format version (1)
    u64                     header length in bytes
    header                  UTF-8 JSON: {"architecture", "slots", "meta"}
    payload                 each slot's <f8 values back to back, in slot order

Each header slot entry gives ``name``, ``shape``, ``dilation``, ``offset``
(bytes into the payload) and ``count``. The file is a pure function of its
contents: same weights, same bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .architecture.document import describe, graph_from_document
from .errors import DataError
from .tensor_core import ConvWeights

MAGIC = b"TNCK"
VERSION = 1


def encode_checkpoint(graph, weights, meta=None):
    slots, chunks, offset = [], [], 0
    for i, w in enumerate(weights):
        data = np.ascontiguousarray(w.data, dtype="<f8")
        slots.append({"name": f"w{i}", "shape": list(data.shape), "dilation": w.dilation,
                      "offset": offset, "count": int(data.size)})
        chunks.append(data.tobytes())
        offset += data.nbytes
    header = json.dumps({"architecture": describe(graph), "slots": slots, "meta": meta or {}},
                        sort_keys=False, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(chunks)


def save_checkpoint(path, graph, weights, meta=None):
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(graph, weights, meta))


def decode_checkpoint(buf, source="checkpoint"):
    if buf[:4] != MAGIC:
        raise DataError(f"{source}: not a treenet checkpoint", offset=0)
    if len(buf) < 16:
        raise DataError(f"{source}: truncated header", offset=len(buf))
    version, hlen = struct.unpack_from("<IQ", buf, 4)
    if version != VERSION:
        raise DataError(f"{source}: unsupported checkpoint version {version}", offset=4)
    start = 16 + hlen
    if len(buf) < start:
        raise DataError(f"{source}: truncated header", offset=len(buf))
    try:
        header = json.loads(buf[16:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{source}: corrupt header ({exc})", offset=16) from exc
    graph = graph_from_document(header["architecture"])
    weights = []
    for s in header["slots"]:
        lo = start + s["offset"]
        hi = lo + 8 * s["count"]
        if hi > len(buf):
            raise DataError(f"{source}: slot {s['name']} runs past end of file", offset=len(buf))
        arr = np.frombuffer(buf, "<f8", s["count"], lo).astype(np.float64).reshape(s["shape"])
        weights.append(ConvWeights(arr, s["dilation"]))
    return graph, weights, header.get("meta", {})


def load_checkpoint(path):
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(buf, path)
