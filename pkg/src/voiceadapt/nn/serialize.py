"""Versioned weight files.

Layout: one line of UTF-8 JSON (the header, human readable), a newline, then
the concatenated parameter arrays as little-endian float64 in row-major order.
The header lists every array with its layer index, name, shape and byte
offset, plus a SHA-256 of the payload so truncation or bit rot is detected
before any model object is built.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..errors import CorruptWeightsError, UnsupportedVersionError
from . import layers as L
from .model import WEIGHTS_VERSION, Layer, ModelWeights

FORMAT = "voiceadapt-weights"
_DTYPE = np.dtype("<f8")


def save_weights(weights: ModelWeights, path) -> None:
    tensors = []
    chunks = []
    offset = 0
    for i, layer in enumerate(weights.layers):
        for group, arrays in (("param", layer.params), ("buffer", layer.buffers)):
            for name, arr in arrays.items():
                data = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes(order="C")
                tensors.append({"layer": i, "group": group, "name": name,
                                "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
                chunks.append(data)
                offset += len(data)
    payload = b"".join(chunks)
    header = {
        "format": FORMAT,
        "version": weights.version,
        "dtype": "<f8",
        "input_shape": list(weights.input_shape),
        "layers": [layer.spec.to_dict() for layer in weights.layers],
        "tensors": tensors,
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
        "training_meta": weights.training_meta,
        "metadata": weights.metadata,
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)
    tmp.replace(path)


def load_weights(path, dtype=np.float64) -> ModelWeights:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CorruptWeightsError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptWeightsError(f"{path}: unreadable header ({exc})") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise CorruptWeightsError(f"{path}: not a {FORMAT} file")
    if header.get("version") != WEIGHTS_VERSION:
        raise UnsupportedVersionError(
            f"{path}: unsupported version {header.get('version')} (this build reads {WEIGHTS_VERSION})"
        )
    payload = raw[nl + 1:]
    if len(payload) != header["payload_bytes"]:
        raise CorruptWeightsError(
            f"{path}: payload is {len(payload)} bytes, header says {header['payload_bytes']} (truncated?)"
        )
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CorruptWeightsError(f"{path}: checksum mismatch")

    specs = [L.LayerSpec.from_dict(d) for d in header["layers"]]
    layers = [Layer(spec) for spec in specs]
    for t in header["tensors"]:
        arr = np.frombuffer(payload, dtype=_DTYPE, count=t["nbytes"] // 8, offset=t["offset"])
        arr = arr.reshape(t["shape"]).astype(dtype)
        layer = layers[t["layer"]]
        (layer.params if t["group"] == "param" else layer.buffers)[t["name"]] = arr
    for i, (spec, layer) in enumerate(zip(specs, layers)):
        for group, expected in (("param", L.param_shapes(spec)), ("buffer", L.buffer_shapes(spec))):
            got = layer.params if group == "param" else layer.buffers
            if set(got) != set(expected) or any(tuple(got[k].shape) != tuple(s) for k, s in expected.items()):
                raise CorruptWeightsError(
                    f"{path}: layer {i} ({spec.kind}) {group} shapes "
                    f"{ {k: tuple(v.shape) for k, v in got.items()} } do not match spec {expected}"
                )
    input_shape = tuple(None if s is None else int(s) for s in header["input_shape"])
    return ModelWeights(layers, input_shape, version=header["version"],
                        training_meta=header.get("training_meta", {}),
                        metadata=header.get("metadata", {}))
