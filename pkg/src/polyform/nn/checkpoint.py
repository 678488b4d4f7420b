"""Checkpoints: one JSON header line, then float64 little-endian values.

The blob holds every parameter in ``model.params()`` order followed by the
normalisation running statistics in ``model.buffers()`` order.
"""
from __future__ import annotations

import json

import numpy as np

from .._fs import atomic_write
from .model import MultipolygonGNN

FORMAT = "polyform-checkpoint-v1"


def dumps(model: MultipolygonGNN, extra: dict | None = None) -> bytes:
    entries = model.params() + model.buffers()
    header = {
        "format": FORMAT,
        "model": model.config(),
        "arrays": [[name, list(a.shape)] for name, a in entries],
        "n_params": len(model.params()),
    }
    if extra:
        header.update(extra)
    blob = np.concatenate([a.ravel() for _, a in entries]).astype("<f8").tobytes()
    return json.dumps(header).encode() + b"\n" + blob


def loads(data: bytes) -> tuple[MultipolygonGNN, dict]:
    line, _, blob = data.partition(b"\n")
    header = json.loads(line)
    if header.get("format") != FORMAT:
        raise ValueError(f"not a {FORMAT} file")
    model = MultipolygonGNN(**header["model"])
    values = np.frombuffer(blob, dtype="<f8")
    entries = model.params() + model.buffers()
    expected = [[n, list(a.shape)] for n, a in entries]
    if expected != header["arrays"] or values.size != sum(a.size for _, a in entries):
        raise ValueError("checkpoint layout does not match the model it declares")
    offset = 0
    for _, a in entries:
        a[...] = values[offset:offset + a.size].reshape(a.shape)
        offset += a.size
    return model, header


def save_checkpoint(model: MultipolygonGNN, path, extra: dict | None = None) -> None:
    atomic_write(path, dumps(model, extra))


def load_checkpoint(path) -> tuple[MultipolygonGNN, dict]:
    with open(path, "rb") as fh:
        return loads(fh.read())
