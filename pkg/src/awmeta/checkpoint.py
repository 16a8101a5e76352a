"""Model checkpoints: a one-line JSON header, then raw parameter buffers.

The header names every buffer with its shape; the payload is the buffers'
little-endian 64-bit floats concatenated in header order. Identical models
therefore serialize to identical bytes, which the rerun-determinism checks
rely on.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import CheckpointError
from .maml import MetaModel
from .nn import LinearHead, MlpEncoder
from .protonet import ProtoModel, PrototypeMemory

FORMAT = "awmeta-checkpoint"
VERSION = 1


def _encoder_buffers(encoder: MlpEncoder) -> list[tuple[str, np.ndarray]]:
    out = []
    for i, (w, b) in enumerate(zip(encoder.weights, encoder.biases)):
        out.append((f"enc_w{i}", w))
        out.append((f"enc_b{i}", b))
    return out


def _model_buffers(model) -> list[tuple[str, np.ndarray]]:
    if isinstance(model, MetaModel):
        bufs = _encoder_buffers(model.encoder)
        bufs += [("anyway_w", model.anyway_head.weight), ("anyway_b", model.anyway_head.bias)]
        if model.semantic_head is not None:
            bufs += [("sem_w", model.semantic_head.weight), ("sem_b", model.semantic_head.bias)]
        return bufs
    if isinstance(model, ProtoModel):
        bufs = _encoder_buffers(model.encoder)
        if model.memory is not None:
            bufs.append(("memory", model.memory.prototypes))
        return bufs
    raise CheckpointError(f"cannot checkpoint a {type(model).__name__}")


def save_checkpoint(model, path) -> None:
    """Serialize a MetaModel or ProtoModel; rewriting the same model is byte-identical."""
    buffers = _model_buffers(model)
    header = {
        "format": FORMAT,
        "version": VERSION,
        "buffers": [[name, list(arr.shape)] for name, arr in buffers],
    }
    if isinstance(model, MetaModel):
        header["backend"] = "maml"
        header["layer_dims"] = model.encoder.layer_dims
        header["o"] = model.o
        header["semantic_classes"] = (
            None if model.semantic_head is None else model.semantic_head.out_dim
        )
    else:
        header["backend"] = "protonet"
        header["layer_dims"] = model.encoder.layer_dims
        if model.memory is not None:
            header["memory"] = {
                "class_count": model.memory.class_count,
                "ema_rate": model.memory.ema_rate,
                "seen": [int(s) for s in model.memory.seen],
            }
        else:
            header["memory"] = None
    with open(path, "wb") as handle:
        handle.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii"))
        handle.write(b"\n")
        for _, arr in buffers:
            handle.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_buffers(data: bytes, pos: int, declared: list) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for entry in declared:
        if not (isinstance(entry, list) and len(entry) == 2):
            raise CheckpointError(f"malformed buffer declaration {entry!r}")
        name, shape = entry[0], tuple(int(s) for s in entry[1])
        count = int(np.prod(shape)) if shape else 1
        need = count * 8
        if len(data) - pos < need:
            raise CheckpointError(f"buffer {name!r} truncated: need {need} bytes, have {len(data) - pos}")
        out[name] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).astype(
            np.float64, copy=True
        )
        pos += need
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after the last buffer")
    return out


def load_checkpoint(path):
    """Rebuild the saved model; returns a MetaModel or a ProtoModel by backend."""
    try:
        with open(path, "rb") as handle:
            data = handle.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    nl = data.find(b"\n")
    if nl < 0:
        raise CheckpointError("missing header line")
    try:
        header = json.loads(data[:nl].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from exc
    if header.get("format") != FORMAT:
        raise CheckpointError(f"not a checkpoint file (format {header.get('format')!r})")
    if header.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')!r}")
    buffers = _read_buffers(data, nl + 1, header.get("buffers", []))
    layer_dims = header.get("layer_dims")
    layers = len(layer_dims) - 1
    try:
        encoder = MlpEncoder(
            [buffers[f"enc_w{i}"] for i in range(layers)],
            [buffers[f"enc_b{i}"] for i in range(layers)],
        )
        backend = header.get("backend")
        if backend == "maml":
            anyway = LinearHead(buffers["anyway_w"], buffers["anyway_b"])
            semantic = None
            if header.get("semantic_classes") is not None:
                semantic = LinearHead(buffers["sem_w"], buffers["sem_b"])
            return MetaModel(encoder=encoder, anyway_head=anyway, semantic_head=semantic)
        if backend == "protonet":
            memory = None
            mem_header = header.get("memory")
            if mem_header is not None:
                memory = PrototypeMemory(
                    prototypes=buffers["memory"],
                    seen=np.asarray(mem_header["seen"], dtype=bool),
                    ema_rate=float(mem_header["ema_rate"]),
                )
            return ProtoModel(encoder=encoder, memory=memory)
    except KeyError as exc:
        raise CheckpointError(f"header declares no buffer {exc.args[0]!r}") from exc
    raise CheckpointError(f"unknown backend {header.get('backend')!r}")
