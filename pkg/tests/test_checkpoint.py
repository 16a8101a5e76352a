import json

import numpy as np
import pytest

from awmeta import (
    CheckpointError,
    MetaModel,
    MlpEncoder,
    ProtoModel,
    PrototypeMemory,
    ema_update,
    load_checkpoint,
    make_rng,
    save_checkpoint,
)


def meta_model(semantic_classes=None, seed=0):
    return MetaModel.init([4, 6, 5], 8, make_rng(seed, "ck"), semantic_classes=semantic_classes)


def test_meta_roundtrip(tmp_path):
    model = meta_model()
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert isinstance(back, MetaModel)
    assert back.o == model.o and back.semantic_head is None
    x = make_rng(1, "x").normal(size=(3, 4))
    assert np.array_equal(model.logits(x), back.logits(x))


def test_meta_roundtrip_with_semantic(tmp_path):
    model = meta_model(semantic_classes=11)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.semantic_head is not None
    assert back.semantic_head.out_dim == 11
    assert np.array_equal(back.semantic_head.weight, model.semantic_head.weight)


def test_proto_roundtrip_with_memory(tmp_path):
    rng = make_rng(2, "pk")
    mem = PrototypeMemory.init(6, 5, ema_rate=0.05)
    mem = ema_update(mem, 3, rng.normal(size=5))
    model = ProtoModel(encoder=MlpEncoder.init([4, 6, 5], rng), memory=mem)
    path = tmp_path / "p.ckpt"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert isinstance(back, ProtoModel)
    assert np.array_equal(back.memory.prototypes, mem.prototypes)
    assert back.memory.seen.tolist() == mem.seen.tolist()
    assert back.memory.ema_rate == 0.05


def test_proto_roundtrip_without_memory(tmp_path):
    model = ProtoModel(encoder=MlpEncoder.init([3, 4, 2], make_rng(3, "pk")))
    path = tmp_path / "p.ckpt"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.memory is None


def test_checkpoint_bytes_stable(tmp_path):
    model = meta_model(seed=4)
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(model, a)
    save_checkpoint(model, b)
    assert a.read_bytes() == b.read_bytes()


def test_header_is_one_json_line(tmp_path):
    model = meta_model()
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    header = path.read_bytes().split(b"\n", 1)[0]
    meta = json.loads(header)
    assert meta["format"] == "awmeta-checkpoint"
    assert meta["version"] == 1
    assert meta["backend"] == "maml"
    names = [b[0] for b in meta["buffers"]]
    assert names[0] == "enc_w0" and "anyway_w" in names


def test_corrupt_files_are_rejected(tmp_path):
    model = meta_model()
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    raw = path.read_bytes()

    truncated = tmp_path / "t.ckpt"
    truncated.write_bytes(raw[:-16])
    with pytest.raises(CheckpointError):
        load_checkpoint(truncated)

    trailing = tmp_path / "x.ckpt"
    trailing.write_bytes(raw + b"\x00" * 8)
    with pytest.raises(CheckpointError):
        load_checkpoint(trailing)

    not_json = tmp_path / "j.ckpt"
    not_json.write_bytes(b"hello\n" + raw.split(b"\n", 1)[1])
    with pytest.raises(CheckpointError):
        load_checkpoint(not_json)

    header = json.loads(raw.split(b"\n", 1)[0])
    header["version"] = 99
    versioned = tmp_path / "v.ckpt"
    versioned.write_bytes(json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
                          + b"\n" + raw.split(b"\n", 1)[1])
    with pytest.raises(CheckpointError):
        load_checkpoint(versioned)
