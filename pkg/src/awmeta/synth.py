"""Seeded Gaussian-cluster mother datasets and a bit-exact feature-file format.

Class means sit uniformly on a sphere whose radius, together with the noise
width, dials task difficulty precisely. A shifted variant rotates the means
with a seeded orthogonal map and rescales the noise, giving a controlled
distribution shift for transfer experiments.

Feature files carry any externally computed embeddings: a text header, then
per class a name line followed by raw little-endian 64-bit floats.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .episodes import MotherDataset
from .errors import FeatureFileError, ValidationError
from .rng import make_rng

MAGIC = "AWMETA1"


@dataclass
class SynthSpec:
    """Parameters of one synthetic mother dataset."""

    m: int  # classes
    d: int  # feature dimension
    per_class: int
    mean_scale: float = 3.0
    noise_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ValidationError("synthetic dataset needs at least 2 classes")
        if self.d < 1:
            raise ValidationError("feature dimension must be >= 1")
        if self.per_class < 1:
            raise ValidationError("per_class must be >= 1")
        if self.noise_sigma <= 0:
            raise ValidationError("noise_sigma must be > 0")
        if self.mean_scale < 0:
            raise ValidationError("mean_scale must be >= 0")


def _sphere_means(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    raw = rng.normal(size=(spec.m, spec.d))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    return spec.mean_scale * raw / norms


def make_gaussian_mother(spec: SynthSpec) -> MotherDataset:
    """M isotropic Gaussian clusters with means uniform on the radius-mean_scale sphere."""
    rng = make_rng(spec.seed, "mother")
    means = _sphere_means(spec, rng)
    classes = [
        means[c] + rng.normal(0.0, spec.noise_sigma, size=(spec.per_class, spec.d))
        for c in range(spec.m)
    ]
    return MotherDataset(feature_dim=spec.d, classes=classes)


def _orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    # sign-canonical QR so the map depends only on the seed
    return q * np.sign(np.diag(r))


def make_shifted(base: SynthSpec, rotation_seed: int, sigma_scale: float = 1.0) -> MotherDataset:
    """The base dataset's means under a seeded orthogonal rotation, with rescaled noise.

    The rotation preserves every pairwise mean distance, so the shifted
    dataset is exactly as separable as the base; only the frame and the
    noise width change. Examples are drawn fresh.
    """
    if sigma_scale <= 0:
        raise ValidationError("sigma_scale must be > 0")
    rotation = _orthogonal(base.d, make_rng(rotation_seed, "rotation"))
    means = _sphere_means(base, make_rng(base.seed, "mother")) @ rotation
    rng = make_rng(base.seed, "shifted", rotation_seed)
    sigma = base.noise_sigma * sigma_scale
    classes = [
        means[c] + rng.normal(0.0, sigma, size=(base.per_class, base.d))
        for c in range(base.m)
    ]
    return MotherDataset(feature_dim=base.d, classes=classes)


def save_features(ds: MotherDataset, path) -> None:
    """Write a feature file; the round trip through load_features is bit-exact."""
    if ds.class_count == 0:
        raise ValidationError("refusing to write a dataset with no classes")
    for name in ds.names:
        if not name or any(ch.isspace() for ch in name):
            raise ValidationError(f"class name {name!r} must be non-empty without whitespace")
    with open(path, "wb") as handle:
        handle.write(f"{MAGIC} {ds.class_count} {ds.feature_dim}\n".encode("ascii"))
        for name, rows in zip(ds.names, ds.classes):
            handle.write(f"CLASS {name} {rows.shape[0]}\n".encode("ascii"))
            handle.write(np.ascontiguousarray(rows, dtype="<f8").tobytes())


def _read_line(data: bytes, pos: int, what: str) -> tuple[str, int]:
    end = data.find(b"\n", pos)
    if end < 0:
        raise FeatureFileError(f"missing newline after {what}", offset=pos)
    try:
        return data[pos:end].decode("ascii"), end + 1
    except UnicodeDecodeError as exc:
        raise FeatureFileError(f"{what} is not ascii", offset=pos) from exc


def load_features(path) -> MotherDataset:
    """Read a feature file written by save_features; never returns a partial dataset."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FeatureFileError(f"cannot read {path}: {exc}", offset=0) from exc
    header, pos = _read_line(data, 0, "header")
    parts = header.split()
    if len(parts) != 3 or parts[0] != MAGIC:
        raise FeatureFileError(f"bad magic/header {header!r}, expected '{MAGIC} M d'", offset=0)
    try:
        m, d = int(parts[1]), int(parts[2])
    except ValueError as exc:
        raise FeatureFileError(f"non-integer counts in header {header!r}", offset=0) from exc
    if m < 1 or d < 1:
        raise FeatureFileError(f"header declares m={m}, d={d}", offset=0)
    names: list[str] = []
    classes: list[np.ndarray] = []
    for _ in range(m):
        line_at = pos
        line, pos = _read_line(data, pos, "class header")
        fields = line.split()
        if len(fields) != 3 or fields[0] != "CLASS":
            raise FeatureFileError(f"bad class header {line!r}", offset=line_at)
        try:
            count = int(fields[2])
        except ValueError as exc:
            raise FeatureFileError(f"non-integer count in {line!r}", offset=line_at) from exc
        if count < 1:
            raise FeatureFileError(f"class {fields[1]!r} declares {count} rows", offset=line_at)
        need = count * d * 8
        if len(data) - pos < need:
            raise FeatureFileError(
                f"class {fields[1]!r} payload truncated: need {need} bytes, have {len(data) - pos}",
                offset=pos,
            )
        rows = np.frombuffer(data, dtype="<f8", count=count * d, offset=pos).reshape(count, d)
        names.append(fields[1])
        classes.append(rows.astype(np.float64, copy=True))
        pos += need
    if pos != len(data):
        raise FeatureFileError(f"{len(data) - pos} trailing bytes after the last class", offset=pos)
    return MotherDataset(feature_dim=d, classes=classes, names=names)
