"""Mother dataset and episodic task sampling.

An episode draws N semantic classes from the mother pool, relabels them with
a uniformly random bijection onto numeric labels 1..N, and splits each class
into K support and Q query examples. Numeric labels carry no semantics; the
same semantic class can land on a different numeric label next episode.

All labels and class ids crossing module boundaries are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SamplingError, ValidationError
from .nn import Array, as_batch


@dataclass
class MotherDataset:
    """Pool of M semantic classes, each a stack of d-dimensional feature vectors."""

    feature_dim: int
    classes: list[Array]  # classes[c] has shape (n_c, d); semantic id is c+1
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.names:
            self.names = [f"class{c + 1:03d}" for c in range(len(self.classes))]
        if len(self.names) != len(self.classes):
            raise ValidationError("names and classes differ in length")
        for c, x in enumerate(self.classes):
            self.classes[c] = as_batch(x, self.feature_dim, f"class {self.names[c]}")

    @property
    def class_count(self) -> int:
        return len(self.classes)


@dataclass
class EpisodeSpec:
    """How episodes are drawn: cardinality pool, shots, queries per class."""

    cardinality_pool: tuple[int, ...] = (3, 5, 7, 9)
    shots: int = 5
    queries: int = 15
    fixed_n: int | None = None

    def __post_init__(self):
        pool = tuple(sorted(set(int(n) for n in self.cardinality_pool)))
        if not pool:
            raise ValidationError("cardinality pool must be non-empty")
        if min(pool) < 1:
            raise ValidationError("cardinalities must be >= 1")
        self.cardinality_pool = pool
        if self.shots < 1:
            raise ValidationError("shots must be >= 1")
        if self.queries < 1:
            raise ValidationError("queries must be >= 1")
        if self.fixed_n is not None:
            if self.fixed_n < 1:
                raise ValidationError("fixed_n must be >= 1 when set")
            if pool != (self.fixed_n,):
                raise ValidationError(
                    f"fixed_n={self.fixed_n} requires the singleton pool ({self.fixed_n},), got {pool}"
                )

    @property
    def max_cardinality(self) -> int:
        if self.fixed_n is not None:
            return self.fixed_n
        return max(self.cardinality_pool)


@dataclass
class Task:
    """One episode: support/query sets with numeric labels 1..n."""

    n: int
    support_x: Array  # (n*K, d)
    support_y: Array  # (n*K,) ints in 1..n
    query_x: Array  # (n*Q, d)
    query_y: Array  # (n*Q,) ints in 1..n
    numeric_to_semantic: dict[int, int]  # numeric label -> semantic class id


def check_pool_fits(spec: EpisodeSpec, output_width: int):
    """Raised at model binding: every cardinality the spec can draw must fit the head."""
    if spec.max_cardinality > output_width:
        raise ConfigError(
            f"cardinality {spec.max_cardinality} exceeds output width {output_width}"
        )


def sample_cardinality(spec: EpisodeSpec, rng: np.random.Generator) -> int:
    """Uniform draw from the pool, or the fixed cardinality when one is set.

    Singleton pools and fixed_n consume no randomness, so a fixed-way run and
    an any-way run with a one-element pool share the same rng stream.
    """
    if spec.fixed_n is not None:
        return spec.fixed_n
    pool = spec.cardinality_pool
    if len(pool) == 1:
        return pool[0]
    return int(pool[rng.integers(len(pool))])


def sample_task(ds: MotherDataset, n: int, k: int, q: int, rng: np.random.Generator) -> Task:
    """Draw one episode: n classes, a random numeric relabeling, K+Q rows per class."""
    if n < 1:
        raise SamplingError(f"cardinality must be >= 1, got {n}")
    if ds.class_count < n:
        raise SamplingError(f"dataset has {ds.class_count} classes, episode needs {n}")
    # choice without replacement returns a uniformly ordered sample, so taking
    # position i as numeric label i+1 is itself a uniform random bijection
    chosen = rng.choice(ds.class_count, size=n, replace=False)
    sx, sy, qx, qy = [], [], [], []
    mapping: dict[int, int] = {}
    for label, c in enumerate(chosen, start=1):
        rows = ds.classes[c]
        if rows.shape[0] < k + q:
            raise SamplingError(
                f"class {ds.names[c]} has {rows.shape[0]} examples, episode needs {k + q}"
            )
        idx = rng.choice(rows.shape[0], size=k + q, replace=False)
        sx.append(rows[idx[:k]])
        qx.append(rows[idx[k:]])
        sy.append(np.full(k, label, dtype=np.int64))
        qy.append(np.full(q, label, dtype=np.int64))
        mapping[label] = int(c) + 1
    return Task(
        n=n,
        support_x=np.concatenate(sx, axis=0),
        support_y=np.concatenate(sy),
        query_x=np.concatenate(qx, axis=0),
        query_y=np.concatenate(qy),
        numeric_to_semantic=mapping,
    )


def batch_tasks(ds: MotherDataset, spec: EpisodeSpec, batch_size: int, rng: np.random.Generator) -> list[Task]:
    """Independent tasks for one meta-batch; each draws its own cardinality."""
    tasks = []
    for _ in range(batch_size):
        n = sample_cardinality(spec, rng)
        tasks.append(sample_task(ds, n, spec.shots, spec.queries, rng))
    return tasks
