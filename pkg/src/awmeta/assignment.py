"""Label-to-node assignment sets, the any-way loss, and logit ensembling.

A width-O head serves an N-class episode through J = floor(O/N) disjoint
index vectors s_1..s_J; position i of s_j names the output node that plays
numeric label i for assignment j. The episode loss is the sum of the J
per-assignment cross entropies, and at test time the J extracted logit
vectors are ensembled into a single N-way decision.

Assignment entries are 1-based everywhere outside numpy indexing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ValidationError
from .nn import Array, as_batch, check_targets, softmax, softmax_cross_entropy

ENSEMBLE_METHODS = ("original", "softmax", "max")


@dataclass
class AssignmentSet:
    """J disjoint label-to-node index vectors for one episode."""

    o: int
    n: int
    vectors: Array  # (J, n) ints in 1..o

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != self.n:
            raise ValidationError(f"vectors must be (J, {self.n}), got {v.shape}")
        if v.size and (v.min() < 1 or v.max() > self.o):
            raise ValidationError(f"assignment entries must lie in 1..{self.o}")
        flat = v.ravel()
        if len(set(flat.tolist())) != flat.size:
            raise ValidationError("assignments overlap or repeat entries")
        self.vectors = v

    @property
    def j(self) -> int:
        return self.vectors.shape[0]

    @property
    def unassigned(self) -> list[int]:
        used = set(self.vectors.ravel().tolist())
        return [node for node in range(1, self.o + 1) if node not in used]

    def to_line(self) -> str:
        """One-line log form: "O N J ; s1 ; s2 ; ..." with 1-based entries."""
        parts = [f"{self.o} {self.n} {self.j}"]
        for row in self.vectors:
            parts.append(" ".join(str(int(e)) for e in row))
        return " ; ".join(parts)

    @classmethod
    def from_line(cls, line: str) -> "AssignmentSet":
        parts = [p.strip() for p in line.strip().split(";")]
        try:
            o, n, j = (int(t) for t in parts[0].split())
            vectors = [[int(t) for t in p.split()] for p in parts[1:]]
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"malformed assignment line: {line!r}") from exc
        if len(vectors) != j:
            raise ValidationError(f"line declares J={j} but carries {len(vectors)} vectors")
        return cls(o=o, n=n, vectors=np.asarray(vectors, dtype=np.int64).reshape(j, n))


def generate_assignments(o: int, n: int, rng: np.random.Generator) -> AssignmentSet:
    """Chop a uniform random permutation of 1..O into J blocks of N nodes."""
    if n < 1:
        raise DomainError(f"cardinality must be >= 1, got {n}")
    if n > o:
        raise DomainError(f"cardinality {n} exceeds output width {o}")
    j = o // n
    perm = rng.permutation(o) + 1
    return AssignmentSet(o=o, n=n, vectors=perm[: j * n].reshape(j, n))


def extract(s_j, v) -> Array:
    """Index a length-O vector with the 1-based assignment vector s_j."""
    s = np.asarray(s_j, dtype=np.int64)
    vec = np.asarray(v, dtype=np.float64)
    if vec.ndim != 1:
        raise DomainError(f"extract expects a vector, got shape {vec.shape}")
    if s.size and (s.min() < 1 or s.max() > vec.size):
        raise DomainError(f"assignment entries must lie in 1..{vec.size}")
    return vec[s - 1]


def any_way_loss(aset: AssignmentSet, logits, targets) -> tuple[float, Array]:
    """Sum of per-assignment cross entropies plus its gradient on the full head.

    Each assignment's softmax normalizes over its own N extracted logits only;
    gradients scatter back to exactly those nodes, so unassigned columns of
    dlogits are identically zero. Within an assignment the terms are evaluated
    in ascending node order, which keeps the loss bitwise invariant under a
    joint relabeling of positions and target columns.
    """
    z = as_batch(logits, aset.o, "logits")
    t = check_targets(targets, aset.n)
    total = 0.0
    dlogits = np.zeros_like(z)
    for s in aset.vectors:
        cols = s - 1
        order = np.argsort(cols)
        loss_j, dsub = softmax_cross_entropy(z[:, cols[order]], t[:, order])
        total += loss_j
        dlogits[:, cols[order]] = dsub
    return total, dlogits


def ensembled_logit(aset: AssignmentSet, logits, method: str = "original") -> Array:
    """Aggregate per-assignment logit vectors into one N-way score per row.

    original: sum of extracted logits; softmax: sum of per-assignment softmax
    outputs; max: elementwise maximum over assignments.
    """
    if method not in ENSEMBLE_METHODS:
        raise ConfigError(f"unknown ensemble method {method!r}; pick from {ENSEMBLE_METHODS}")
    z = as_batch(logits, aset.o, "logits")
    members = [z[:, s - 1] for s in aset.vectors]
    if method == "softmax":
        members = [softmax(m) for m in members]
    if method == "max":
        out = members[0].copy()
        for m in members[1:]:
            np.maximum(out, m, out=out)
        return out
    out = members[0].copy()
    for m in members[1:]:
        out += m
    return out


def predict(ensembled) -> Array:
    """Per-row argmax as a 1-based numeric label; ties go to the lowest label."""
    e = as_batch(ensembled, name="ensembled logits")
    return np.argmax(e, axis=1).astype(np.int64) + 1
