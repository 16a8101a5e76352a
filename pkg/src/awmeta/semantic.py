"""Semantic-information injection for the gradient-based backend.

An auxiliary C-way head classifies the true (mother-dataset) class of every
support row, restoring the semantics that random numeric relabeling erases.
Its loss joins the episode loss with weight lambda. Because numeric labels
are episode-local while semantic labels are global, mixup can blend inputs
across classes exactly as in supervised learning: the blended row gets a
soft semantic target and one extra shared numeric label.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .episodes import Task
from .errors import ValidationError
from .nn import Array, LinearHead, check_targets, one_hot, softmax_cross_entropy

log = logging.getLogger(__name__)

MIXUP_LABELS_MODES = ("shared", "per-pair")


@dataclass
class SemanticConfig:
    """Auxiliary-classifier settings for one run."""

    class_count: int  # C: total semantic classes of the training split
    lam: float = 0.5
    mixup_enabled: bool = False
    beta_alpha: float = 0.5
    mixup_count: int | None = None  # default: one mixed row per shot
    mixup_labels: str = "shared"
    to_encoder_in_outer: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError("lambda must be >= 0")
        if self.class_count < 1:
            raise ValidationError("semantic class count must be >= 1")
        if self.mixup_labels not in MIXUP_LABELS_MODES:
            raise ValidationError(f"mixup_labels must be one of {MIXUP_LABELS_MODES}")
        if self.beta_alpha <= 0:
            raise ValidationError("beta_alpha must be > 0")
        if self.mixup_count is not None and self.mixup_count < 1:
            raise ValidationError("mixup_count must be >= 1 when set")


@dataclass
class MixedBatch:
    """Mixup rows to append to an episode's support set."""

    inputs: Array  # (count, d)
    semantic_targets: Array  # (count, C), rows on the simplex
    numeric_labels: Array  # (count,) extra labels, N+1.. depending on mode
    mix_ratios: list[float]
    extra_labels: int  # how many numeric labels beyond N the episode now uses


def default_lambda(backend: str, shots: int) -> float:
    """Loss weight defaults by backend and shot count."""
    if backend == "protonet":
        return 0.01 if shots == 1 else 0.1
    return 0.1 if shots == 1 else 0.5


def default_ema_rate(shots: int) -> float:
    return 0.01 if shots == 1 else 0.05


def sample_mix_ratio(rng: np.random.Generator, beta_alpha: float = 0.5) -> float:
    """Beta(a, a) mix ratio; a = 0.5 uses the exact arcsine inverse CDF."""
    if beta_alpha == 0.5:
        return float(np.sin(0.5 * np.pi * rng.random()) ** 2)
    return float(rng.beta(beta_alpha, beta_alpha))


def semantic_targets_for(task: Task, class_count: int, labels=None) -> Array:
    """One-hot semantic targets over C for rows carrying the given numeric labels."""
    y = task.support_y if labels is None else np.asarray(labels, dtype=np.int64)
    sem = np.array([task.numeric_to_semantic[int(lbl)] for lbl in y], dtype=np.int64)
    return one_hot(sem, class_count)


def semantic_loss(head: LinearHead, features_detached, targets) -> tuple[float, tuple[Array, Array]]:
    """Soft-target CE over C classes; gradients touch the semantic head only.

    The caller passes features as plain values; no encoder gradient exists here,
    which is exactly the inner-loop freeze of the encoder.
    """
    logits = head.forward(features_detached)
    loss, dlogits = softmax_cross_entropy(logits, targets)
    f = np.asarray(features_detached, dtype=np.float64)
    dw = f.T @ dlogits
    db = dlogits.sum(axis=0)
    return loss, (dw, db)


def combine_losses(original: float, semantic: float, lam: float) -> float:
    if lam < 0:
        raise ValidationError("lambda must be >= 0")
    return original + lam * semantic


def mixup_batch(
    task: Task,
    class_count: int,
    count: int,
    rng: np.random.Generator,
    beta_alpha: float = 0.5,
    labels_mode: str = "shared",
) -> MixedBatch | None:
    """Blend support rows across distinct numeric classes.

    Each mixed row is m*x_a + (1-m)*x_b with m ~ Beta(a, a); its semantic
    target blends the two one-hot semantic rows at the same ratio. In
    "shared" mode all mixed rows take the single extra numeric label N+1;
    in "per-pair" mode row i takes label N+1+i. Returns None (with a logged
    notice) when the episode has fewer than two classes to blend.
    """
    if labels_mode not in MIXUP_LABELS_MODES:
        raise ValidationError(f"mixup_labels must be one of {MIXUP_LABELS_MODES}")
    if task.n < 2:
        log.info("mixup skipped: episode has %d class(es), need 2", task.n)
        return None
    inputs, targets, ratios = [], [], []
    labels = np.zeros(count, dtype=np.int64)
    for i in range(count):
        la, lb = rng.choice(task.n, size=2, replace=False) + 1
        rows_a = np.flatnonzero(task.support_y == la)
        rows_b = np.flatnonzero(task.support_y == lb)
        xa = task.support_x[rows_a[rng.integers(rows_a.size)]]
        xb = task.support_x[rows_b[rng.integers(rows_b.size)]]
        m = sample_mix_ratio(rng, beta_alpha)
        inputs.append(m * xa + (1.0 - m) * xb)
        sem = np.zeros(class_count)
        sem[task.numeric_to_semantic[int(la)] - 1] += m
        sem[task.numeric_to_semantic[int(lb)] - 1] += 1.0 - m
        targets.append(sem)
        ratios.append(m)
        labels[i] = task.n + 1 if labels_mode == "shared" else task.n + 1 + i
    extra = 1 if labels_mode == "shared" else count
    return MixedBatch(
        inputs=np.asarray(inputs),
        semantic_targets=check_targets(np.asarray(targets), class_count),
        numeric_labels=labels,
        mix_ratios=ratios,
        extra_labels=extra,
    )
