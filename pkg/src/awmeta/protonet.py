"""Metric-based backend: prototype classification with a semantic prototype memory.

Each episode builds one prototype per numeric label (the mean support
feature) and classifies queries by negative squared distance. Because the
prototype count is just the episode's cardinality, this backend handles any
N without an output head, width budget, or assignment bookkeeping.

The semantic extension keeps an EMA memory of per-semantic-class prototypes
across episodes and penalizes the gap between an episode's prototypes and
their stored counterparts. The memory is a running statistic, not a
parameter: no gradient flows through the stored rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import predict
from .episodes import EpisodeSpec, MotherDataset, Task, batch_tasks, sample_task
from .errors import DimensionError, DomainError, UsageError, ValidationError
from .maml import (
    DEFAULT_VAL_EPISODES,
    DEFAULT_VAL_INTERVAL,
    STALL_EPS,
    STALL_WINDOW,
    CurvePoint,
    EvalResult,
    OuterConfig,
    stall_detect,
)
from .nn import Array, MlpEncoder, as_batch, encoder_backward, one_hot, softmax_cross_entropy, sgd_step


@dataclass
class PrototypeMemory:
    """EMA-maintained prototype per semantic class; unseen rows stay zero."""

    prototypes: Array  # C x F
    seen: Array  # C bools
    ema_rate: float

    def __post_init__(self):
        self.prototypes = as_batch(self.prototypes, name="memory prototypes")
        self.seen = np.asarray(self.seen, dtype=bool)
        if self.seen.shape != (self.prototypes.shape[0],):
            raise DimensionError("seen mask length does not match prototype rows")
        if not 0.0 < self.ema_rate <= 1.0:
            raise ValidationError(f"ema rate must lie in (0, 1], got {self.ema_rate}")

    @classmethod
    def init(cls, class_count: int, feature_dim: int, ema_rate: float) -> "PrototypeMemory":
        return cls(np.zeros((class_count, feature_dim)), np.zeros(class_count, dtype=bool), ema_rate)

    @property
    def class_count(self) -> int:
        return self.prototypes.shape[0]

    def clone(self) -> "PrototypeMemory":
        return PrototypeMemory(self.prototypes.copy(), self.seen.copy(), self.ema_rate)


@dataclass
class ProtoModel:
    """Encoder plus the semantic prototype memory it was trained with."""

    encoder: MlpEncoder
    memory: PrototypeMemory | None = None

    def clone(self) -> "ProtoModel":
        return ProtoModel(self.encoder.clone(), None if self.memory is None else self.memory.clone())


def compute_prototypes(features, labels) -> Array:
    """Row n-1 is the mean of the feature rows carrying numeric label n."""
    f = as_batch(features, name="features")
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1 or y.size != f.shape[0]:
        raise DimensionError("labels must be one per feature row")
    if y.size == 0 or y.min() < 1:
        raise DomainError("labels must be 1-based and non-empty")
    n = int(y.max())
    protos = np.zeros((n, f.shape[1]))
    for label in range(1, n + 1):
        rows = f[y == label]
        if rows.shape[0] == 0:
            raise DomainError(f"numeric label {label} has no support rows")
        protos[label - 1] = rows.mean(axis=0)
    return protos


def proto_logits(query_features, prototypes) -> Array:
    """logit[q, n] = negative squared Euclidean distance to prototype n."""
    q = as_batch(query_features, name="query features")
    p = as_batch(prototypes, q.shape[1], "prototypes")
    diff = q[:, None, :] - p[None, :, :]
    return -np.sum(diff * diff, axis=2)


def ema_update(mem: PrototypeMemory, semantic_class: int, episode_prototype) -> PrototypeMemory:
    """Fold one episode prototype into the memory; first sight copies it verbatim."""
    if not 1 <= semantic_class <= mem.class_count:
        raise DomainError(f"semantic class {semantic_class} outside 1..{mem.class_count}")
    p = np.asarray(episode_prototype, dtype=np.float64)
    if p.shape != (mem.prototypes.shape[1],):
        raise DimensionError(f"prototype must have shape ({mem.prototypes.shape[1]},), got {p.shape}")
    out = mem.clone()
    c = semantic_class - 1
    if out.seen[c]:
        out.prototypes[c] = (1.0 - out.ema_rate) * out.prototypes[c] + out.ema_rate * p
    else:
        out.prototypes[c] = p
        out.seen[c] = True
    return out


def semantic_alignment_loss(episode_prototypes, mem: PrototypeMemory, numeric_to_semantic: dict[int, int]) -> float:
    """Mean squared distance between episode prototypes and their seen memory rows."""
    p = as_batch(episode_prototypes, mem.prototypes.shape[1], "episode prototypes")
    total, counted = 0.0, 0
    for n in range(1, p.shape[0] + 1):
        sem = numeric_to_semantic[n]
        if mem.seen[sem - 1]:
            diff = p[n - 1] - mem.prototypes[sem - 1]
            total += float(diff @ diff)
            counted += 1
    return total / counted if counted else 0.0


def _episode_backward(encoder: MlpEncoder, task: Task, memory: PrototypeMemory | None, lam: float):
    hs, cache_s = encoder.forward_cached(task.support_x)
    hq, cache_q = encoder.forward_cached(task.query_x)
    protos = compute_prototypes(hs, task.support_y)
    logits = proto_logits(hq, protos)
    loss, g = softmax_cross_entropy(logits, one_hot(task.query_y, task.n))
    dhq = -2.0 * (hq * g.sum(axis=1, keepdims=True) - g @ protos)
    dprotos = 2.0 * (g.T @ hq - g.sum(axis=0)[:, None] * protos)
    if lam != 0.0 and memory is not None:
        aligned = [n for n in range(1, task.n + 1) if memory.seen[task.numeric_to_semantic[n] - 1]]
        if aligned:
            scale = 2.0 * lam / len(aligned)
            align = 0.0
            for n in aligned:
                diff = protos[n - 1] - memory.prototypes[task.numeric_to_semantic[n] - 1]
                align += float(diff @ diff)
                dprotos[n - 1] += scale * diff
            loss += lam * align / len(aligned)
    counts = np.bincount(task.support_y, minlength=task.n + 1)[1:]
    dhs = dprotos[task.support_y - 1] / counts[task.support_y - 1][:, None]
    dws_s, dbs_s = encoder_backward(encoder, cache_s, dhs)
    dws_q, dbs_q = encoder_backward(encoder, cache_q, dhq)
    grads = {}
    for i in range(len(encoder.weights)):
        grads[f"enc_w{i}"] = dws_s[i] + dws_q[i]
        grads[f"enc_b{i}"] = dbs_s[i] + dbs_q[i]
    return loss, grads, protos


def proto_episode_loss_and_grads(
    encoder: MlpEncoder,
    task: Task,
    memory: PrototypeMemory | None = None,
    lam: float = 0.0,
) -> tuple[float, dict[str, Array]]:
    """Episode loss (query CE plus weighted alignment) with exact encoder gradients."""
    loss, grads, _ = _episode_backward(encoder, task, memory, lam)
    return loss, grads


@dataclass
class ProtoTrainResult:
    model: ProtoModel
    best_model: ProtoModel
    best_step: int
    curve: list[CurvePoint]
    stalled: bool


def _validate_proto(encoder: MlpEncoder, ds: MotherDataset, pool, shots, queries, episodes, seed) -> dict[int, float]:
    rng = np.random.default_rng(seed)
    out: dict[int, float] = {}
    for n in pool:
        correct, seen = 0, 0
        for _ in range(episodes):
            task = sample_task(ds, n, shots, queries, rng)
            protos = compute_prototypes(encoder.forward(task.support_x), task.support_y)
            pred = np.argmax(proto_logits(encoder.forward(task.query_x), protos), axis=1) + 1
            correct += int((pred == task.query_y).sum())
            seen += pred.size
        out[n] = correct / seen
    return out


def train_proto(
    ds: MotherDataset,
    spec: EpisodeSpec,
    model: ProtoModel,
    cfg_out: OuterConfig,
    lam: float,
    rho: float,
    rng: np.random.Generator,
    *,
    val_ds: MotherDataset | None = None,
    val_interval: int = DEFAULT_VAL_INTERVAL,
    val_episodes: int = DEFAULT_VAL_EPISODES,
) -> ProtoTrainResult:
    """Episodic training: one SGD step per meta-batch on CE plus weighted alignment.

    There is no inner loop. After each task's gradient is taken, its episode
    prototypes refresh the memory so the stored rows track the encoder as it
    moves. Best checkpoint = highest validation accuracy summed over the pool.
    """
    if lam < 0:
        raise ValidationError("lambda must be >= 0")
    memory = model.memory if model.memory is not None else PrototypeMemory.init(
        ds.class_count, model.encoder.feature_dim, rho
    )
    val_seed = int(rng.integers(1 << 62))
    if val_ds is None:
        val_ds = ds
    pool = (spec.fixed_n,) if spec.fixed_n is not None else spec.cardinality_pool

    encoder = model.encoder
    outer_steps = -(-cfg_out.episodes // cfg_out.meta_batch)
    curve: list[CurvePoint] = []
    best: tuple[ProtoModel, int, float] = (ProtoModel(encoder, memory), 0, -np.inf)
    losses: list[float] = []
    validating = val_interval > 0 and val_episodes > 0
    for step in range(1, outer_steps + 1):
        bsz = min(cfg_out.meta_batch, cfg_out.episodes - (step - 1) * cfg_out.meta_batch)
        tasks = batch_tasks(ds, spec, bsz, rng)
        total: dict[str, Array] = {}
        loss_sum = 0.0
        for task in tasks:
            loss, grads, protos = _episode_backward(encoder, task, memory, lam)
            loss_sum += loss
            for k, g in grads.items():
                total[k] = total[k] + g if k in total else g
            for n in range(1, task.n + 1):
                memory = ema_update(memory, task.numeric_to_semantic[n], protos[n - 1])
        scale = 1.0 / len(tasks)
        encoder = MlpEncoder(
            [sgd_step(w, total[f"enc_w{i}"] * scale, cfg_out.lr) for i, w in enumerate(encoder.weights)],
            [sgd_step(b, total[f"enc_b{i}"] * scale, cfg_out.lr) for i, b in enumerate(encoder.biases)],
        )
        losses.append(loss_sum / len(tasks))
        if validating and (step % val_interval == 0 or step == outer_steps):
            accs = _validate_proto(encoder, val_ds, pool, spec.shots, spec.queries, val_episodes, val_seed)
            point = CurvePoint(step=step, train_loss=float(np.mean(losses)), val_acc=accs)
            losses = []
            curve.append(point)
            if point.val_acc_sum > best[2]:
                best = (ProtoModel(encoder, memory.clone()), step, point.val_acc_sum)
    final = ProtoModel(encoder, memory)
    best_model, best_step = (final, outer_steps) if not curve else best[:2]
    chance = float(np.mean([1.0 / n for n in pool]))
    stalled = stall_detect([(p.step, p.val_acc_mean) for p in curve], STALL_WINDOW, STALL_EPS, chance)
    return ProtoTrainResult(model=final, best_model=best_model, best_step=best_step, curve=curve, stalled=stalled)


def evaluate_proto(
    model: ProtoModel,
    ds: MotherDataset,
    n: int,
    shots: int,
    queries: int,
    episodes: int,
    rng: np.random.Generator | None = None,
) -> EvalResult:
    """Accuracy over fresh episodes; works at any cardinality the dataset supports."""
    if rng is None:
        raise UsageError("evaluate_proto needs an explicit rng")
    if episodes < 1:
        raise ValidationError("episodes must be >= 1")
    accs = np.zeros(episodes)
    for e in range(episodes):
        # one substream per episode: the task sequence matches the gradient
        # backend's evaluator, so cross-backend comparisons stay paired
        ep_rng = np.random.default_rng(int(rng.integers(1 << 62)))
        task = sample_task(ds, n, shots, queries, ep_rng)
        protos = compute_prototypes(model.encoder.forward(task.support_x), task.support_y)
        pred = predict(proto_logits(model.encoder.forward(task.query_x), protos))
        accs[e] = float(np.mean(pred == task.query_y))
    return EvalResult(
        n=n,
        shots=shots,
        method="proto",
        j_repeats=1,
        episodes=episodes,
        acc_mean=float(accs.mean()),
        acc_std=float(accs.std(ddof=1)) if episodes > 1 else 0.0,
        accs=accs,
    )
