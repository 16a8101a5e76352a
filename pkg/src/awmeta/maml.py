"""Gradient-based meta-learning engine, first-order variant.

One engine serves both regimes. Any-way training draws the episode
cardinality from a pool and routes numeric labels through a width-O head
via random disjoint assignments; fixed-way training is the N = O corner of
the same loop (singleton pool, one assignment covering every node). Keeping
a single code path is what lets the two coincide bit for bit at N = O.

The meta-gradient is first-order: the query-set gradient is taken at the
adapted parameters and applied to the meta-parameters directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assignment import (
    ENSEMBLE_METHODS,
    AssignmentSet,
    any_way_loss,
    ensembled_logit,
    generate_assignments,
    predict,
)
from .episodes import (
    EpisodeSpec,
    MotherDataset,
    Task,
    batch_tasks,
    check_pool_fits,
    sample_task,
)
from .errors import ConfigError, UsageError, ValidationError
from .nn import (
    Array,
    LinearHead,
    MlpEncoder,
    backward,
    encoder_backward,
    head_backward,
    one_hot,
    sgd_step,
    softmax_cross_entropy,
)
from .semantic import MixedBatch, SemanticConfig, mixup_batch, semantic_loss, semantic_targets_for

TRAIN_MODES = ("anyway", "fixed")

DEFAULT_VAL_INTERVAL = 25  # outer steps between validation passes
DEFAULT_VAL_EPISODES = 40  # episodes per cardinality per pass
STALL_WINDOW = 5
STALL_EPS = 0.05


@dataclass
class InnerConfig:
    """Support-set adaptation: SGD steps taken from the meta-parameters."""

    steps: int = 5
    lr: float = 0.5

    def __post_init__(self):
        if self.steps < 0:
            raise ValidationError("inner steps must be >= 0")
        if self.lr < 0:
            raise ValidationError("inner lr must be >= 0")


@dataclass
class OuterConfig:
    """Meta-update schedule. `episodes` counts sampled tasks; the loop runs
    ceil(episodes / meta_batch) outer steps."""

    lr: float = 0.001
    episodes: int = 2000
    meta_batch: int = 4

    def __post_init__(self):
        if self.lr < 0:
            raise ValidationError("outer lr must be >= 0")
        if self.episodes < 1:
            raise ValidationError("episodes must be >= 1")
        if self.meta_batch < 1:
            raise ValidationError("meta_batch must be >= 1")


@dataclass
class MetaModel:
    """Encoder plus width-O episode head, with an optional semantic head."""

    encoder: MlpEncoder
    anyway_head: LinearHead
    semantic_head: LinearHead | None = None

    def __post_init__(self):
        f = self.encoder.feature_dim
        if self.anyway_head.weight.shape[0] != f:
            raise ConfigError("episode head input width does not match encoder features")
        if self.semantic_head is not None and self.semantic_head.weight.shape[0] != f:
            raise ConfigError("semantic head input width does not match encoder features")

    @property
    def o(self) -> int:
        return self.anyway_head.out_dim

    @classmethod
    def init(
        cls,
        layer_dims: list[int],
        o: int,
        rng: np.random.Generator,
        semantic_classes: int | None = None,
    ) -> "MetaModel":
        # draw order is encoder, episode head, semantic head, so a run with
        # the semantic head disabled shares the other two inits bit for bit
        encoder = MlpEncoder.init(layer_dims, rng)
        anyway = LinearHead.init(encoder.feature_dim, o, rng)
        semantic = None
        if semantic_classes is not None:
            semantic = LinearHead.init(encoder.feature_dim, semantic_classes, rng)
        return cls(encoder=encoder, anyway_head=anyway, semantic_head=semantic)

    def clone(self) -> "MetaModel":
        return MetaModel(
            encoder=self.encoder.clone(),
            anyway_head=self.anyway_head.clone(),
            semantic_head=None if self.semantic_head is None else self.semantic_head.clone(),
        )

    def logits(self, x) -> Array:
        return self.anyway_head.forward(self.encoder.forward(x))


def apply_gradients(model: MetaModel, grads: dict[str, Array], lr: float) -> MetaModel:
    """One SGD step over the whole model; missing semantic keys leave g_s as is."""
    try:
        weights = [sgd_step(w, grads[f"enc_w{i}"], lr) for i, w in enumerate(model.encoder.weights)]
        biases = [sgd_step(b, grads[f"enc_b{i}"], lr) for i, b in enumerate(model.encoder.biases)]
        head = LinearHead(
            sgd_step(model.anyway_head.weight, grads["anyway_w"], lr),
            sgd_step(model.anyway_head.bias, grads["anyway_b"], lr),
        )
    except KeyError as exc:
        raise UsageError(f"gradient dict is missing {exc.args[0]!r}") from exc
    sem = model.semantic_head
    if sem is not None:
        if "sem_w" in grads:
            sem = LinearHead(
                sgd_step(sem.weight, grads["sem_w"], lr),
                sgd_step(sem.bias, grads["sem_b"], lr),
            )
        else:
            sem = sem.clone()
    return MetaModel(encoder=MlpEncoder(weights, biases), anyway_head=head, semantic_head=sem)


def _support_batch(task: Task, mixed: MixedBatch | None, n_eff: int):
    x, y = task.support_x, task.support_y
    if mixed is not None:
        x = np.concatenate([x, mixed.inputs], axis=0)
        y = np.concatenate([y, mixed.numeric_labels])
    return x, one_hot(y, n_eff)


def inner_adapt(
    model: MetaModel,
    task: Task,
    aset: AssignmentSet,
    cfg: InnerConfig,
    semantic_cfg: SemanticConfig | None = None,
    mixed: MixedBatch | None = None,
    anyway_enabled: bool = True,
) -> MetaModel:
    """Adapt a copy of the model on the support set; the caller's model is untouched.

    Each step takes one SGD pass on the episode loss. The semantic head, when
    configured, trains on the same features treated as constants: its gradient
    never reaches the encoder here, and its step size is lr * lambda. The
    `anyway_enabled` knob turns off the episode-loss path so the auxiliary
    update can be observed in isolation.
    """
    if aset.o != model.o:
        raise ConfigError(f"assignment width {aset.o} does not match head width {model.o}")
    n_eff = task.n + (mixed.extra_labels if mixed is not None else 0)
    if aset.n != n_eff:
        raise ConfigError(f"assignment cardinality {aset.n}, episode needs {n_eff}")
    if mixed is not None and semantic_cfg is None:
        raise ConfigError("mixup rows need the semantic head enabled")
    if semantic_cfg is not None and model.semantic_head is None:
        raise ConfigError("semantic loss configured but the model has no semantic head")

    adapted = model.clone()
    if cfg.steps == 0 or cfg.lr == 0:
        return adapted
    x, targets = _support_batch(task, mixed, n_eff)
    sem_targets = None
    if semantic_cfg is not None and semantic_cfg.lam != 0.0:
        sem_targets = semantic_targets_for(task, semantic_cfg.class_count)
        if mixed is not None:
            sem_targets = np.concatenate([sem_targets, mixed.semantic_targets], axis=0)

    for _ in range(cfg.steps):
        features, cache = adapted.encoder.forward_cached(x)
        new_sem = adapted.semantic_head
        if sem_targets is not None:
            _, (dw, db) = semantic_loss(adapted.semantic_head, features, sem_targets)
            rate = cfg.lr * semantic_cfg.lam
            new_sem = LinearHead(
                sgd_step(adapted.semantic_head.weight, dw, rate),
                sgd_step(adapted.semantic_head.bias, db, rate),
            )
        if anyway_enabled:
            logits = adapted.anyway_head.forward(features)
            _, dlogits = any_way_loss(aset, logits, targets)
            grads = backward(adapted.encoder, adapted.anyway_head, cache, dlogits)
            adapted.encoder = MlpEncoder(
                [sgd_step(w, grads[f"enc_w{i}"], cfg.lr) for i, w in enumerate(adapted.encoder.weights)],
                [sgd_step(b, grads[f"enc_b{i}"], cfg.lr) for i, b in enumerate(adapted.encoder.biases)],
            )
            adapted.anyway_head = LinearHead(
                sgd_step(adapted.anyway_head.weight, grads["head_w"], cfg.lr),
                sgd_step(adapted.anyway_head.bias, grads["head_b"], cfg.lr),
            )
        adapted.semantic_head = new_sem
    return adapted


def query_loss_and_grads(
    model: MetaModel,
    task: Task,
    aset: AssignmentSet,
    semantic_cfg: SemanticConfig | None = None,
) -> tuple[float, dict[str, Array]]:
    """Query-set loss at the given (adapted) parameters with exact gradients.

    Query rows are always clean, so their targets live on labels 1..task.n
    even when the assignment set carries extra mixup labels. The semantic
    term, weighted by lambda, always reaches the semantic head; it reaches
    the encoder only when the config routes it there.
    """
    targets = one_hot(task.query_y, aset.n)
    features, cache = model.encoder.forward_cached(task.query_x)
    logits = model.anyway_head.forward(features)
    loss, dlogits = any_way_loss(aset, logits, targets)
    raw = backward(model.encoder, model.anyway_head, cache, dlogits)
    grads = {k: v for k, v in raw.items() if k.startswith("enc_")}
    grads["anyway_w"] = raw["head_w"]
    grads["anyway_b"] = raw["head_b"]
    if semantic_cfg is not None and semantic_cfg.lam != 0.0:
        if model.semantic_head is None:
            raise ConfigError("semantic loss configured but the model has no semantic head")
        lam = semantic_cfg.lam
        sem_targets = semantic_targets_for(task, semantic_cfg.class_count, labels=task.query_y)
        sem_logits = model.semantic_head.forward(features)
        sem_loss, dsem = softmax_cross_entropy(sem_logits, sem_targets)
        dw, db, dfeat = head_backward(model.semantic_head, features, dsem)
        grads["sem_w"] = lam * dw
        grads["sem_b"] = lam * db
        if semantic_cfg.to_encoder_in_outer:
            dws, dbs = encoder_backward(model.encoder, cache, lam * dfeat)
            for i, (gw, gb) in enumerate(zip(dws, dbs)):
                grads[f"enc_w{i}"] = grads[f"enc_w{i}"] + gw
                grads[f"enc_b{i}"] = grads[f"enc_b{i}"] + gb
        loss = loss + lam * sem_loss
    return loss, grads


def outer_step(
    model: MetaModel,
    tasks: list[Task],
    spec: EpisodeSpec,
    cfg_in: InnerConfig,
    cfg_out: OuterConfig,
    rng: np.random.Generator,
    semantic_cfg: SemanticConfig | None = None,
) -> tuple[MetaModel, float]:
    """One meta-update: adapt per task, average query gradients, step the meta-parameters."""
    if not tasks:
        raise UsageError("outer step needs at least one task")
    check_pool_fits(spec, model.o)
    total: dict[str, Array] = {}
    loss_sum = 0.0
    for task in tasks:
        mixed = None
        if semantic_cfg is not None and semantic_cfg.mixup_enabled:
            shots = task.support_y.size // task.n
            count = semantic_cfg.mixup_count if semantic_cfg.mixup_count is not None else shots
            mixed = mixup_batch(
                task, semantic_cfg.class_count, count, rng,
                semantic_cfg.beta_alpha, semantic_cfg.mixup_labels,
            )
        n_eff = task.n + (mixed.extra_labels if mixed is not None else 0)
        aset = generate_assignments(model.o, n_eff, rng)
        adapted = inner_adapt(model, task, aset, cfg_in, semantic_cfg, mixed)
        loss, grads = query_loss_and_grads(adapted, task, aset, semantic_cfg)
        loss_sum += loss
        for k, g in grads.items():
            total[k] = total[k] + g if k in total else g
    scale = 1.0 / len(tasks)
    mean_grads = {k: g * scale for k, g in total.items()}
    return apply_gradients(model, mean_grads, cfg_out.lr), loss_sum / len(tasks)


@dataclass
class CurvePoint:
    """One validation record: outer step, mean train loss since the last record,
    and validation accuracy per cardinality."""

    step: int
    train_loss: float
    val_acc: dict[int, float]

    @property
    def val_acc_sum(self) -> float:
        return float(sum(self.val_acc.values()))

    @property
    def val_acc_mean(self) -> float:
        return self.val_acc_sum / max(len(self.val_acc), 1)


@dataclass
class TrainResult:
    model: MetaModel  # parameters after the last outer step
    best_model: MetaModel  # highest summed validation accuracy
    best_step: int
    curve: list[CurvePoint]
    stalled: bool


def stall_detect(curve, window: int, eps: float, chance: float) -> bool:
    """True when the trailing `window` evaluations all sit within eps of chance.

    `curve` is a list of (step, accuracy) pairs; `chance` is the no-skill
    accuracy the run should have escaped. Shorter curves return False.
    """
    if window < 2:
        raise ValidationError("stall window must be >= 2")
    if len(curve) < window:
        return False
    return all(abs(acc - chance) <= eps for _, acc in curve[-window:])


def _validate(
    model: MetaModel,
    ds: MotherDataset,
    pool: tuple[int, ...],
    shots: int,
    queries: int,
    episodes: int,
    cfg_in: InnerConfig,
    seed: int,
) -> dict[int, float]:
    # fresh generator from a fixed seed: every validation pass scores the
    # same episodes, so checkpoint comparisons are paired
    rng = np.random.default_rng(seed)
    out: dict[int, float] = {}
    for n in pool:
        correct, seen = 0, 0
        for _ in range(episodes):
            task = sample_task(ds, n, shots, queries, rng)
            aset = generate_assignments(model.o, n, rng)
            adapted = inner_adapt(model, task, aset, cfg_in)
            pred = predict(ensembled_logit(aset, adapted.logits(task.query_x), "original"))
            correct += int((pred == task.query_y).sum())
            seen += pred.size
        out[n] = correct / seen
    return out


def train(
    ds: MotherDataset,
    spec: EpisodeSpec,
    model: MetaModel,
    cfg_in: InnerConfig,
    cfg_out: OuterConfig,
    mode: str = "anyway",
    rng: np.random.Generator | None = None,
    *,
    val_ds: MotherDataset | None = None,
    semantic_cfg: SemanticConfig | None = None,
    val_interval: int = DEFAULT_VAL_INTERVAL,
    val_episodes: int = DEFAULT_VAL_EPISODES,
) -> TrainResult:
    """Full meta-training loop with periodic validation and best-checkpoint tracking.

    The best checkpoint maximizes validation accuracy summed over every
    cardinality the run trains on. Validation defaults to the training
    dataset when no held-out split is given.
    """
    if rng is None:
        raise UsageError("train needs an explicit rng")
    if mode not in TRAIN_MODES:
        raise ConfigError(f"mode must be one of {TRAIN_MODES}, got {mode!r}")
    if mode == "fixed":
        if spec.fixed_n is None:
            raise ConfigError("fixed mode needs spec.fixed_n")
        if model.o != spec.fixed_n:
            raise ConfigError("fixed mode uses a head exactly as wide as its cardinality")
    check_pool_fits(spec, model.o)
    if semantic_cfg is not None and semantic_cfg.mixup_enabled:
        extra = 1 if semantic_cfg.mixup_labels == "shared" else (semantic_cfg.mixup_count or spec.shots)
        if spec.max_cardinality + extra > model.o:
            raise ConfigError(
                f"mixup adds {extra} label(s) beyond cardinality {spec.max_cardinality}, "
                f"which does not fit head width {model.o}"
            )
    # drawn before any training draw so validation settings never shift the
    # episode stream
    val_seed = int(rng.integers(1 << 62))
    if val_ds is None:
        val_ds = ds
    pool = (spec.fixed_n,) if spec.fixed_n is not None else spec.cardinality_pool

    outer_steps = -(-cfg_out.episodes // cfg_out.meta_batch)
    cur = model
    curve: list[CurvePoint] = []
    best_model, best_step, best_sum = model, 0, -np.inf
    losses: list[float] = []
    validating = val_interval > 0 and val_episodes > 0
    for step in range(1, outer_steps + 1):
        bsz = min(cfg_out.meta_batch, cfg_out.episodes - (step - 1) * cfg_out.meta_batch)
        tasks = batch_tasks(ds, spec, bsz, rng)
        cur, loss = outer_step(cur, tasks, spec, cfg_in, cfg_out, rng, semantic_cfg)
        losses.append(loss)
        if validating and (step % val_interval == 0 or step == outer_steps):
            accs = _validate(cur, val_ds, pool, spec.shots, spec.queries, val_episodes, cfg_in, val_seed)
            point = CurvePoint(step=step, train_loss=float(np.mean(losses)), val_acc=accs)
            losses = []
            curve.append(point)
            if point.val_acc_sum > best_sum:
                best_model, best_step, best_sum = cur, step, point.val_acc_sum
    if not curve:
        best_model, best_step = cur, outer_steps
    chance = float(np.mean([1.0 / n for n in pool]))
    stalled = stall_detect(
        [(p.step, p.val_acc_mean) for p in curve], STALL_WINDOW, STALL_EPS, chance
    )
    return TrainResult(model=cur, best_model=best_model, best_step=best_step, curve=curve, stalled=stalled)


@dataclass
class EvalResult:
    """Accuracy of one (cardinality, ensemble method, repeat count) cell."""

    n: int
    shots: int
    method: str
    j_repeats: int
    episodes: int
    acc_mean: float
    acc_std: float
    accs: Array = field(repr=False, default=None)

    @property
    def ci95(self) -> float:
        return 1.96 * self.acc_std / np.sqrt(self.episodes) if self.episodes else 0.0


def evaluate_sweep(
    model: MetaModel,
    ds: MotherDataset,
    n: int,
    shots: int,
    queries: int,
    episodes: int,
    repeats: list[int],
    methods: list[str],
    rng: np.random.Generator,
    cfg_in: InnerConfig | None = None,
) -> dict[tuple[int, str], EvalResult]:
    """Evaluate every (repeat count, method) cell on one shared episode stream.

    Per episode, each repeat draws a fresh assignment set and re-adapts from
    the meta-parameters; a cell with repeat count R scores the sum of the
    first R ensembled logit matrices. All cells of one call therefore see
    identical tasks and adapted models (paired comparison). Each episode
    runs off its own substream seeded from `rng`, so two calls from equal
    rng states agree on any shared cell whatever else they sweep.
    """
    if cfg_in is None:
        cfg_in = InnerConfig()
    if n > model.o:
        raise ConfigError(f"cardinality {n} exceeds output width {model.o}")
    reps = sorted(set(int(r) for r in repeats))
    if not reps or reps[0] < 1:
        raise ValidationError("repeat counts must be >= 1")
    for m in methods:
        if m not in ENSEMBLE_METHODS:
            raise ConfigError(f"unknown ensemble method {m!r}; pick from {ENSEMBLE_METHODS}")
    if episodes < 1:
        raise ValidationError("episodes must be >= 1")
    rep_set = set(reps)
    acc = {(r, m): np.zeros(episodes) for r in reps for m in methods}
    for e in range(episodes):
        ep_rng = np.random.default_rng(int(rng.integers(1 << 62)))
        task = sample_task(ds, n, shots, queries, ep_rng)
        sums = {m: np.zeros((task.query_y.size, n)) for m in methods}
        for r in range(1, reps[-1] + 1):
            aset = generate_assignments(model.o, n, ep_rng)
            adapted = inner_adapt(model, task, aset, cfg_in)
            logits = adapted.logits(task.query_x)
            for m in methods:
                sums[m] += ensembled_logit(aset, logits, m)
            if r in rep_set:
                for m in methods:
                    acc[(r, m)][e] = float(np.mean(predict(sums[m]) == task.query_y))
    out: dict[tuple[int, str], EvalResult] = {}
    for key, accs in acc.items():
        r, m = key
        out[key] = EvalResult(
            n=n,
            shots=shots,
            method=m,
            j_repeats=r,
            episodes=episodes,
            acc_mean=float(accs.mean()),
            acc_std=float(accs.std(ddof=1)) if episodes > 1 else 0.0,
            accs=accs,
        )
    return out


def evaluate(
    model: MetaModel,
    ds: MotherDataset,
    n: int,
    shots: int,
    queries: int,
    episodes: int,
    j_repeats: int = 1,
    method: str = "original",
    rng: np.random.Generator | None = None,
    cfg_in: InnerConfig | None = None,
) -> EvalResult:
    """Mean and std of query accuracy over fresh episodes for one cell."""
    if rng is None:
        raise UsageError("evaluate needs an explicit rng")
    cells = evaluate_sweep(model, ds, n, shots, queries, episodes, [j_repeats], [method], rng, cfg_in)
    return cells[(j_repeats, method)]
