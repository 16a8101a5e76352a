"""Finite-difference verification of every hand-written backward path.

Four blocks cover the analytic gradients the engines rely on: the encoder
chain under plain cross-entropy, the episode loss with its scatter onto a
wide head, the auxiliary semantic head, and the prototype-distance loss
with alignment. A deliberate corruption knob exists so the harness can
prove the check actually fails when a gradient is wrong.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import any_way_loss, generate_assignments
from .episodes import Task
from .errors import ValidationError
from .maml import MetaModel
from .nn import (
    LinearHead,
    MlpEncoder,
    backward,
    finite_diff_grad,
    one_hot,
    softmax_cross_entropy,
)
from .protonet import PrototypeMemory, proto_episode_loss_and_grads
from .rng import make_rng
from .semantic import semantic_loss

BLOCKS = ("encoder", "anyway_scatter", "semantic_head", "proto_distance")
DEFAULT_TOLERANCE = 1e-4
# relative error denominator floor: central differences carry ~1e-10 noise,
# so exact-zero gradient pairs must not divide by zero
REL_FLOOR = 1e-5


@dataclass
class GradCheckResult:
    block: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def _rel_err(analytic, numeric) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def _net_params(encoder: MlpEncoder, head: LinearHead) -> list[np.ndarray]:
    return [*encoder.weights, *encoder.biases, head.weight, head.bias]


def _rebuild(params: list[np.ndarray], layers: int) -> tuple[MlpEncoder, LinearHead]:
    return (
        MlpEncoder(list(params[:layers]), list(params[layers : 2 * layers])),
        LinearHead(params[2 * layers], params[2 * layers + 1]),
    )


def _grads_in_param_order(grads: dict, layers: int, head_w: str, head_b: str) -> list[np.ndarray]:
    ordered = [grads[f"enc_w{i}"] for i in range(layers)]
    ordered += [grads[f"enc_b{i}"] for i in range(layers)]
    ordered += [grads[head_w], grads[head_b]]
    return ordered


def _check_encoder(rng: np.random.Generator) -> tuple[list, list]:
    d, h, f, k, b = (int(rng.integers(2, 6)) for _ in range(5))
    encoder = MlpEncoder.init([d, h, f], rng)
    head = LinearHead.init(f, k, rng)
    x = rng.normal(size=(b, d))
    targets = one_hot(rng.integers(1, k + 1, size=b), k)

    features, cache = encoder.forward_cached(x)
    _, dlogits = softmax_cross_entropy(head.forward(features), targets)
    grads = backward(encoder, head, cache, dlogits)
    analytic = _grads_in_param_order(grads, 2, "head_w", "head_b")

    def loss_fn(params):
        enc, hd = _rebuild(params, 2)
        return softmax_cross_entropy(hd.forward(enc.forward(x)), targets)[0]

    numeric = finite_diff_grad(loss_fn, _net_params(encoder, head))
    return analytic, numeric


def _check_anyway_scatter(rng: np.random.Generator) -> tuple[list, list]:
    d, h, f, b = (int(rng.integers(2, 6)) for _ in range(4))
    o = int(rng.integers(3, 9))
    n = int(rng.integers(1, o + 1))
    encoder = MlpEncoder.init([d, h, f], rng)
    head = LinearHead.init(f, o, rng)
    aset = generate_assignments(o, n, rng)
    x = rng.normal(size=(b, d))
    targets = one_hot(rng.integers(1, n + 1, size=b), n)

    features, cache = encoder.forward_cached(x)
    _, dlogits = any_way_loss(aset, head.forward(features), targets)
    grads = backward(encoder, head, cache, dlogits)
    analytic = _grads_in_param_order(grads, 2, "head_w", "head_b")

    def loss_fn(params):
        enc, hd = _rebuild(params, 2)
        return any_way_loss(aset, hd.forward(enc.forward(x)), targets)[0]

    numeric = finite_diff_grad(loss_fn, _net_params(encoder, head))
    return analytic, numeric


def _check_semantic_head(rng: np.random.Generator) -> tuple[list, list]:
    f, c, b = int(rng.integers(2, 6)), int(rng.integers(3, 7)), int(rng.integers(2, 5))
    head = LinearHead.init(f, c, rng)
    features = rng.normal(size=(b, f))
    targets = rng.dirichlet(np.ones(c), size=b)

    _, (dw, db) = semantic_loss(head, features, targets)

    def loss_fn(params):
        return semantic_loss(LinearHead(params[0], params[1]), features, targets)[0]

    numeric = finite_diff_grad(loss_fn, [head.weight, head.bias])
    return [dw, db], numeric


def _check_proto_distance(rng: np.random.Generator) -> tuple[list, list]:
    d, h, f = (int(rng.integers(2, 6)) for _ in range(3))
    n, k, q = int(rng.integers(2, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
    encoder = MlpEncoder.init([d, h, f], rng)
    task = Task(
        n=n,
        support_x=rng.normal(size=(n * k, d)),
        support_y=np.repeat(np.arange(1, n + 1), k),
        query_x=rng.normal(size=(n * q, d)),
        query_y=np.repeat(np.arange(1, n + 1), q),
        numeric_to_semantic={label: label for label in range(1, n + 1)},
    )
    memory = PrototypeMemory(
        prototypes=rng.normal(size=(n + 1, f)),
        seen=rng.random(n + 1) < 0.7,
        ema_rate=0.05,
    )

    _, grads = proto_episode_loss_and_grads(encoder, task, memory, lam=0.3)
    analytic = [grads[f"enc_w{i}"] for i in range(2)] + [grads[f"enc_b{i}"] for i in range(2)]

    def loss_fn(params):
        enc = MlpEncoder(list(params[:2]), list(params[2:]))
        return proto_episode_loss_and_grads(enc, task, memory, lam=0.3)[0]

    numeric = finite_diff_grad(loss_fn, [*encoder.weights, *encoder.biases])
    return analytic, numeric


_CHECKS = {
    "encoder": _check_encoder,
    "anyway_scatter": _check_anyway_scatter,
    "semantic_head": _check_semantic_head,
    "proto_distance": _check_proto_distance,
}


def run_gradcheck(
    seed: int = 0,
    trials: int = 50,
    tolerance: float = DEFAULT_TOLERANCE,
    corrupt_block: str | None = None,
) -> list[GradCheckResult]:
    """Max relative error per block over `trials` randomly built instances.

    `corrupt_block` perturbs that block's analytic gradient before the
    comparison (negative control: the suite must then report a failure).
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if corrupt_block is not None and corrupt_block not in _CHECKS:
        raise ValidationError(f"corrupt_block must be one of {BLOCKS}")
    results = []
    for block, check in _CHECKS.items():
        worst = 0.0
        for trial in range(trials):
            rng = make_rng(seed, "gradcheck", block, trial)
            analytic, numeric = check(rng)
            if block == corrupt_block:
                analytic = [a.copy() for a in analytic]
                analytic[0].flat[0] += 1e-3
            worst = max(worst, _rel_err(analytic, numeric))
        results.append(GradCheckResult(block=block, max_rel_err=worst, tolerance=tolerance))
    return results


def check_meta_model_grads(model: MetaModel, rng: np.random.Generator) -> float:
    """Spot-check one full model's query-loss gradients; returns max relative error."""
    d = model.encoder.input_dim
    n = int(rng.integers(1, model.o + 1))
    b = int(rng.integers(2, 5))
    aset = generate_assignments(model.o, n, rng)
    x = rng.normal(size=(b, d))
    targets = one_hot(rng.integers(1, n + 1, size=b), n)
    features, cache = model.encoder.forward_cached(x)
    _, dlogits = any_way_loss(aset, model.anyway_head.forward(features), targets)
    grads = backward(model.encoder, model.anyway_head, cache, dlogits)
    layers = len(model.encoder.weights)
    analytic = _grads_in_param_order(grads, layers, "head_w", "head_b")

    def loss_fn(params):
        enc, hd = _rebuild(params, layers)
        return any_way_loss(aset, hd.forward(enc.forward(x)), targets)[0]

    numeric = finite_diff_grad(loss_fn, _net_params(model.encoder, model.anyway_head))
    return _rel_err(analytic, numeric)
