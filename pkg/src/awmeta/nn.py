"""Minimal dense neural-network substrate.

Batches are plain 2-D float64 numpy arrays (row = example). The encoder is
an MLP with tanh on every layer except the last, which stays affine so the
feature space is unbounded. Backward passes are written out by hand; the
finite-difference oracle below is the independent check on them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UsageError, ValidationError

Array = np.ndarray

# target rows must sum to 1 within this tolerance
TARGET_ATOL = 1e-9


def as_batch(x, cols: int | None = None, name: str = "batch") -> Array:
    """Coerce to a finite 2-D float64 array, checking the column count."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if cols is not None and a.shape[1] != cols:
        raise DimensionError(f"{name} must have {cols} columns, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite entries")
    return a


def one_hot(labels, width: int) -> Array:
    """Rows of the identity for 1-based integer labels."""
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1:
        raise DimensionError(f"labels must be 1-D, got shape {y.shape}")
    if y.min(initial=1) < 1 or y.max(initial=1) > width:
        raise ValidationError(f"labels must lie in 1..{width}")
    t = np.zeros((y.size, width))
    t[np.arange(y.size), y - 1] = 1.0
    return t


def uniform_init(rows: int, cols: int, rng: np.random.Generator) -> Array:
    """uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) with fan_in = rows."""
    s = 1.0 / np.sqrt(rows)
    return rng.uniform(-s, s, size=(rows, cols))


@dataclass
class MlpEncoder:
    """MLP feature extractor: tanh hidden layers, affine final layer."""

    weights: list[Array]
    biases: list[Array]

    @classmethod
    def init(cls, layer_dims: list[int], rng: np.random.Generator) -> "MlpEncoder":
        if len(layer_dims) < 2:
            raise ValidationError("layer_dims needs at least input and output widths")
        ws, bs = [], []
        for din, dout in zip(layer_dims[:-1], layer_dims[1:]):
            ws.append(uniform_init(din, dout, rng))
            bs.append(np.zeros(dout))
        return cls(ws, bs)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights[-1].shape[1]

    def forward(self, x) -> Array:
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x) -> tuple[Array, list[Array]]:
        """Features plus the per-layer activation cache the backward pass needs."""
        a = as_batch(x, self.input_dim, "encoder input")
        cache = [a]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else np.tanh(z)
            cache.append(a)
        return a, cache

    def clone(self) -> "MlpEncoder":
        return MlpEncoder([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class LinearHead:
    """Affine classification head on encoder features."""

    weight: Array  # F x out_dim
    bias: Array  # out_dim

    @classmethod
    def init(cls, feature_dim: int, out_dim: int, rng: np.random.Generator) -> "LinearHead":
        if out_dim < 1:
            raise ValidationError("head out_dim must be >= 1")
        return cls(uniform_init(feature_dim, out_dim, rng), np.zeros(out_dim))

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def forward(self, features) -> Array:
        f = as_batch(features, self.weight.shape[0], "head features")
        return f @ self.weight + self.bias

    def clone(self) -> "LinearHead":
        return LinearHead(self.weight.copy(), self.bias.copy())


def head_logits(head: LinearHead, features) -> Array:
    return head.forward(features)


def softmax(logits) -> Array:
    """Row-wise softmax, stabilized by max subtraction."""
    z = as_batch(logits, name="logits")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def check_targets(targets, cols: int | None = None) -> Array:
    t = as_batch(targets, cols, "targets")
    if np.any(t < 0.0):
        raise ValidationError("target rows must be nonnegative")
    sums = t.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > TARGET_ATOL):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ValidationError(f"target row {bad} sums to {sums[bad]!r}, not 1")
    return t


def softmax_cross_entropy(logits, targets) -> tuple[float, Array]:
    """Mean soft-target cross entropy and its gradient w.r.t. the logits.

    loss = mean_b -sum_k t_bk log softmax(z_b)_k, dlogits = (softmax - t)/B.
    """
    z = as_batch(logits, name="logits")
    t = check_targets(targets, z.shape[1])
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-(t * logp).sum(axis=1).mean())
    dlogits = (np.exp(logp) - t) / z.shape[0]
    return loss, dlogits


def head_backward(head: LinearHead, features: Array, dlogits: Array) -> tuple[Array, Array, Array]:
    """Gradients (dW, db) of the head and the gradient passed to the features."""
    dw = features.T @ dlogits
    db = dlogits.sum(axis=0)
    dfeatures = dlogits @ head.weight.T
    return dw, db, dfeatures


def encoder_backward(encoder: MlpEncoder, cache: list[Array], dfeatures: Array) -> tuple[list[Array], list[Array]]:
    """Reverse-mode gradients for every encoder layer given dL/dfeatures."""
    n = len(encoder.weights)
    if len(cache) != n + 1:
        raise UsageError(f"cache has {len(cache)} entries, expected {n + 1}")
    if cache[-1].shape != dfeatures.shape:
        raise UsageError("cache does not match this backward call")
    dws: list[Array] = [np.empty(0)] * n
    dbs: list[Array] = [np.empty(0)] * n
    da = dfeatures
    for i in range(n - 1, -1, -1):
        a_out = cache[i + 1]
        dz = da if i == n - 1 else da * (1.0 - a_out * a_out)
        dws[i] = cache[i].T @ dz
        dbs[i] = dz.sum(axis=0)
        if i > 0:
            da = dz @ encoder.weights[i].T
    return dws, dbs


def backward(encoder: MlpEncoder, head: LinearHead, cache: list[Array], dlogits: Array) -> dict[str, Array]:
    """Exact gradients of the loss behind `dlogits` w.r.t. head + encoder parameters."""
    if not cache:
        raise UsageError("backward needs the cache from a matching forward pass")
    features = cache[-1]
    d = as_batch(dlogits, head.out_dim, "dlogits")
    if d.shape[0] != features.shape[0]:
        raise UsageError("dlogits batch size does not match the cached forward pass")
    dw, db, dfeat = head_backward(head, features, d)
    dws, dbs = encoder_backward(encoder, cache, dfeat)
    grads: dict[str, Array] = {}
    for i, (gw, gb) in enumerate(zip(dws, dbs)):
        grads[f"enc_w{i}"] = gw
        grads[f"enc_b{i}"] = gb
    grads["head_w"] = dw
    grads["head_b"] = db
    return grads


def finite_diff_grad(loss_fn, params, eps: float = 1e-5):
    """Central-difference gradient oracle: (f(p+eps) - f(p-eps)) / 2eps per coordinate.

    `params` may be a scalar, one array, or a list of arrays; the result has the
    same structure. `loss_fn` receives the (perturbed) params and must be pure.
    """
    scalar_in = np.isscalar(params)
    single = scalar_in or isinstance(params, np.ndarray)
    plist = [params] if single else list(params)
    work = [np.array(p, dtype=np.float64, copy=True) for p in plist]

    def evaluate() -> float:
        arg = work[0] if single else work
        if scalar_in:
            arg = float(arg)
        return float(loss_fn(arg))

    grads = [np.zeros_like(p) for p in work]
    for p, g in zip(work, grads):
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            up = evaluate()
            p[idx] = orig - eps
            down = evaluate()
            p[idx] = orig
            g[idx] = (up - down) / (2.0 * eps)
            it.iternext()
    if scalar_in:
        return float(grads[0])
    return grads[0] if single else grads


def sgd_step(params, grads, lr: float):
    """theta' = theta - lr * g, elementwise, over arrays or nested containers."""
    if lr < 0:
        raise ValidationError(f"learning rate must be >= 0, got {lr}")
    return _sgd(params, grads, lr)


def _sgd(params, grads, lr: float):
    if isinstance(params, np.ndarray):
        g = np.asarray(grads, dtype=np.float64)
        if g.shape != params.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {params.shape}")
        return params - lr * g
    if isinstance(params, (list, tuple)):
        if len(params) != len(grads):
            raise DimensionError("parameter and gradient lists differ in length")
        out = [_sgd(p, g, lr) for p, g in zip(params, grads)]
        return type(params)(out)
    if isinstance(params, dict):
        if set(params) != set(grads):
            raise DimensionError("parameter and gradient dicts differ in keys")
        return {k: _sgd(v, grads[k], lr) for k, v in params.items()}
    return params - lr * grads
