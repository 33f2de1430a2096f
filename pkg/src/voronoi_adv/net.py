"""One-hidden-layer ReLU network with hand-written backprop, plus Adam and SGD.

Class indices inside this module are 0-based (``0..n_classes-1``).
"""

from dataclasses import dataclass

import numpy as np

from ._rng import as_generator

PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass
class MlpModel:
    """``logits = W2 @ relu(W1 @ x + b1) + b2``."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        h, d = self.W1.shape
        c = self.W2.shape[0]
        if self.b1.shape != (h,) or self.W2.shape != (c, h) or self.b2.shape != (c,):
            raise ValueError("inconsistent parameter shapes")

    @property
    def dims(self):
        return self.W1.shape[1], self.W1.shape[0], self.W2.shape[0]

    @property
    def d_in(self):
        return self.W1.shape[1]

    @property
    def n_classes(self):
        return self.W2.shape[0]

    def params(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return MlpModel(*(getattr(self, n).copy() for n in PARAM_NAMES))

    def is_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.params().values())


def init_mlp(d_in, hidden=100, n_classes=2, seed=0):
    """Glorot-uniform weights, zero biases."""
    rng = as_generator(seed, "init")

    def glorot(fan_out, fan_in):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, (fan_out, fan_in))

    W1 = glorot(hidden, d_in)
    W2 = glorot(n_classes, hidden)
    return MlpModel(W1, np.zeros(hidden), W2, np.zeros(n_classes))


def _as_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != model.d_in:
        raise ValueError(f"input dimension {X.shape[1]} does not match model d_in {model.d_in}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite input")
    return X, single


def forward(model, x):
    X, single = _as_batch(model, x)
    logits = np.maximum(X @ model.W1.T + model.b1, 0.0) @ model.W2.T + model.b2
    return logits[0] if single else logits


def predict(model, x):
    return np.argmax(forward(model, x), axis=-1)


def _softmax_xent(logits, y):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1))
    rows = np.arange(len(y))
    losses = log_z - shifted[rows, y]
    probs = np.exp(shifted - log_z[:, None])
    probs[rows, y] -= 1.0
    return losses, probs


def _labels(model, y, n):
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if y.shape != (n,):
        raise ValueError("one label per input row is required")
    if y.min() < 0 or y.max() >= model.n_classes:
        raise ValueError("label out of range")
    return y


def per_example_losses(model, x, y):
    X, _ = _as_batch(model, x)
    losses, _ = _softmax_xent(forward(model, X), _labels(model, y, len(X)))
    return losses


def loss_and_grads(model, x, y, need_params=True):
    """Softmax cross-entropy and its exact gradients.

    ``loss`` and the parameter gradients are means over the batch.
    ``grad_input`` holds, row by row, the gradient of each example's own loss
    with respect to that example, which is what attacks need.
    """
    X, single = _as_batch(model, x)
    y = _labels(model, y, len(X))
    pre = X @ model.W1.T + model.b1
    hid = np.maximum(pre, 0.0)
    logits = hid @ model.W2.T + model.b2
    losses, dlogits = _softmax_xent(logits, y)
    # relu'(0) = 0
    dpre = (dlogits @ model.W2) * (pre > 0)
    grad_input = dpre @ model.W1
    grads = None
    if need_params:
        n = len(X)
        grads = {
            "W1": dpre.T @ X / n,
            "b1": dpre.sum(axis=0) / n,
            "W2": dlogits.T @ hid / n,
            "b2": dlogits.sum(axis=0) / n,
        }
    return float(losses.mean()), grads, (grad_input[0] if single else grad_input)


def input_gradient(model, x, y):
    """Per-example loss gradients w.r.t. the inputs, plus the per-example losses."""
    X, single = _as_batch(model, x)
    y = _labels(model, y, len(X))
    pre = X @ model.W1.T + model.b1
    logits = np.maximum(pre, 0.0) @ model.W2.T + model.b2
    losses, dlogits = _softmax_xent(logits, y)
    g = ((dlogits @ model.W2) * (pre > 0)) @ model.W1
    return (g[0], losses[0]) if single else (g, losses)


class Adam:
    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, model, grads):
        """Update ``model`` in place."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, param in model.params().items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(param)
                self.v[name] = np.zeros_like(param)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            param -= self.lr * (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + self.eps)
        return model


class SGD:
    def __init__(self, lr=0.01, momentum=0.0):
        self.lr = lr
        self.momentum = momentum
        self.velocity = {}
        self.t = 0

    def step(self, model, grads):
        self.t += 1
        for name, param in model.params().items():
            g = grads[name]
            if self.momentum:
                vel = self.velocity.get(name)
                vel = g.copy() if vel is None else self.momentum * vel + g
                self.velocity[name] = vel
                g = vel
            param -= self.lr * g
        return model


def make_optimizer(kind="adam", lr=0.1, momentum=0.0):
    kind = kind.lower()
    if kind == "adam":
        return Adam(lr=lr)
    if kind == "sgd":
        return SGD(lr=lr, momentum=momentum)
    raise ValueError(f"unknown optimizer {kind!r}")


def _stacked_losses(W1, b1, W2, b2, x, y):
    """Single-example loss under a stack of parameter sets.

    Each argument carries a leading stack axis of length ``k`` or 1 (broadcast).
    """
    hid = np.maximum((W1 @ x) + b1, 0.0)
    logits = (W2 @ hid[..., None])[..., 0] + b2
    top = logits.max(axis=-1, keepdims=True)
    return (top[..., 0] + np.log(np.exp(logits - top).sum(axis=-1))) - logits[..., y]


def numerical_gradients(model, x, y, h=1e-5, chunk=64):
    """Central finite differences of one example's loss.

    Every perturbed parameter set goes through a full forward pass, so this is
    an independent oracle for :func:`loss_and_grads`.  Returns a dict with the
    four parameter gradients and ``"x"``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = int(y)
    base = {n: v[None] for n, v in model.params().items()}
    out = {}
    for name in PARAM_NAMES:
        size = base[name].size
        flat = np.zeros(size)
        for s in range(0, size, chunk):
            ids = np.arange(s, min(s + chunk, size))
            k = len(ids)
            vals = []
            for sign in (1.0, -1.0):
                stack = np.repeat(base[name], k, axis=0)
                stack.reshape(k, -1)[np.arange(k), ids] += sign * h
                args = {**base, name: stack}
                vals.append(_stacked_losses(args["W1"], args["b1"], args["W2"], args["b2"], x, y))
            flat[ids] = (vals[0] - vals[1]) / (2 * h)
        out[name] = flat.reshape(base[name].shape[1:])
    eye = np.eye(x.size) * h
    plus = per_example_losses(model, x + eye, np.full(x.size, y))
    minus = per_example_losses(model, x - eye, np.full(x.size, y))
    out["x"] = (plus - minus) / (2 * h)
    return out


def gradient_relative_error(analytic, numeric):
    """Largest coordinate error relative to the gradient's largest magnitude."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-300)
    return float(np.max(np.abs(analytic - numeric)) / scale)
