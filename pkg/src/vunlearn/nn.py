"""Minimal dense networks with explicit backprop.

Float64 end to end and deterministic given a seeded Generator. This is
deliberate: the training contracts here (bit-identical reruns, branch
gradients equal across execution modes, finite-difference agreement at
1e-4) are straightforward to guarantee with hand-written numpy and would
be fragile on top of an autograd framework. Networks stay tiny.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, TrainingDivergedError

ACTIVATIONS = ("tanh", "relu", "identity")


def _apply_activation(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(pre)
    if name == "relu":
        return np.maximum(pre, 0.0)
    return pre


def _activation_grad(name: str, out: np.ndarray) -> np.ndarray:
    # Derivative expressed through the activated output.
    if name == "tanh":
        return 1.0 - out * out
    if name == "relu":
        return (out > 0.0).astype(np.float64)
    return np.ones_like(out)


class MLP:
    """Fully connected layers, hidden activation + configurable output head.

    Parameters live in `params` as [W0, b0, W1, b1, ...] float64 arrays.
    `zero_output_layer` starts the final layer at exactly zero, which makes
    classifier training invariant to label permutations and starts losses
    at their uninformed values.
    """

    def __init__(
        self,
        widths,
        activation: str = "tanh",
        output_activation: str = "identity",
        rng: np.random.Generator | None = None,
        zero_output_layer: bool = False,
    ):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 1 or any(w < 1 for w in widths):
            raise ConfigurationError(f"layer widths must be positive, got {widths}")
        if activation not in ACTIVATIONS or output_activation not in ACTIVATIONS:
            raise ConfigurationError(
                f"activations must be among {ACTIVATIONS}, "
                f"got {activation!r}/{output_activation!r}"
            )
        self.widths = widths
        self.activation = activation
        self.output_activation = output_activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        n_layers = len(widths) - 1
        for i in range(n_layers):
            fan_in, fan_out = widths[i], widths[i + 1]
            if zero_output_layer and i == n_layers - 1:
                w = np.zeros((fan_in, fan_out))
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.params.append(w)
            self.params.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    @property
    def param_count(self) -> int:
        return int(sum(p.size for p in self.params))

    @property
    def macs(self) -> int:
        """Multiply-accumulate operations for one forward sample."""
        return int(sum(a * b for a, b in zip(self.widths[:-1], self.widths[1:])))

    def _layer_activation(self, i: int) -> str:
        return self.activation if i < self.n_layers - 1 else self.output_activation

    def forward_cache(self, x: np.ndarray) -> list[np.ndarray]:
        """Per-layer activated outputs, input first; last entry is the output."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ConfigurationError(
                f"expected input of shape (n, {self.input_dim}), got {x.shape}"
            )
        acts = [x]
        for i in range(self.n_layers):
            pre = acts[-1] @ self.params[2 * i] + self.params[2 * i + 1]
            acts.append(_apply_activation(self._layer_activation(i), pre))
        return acts

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cache(x)[-1]

    def backward(self, cache, dout):
        """Backprop dout through the cached pass.

        Returns (grads, dx) with grads aligned to `params`.
        """
        grads: list = [None] * len(self.params)
        d = np.asarray(dout, dtype=np.float64)
        for i in reversed(range(self.n_layers)):
            d = d * _activation_grad(self._layer_activation(i), cache[i + 1])
            grads[2 * i] = cache[i].T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ self.params[2 * i].T
        return grads, d

    def get_flat(self) -> np.ndarray:
        if not self.params:
            return np.zeros(0)
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.param_count:
            raise ConfigurationError(
                f"flat vector has {flat.size} entries, model has {self.param_count}"
            )
        k = 0
        for p in self.params:
            p[...] = flat[k : k + p.size].reshape(p.shape)
            k += p.size

    def copy(self) -> "MLP":
        dup = MLP.__new__(MLP)
        dup.widths = self.widths
        dup.activation = self.activation
        dup.output_activation = self.output_activation
        dup.params = [p.copy() for p in self.params]
        return dup


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy in nats and its gradient with respect to logits."""
    labels = np.asarray(labels, dtype=np.int64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    n = labels.size
    loss = float(-log_p[np.arange(n), labels].mean())
    grad = np.exp(log_p)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def softmax_uniform_cross_entropy(logits: np.ndarray):
    """Mean cross-entropy against the uniform distribution, plus gradient.

    Per sample this is -(1/K) sum_k log softmax_k, minimized exactly when
    the prediction is uniform. Its logit gradient (softmax - 1/K) does not
    vanish on confident predictions, unlike the ascent direction of the
    label cross-entropy, so it stays usable as an adversarial signal.
    """
    n, k = logits.shape
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = float(-log_p.mean())
    grad = (np.exp(log_p) - 1.0 / k) / n
    return loss, grad


def mean_squared_error(pred: np.ndarray, target: np.ndarray):
    """Mean over all entries of the squared residual, plus its gradient."""
    diff = pred - np.asarray(target, dtype=np.float64)
    loss = float((diff * diff).mean())
    return loss, (2.0 / diff.size) * diff


class SGD:
    def __init__(self, learning_rate: float):
        self.learning_rate = float(learning_rate)

    def step(self, params, grads) -> None:
        for p, g in zip(params, grads):
            p -= self.learning_rate * g


class Adam:
    def __init__(self, learning_rate: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = float(learning_rate)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m = None
        self._v = None
        self._t = 0

    def step(self, params, grads) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.learning_rate * np.sqrt(1 - b2**self._t) / (1 - b1**self._t)
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m += (1 - b1) * (g - m)
            v += (1 - b2) * (g * g - v)
            p -= scale * m / (np.sqrt(v) + self.eps)


def make_optimizer(name: str, learning_rate: float):
    if name == "adam":
        return Adam(learning_rate)
    if name == "sgd":
        return SGD(learning_rate)
    raise ConfigurationError(f"unknown optimizer {name!r}")


def train_network(
    net: MLP,
    inputs: np.ndarray,
    targets: np.ndarray,
    *,
    loss: str,
    steps: int,
    optimizer,
    batch_size: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Run `steps` optimizer updates; returns the last training loss.

    loss is "cross_entropy" (integer targets) or "squared_error". Full-batch
    by default; with batch_size set, minibatches follow a seeded shuffle.
    """
    if loss not in ("cross_entropy", "squared_error"):
        raise ConfigurationError(f"unknown loss {loss!r}")
    inputs = np.asarray(inputs, dtype=np.float64)
    n = inputs.shape[0]
    order = None
    cursor = 0
    last = float("nan")
    for step in range(steps):
        if batch_size is None or batch_size >= n:
            xb, tb = inputs, targets
        else:
            if order is None or cursor + batch_size > n:
                order = (rng or np.random.default_rng(0)).permutation(n)
                cursor = 0
            sel = order[cursor : cursor + batch_size]
            cursor += batch_size
            xb, tb = inputs[sel], targets[sel]
        cache = net.forward_cache(xb)
        if loss == "cross_entropy":
            last, dout = softmax_cross_entropy(cache[-1], tb)
        else:
            last, dout = mean_squared_error(cache[-1], tb)
        if not np.isfinite(last):
            raise TrainingDivergedError(f"non-finite loss at step {step}")
        grads, _ = net.backward(cache, dout)
        optimizer.step(net.params, grads)
    return last
