"""Minimal numpy neural-network substrate.

Only what the two neural estimators need: a two-layer perceptron whose
hidden layer is ``LayerNorm(LeakyReLU(W1 x + b1))``, hand-written
backpropagation, Adam with weight decay, global-norm gradient clipping and
a reduce-on-plateau learning-rate scheduler. Everything runs in float64.

Weights follow the ``(out, in)`` convention, so a layer computes
``x @ W.T + b`` on a batch of row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError, TrainingFault, UsageError

HIDDEN_DIM = 256
LEAKY_SLOPE = 0.2
LN_EPS = 1e-5


@dataclass
class DenseLayer:
    weight: np.ndarray
    bias: np.ndarray
    grad_weight: np.ndarray = field(init=False)
    grad_bias: np.ndarray = field(init=False)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"weight {self.weight.shape} and bias {self.bias.shape} do not form a layer"
            )
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    @classmethod
    def init(cls, in_dim, out_dim, rng, bias_init="uniform"):
        """Uniform fan-in initialisation, ``U(-1/sqrt(in), 1/sqrt(in))``.

        ``bias_init`` is ``"uniform"`` (same bound as the weights) or ``"zero"``.
        """
        bound = 1.0 / np.sqrt(in_dim)
        weight = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        if bias_init == "zero":
            bias = np.zeros(out_dim)
        elif bias_init == "uniform":
            bias = rng.uniform(-bound, bound, size=out_dim)
        else:
            raise UsageError(f"unknown bias_init {bias_init!r}")
        return cls(weight, bias)


@dataclass
class ForwardCache:
    x: np.ndarray
    pre: np.ndarray
    act: np.ndarray
    xhat: np.ndarray
    inv_std: np.ndarray
    hidden: np.ndarray
    squeeze: bool


class MlpNet:
    """``W2 . LN(LReLU(W1 x + b1)) + b2``.

    The LayerNorm is applied after the activation. Parameters live in
    :attr:`params` and gradients in :attr:`grads`; both are dicts of arrays
    keyed by dotted names, and the arrays are the same objects the layers
    hold, so in-place optimiser updates are visible to the network.
    """

    def __init__(
        self,
        in_dim,
        out_dim,
        hidden=HIDDEN_DIM,
        leaky_slope=LEAKY_SLOPE,
        rng=None,
        ln_eps=LN_EPS,
        bias_init="uniform",
    ):
        if rng is None:
            rng = np.random.default_rng()
        self.leaky_slope = float(leaky_slope)
        self.ln_eps = float(ln_eps)
        self.layer1 = DenseLayer.init(in_dim, hidden, rng, bias_init)
        self.ln_gain = np.ones(hidden)
        self.ln_shift = np.zeros(hidden)
        self.layer2 = DenseLayer.init(hidden, out_dim, rng, bias_init)
        self.grad_ln_gain = np.zeros(hidden)
        self.grad_ln_shift = np.zeros(hidden)

    @classmethod
    def from_arrays(cls, w1, b1, gain, shift, w2, b2, leaky_slope=LEAKY_SLOPE, ln_eps=LN_EPS):
        net = cls.__new__(cls)
        net.leaky_slope = float(leaky_slope)
        net.ln_eps = float(ln_eps)
        net.layer1 = DenseLayer(w1, b1)
        net.layer2 = DenseLayer(w2, b2)
        if net.layer2.in_dim != net.layer1.out_dim:
            raise ShapeError("layer2 input width must equal the hidden width")
        net.ln_gain = np.array(gain, dtype=np.float64)
        net.ln_shift = np.array(shift, dtype=np.float64)
        if net.ln_gain.shape != (net.layer1.out_dim,) or net.ln_shift.shape != net.ln_gain.shape:
            raise ShapeError("LayerNorm gain/shift must match the hidden width")
        net.grad_ln_gain = np.zeros_like(net.ln_gain)
        net.grad_ln_shift = np.zeros_like(net.ln_shift)
        return net

    @property
    def in_dim(self):
        return self.layer1.in_dim

    @property
    def out_dim(self):
        return self.layer2.out_dim

    @property
    def hidden_dim(self):
        return self.layer1.out_dim

    @property
    def params(self):
        return {
            "layer1.weight": self.layer1.weight,
            "layer1.bias": self.layer1.bias,
            "ln.gain": self.ln_gain,
            "ln.shift": self.ln_shift,
            "layer2.weight": self.layer2.weight,
            "layer2.bias": self.layer2.bias,
        }

    @property
    def grads(self):
        return {
            "layer1.weight": self.layer1.grad_weight,
            "layer1.bias": self.layer1.grad_bias,
            "ln.gain": self.grad_ln_gain,
            "ln.shift": self.grad_ln_shift,
            "layer2.weight": self.layer2.grad_weight,
            "layer2.bias": self.layer2.grad_bias,
        }

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def forward(self, x):
        """Evaluate a single vector or a ``(batch, in_dim)`` array.

        Returns ``(output, cache)``; pass the cache to :meth:`backward`.
        """
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"expected input width {self.in_dim}, got shape {x.shape}")
        if not np.isfinite(x).all():
            raise DomainError("non-finite network input")

        pre = x @ self.layer1.weight.T + self.layer1.bias
        act = np.where(pre > 0, pre, self.leaky_slope * pre)
        centered = act - act.mean(axis=1, keepdims=True)
        var = np.mean(centered * centered, axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.ln_eps)
        xhat = centered * inv_std
        hidden = xhat * self.ln_gain + self.ln_shift
        out = hidden @ self.layer2.weight.T + self.layer2.bias

        cache = ForwardCache(x, pre, act, xhat, inv_std, hidden, squeeze)
        return (out[0] if squeeze else out), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out):
        """Backpropagate ``dL/d(output)``; overwrites :attr:`grads`.

        Returns ``dL/d(input)`` with the same leading shape as the forward input.
        """
        if cache is None:
            raise UsageError("backward called without a forward cache")
        g = np.asarray(grad_out, dtype=np.float64)
        if cache.squeeze and g.ndim == 1:
            g = g[None, :]
        if g.shape != (cache.x.shape[0], self.out_dim):
            raise ShapeError(f"output gradient shape {g.shape} does not match forward pass")

        self.layer2.grad_weight[...] = g.T @ cache.hidden
        self.layer2.grad_bias[...] = g.sum(axis=0)
        d_hidden = g @ self.layer2.weight

        self.grad_ln_gain[...] = (d_hidden * cache.xhat).sum(axis=0)
        self.grad_ln_shift[...] = d_hidden.sum(axis=0)
        d_xhat = d_hidden * self.ln_gain
        d_act = cache.inv_std * (
            d_xhat
            - d_xhat.mean(axis=1, keepdims=True)
            - cache.xhat * (d_xhat * cache.xhat).mean(axis=1, keepdims=True)
        )

        d_pre = np.where(cache.pre > 0, d_act, self.leaky_slope * d_act)
        self.layer1.grad_weight[...] = d_pre.T @ cache.x
        self.layer1.grad_bias[...] = d_pre.sum(axis=0)
        d_x = d_pre @ self.layer1.weight
        return d_x[0] if cache.squeeze else d_x


def mlp_forward(net, x):
    return net.forward(x)


def mlp_backward(net, cache, grad_out):
    """Return ``(parameter gradients, input gradient)``."""
    d_x = net.backward(cache, grad_out)
    return net.grads, d_x


@dataclass
class AdamState:
    lr: float = 1e-4
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decoupled: bool = True
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """Apply one Adam update in place and return ``params``.

    With ``state.decoupled`` the decay is ``p -= lr * weight_decay * p``
    ahead of the adaptive step; otherwise ``weight_decay * p`` is added to
    the gradient before the moments are updated.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingFault(f"non-finite gradient for parameter {name!r}", parameter=name)

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name]
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        if not state.decoupled and state.weight_decay:
            g = g + state.weight_decay * p
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.decoupled and state.weight_decay:
            p -= state.lr * state.weight_decay * p
        p -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return params


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_grad_norm(grads, max_norm=1.0):
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns ``(grads, total_norm)`` where ``total_norm`` is the norm before
    clipping. Gradient arrays are rescaled in place.
    """
    total = global_norm(grads)
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return grads, total


@dataclass
class PlateauScheduler:
    """Reduce-on-plateau for a lower-is-better metric.

    After ``patience`` consecutive epochs without a strict improvement on the
    best metric so far, the learning rate is multiplied by ``factor`` and the
    counter restarts.
    """

    factor: float = 0.5
    patience: int = 10
    best: float = float("inf")
    bad_epochs: int = 0
    reductions: int = 0

    def step(self, metric, lr):
        metric = float(metric)
        if not np.isfinite(metric):
            raise DomainError(f"scheduler metric must be finite, got {metric}")
        if metric < self.best:
            self.best = metric
            self.bad_epochs = 0
            return lr
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.bad_epochs = 0
            self.reductions += 1
            return lr * self.factor
        return lr


def scheduler_step(sched, metric, current_lr):
    return sched.step(metric, current_lr)
