"""Contrastive log-ratio upper bound with a diagonal-Gaussian conditional.

Log-likelihoods omit the ``-(d_y/2) log 2pi`` constant; it cancels in the
joint-minus-marginal difference.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .errors import ShapeError, UsageError

LOGVAR_MIN = -6.0
LOGVAR_MAX = 2.0
CLUB_MARGINALS = ("permute", "all-pairs")


def clamp_logvar(raw, low=LOGVAR_MIN, high=LOGVAR_MAX):
    return np.clip(raw, low, high)


def gaussian_log_likelihood(y, mu, logvar):
    """Per-row ``-1/2 sum_j [logvar_j + (y_j - mu_j)^2 / exp(logvar_j)]``."""
    return -0.5 * np.sum(logvar + (y - mu) ** 2 * np.exp(-logvar), axis=-1)


class ClubEstimator:
    """Mean and log-variance heads, each a separate two-layer MLP on ``x``."""

    def __init__(
        self,
        dx,
        dy,
        rng,
        hidden=nn.HIDDEN_DIM,
        leaky_slope=nn.LEAKY_SLOPE,
        lr=1e-4,
        weight_decay=1e-5,
        decoupled=True,
        logvar_range=(LOGVAR_MIN, LOGVAR_MAX),
        marginal="permute",
        bias_init="uniform",
    ):
        if marginal not in CLUB_MARGINALS:
            raise UsageError(f"CLUB marginal mode must be one of {CLUB_MARGINALS}")
        self.dx, self.dy = int(dx), int(dy)
        self.mean_net = nn.MlpNet(self.dx, self.dy, hidden, leaky_slope, rng, bias_init=bias_init)
        self.logvar_net = nn.MlpNet(self.dx, self.dy, hidden, leaky_slope, rng, bias_init=bias_init)
        self.optimizer = nn.AdamState(lr=lr, weight_decay=weight_decay, decoupled=decoupled)
        self.logvar_min, self.logvar_max = map(float, logvar_range)
        self.marginal = marginal
        self.logvar_seen = [np.inf, -np.inf]
        self.last_epoch_nll = float("nan")

    @property
    def params(self):
        out = {f"mean.{k}": v for k, v in self.mean_net.params.items()}
        out.update({f"logvar.{k}": v for k, v in self.logvar_net.params.items()})
        return out

    @property
    def grads(self):
        out = {f"mean.{k}": v for k, v in self.mean_net.grads.items()}
        out.update({f"logvar.{k}": v for k, v in self.logvar_net.grads.items()})
        return out

    def _check(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        if x.shape[1] != self.dx or y.shape[1] != self.dy or x.shape[0] != y.shape[0]:
            raise ShapeError(
                f"expected ({self.dx}, {self.dy})-wide row-aligned pairs, got {x.shape} and {y.shape}"
            )
        return x, y

    def _heads(self, x):
        mu, mu_cache = self.mean_net.forward(x)
        raw, lv_cache = self.logvar_net.forward(x)
        logvar = clamp_logvar(raw, self.logvar_min, self.logvar_max)
        lo, hi = float(logvar.min()), float(logvar.max())
        assert self.logvar_min <= lo and hi <= self.logvar_max
        self.logvar_seen[0] = min(self.logvar_seen[0], lo)
        self.logvar_seen[1] = max(self.logvar_seen[1], hi)
        return mu, raw, logvar, (mu_cache, lv_cache)

    def mu_logvar(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        mu, _, logvar, _ = self._heads(x)
        return mu, logvar

    def log_likelihood(self, x, y):
        """Constant-free ``log q(y|x)``; scalar for one pair, array for a batch."""
        single = np.ndim(x) == 1 and np.ndim(y) == 1
        x, y = self._check(x, y)
        mu, logvar = self.mu_logvar(x)
        ll = gaussian_log_likelihood(y, mu, logvar)
        return float(ll[0]) if single else ll

    def bound(self, joint, marginal=None):
        """Mean joint log-likelihood minus mean product-of-marginals log-likelihood.

        ``joint`` is ``(x, y)``. ``marginal`` is ``(x, y_shuffled)`` in
        ``"permute"`` mode; in ``"all-pairs"`` mode it is ignored and every
        ``(x_i, y_j)`` combination in the batch is averaged.
        """
        x, y = self._check(*joint)
        if x.shape[0] == 0:
            raise UsageError("empty batch")
        mu, logvar = self.mu_logvar(x)
        positive = gaussian_log_likelihood(y, mu, logvar).mean()
        if self.marginal == "all-pairs":
            # mean_j (y_j - mu_i)^2 expanded per coordinate
            sq = (y**2).mean(axis=0) - 2.0 * mu * y.mean(axis=0) + mu**2
            negative = (-0.5 * np.sum(logvar + sq * np.exp(-logvar), axis=1)).mean()
        else:
            if marginal is None:
                raise UsageError("permute mode needs a marginal batch")
            mx, my = self._check(*marginal)
            if mx.shape[0] != x.shape[0]:
                raise UsageError("joint and marginal batches must have equal size")
            if mx is not x and not np.array_equal(mx, x):
                mu, logvar = self.mu_logvar(mx)
            negative = gaussian_log_likelihood(my, mu, logvar).mean()
        return float(positive - negative)

    def train_step(self, x, y, clip_norm=1.0):
        """One maximum-likelihood step on joint samples; returns the pre-step NLL."""
        x, y = self._check(x, y)
        n = x.shape[0]
        mu, raw, logvar, (mu_cache, lv_cache) = self._heads(x)
        inv_var = np.exp(-logvar)
        resid = y - mu
        nll = float(0.5 * np.sum(logvar + resid**2 * inv_var) / n)

        d_mu = -resid * inv_var / n
        d_logvar = 0.5 * (1.0 - resid**2 * inv_var) / n
        d_logvar *= (raw >= self.logvar_min) & (raw <= self.logvar_max)
        self.mean_net.backward(mu_cache, d_mu)
        self.logvar_net.backward(lv_cache, d_logvar)
        grads = self.grads
        nn.clip_grad_norm(grads, clip_norm)
        nn.adam_step(self.params, grads, self.optimizer)
        return nll

    def train_epoch(self, x, y, batches, clip_norm=1.0):
        """Per batch: one likelihood step, then the bound on that batch.

        Returns the epoch mean of the batch bounds.
        """
        values, nll = [], []
        for j, m in batches:
            xb, yb = x[j], y[j]
            nll.append(self.train_step(xb, yb, clip_norm))
            values.append(self.bound((xb, yb), (xb, y[m])))
        self.last_epoch_nll = float(np.mean(nll))
        return float(np.mean(values))

    @property
    def lr(self):
        return self.optimizer.lr

    @lr.setter
    def lr(self, value):
        self.optimizer.lr = value


def club_log_likelihood(est, x, y):
    return est.log_likelihood(x, y)


def club_bound(est, joint_batch, marginal_batch=None):
    return est.bound(joint_batch, marginal_batch)


def club_train_epoch(est, x, y, batches, clip_norm=1.0):
    return est.train_epoch(x, y, batches, clip_norm)
