"""Donsker-Varadhan lower bound with an EMA-stabilised partition function."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import DomainError, ShapeError, TrainingFault, UsageError

EMA_CADENCES = ("batch", "epoch")


@dataclass
class EmaState:
    alpha: float = 0.01
    value: float = 0.0
    count: int = 0
    floor: float = 1e-8

    @property
    def corrected(self):
        if self.count == 0:
            raise UsageError("EMA has not been updated yet")
        return self.value / (1.0 - (1.0 - self.alpha) ** self.count)


def ema_update(ema, batch_mean_exp):
    """Fold one batch mean of ``exp(T)`` into the running partition estimate.

    Returns ``(ema, z_hat)`` with ``z_hat`` the bias-corrected estimate.
    """
    v = float(batch_mean_exp)
    if not (np.isfinite(v) and v > 0.0):
        raise DomainError(f"partition sample must be positive and finite, got {v}")
    ema.value = (1.0 - ema.alpha) * ema.value + ema.alpha * v
    ema.count += 1
    return ema, ema.corrected


class MineEstimator:
    """Critic ``T([x; y])`` trained to maximise the stabilised DV bound."""

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
        ema_alpha=0.01,
        eps=1e-8,
        ema_cadence="batch",
        bias_init="uniform",
    ):
        if ema_cadence not in EMA_CADENCES:
            raise UsageError(f"ema_cadence must be one of {EMA_CADENCES}")
        self.dx, self.dy = int(dx), int(dy)
        self.critic = nn.MlpNet(self.dx + self.dy, 1, hidden, leaky_slope, rng, bias_init=bias_init)
        self.ema = EmaState(alpha=ema_alpha, floor=eps)
        self.optimizer = nn.AdamState(lr=lr, weight_decay=weight_decay, decoupled=decoupled)
        self.ema_cadence = ema_cadence
        self._epoch_exp = []

    @property
    def eps(self):
        return self.ema.floor

    def _pairs(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        if x.shape[1] != self.dx or y.shape[1] != self.dy or x.shape[0] != y.shape[0]:
            raise ShapeError(
                f"expected ({self.dx}, {self.dy})-wide row-aligned pairs, got {x.shape} and {y.shape}"
            )
        return np.hstack([x, y])

    def score(self, x, y):
        """Critic scores; scalar for a single pair, ``(batch,)`` for a batch."""
        single = np.ndim(x) == 1 and np.ndim(y) == 1
        out = self.critic(self._pairs(x, y))[:, 0]
        return float(out[0]) if single else out

    def _partition(self, mean_exp):
        if self.ema_cadence == "batch":
            _, z_hat = ema_update(self.ema, mean_exp)
            return z_hat
        # epoch cadence: batches read the estimate frozen at the epoch start
        self._epoch_exp.append(mean_exp)
        if self.ema.count == 0:
            return mean_exp
        return self.ema.corrected

    def end_epoch(self):
        if self.ema_cadence == "epoch" and self._epoch_exp:
            ema_update(self.ema, float(np.mean(self._epoch_exp)))
        self._epoch_exp = []

    def objective(self, joint, marginal, update_ema=True):
        """Stabilised bound on one batch: ``mean T(joint) - log(Z_hat + eps)``.

        ``joint`` and ``marginal`` are ``(x, y)`` tuples of equal batch size.
        """
        value, _ = self._forward(joint, marginal, update_ema)
        return value

    def _forward(self, joint, marginal, update_ema=True):
        a = self._pairs(*joint)
        b = self._pairs(*marginal)
        if a.shape[0] == 0:
            raise UsageError("empty batch")
        if a.shape[0] != b.shape[0]:
            raise UsageError("joint and marginal batches must have equal size")
        out, cache = self.critic.forward(np.vstack([a, b]))
        t = out[:, 0]
        n = a.shape[0]
        t_joint, t_marg = t[:n], t[n:]
        exp_marg = np.exp(t_marg)
        mean_exp = float(exp_marg.mean())
        if not np.isfinite(mean_exp) or mean_exp <= 0.0:
            raise TrainingFault("partition function overflowed or underflowed", parameter="critic")
        if update_ema:
            z_hat = self._partition(mean_exp)
        else:
            z_hat = mean_exp
        value = float(t_joint.mean() - np.log(z_hat + self.eps))
        return value, (cache, n, exp_marg, z_hat)

    def train_step(self, joint, marginal, clip_norm=1.0):
        """One ascent step on the bound; returns the pre-step objective."""
        value, (cache, n, exp_marg, z_hat) = self._forward(joint, marginal)
        # the EMA denominator is a constant for the gradient
        grad_t = np.concatenate([np.full(n, -1.0 / n), exp_marg / (n * (z_hat + self.eps))])
        self.critic.backward(cache, grad_t[:, None])
        grads = self.critic.grads
        nn.clip_grad_norm(grads, clip_norm)
        nn.adam_step(self.critic.params, grads, self.optimizer)
        return value

    def train_epoch(self, x, y, batches, clip_norm=1.0):
        """Run one pass over precomputed ``(joint_idx, marginal_idx)`` batches."""
        values = [
            self.train_step((x[j], y[j]), (x[j], y[m]), clip_norm)
            for j, m in batches
        ]
        self.end_epoch()
        return float(np.mean(values))

    def evaluate(self, x, y, marginal_idx):
        """Plain DV bound on held data, partition estimated by the sample mean."""
        t_joint = self.score(x, y)
        t_marg = self.score(x, y[marginal_idx])
        m = t_marg.max()
        return float(t_joint.mean() - (m + np.log(np.mean(np.exp(t_marg - m)))))

    @property
    def lr(self):
        return self.optimizer.lr

    @lr.setter
    def lr(self, value):
        self.optimizer.lr = value


def critic_score(est, x, y):
    return est.score(x, y)


def mine_batch_objective(est, joint_batch, marginal_batch):
    return est.objective(joint_batch, marginal_batch)


def mine_train_epoch(est, x, y, batches, clip_norm=1.0):
    return est.train_epoch(x, y, batches, clip_norm)
