"""Bracket fusion and the ensemble training protocol.

A pair is estimated by ``M`` independently seeded members, each training a
MINE critic and a CLUB conditional side by side on one minibatch stream.
Per member the last ``final_window`` epochs are averaged, members are
averaged, KSG is run once on the same rows, and the three numbers are fused
with the KSG-anchored weight.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .batching import minibatches
from .club import ClubEstimator
from .config import RunConfig
from .data import zscore_array
from .errors import DomainError, TrainingFault, UsageError
from .ksg import KsgConfig, ksg_estimate
from .mine import MineEstimator
from .seeding import derive_int, derive_rng

BASE_WEIGHT = 0.3
MAX_WEIGHT = 0.6
WEIGHT_SLOPE = 0.1
DELTA_KNEE = 1.0


def adaptive_weight(delta):
    """KSG weight: 0.3 while the bracket is at most 1 nat wide, then 0.3 + 0.1 * delta capped at 0.6."""
    delta = float(delta)
    if not math.isfinite(delta):
        raise DomainError(f"delta must be finite, got {delta}")
    if delta < 0:
        raise UsageError(f"delta must be non-negative (enforce mine <= club first), got {delta}")
    if delta <= DELTA_KNEE:
        return BASE_WEIGHT
    return min(MAX_WEIGHT, BASE_WEIGHT + WEIGHT_SLOPE * delta)


def blend(mine, club, ksg, weight):
    return (1.0 - weight) * (mine + club) / 2.0 + weight * ksg


@dataclass
class MiBracket:
    mine: float
    club: float
    delta: float
    ksg: float
    weight: float
    final: float
    raw_mine: float
    raw_club: float

    @property
    def mine_floored(self):
        return max(self.mine, 0.0)

    def to_dict(self):
        return asdict(self)


def fuse(mine, club, ksg):
    mine, club, ksg = float(mine), float(club), float(ksg)
    if not all(math.isfinite(v) for v in (mine, club, ksg)):
        raise DomainError(f"fusion inputs must be finite, got ({mine}, {club}, {ksg})")
    lower = min(mine, club)
    delta = club - lower
    w = adaptive_weight(delta)
    return MiBracket(lower, club, delta, ksg, w, blend(lower, club, ksg, w), mine, club)


def early_stop_check(deltas, threshold=0.1, patience=7):
    """True iff the most recent ``patience`` deltas are all below ``threshold``."""
    deltas = list(deltas)
    if len(deltas) < patience:
        return False
    return all(d < threshold for d in deltas[-patience:])


@dataclass
class TrainTrace:
    member: int
    seed: int
    mine: list = field(default_factory=list)
    club: list = field(default_factory=list)
    delta: list = field(default_factory=list)
    lr_mine: list = field(default_factory=list)
    lr_club: list = field(default_factory=list)
    stopped_epoch: int | None = None
    logvar_range: tuple = (math.inf, -math.inf)

    @property
    def epochs(self):
        return len(self.mine)

    def window_means(self, window=10):
        """Mean MINE and CLUB over the last ``min(window, epochs)`` epochs."""
        w = min(window, self.epochs)
        if w == 0:
            raise UsageError("trace is empty")
        return float(np.mean(self.mine[-w:])), float(np.mean(self.club[-w:]))

    def to_dict(self):
        return asdict(self)


@dataclass
class EnsembleResult:
    traces: list
    member_mine: list
    member_club: list
    bracket: MiBracket
    seeds: dict
    config: dict
    n: int

    @property
    def final(self):
        return self.bracket.final

    def to_dict(self):
        return {
            "bracket": self.bracket.to_dict(),
            "member_mine": self.member_mine,
            "member_club": self.member_club,
            "seeds": self.seeds,
            "n": self.n,
            "traces": [t.to_dict() for t in self.traces],
        }


def _as_array(m):
    a = np.asarray(getattr(m, "values", m), dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


def train_member(x, y, cfg, member_seed, member=0):
    """Train one MINE/CLUB pair to the epoch budget or early stop."""
    common = dict(
        hidden=cfg.hidden,
        leaky_slope=cfg.leaky_slope,
        lr=cfg.lr,
        weight_decay=cfg.weight_decay,
        decoupled=cfg.decoupled_weight_decay,
        bias_init=cfg.bias_init,
    )
    mine = MineEstimator(
        x.shape[1], y.shape[1], derive_rng(member_seed, "mine-init"),
        ema_alpha=cfg.ema_alpha, eps=cfg.ema_eps, ema_cadence=cfg.ema_cadence, **common,
    )
    club = ClubEstimator(
        x.shape[1], y.shape[1], derive_rng(member_seed, "club-init"),
        logvar_range=(cfg.logvar_min, cfg.logvar_max), marginal=cfg.club_marginal, **common,
    )
    sched_mine = nn.PlateauScheduler(cfg.scheduler_factor, cfg.scheduler_patience)
    sched_club = nn.PlateauScheduler(cfg.scheduler_factor, cfg.scheduler_patience)
    batch_rng = derive_rng(member_seed, "batches")
    trace = TrainTrace(member=member, seed=member_seed)

    for epoch in range(1, cfg.epochs + 1):
        batches = minibatches(x.shape[0], cfg.batch_size, batch_rng, cfg.marginal_sampling)
        try:
            m_val = mine.train_epoch(x, y, batches, cfg.clip_norm)
            c_val = club.train_epoch(x, y, batches, cfg.clip_norm)
        except TrainingFault as exc:
            raise exc.with_context(member, epoch) from exc
        except DomainError as exc:
            raise TrainingFault(str(exc), member=member, epoch=epoch) from exc
        if not (math.isfinite(m_val) and math.isfinite(c_val)):
            raise TrainingFault("non-finite epoch estimate", member=member, epoch=epoch)
        delta = c_val - min(m_val, c_val)
        trace.mine.append(m_val)
        trace.club.append(c_val)
        trace.delta.append(delta)
        trace.lr_mine.append(mine.lr)
        trace.lr_club.append(club.lr)
        if cfg.scheduler_metric == "delta":
            mine.lr = sched_mine.step(delta, mine.lr)
            club.lr = sched_club.step(delta, club.lr)
        else:
            mine.lr = sched_mine.step(-m_val, mine.lr)
            club.lr = sched_club.step(club.last_epoch_nll, club.lr)
        if early_stop_check(trace.delta, cfg.early_stop_delta, cfg.early_stop_patience):
            trace.stopped_epoch = epoch
            break
    trace.logvar_range = tuple(float(v) for v in club.logvar_seen)
    return trace


def _member_job(args):
    return train_member(*args)


def train_pair(x, y, cfg=None, seed=None, workers=None):
    """Ensemble-train and fuse one feature pair; returns an :class:`EnsembleResult`."""
    cfg = cfg or RunConfig()
    seed = cfg.seed if seed is None else seed
    workers = cfg.workers if workers is None else workers
    xa, ya = _as_array(x), _as_array(y)
    if xa.shape[0] != ya.shape[0]:
        raise UsageError(f"x and y must be row-aligned, got {xa.shape[0]} and {ya.shape[0]} rows")
    if not (np.isfinite(xa).all() and np.isfinite(ya).all()):
        raise DomainError("training data must be finite")
    xa, ya = zscore_array(xa)[0], zscore_array(ya)[0]

    member_seeds = [derive_int(seed, "member", m) for m in range(cfg.ensemble)]
    jobs = [(xa, ya, cfg, s, m) for m, s in enumerate(member_seeds)]
    if workers > 1 and cfg.ensemble > 1:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.ensemble)) as pool:
            traces = list(pool.map(_member_job, jobs))
    else:
        traces = [_member_job(j) for j in jobs]

    windows = [t.window_means(cfg.final_window) for t in traces]
    member_mine = [w[0] for w in windows]
    member_club = [w[1] for w in windows]
    ksg_seed = derive_int(seed, "ksg")
    ksg = ksg_estimate(xa, ya, KsgConfig(k=cfg.ksg_k, noise=cfg.ksg_noise, seed=ksg_seed))
    bracket = fuse(np.mean(member_mine), np.mean(member_club), ksg)
    return EnsembleResult(
        traces=traces,
        member_mine=member_mine,
        member_club=member_club,
        bracket=bracket,
        seeds={"master": seed, "members": member_seeds, "ksg": ksg_seed},
        config=cfg.to_dict(),
        n=xa.shape[0],
    )
