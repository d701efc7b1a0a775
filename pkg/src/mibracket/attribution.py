"""Source/filter attribution of a semantic feature set.

The source share of dimension ``d`` is ``I(s; d) / (I(s; d) + I(f; d))``
with both terms from KSG, and the filter share is its complement. Negative
KSG values are floored at zero first, and flagged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import UndefinedRatioError, UsageError
from .ksg import KsgConfig, ksg_estimate
from .seeding import derive_rng


@dataclass
class AttributionResult:
    dimension: str
    i_source: float
    i_filter: float
    a_source: float
    a_filter: float
    ci_low: float
    ci_high: float
    b: int = 10
    level: float = 0.95
    raw_i_source: float = 0.0
    raw_i_filter: float = 0.0
    floored: list = field(default_factory=list)
    replicates: list = field(default_factory=list)
    undefined_replicates: int = 0
    ci_method: str = "percentile"

    def to_dict(self):
        return asdict(self)


def _values(m):
    a = np.asarray(getattr(m, "values", m), dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


def source_share(i_source, i_filter, dimension=""):
    """Return ``(a_source, floored_labels)`` after flooring negative MI at 0."""
    floored = []
    if i_source < 0:
        floored.append("source")
        i_source = 0.0
    if i_filter < 0:
        floored.append("filter")
        i_filter = 0.0
    total = i_source + i_filter
    if total == 0.0:
        raise UndefinedRatioError(
            f"attribution ratio undefined for dimension {dimension!r}: "
            f"I(source; d) and I(filter; d) are both zero after flooring"
        )
    return i_source / total, floored


def bootstrap_indices(n, b, seed):
    return [derive_rng(seed, "bootstrap", i).integers(0, n, size=n) for i in range(b)]


def bootstrap_ci(statistic, n_rows, b=10, level=0.95, seed=0):
    """Percentile interval of ``statistic(rows)`` over ``b`` row resamples.

    ``statistic`` receives an index array drawn with replacement; it may
    raise :class:`UndefinedRatioError`, in which case that replicate is
    dropped. Returns ``(low, high, replicates, n_dropped)``.
    """
    if b < 2:
        raise UsageError(f"bootstrap needs at least 2 resamples, got {b}")
    if not 0 < level < 1:
        raise UsageError("level must lie in (0, 1)")
    stats, dropped = [], 0
    for rows in bootstrap_indices(n_rows, b, seed):
        try:
            stats.append(float(statistic(rows)))
        except UndefinedRatioError:
            dropped += 1
    if not stats:
        return math.nan, math.nan, stats, dropped
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(stats, [tail, 100.0 - tail])
    return float(low), float(high), stats, dropped


def attribute(source, filt, dim, cfg=None, b=10, level=0.95, seed=0, name="dimension"):
    """Source/filter shares for one dimension, with a bootstrap interval."""
    cfg = cfg or KsgConfig()
    s, f, d = _values(source), _values(filt), _values(dim)
    if not (s.shape[0] == f.shape[0] == d.shape[0]):
        raise UsageError(
            f"source, filter and dimension must be row-aligned, got {s.shape[0]}, {f.shape[0]}, {d.shape[0]}"
        )
    raw_s = ksg_estimate(s, d, cfg)
    raw_f = ksg_estimate(f, d, cfg)
    a_source, floored = source_share(raw_s, raw_f, name)

    def statistic(rows):
        return source_share(ksg_estimate(s[rows], d[rows], cfg), ksg_estimate(f[rows], d[rows], cfg), name)[0]

    low, high, stats, dropped = bootstrap_ci(statistic, s.shape[0], b, level, seed)
    return AttributionResult(
        dimension=name,
        i_source=max(raw_s, 0.0),
        i_filter=max(raw_f, 0.0),
        a_source=a_source,
        a_filter=1.0 - a_source,
        ci_low=low,
        ci_high=high,
        b=b,
        level=level,
        raw_i_source=raw_s,
        raw_i_filter=raw_f,
        floored=floored,
        replicates=stats,
        undefined_replicates=dropped,
    )
