"""Minibatch streams with product-of-marginals pairings."""

import numpy as np

from .errors import UsageError

MARGINAL_MODES = ("batch", "dataset")


def minibatches(n, batch_size, rng, marginal="batch"):
    """Split ``range(n)`` into shuffled minibatches.

    Yields ``(joint_idx, marginal_idx)``: rows ``x[joint_idx]`` pair with
    ``y[joint_idx]`` for joint samples and with ``y[marginal_idx]`` for
    product-of-marginals samples. ``marginal="batch"`` permutes y within the
    batch; ``"dataset"`` draws the partner rows from one permutation of the
    whole dataset. A trailing batch with fewer than two rows is dropped.
    """
    if batch_size < 2:
        raise UsageError(f"batch_size must be >= 2, got {batch_size}")
    if marginal not in MARGINAL_MODES:
        raise UsageError(f"marginal sampling must be one of {MARGINAL_MODES}, got {marginal!r}")
    order = rng.permutation(n)
    partner = rng.permutation(n) if marginal == "dataset" else None
    batches = []
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if len(idx) < 2:
            break
        if partner is None:
            marg = idx[rng.permutation(len(idx))]
        else:
            marg = partner[start:start + batch_size]
        batches.append((idx, marg))
    return batches
