"""Independent reference computations used as test oracles.

Nothing here imports the package under test; each routine re-derives its
quantity by the most literal route available (explicit loops, scipy, or
hand recurrences) so that agreement is evidence rather than tautology.
"""

import math

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma as sp_digamma


def mlp_reference(w1, b1, gain, shift, w2, b2, x, slope=0.2, eps=1e-5):
    """Straight-line evaluation of ``W2 . LN(LReLU(W1 x + b1)) + b2`` for one vector."""
    hidden = len(b1)
    pre = [sum(w1[i][j] * x[j] for j in range(len(x))) + b1[i] for i in range(hidden)]
    act = [p if p > 0 else slope * p for p in pre]
    mean = sum(act) / hidden
    var = sum((a - mean) ** 2 for a in act) / hidden
    normed = [(a - mean) / math.sqrt(var + eps) * gain[i] + shift[i] for i, a in enumerate(act)]
    return np.array([sum(w2[o][i] * normed[i] for i in range(hidden)) + b2[o] for o in range(len(b2))])


def gaussian_ll_reference(y, mu, logvar):
    """Term-by-term ``-1/2 sum_j [logvar_j + (y_j - mu_j)^2 exp(-logvar_j)]``."""
    total = 0.0
    for yj, mj, lj in zip(y, mu, logvar):
        total += lj + (yj - mj) ** 2 / math.exp(lj)
    return -0.5 * total


def adam_scalar_reference(p, grads, lr=1e-4, b1=0.9, b2=0.999, eps=1e-8):
    """Plain scalar Adam without weight decay; returns the parameter trajectory."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        out.append(p)
    return out


def plateau_reference(metrics, lr, factor=0.5, patience=10):
    """Scripted counter simulation of reduce-on-plateau (strict improvement)."""
    best = math.inf
    bad = 0
    lrs = []
    for metric in metrics:
        if metric < best:
            best, bad = metric, 0
        else:
            bad += 1
            if bad == patience:
                lr *= factor
                bad = 0
        lrs.append(lr)
    return lrs


def ema_reference(values, alpha=0.01):
    """Bias-corrected EMA after each value."""
    z = 0.0
    out = []
    for t, v in enumerate(values, start=1):
        z = (1 - alpha) * z + alpha * v
        out.append(z / (1 - (1 - alpha) ** t))
    return out


def sliding_window_stop(deltas, threshold=0.1, patience=7):
    """Scan every window; the stop test looks only at the final one."""
    if len(deltas) < patience:
        return False
    window = deltas[len(deltas) - patience:]
    return max(window) < threshold


def knn_chebyshev_reference(points, k):
    """k-th neighbour distance (self excluded) via scipy's kd-tree."""
    tree = cKDTree(points)
    d, _ = tree.query(points, k=k + 1, p=np.inf)
    return d[:, k]


def strict_counts_reference(points, radii):
    """Neighbours strictly inside each radius, self excluded, via an explicit scan."""
    n = len(points)
    out = np.zeros(n, dtype=np.int64)
    for i in range(n):
        d = np.max(np.abs(points - points[i]), axis=1)
        d[i] = np.inf
        out[i] = np.count_nonzero(d < radii[i])
    return out


def ksg_reference(xz, yz, k):
    """KSG estimator 1 on already standardised, jittered arrays (scipy digamma)."""
    joint = np.hstack([xz, yz])
    eps = knn_chebyshev_reference(joint, k)
    nx = strict_counts_reference(xz, eps)
    ny = strict_counts_reference(yz, eps)
    n = len(xz)
    return float(sp_digamma(k) + sp_digamma(n) - np.mean(sp_digamma(nx + 1) + sp_digamma(ny + 1)))


def largest_remainder_reference(sizes, n):
    """Hamilton apportionment with ties broken toward the earlier stratum."""
    total = sum(sizes)
    quotas = [n * s / total for s in sizes]
    seats = [math.floor(q) for q in quotas]
    rema = sorted(range(len(sizes)), key=lambda i: (seats[i] - quotas[i], i))
    for i in rema[: n - sum(seats)]:
        seats[i] += 1
    return seats
