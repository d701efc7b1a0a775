"""Feature matrices: ingestion, normalisation, sampling, pairing, synthetic data."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeError, UsageError

STRATA_COLUMN = "strata"
FAMILIES = ("correlated-gaussian", "independent-uniform", "deterministic-map")
PAIRING_POLICIES = ("same-rows", "random")


@dataclass
class FeatureMatrix:
    names: list
    values: np.ndarray
    strata: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self):
        self.names = [str(n) for n in self.names]
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2:
            raise ShapeError(f"feature values must be 2-D, got shape {self.values.shape}")
        if self.values.shape[1] != len(self.names):
            raise ShapeError(
                f"{len(self.names)} column names for {self.values.shape[1]} columns"
            )
        if not np.isfinite(self.values).all():
            raise DataError("feature matrix contains NaN or infinite values")
        if self.strata is not None:
            self.strata = np.asarray(self.strata, dtype=object)
            if self.strata.shape != (self.values.shape[0],):
                raise ShapeError("need exactly one stratum label per row")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def take(self, rows, provenance=None):
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix(
            list(self.names),
            self.values[rows],
            None if self.strata is None else self.strata[rows],
            self.provenance if provenance is None else provenance,
        )

    @classmethod
    def from_array(cls, values, prefix="f", provenance=""):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        return cls([f"{prefix}{j}" for j in range(values.shape[1])], values, None, provenance)


def _sniff_delimiter(header_line):
    return "\t" if "\t" in header_line and "," not in header_line else ","


def load_features(path, expect_columns=None, delimiter=None):
    """Read a delimited text file with a header row.

    A column named ``strata`` is taken as per-row labels rather than a
    feature. ``expect_columns`` (an int or a list of names) is checked
    against the parsed header when given.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DataError(f"{path}: missing header row", line=1)
    delim = delimiter or _sniff_delimiter(lines[0])
    reader = csv.reader(io.StringIO(text), delimiter=delim)
    header = [h.strip() for h in next(reader)]
    if any(not h for h in header):
        raise DataError(f"{path}: empty column name in header", line=1)
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header", line=1)
    try:
        float(header[0])
    except ValueError:
        pass
    else:
        raise DataError(f"{path}: header row looks numeric; a header of column names is required", line=1)

    strata_col = header.index(STRATA_COLUMN) if STRATA_COLUMN in header else None
    names = [h for j, h in enumerate(header) if j != strata_col]
    rows, strata = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(
                f"{path}: expected {len(header)} fields, found {len(row)}", line=lineno
            )
        values = []
        for j, cell in enumerate(row):
            if j == strata_col:
                strata.append(cell.strip())
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r}", line=lineno, column=header[j]) from None
            if not math.isfinite(v):
                raise DataError(f"{path}: non-finite cell {cell!r}", line=lineno, column=header[j])
            values.append(v)
        rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")

    if expect_columns is not None:
        if isinstance(expect_columns, int):
            if len(names) != expect_columns:
                raise DataError(f"{path}: expected {expect_columns} feature columns, found {len(names)}", line=1)
        elif list(expect_columns) != names:
            raise DataError(f"{path}: header {names} does not match expected {list(expect_columns)}", line=1)

    return FeatureMatrix(
        names,
        np.array(rows, dtype=np.float64).reshape(len(rows), len(names)),
        np.array(strata, dtype=object) if strata_col is not None else None,
        provenance=str(path),
    )


def save_features(m, path, delimiter=","):
    """Write ``m`` in the format :func:`load_features` reads; floats use ``repr``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        header = list(m.names) + ([STRATA_COLUMN] if m.strata is not None else [])
        w.writerow(header)
        for i in range(m.n):
            row = [repr(float(v)) for v in m.values[i]]
            if m.strata is not None:
                row.append(str(m.strata[i]))
            w.writerow(row)
    return path


def zscore_array(values):
    """Column-wise ``(v - mean) / std`` with population std.

    Returns ``(z, mean, std, constant_mask)``; constant columns are only
    centred and report std 1.
    """
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean(axis=0)
    centred = values - mean
    std = np.sqrt(np.mean(centred * centred, axis=0))
    constant = np.ptp(values, axis=0) == 0
    centred[:, constant] = 0.0
    std = np.where(constant, 1.0, std)
    return centred / std, mean, std, constant


def zscore(m):
    """Standardise every column; returns ``(FeatureMatrix, [(mean, std), ...])``."""
    if m.n < 2:
        raise UsageError(f"z-scoring needs at least 2 rows, got {m.n}")
    z, mean, std, constant = zscore_array(m.values)
    if constant.any():
        cols = [m.names[j] for j in np.flatnonzero(constant)]
        warnings.warn(f"zero-variance columns left centred with std 1: {cols}", RuntimeWarning, stacklevel=2)
    stats = [(float(a), float(b)) for a, b in zip(mean, std)]
    return replace(m, values=z), stats


def allocate_strata(sizes, n):
    """Proportional allocation with largest-remainder rounding.

    Ties in the fractional remainders go to the earlier stratum.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    total = int(sizes.sum())
    if n > total:
        raise UsageError(f"cannot draw {n} rows from {total}")
    exact = [n * int(s) / total for s in sizes]
    alloc = [int(math.floor(q)) for q in exact]
    left = n - sum(alloc)
    order = sorted(range(len(sizes)), key=lambda i: (-(exact[i] - alloc[i]), i))
    for i in order:
        if left == 0:
            break
        if alloc[i] < sizes[i]:
            alloc[i] += 1
            left -= 1
    return alloc


def stratified_rows(m, n=500, seed=0):
    """Sorted row indices of a proportional stratified draw of ``n`` rows."""
    if n > m.n:
        raise UsageError(f"sample size {n} exceeds the {m.n} available rows")
    rng = np.random.default_rng(seed)
    if m.strata is None:
        return np.sort(rng.choice(m.n, size=n, replace=False))
    labels = sorted(set(m.strata.tolist()), key=str)
    members = [np.flatnonzero(m.strata == lab) for lab in labels]
    alloc = allocate_strata([len(r) for r in members], n)
    picked = [rng.choice(r, size=a, replace=False) for r, a in zip(members, alloc)]
    return np.sort(np.concatenate(picked))


def stratified_sample(m, n=500, seed=0):
    """Draw ``n`` rows, proportionally across strata when labels exist.

    Selected rows keep their original order; deterministic under ``seed``.
    """
    rows = stratified_rows(m, n, seed)
    return m.take(rows, provenance=f"{m.provenance}|sample(n={n},seed={seed})")


@dataclass
class SyntheticSpec:
    family: str = "correlated-gaussian"
    dims: tuple = (1, 1)
    rho: float = 0.0
    n: int = 2000
    seed: int = 0
    coupled: int | None = None

    def validate(self):
        problems = []
        if self.family not in FAMILIES:
            problems.append(f"family must be one of {FAMILIES}, got {self.family!r}")
        dx, dy = self.dims
        if dx < 1 or dy < 1:
            problems.append(f"dims must be positive, got {self.dims}")
        if not -1.0 < self.rho < 1.0:
            problems.append(f"rho must lie in (-1, 1), got {self.rho}")
        if self.n < 2:
            problems.append("n must be at least 2")
        c = self.n_coupled
        if c < 0 or c > min(dx, dy):
            problems.append(f"coupled must lie in [0, min(dims)], got {c}")
        if self.family == "deterministic-map" and dx != dy:
            problems.append("deterministic-map needs equal dims")
        if problems:
            raise UsageError("; ".join(problems))

    @property
    def n_coupled(self):
        return min(self.dims) if self.coupled is None else int(self.coupled)

    @property
    def true_mi(self):
        if self.family == "independent-uniform":
            return 0.0
        if self.family == "deterministic-map":
            return math.inf
        return -0.5 * self.n_coupled * math.log1p(-self.rho * self.rho)


def gaussian_mi(rho, coupled=1):
    """Closed-form MI in nats for ``coupled`` independent bivariate normal pairs."""
    return -0.5 * coupled * math.log1p(-rho * rho)


def synth_generate(spec):
    """Return ``(x, y, true_mi)`` drawn according to ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    dx, dy = spec.dims
    tag = f"synthetic:{spec.family}:rho={spec.rho}:seed={spec.seed}"
    if spec.family == "correlated-gaussian":
        x = rng.standard_normal((spec.n, dx))
        y = rng.standard_normal((spec.n, dy))
        c = spec.n_coupled
        y[:, :c] = spec.rho * x[:, :c] + math.sqrt(1.0 - spec.rho**2) * y[:, :c]
    elif spec.family == "independent-uniform":
        x = rng.random((spec.n, dx))
        y = rng.random((spec.n, dy))
    else:
        x = rng.standard_normal((spec.n, dx))
        y = x.copy()
    return (
        FeatureMatrix.from_array(x, "x", tag),
        FeatureMatrix.from_array(y, "y", tag),
        spec.true_mi,
    )


@dataclass
class AlignedPair:
    x: FeatureMatrix
    y: FeatureMatrix
    policy: str
    x_rows: np.ndarray = field(repr=False)
    y_rows: np.ndarray = field(repr=False)


def pair_alignment(x, y, policy="random", seed=0):
    """Row-align two matrices.

    ``same-rows`` keeps rows as they are and requires equal N. ``random``
    (cross-corpus) pairs the first ``min(Nx, Ny)`` x rows with a seeded
    random selection of y rows. The row maps are kept for the run record.
    """
    if policy not in PAIRING_POLICIES:
        raise UsageError(f"pairing policy must be one of {PAIRING_POLICIES}, got {policy!r}")
    if policy == "same-rows":
        if x.n != y.n:
            raise UsageError(f"same-rows pairing needs equal row counts, got {x.n} and {y.n}")
        if x.provenance and y.provenance and x.provenance != y.provenance:
            warnings.warn("same-rows pairing across different provenances", RuntimeWarning, stacklevel=2)
        rows = np.arange(x.n)
        return AlignedPair(x, y, policy, rows, rows.copy())
    n = min(x.n, y.n)
    rng = np.random.default_rng(seed)
    x_rows = np.arange(n)
    y_rows = rng.permutation(y.n)[:n]
    return AlignedPair(x.take(x_rows), y.take(y_rows), policy, x_rows, y_rows)


def write_sidecar(path, **fields):
    """Structured run metadata next to an output file (JSON, sorted keys)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(fields, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"{type(obj).__name__} is not JSON serialisable")
