"""Factors, treatment cells, observed data, and cell-level summaries.

Conventions used throughout the package:

* Treatment cells are tuples of 0/1 levels, listed in binary-counting order
  with the last factor varying fastest.  The index of cell ``z`` is
  ``sum(z[k] * 2**(K-1-k))``.
* Factor subsets are tuples of sorted 0-based factor indices.  The canonical
  order over nonempty subsets is by cardinality first, lexicographic within
  cardinality: all singletons, then pairs, ..., ending with the full set.
"""

from dataclasses import dataclass, field
from itertools import combinations, product
import csv

import numpy as np

from .errors import EmptyCellError, ParseError, SingletonCellError

MAX_FACTORS = 16


@dataclass(frozen=True)
class FactorSpec:
    """K binary factors with distinct human-readable labels."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 1:
            raise ValueError("need at least one factor")
        if len(labels) > MAX_FACTORS:
            raise ValueError(f"at most {MAX_FACTORS} factors supported")
        if len(set(labels)) != len(labels):
            raise ValueError("factor labels must be distinct")

    @property
    def K(self):
        return len(self.labels)

    @property
    def Q(self):
        return 2 ** self.K

    def subset_label(self, subset):
        """Label like ``A:B`` for a subset of factor indices."""
        return ":".join(self.labels[k] for k in subset)


def default_spec(K):
    """FactorSpec with labels A, B, C, ... (F1, F2, ... beyond 26)."""
    if K <= 26:
        labels = tuple(chr(ord("A") + k) for k in range(K))
    else:
        labels = tuple(f"F{k + 1}" for k in range(K))
    return FactorSpec(labels)


def enumerate_treatments(K):
    """All 2^K cells in binary-counting order, last factor fastest.

    For K=2: (0,0), (0,1), (1,0), (1,1).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    return [tuple(z) for z in product((0, 1), repeat=K)]


def cell_index(z):
    """Position of cell ``z`` in the binary-counting order."""
    idx = 0
    for level in z:
        idx = 2 * idx + level
    return idx


def enumerate_subsets(K):
    """All nonempty subsets of [K] in canonical (cardinality, lex) order."""
    out = []
    for m in range(1, K + 1):
        out.extend(tuple(c) for c in combinations(range(K), m))
    return out


def parse_subset_label(label, spec):
    """Parse a label like ``A:B`` into a sorted tuple of factor indices."""
    parts = label.split(":")
    try:
        idx = tuple(sorted(spec.labels.index(p) for p in parts))
    except ValueError:
        raise ParseError(f"unknown factor in term {label!r}")
    if len(set(idx)) != len(idx):
        raise ParseError(f"repeated factor in term {label!r}")
    return idx


@dataclass(frozen=True)
class AssignmentTable:
    """Observed data: per-unit factor levels and outcome."""

    spec: FactorSpec
    assignment: np.ndarray  # (N, K) of 0/1
    outcome: np.ndarray  # (N,)
    cell: np.ndarray = field(init=False)  # (N,) cell index per unit

    def __post_init__(self):
        z = np.asarray(self.assignment, dtype=np.int64)
        y = np.asarray(self.outcome, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.spec.K:
            raise ValueError("assignment must be N x K")
        if y.shape != (z.shape[0],):
            raise ValueError("outcome length must match assignment rows")
        if not np.isin(z, (0, 1)).all():
            raise ValueError("factor levels must be 0/1")
        object.__setattr__(self, "assignment", z)
        object.__setattr__(self, "outcome", y)
        weights = 2 ** np.arange(self.spec.K - 1, -1, -1, dtype=np.int64)
        object.__setattr__(self, "cell", z @ weights)

    @property
    def N(self):
        return self.outcome.shape[0]


@dataclass(frozen=True)
class CellSummary:
    """Per-cell counts, proportions, means, and unbiased variances."""

    spec: FactorSpec
    counts: np.ndarray  # (Q,)
    means: np.ndarray  # (Q,), nan where count == 0
    variances: np.ndarray | None  # (Q,), nan where count < 2

    @property
    def N(self):
        return int(self.counts.sum())

    @property
    def proportions(self):
        return self.counts / self.N


def cell_summary(data, variances=True, allow_empty=False):
    """Counts, means, and (optionally) within-cell variances per cell.

    Raises EmptyCellError when a cell has no units unless ``allow_empty``
    is set, and SingletonCellError when variances are requested for a cell
    with a single unit.
    """
    Q = data.spec.Q
    counts = np.bincount(data.cell, minlength=Q).astype(np.int64)
    if not allow_empty and (counts == 0).any():
        empty = [i for i in range(Q) if counts[i] == 0]
        raise EmptyCellError(f"cells with no units: {empty}")
    means = np.full(Q, np.nan)
    var = np.full(Q, np.nan)
    for q in range(Q):
        if counts[q] == 0:
            continue
        y = data.outcome[data.cell == q]
        means[q] = y.mean()
        if counts[q] >= 2:
            var[q] = y.var(ddof=1)
        elif variances and not allow_empty:
            raise SingletonCellError(f"cell {q} has a single unit")
    return CellSummary(data.spec, counts, means, var if variances else None)


def ingest_csv(path, spec, outcome_col="Y"):
    """Read an AssignmentTable from a CSV file with one column per factor.

    Factor columns are matched by label and parsed strictly as 0/1; the
    outcome column must parse as a float.  Row order is preserved.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("empty file")
        missing = [c for c in (*spec.labels, outcome_col) if c not in reader.fieldnames]
        if missing:
            raise ParseError(f"missing columns: {missing}")
        levels, outcomes = [], []
        for lineno, row in enumerate(reader, start=2):
            z = []
            for label in spec.labels:
                value = row[label].strip()
                if value not in ("0", "1"):
                    raise ParseError(
                        f"line {lineno}: factor {label} has non-binary value {value!r}"
                    )
                z.append(int(value))
            try:
                y = float(row[outcome_col])
            except (TypeError, ValueError):
                raise ParseError(
                    f"line {lineno}: non-numeric outcome {row[outcome_col]!r}"
                )
            levels.append(z)
            outcomes.append(y)
    if not levels:
        raise ParseError("no data rows")
    return AssignmentTable(spec, np.array(levels), np.array(outcomes))
