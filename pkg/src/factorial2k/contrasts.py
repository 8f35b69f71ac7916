"""Conditional factorial effects and the general-effect contrast matrix.

The contrast row for a factor subset S conditional on the levels of the
remaining factors is built by the textbook induction: the m-way effect is
the difference of two (m-1)-way effects at levels 1 and 0 of the added
factor.  A closed form exists (the coefficient on a matching cell is
(-1)^(|S| - sum of the subset levels)) and is kept alongside as a
cross-check.
"""

from dataclasses import dataclass

import numpy as np

from .core import MAX_FACTORS, cell_index, enumerate_subsets, enumerate_treatments
from .errors import DimensionMismatchError


def _check_K(K):
    if not 1 <= K <= MAX_FACTORS:
        raise DimensionMismatchError(f"K must be in 1..{MAX_FACTORS}, got {K}")


def _row_recursive(subset, rest_levels, K):
    if len(subset) == 1:
        k = subset[0]
        row = np.zeros(2 ** K)
        for level, sign in ((1, 1.0), (0, -1.0)):
            z = [0] * K
            for j, lev in rest_levels.items():
                z[j] = lev
            z[k] = level
            row[cell_index(z)] += sign
        return row
    k = subset[-1]
    high = _row_recursive(subset[:-1], {**rest_levels, k: 1}, K)
    low = _row_recursive(subset[:-1], {**rest_levels, k: 0}, K)
    return high - low


def conditional_effect_row(subset, rest, K):
    """Coefficients on the cell means for the conditional effect of ``subset``.

    ``rest`` gives the fixed levels of the factors outside ``subset``, in
    ascending factor order.  Returns a length-2^K vector.
    """
    _check_K(K)
    subset = tuple(sorted(subset))
    if not subset:
        raise DimensionMismatchError("subset must be nonempty")
    complement = [k for k in range(K) if k not in subset]
    rest = tuple(rest)
    if len(rest) != len(complement):
        raise DimensionMismatchError(
            f"expected {len(complement)} fixed levels, got {len(rest)}"
        )
    rest_levels = dict(zip(complement, rest))
    return _row_recursive(subset, rest_levels, K)


def conditional_effect_row_closed_form(subset, rest, K):
    """Sign-formula version of :func:`conditional_effect_row`."""
    _check_K(K)
    subset = tuple(sorted(subset))
    complement = [k for k in range(K) if k not in subset]
    rest_levels = dict(zip(complement, tuple(rest)))
    row = np.zeros(2 ** K)
    for z in enumerate_treatments(K):
        if any(z[j] != rest_levels[j] for j in complement):
            continue
        ones = sum(z[k] for k in subset)
        row[cell_index(z)] = (-1.0) ** (len(subset) - ones)
    return row


def general_effect_row(subset, scheme, K):
    """Weighted average of conditional rows over the complement levels.

    The weights are the scheme's marginal law of the factors outside
    ``subset``.
    """
    _check_K(K)
    if scheme.K != K:
        raise DimensionMismatchError("scheme and K disagree")
    subset = tuple(sorted(subset))
    complement = [k for k in range(K) if k not in subset]
    if not complement:
        return conditional_effect_row(subset, (), K)
    weights = scheme.marginal(tuple(complement))
    row = np.zeros(2 ** K)
    for idx, rest in enumerate(enumerate_treatments(len(complement))):
        if weights[idx] == 0.0:
            continue
        row += weights[idx] * conditional_effect_row(subset, rest, K)
    return row


@dataclass(frozen=True)
class ContrastMatrix:
    """(2^K - 1) x 2^K matrix mapping cell means to general effects."""

    K: int
    matrix: np.ndarray
    subsets: tuple
    scheme: object

    def row_for(self, subset):
        return self.matrix[self.subsets.index(tuple(sorted(subset)))]


def contrast_matrix(scheme, K):
    """Stack general-effect rows over the canonical subset order."""
    _check_K(K)
    subsets = tuple(enumerate_subsets(K))
    rows = np.vstack([general_effect_row(s, scheme, K) for s in subsets])
    return ContrastMatrix(K, rows, subsets, scheme)


def true_effects(means, scheme):
    """General effects G_pi @ Ybar for a cell-mean vector (or object with .means)."""
    ybar = np.asarray(getattr(means, "means", means), dtype=np.float64)
    K = scheme.K
    if ybar.shape != (2 ** K,):
        raise DimensionMismatchError(f"expected {2 ** K} cell means")
    return contrast_matrix(scheme, K).matrix @ ybar


def contrast_matrix_csv(cm, spec):
    """Render a contrast matrix as CSV text with subset labels as row names."""
    cells = enumerate_treatments(cm.K)
    header = "term," + ",".join("".join(map(str, z)) for z in cells)
    lines = [header]
    for subset, row in zip(cm.subsets, cm.matrix):
        lines.append(spec.subset_label(subset) + "," + ",".join(repr(v) for v in row))
    return "\n".join(lines) + "\n"
