"""External validity measures: adjusted Rand index, Jaccard index, confusion matrices."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

__all__ = [
    "Contingency",
    "confusion_matrix",
    "adjusted_rand_index",
    "jaccard_index",
    "summarized_jaccard",
]


@dataclass(frozen=True)
class Contingency:
    """Co-occurrence counts; rows are the first labeling, columns the second."""

    counts: np.ndarray
    row_labels: tuple
    col_labels: tuple

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _first_appearance_codes(labels):
    index = {}
    codes = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        key = lab.item() if isinstance(lab, np.generic) else lab
        codes[i] = index.setdefault(key, len(index))
    return codes, tuple(index)


def _check_lengths(a, b):
    if len(a) != len(b):
        raise ValueError(f"labelings differ in length ({len(a)} vs {len(b)})")


def confusion_matrix(true_labels, est_labels) -> Contingency:
    """Contingency table with rows and columns in order of first appearance."""
    _check_lengths(true_labels, est_labels)
    rc, rl = _first_appearance_codes(list(true_labels))
    cc, cl = _first_appearance_codes(list(est_labels))
    counts = np.zeros((len(rl), len(cl)), dtype=np.int64)
    np.add.at(counts, (rc, cc), 1)
    return Contingency(counts, rl, cl)


def _pairs(v) -> int:
    v = int(v)
    return v * (v - 1) // 2


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Adjusted Rand index, evaluated in exact rational arithmetic.

    When the denominator vanishes (each labeling is a single cluster or all
    singletons) the result is 1 if the two partitions coincide and 0 otherwise.
    """
    _check_lengths(labels_a, labels_b)
    n = len(labels_a)
    if n < 2:
        raise ValueError("adjusted Rand index needs at least two observations")
    t = confusion_matrix(labels_a, labels_b)
    sum_ij = sum(_pairs(v) for v in t.counts.ravel())
    sum_a = sum(_pairs(v) for v in t.row_sums)
    sum_b = sum(_pairs(v) for v in t.col_sums)
    expected = Fraction(sum_a * sum_b, _pairs(n))
    denom = Fraction(sum_a + sum_b, 2) - expected
    if denom == 0:
        same = t.counts.shape[0] == t.counts.shape[1] and np.count_nonzero(t.counts) == t.counts.shape[0]
        return 1.0 if same else 0.0
    return float((sum_ij - expected) / denom)


def jaccard_index(set_a, set_b) -> float:
    """``|A & B| / |A | B|`` for boolean masks; 1 when both are empty."""
    a = np.asarray(set_a, dtype=bool)
    b = np.asarray(set_b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("masks differ in shape")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def summarized_jaccard(masks) -> float:
    """Pooled Jaccard index over all pairs of replicate masks.

    Sum of pairwise intersections divided by sum of pairwise unions.
    """
    masks = [np.asarray(m, dtype=bool) for m in masks]
    if len(masks) < 2:
        raise ValueError("need at least two masks")
    inter = union = 0
    for a, b in combinations(masks, 2):
        if a.shape != b.shape:
            raise ValueError("masks differ in shape")
        inter += np.count_nonzero(a & b)
        union += np.count_nonzero(a | b)
    return 1.0 if union == 0 else inter / union
