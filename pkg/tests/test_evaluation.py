import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knobsync.evaluation import adjusted_rand_index, confusion_matrix, jaccard_index, summarized_jaccard


def pair_count_ari(a, b):
    """ARI from a direct enumeration of all observation pairs."""
    n = len(a)
    same_a = same_b = both = 0
    for i, j in itertools.combinations(range(n), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        same_a += sa
        same_b += sb
        both += sa and sb
    total = n * (n - 1) // 2
    expected = Fraction(same_a * same_b, total)
    denom = Fraction(same_a + same_b, 2) - expected
    if denom == 0:
        return None
    return float((both - expected) / denom)


def set_partitions(n):
    """Restricted growth strings: every labeling of n items up to renaming."""
    def grow(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for v in range(top + 2):
            yield from grow(prefix + [v], max(top, v))
    yield from grow([0], 0)


def test_ari_matches_pair_counting_exhaustively():
    for n in range(2, 9):
        parts = list(set_partitions(n))
        rng = np.random.default_rng(n)
        for a in parts:
            others = parts if n <= 5 else [parts[i] for i in rng.choice(len(parts), 12)]
            for b in others:
                ref = pair_count_ari(a, b)
                got = adjusted_rand_index(a, b)
                if ref is None:
                    assert got == (1.0 if a == b else 0.0)
                else:
                    assert got == ref


def test_ari_worked_example():
    a = (1, 1, 2, 2, 3, 3)
    b = (1, 1, 1, 2, 2, 2)
    assert adjusted_rand_index(a, b) == pair_count_ari(a, b)
    # same-in-a 3, same-in-b 6, both 2 of 15 pairs: (2 - 1.2) / (4.5 - 1.2)
    assert adjusted_rand_index(a, b) == pytest.approx(8 / 33, rel=1e-15)


def test_ari_degenerate_and_errors():
    assert adjusted_rand_index([0] * 5, range(5)) == 0.0
    assert adjusted_rand_index([3] * 5, [7] * 5) == 1.0
    assert adjusted_rand_index([0, 1, 2], ["a", "b", "c"]) == 1.0
    with pytest.raises(ValueError):
        adjusted_rand_index([0, 1], [0, 1, 1])
    with pytest.raises(ValueError):
        adjusted_rand_index([0], [0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=2, max_size=30), st.data())
def test_ari_symmetric_and_relabel_invariant(a, data):
    b = data.draw(st.lists(st.integers(0, 4), min_size=len(a), max_size=len(a)))
    assert adjusted_rand_index(a, b) == adjusted_rand_index(b, a)
    rename = {v: f"g{(v * 3) % 5}" for v in range(5)}
    assert adjusted_rand_index([rename[v] for v in a], b) == adjusted_rand_index(a, b)
    if len(set(a)) > 1:
        assert adjusted_rand_index(a, a) == 1.0


def test_jaccard_examples():
    a = np.array([1, 1, 1, 0], bool)
    b = np.array([0, 1, 1, 1], bool)
    assert jaccard_index(a, b) == 0.5
    assert jaccard_index(a, a) == 1.0
    assert jaccard_index(a, ~a) == 0.0
    assert jaccard_index(np.zeros(3, bool), np.zeros(3, bool)) == 1.0
    assert jaccard_index(b, a) == jaccard_index(a, b)
    with pytest.raises(ValueError):
        jaccard_index(a, a[:3])


def test_summarized_jaccard_pools_counts():
    a = np.array([1, 1, 0, 0], bool)
    b = np.array([1, 0, 1, 0], bool)
    c = np.array([1, 1, 1, 0], bool)
    # intersections 1 + 2 + 2, unions 3 + 3 + 3
    assert summarized_jaccard([a, b, c]) == pytest.approx(5 / 9)
    with pytest.raises(ValueError):
        summarized_jaccard([a])


def test_confusion_examples():
    t = confusion_matrix([1, 1, 2], ["a", "b", "b"])
    assert t.counts.tolist() == [[1, 1], [0, 1]]
    assert t.row_labels == (1, 2) and t.col_labels == ("a", "b")
    assert t.row_sums.tolist() == [2, 1] and t.col_sums.tolist() == [1, 2] and t.total == 3
    d = confusion_matrix([5, 3, 5, 9], [5, 3, 5, 9])
    assert np.array_equal(d.counts, np.diag([2, 1, 1]))
    with pytest.raises(ValueError):
        confusion_matrix([1], [1, 2])
