"""Normed residuals and kernel-estimated overlap between sub-clusters and composite groups."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataError, DataMatrix
from .kernelcdf import ResidualCdf, cdf_eval
from .kmeans import Partition

__all__ = [
    "ConvergenceError",
    "OverlapMatrix",
    "ClusterForest",
    "distance_matrix",
    "normed_residuals",
    "pseudo_residual",
    "pairwise_overlap",
    "composite_overlap",
    "overlap_matrix",
    "OverlapEngine",
    "symmetric_dominant_eigenvalue",
    "generalized_overlap",
    "max_overlap",
]


class ConvergenceError(RuntimeError):
    def __init__(self, msg, last_iterate=None, last_value=None):
        super().__init__(msg)
        self.last_iterate = last_iterate
        self.last_value = last_value


def _row_norms(x, mask, centroid, transform, p):
    diff = x - centroid
    if transform is not None:
        return np.linalg.norm(diff @ np.asarray(transform).T, axis=1)
    if mask is None:
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    diff = np.where(mask, diff, 0.0)
    p_obs = mask.sum(axis=1)
    return np.sqrt(p / p_obs * np.einsum("ij,ij->i", diff, diff))


def distance_matrix(m: DataMatrix, centroids, transform=None) -> np.ndarray:
    """``n x K`` matrix of normed (pseudo-)residuals to every centroid.

    Rows with missing cells use ``sqrt(p/p_i * sum over observed (x - mu)^2)``.
    ``transform`` (a ``p x p`` matrix ``W``) gives the Mahalanobis-free
    norm ``||W (x - mu)||`` and needs complete data.
    """
    centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
    if transform is not None and not m.complete:
        raise DataError("a residual transform requires fully observed data")
    x = m.filled(0.0)
    mask = None if m.complete else m.mask
    out = np.empty((m.n, centroids.shape[0]))
    for k, c in enumerate(centroids):
        out[:, k] = _row_norms(x, mask, c, transform, m.p)
    return out


def normed_residuals(m: DataMatrix, part: Partition, transform=None) -> np.ndarray:
    """Distance from each observation to its own sub-cluster centroid."""
    if part.labels.shape != (m.n,):
        raise DataError("partition labels do not match the data")
    x = m.filled(0.0)
    mask = None if m.complete else m.mask
    if transform is not None and mask is not None:
        raise DataError("a residual transform requires fully observed data")
    return _row_norms(x, mask, part.centroids[part.labels], transform, m.p)


def pseudo_residual(x, mask_row, target_centroids, transform=None) -> float:
    """Smallest (rescaled) normed distance from ``x`` to any target centroid."""
    x = np.asarray(x, dtype=float)
    targets = np.atleast_2d(np.asarray(target_centroids, dtype=float))
    if targets.shape[0] == 0:
        raise DataError("target set must be nonempty")
    row = x[None, :]
    mask = None
    if mask_row is not None and not np.all(mask_row):
        mask = np.asarray(mask_row, dtype=bool)[None, :]
        row = np.where(mask, row, 0.0)
    d = min(float(_row_norms(row, mask, c, transform, x.size)[0]) for c in targets)
    return d


def _conditional(cdf: ResidualCdf, h_values: np.ndarray, exponent: int) -> float:
    base = 1.0 - float(np.mean(h_values))
    return min(max(base, 0.0), 1.0) ** exponent


def pairwise_overlap(cdf: ResidualCdf, m: DataMatrix, part: Partition, k: int, l: int,
                     transform=None) -> tuple[float, float, float]:
    """Naive-average overlap between sub-clusters ``k`` and ``l``.

    Returns ``(w_l_given_k, w_k_given_l, w_kl)``; each conditional is one
    minus the mean smoothed CDF of the pseudo-residuals of one cluster's
    members measured from the other cluster's centroid.
    """
    if k == l:
        raise DataError("pairwise overlap needs two distinct clusters")
    dist = distance_matrix(m, part.centroids[[k, l]], transform)
    in_k = part.labels == k
    in_l = part.labels == l
    if not in_k.any() or not in_l.any():
        raise DataError("both clusters must be nonempty")
    h_to_l = cdf_eval(cdf, dist[:, 1])
    h_to_k = cdf_eval(cdf, dist[:, 0])
    lk = _conditional(cdf, h_to_l[in_k], 1)
    kl = _conditional(cdf, h_to_k[in_l], 1)
    return lk, kl, lk + kl


@dataclass(frozen=True)
class ClusterForest:
    """Composite groups, each a set of sub-cluster ids, partitioning ``0..K-1``.

    Groups are kept sorted internally and ordered by their smallest member.
    """

    groups: tuple
    sub_labels: np.ndarray

    def __post_init__(self):
        groups = tuple(sorted((tuple(sorted(int(r) for r in g)) for g in self.groups), key=lambda g: g[0] if g else -1))
        if any(len(g) == 0 for g in groups):
            raise DataError("groups must be nonempty")
        members = [r for g in groups for r in g]
        k = len(members)
        if sorted(members) != list(range(k)):
            raise DataError("groups must partition the sub-cluster ids 0..K-1")
        labels = np.asarray(self.sub_labels, dtype=np.int64).copy()
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise DataError("sub-cluster labels out of range for the forest")
        labels.flags.writeable = False
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "sub_labels", labels)

    @classmethod
    def singletons(cls, part: Partition) -> "ClusterForest":
        return cls(tuple((k,) for k in range(part.K)), part.labels)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def membership(self) -> np.ndarray:
        lookup = np.empty(sum(len(g) for g in self.groups), dtype=np.int64)
        for gi, g in enumerate(self.groups):
            lookup[list(g)] = gi
        return lookup[self.sub_labels]


@dataclass(frozen=True)
class OverlapMatrix:
    """Symmetric matrix of pairwise overlaps with unit diagonal."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DataError("overlap matrix must be square")
        if not np.allclose(a, a.T, atol=1e-12, rtol=0):
            raise DataError("overlap matrix must be symmetric")
        if np.any(a < 0):
            raise DataError("overlaps must be nonnegative")
        np.fill_diagonal(a, 1.0)
        a.flags.writeable = False
        object.__setattr__(self, "entries", a)

    @property
    def K(self) -> int:
        return self.entries.shape[0]


class OverlapEngine:
    """Caches smoothed-CDF values of pseudo-residuals per composite group.

    ``h(group)[i]`` is the smoothed CDF at the smallest distance from row
    ``i`` to any centroid in ``group``.  Merging groups only invalidates the
    new groups' columns.

    With ``composite_power`` the conditional overlap given a group of ``s``
    sub-clusters is raised to the power ``s``; by default it is the plain
    average over the group's rows.
    """

    def __init__(self, cdf: ResidualCdf, m: DataMatrix, part: Partition, transform=None,
                 composite_power: bool = False):
        self.cdf = cdf
        self.part = part
        self.composite_power = composite_power
        self.dist = distance_matrix(m, part.centroids, transform)
        self._h: dict[tuple, np.ndarray] = {}
        self._rows: dict[tuple, np.ndarray] = {}

    def h(self, group) -> np.ndarray:
        key = tuple(sorted(group))
        col = self._h.get(key)
        if col is None:
            mins = self.dist[:, list(key)].min(axis=1)
            col = self._h[key] = cdf_eval(self.cdf, mins)
        return col

    def rows(self, group) -> np.ndarray:
        key = tuple(sorted(group))
        r = self._rows.get(key)
        if r is None:
            r = self._rows[key] = np.isin(self.part.labels, key)
            if not r.any():
                raise DataError(f"group {key} has no members")
        return r

    def conditional(self, given, other) -> float:
        """Overlap of ``other`` conditional on membership in ``given``."""
        power = len(given) if self.composite_power else 1
        return _conditional(self.cdf, self.h(other)[self.rows(given)], power)

    def pair(self, gk, gl) -> tuple[float, float, float]:
        lk = self.conditional(gk, gl)
        kl = self.conditional(gl, gk)
        return lk, kl, lk + kl

    def matrix(self, forest: ClusterForest, previous: OverlapMatrix | None = None,
               previous_groups=None) -> OverlapMatrix:
        g = forest.groups
        a = np.eye(len(g))
        old = {}
        if previous is not None and previous_groups is not None:
            old = {grp: i for i, grp in enumerate(previous_groups)}
        for i in range(len(g)):
            for j in range(i + 1, len(g)):
                if g[i] in old and g[j] in old:
                    v = previous.entries[old[g[i]], old[g[j]]]
                else:
                    v = self.pair(g[i], g[j])[2]
                a[i, j] = a[j, i] = v
        return OverlapMatrix(a)


def composite_overlap(cdf: ResidualCdf, m: DataMatrix, part: Partition, forest: ClusterForest,
                      k: int, l: int, transform=None, composite_power: bool = False) -> tuple[float, float, float]:
    """Naive overlap between composite groups ``k`` and ``l`` of ``forest``.

    The conditional overlap of ``C_l`` given ``C_k`` is one minus the mean,
    over rows of ``C_k``, of the smoothed CDF at the row's distance to the
    nearest centroid of ``C_l``.  With ``composite_power`` it is further
    raised to the power ``|C_k|``, the number of sub-clusters in ``C_k``.
    """
    if k == l:
        raise DataError("composite overlap needs two distinct groups")
    eng = OverlapEngine(cdf, m, part, transform, composite_power)
    return eng.pair(forest.groups[k], forest.groups[l])


def overlap_matrix(cdf: ResidualCdf, m: DataMatrix, part: Partition, forest: ClusterForest | None = None,
                   transform=None, composite_power: bool = False) -> OverlapMatrix:
    if forest is None:
        forest = ClusterForest.singletons(part)
    return OverlapEngine(cdf, m, part, transform, composite_power).matrix(forest)


def symmetric_dominant_eigenvalue(a, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Largest eigenvalue of a symmetric matrix with nonnegative entries.

    Power iteration from the all-ones vector.  The smallest diagonal entry is
    split off and the remainder shifted by half its largest entry, so the
    convergence rate reflects the off-diagonal structure rather than the
    (dominant) diagonal.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, atol=1e-12, rtol=0):
        raise ValueError("matrix must be symmetric")
    k = a.shape[0]
    if k == 0:
        raise ValueError("empty matrix")
    d0 = float(np.min(np.diag(a)))
    b = a - d0 * np.eye(k)
    top = float(b.max())
    if top == 0.0:
        return d0
    b = b / top
    shift = 0.5
    b += shift * np.eye(k)
    v = np.ones(k) / np.sqrt(k)
    mu = float(v @ b @ v)
    for _ in range(max_iter):
        w = b @ v
        v = w / np.linalg.norm(w)
        mu_new = float(v @ b @ v)
        if abs(mu_new - mu) <= tol * abs(mu_new):
            return d0 + top * (mu_new - shift)
        mu = mu_new
    raise ConvergenceError("power iteration did not converge", last_iterate=v, last_value=d0 + top * (mu - shift))


def generalized_overlap(om: OverlapMatrix) -> float:
    """``(lambda_max - 1) / (K - 1)``; zero for a single group."""
    k = om.K
    if k < 2:
        return 0.0
    return (symmetric_dominant_eigenvalue(om.entries) - 1.0) / (k - 1)


def max_overlap(om: OverlapMatrix) -> tuple[float, tuple[int, int] | None]:
    """Largest off-diagonal overlap and the lexicographically first pair attaining it."""
    k = om.K
    if k < 2:
        return 0.0, None
    iu, ju = np.triu_indices(k, 1)
    vals = om.entries[iu, ju]
    t = int(np.argmax(vals))
    return float(vals[t]), (int(iu[t]), int(ju[t]))
