"""Multi-start k-means, k_m-means for incomplete records, and choice of K."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _lloyd
from .data import DataError, DataMatrix

__all__ = [
    "Partition",
    "WssCurve",
    "PhaseConfig",
    "PhaseResult",
    "substream_rng",
    "default_kmax",
    "run_kmeans",
    "run_km_means",
    "select_k_jump",
    "select_k_kl",
    "kmeans_phase",
    "lloyd_trace",
    "set_threads",
]


def set_threads(n: int | None = None) -> int:
    """Cap numba worker threads (defaults to ``$KNOBSYNC_THREADS``)."""
    import numba

    if n is None:
        env = os.environ.get("KNOBSYNC_THREADS")
        if not env:
            return numba.get_num_threads()
        n = int(env)
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


@dataclass(frozen=True)
class Partition:
    """Hard assignment of ``n`` rows to ``K`` sub-clusters.

    ``wss`` is the within-cluster sum of squares over observed coordinates.
    ``is_scatter[k]`` marks singleton scatter clusters.
    """

    labels: np.ndarray
    centroids: np.ndarray
    wss: float
    is_scatter: np.ndarray = field(default=None)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        centroids = np.atleast_2d(np.asarray(self.centroids, dtype=float))
        k = centroids.shape[0]
        counts = np.bincount(labels, minlength=k) if labels.size else np.zeros(k, int)
        if labels.min() < 0 or labels.max() >= k or np.any(counts == 0):
            raise DataError("every sub-cluster 0..K-1 must have at least one member")
        scatter = np.zeros(k, dtype=bool) if self.is_scatter is None else np.asarray(self.is_scatter, dtype=bool)
        if scatter.shape != (k,):
            raise DataError("is_scatter must have one flag per sub-cluster")
        if np.any(counts[scatter] != 1):
            raise DataError("a scatter sub-cluster must have exactly one member")
        for name, a in (("labels", labels), ("centroids", centroids), ("is_scatter", scatter)):
            a = a.copy()
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        object.__setattr__(self, "wss", float(self.wss))

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)


@dataclass(frozen=True)
class WssCurve:
    ks: np.ndarray
    wss: np.ndarray

    def __post_init__(self):
        ks = np.asarray(self.ks, dtype=np.int64)
        wss = np.asarray(self.wss, dtype=float)
        if ks.shape != wss.shape or ks.size == 0:
            raise DataError("WSS curve needs matching, nonempty K and WSS arrays")
        if not np.array_equal(ks, np.arange(1, ks.size + 1)):
            raise DataError("WSS curve must cover K = 1..K_max")
        if np.any(wss < 0):
            raise DataError("WSS values must be nonnegative")
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "wss", wss)

    @property
    def kmax(self) -> int:
        return int(self.ks[-1])


def substream_rng(seed: int, k: int, start: int) -> np.random.Generator:
    """Generator for start ``start`` at ``K = k``.

    The substream id is ``k * 2**32 + start``, so draws do not depend on
    how starts are scheduled across threads.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(k * 2**32 + start,))
    return np.random.Generator(np.random.PCG64(ss))


def default_kmax(n: int) -> int:
    return min(n, max(math.ceil(math.sqrt(n)), 50))


def _prepare(m: DataMatrix, use_mask: bool):
    if use_mask:
        x = m.filled(0.0)
        col_means = np.array([m.values[m.mask[:, j], j].mean() for j in range(m.p)])
    else:
        x = np.ascontiguousarray(m.values)
        col_means = None
    return x, np.ascontiguousarray(m.mask), col_means


def _init_centers(m, x, col_means, k, n_starts, seed, start_offset=0):
    inits = np.empty((n_starts, k, m.p))
    for s in range(n_starts):
        idx = substream_rng(seed, k, start_offset + s).choice(m.n, size=k, replace=False)
        c = x[idx].copy()
        if col_means is not None:
            c = np.where(m.mask[idx], c, col_means)
        inits[s] = c
    return inits


def _best_of(m, x, mask, use_mask, inits):
    wss = _lloyd.lloyd_many(x, mask, use_mask, inits, _lloyd.MAX_ITER)
    best = int(np.argmin(wss))  # first minimum: ties resolve to the lowest start index
    return _finish(x, mask, use_mask, inits[best]), wss


def _finish(x, mask, use_mask, init):
    centers = init.copy()
    labels, wss, _ = _lloyd.lloyd(x, mask, use_mask, centers, _lloyd.MAX_ITER, np.empty(0))
    return Partition(labels, centers, wss)


def _check_k(m: DataMatrix, k: int, n_starts: int) -> None:
    if k < 1:
        raise DataError("K must be at least 1")
    if k > m.n:
        raise DataError(f"K={k} exceeds the number of observations n={m.n}")
    if n_starts < 1:
        raise DataError("n_starts must be at least 1")


def run_kmeans(m: DataMatrix, k: int, n_starts: int = 10, seed: int = 0) -> Partition:
    """Lloyd k-means from ``n_starts`` random starts; returns the lowest-WSS fit.

    Each start is seeded by ``k`` distinct observations drawn uniformly
    without replacement.
    """
    if not m.complete:
        raise DataError("run_kmeans requires fully observed data; use run_km_means")
    _check_k(m, k, n_starts)
    x, mask, _ = _prepare(m, False)
    return _best_of(m, x, mask, False, _init_centers(m, x, None, k, n_starts, seed))[0]


def run_km_means(m: DataMatrix, k: int, n_starts: int = 10, seed: int = 0) -> Partition:
    """k_m-means: k-means on partially observed rows.

    Distances use each row's observed coordinates.  A centroid coordinate is
    the mean over assigned rows observed there and is left unchanged when no
    such row exists.  Unobserved coordinates of seed rows start at the
    column's observed mean.
    """
    _check_k(m, k, n_starts)
    if not m.mask.any(axis=0).all():
        raise DataError("every feature must be observed in at least one row")
    x, mask, col_means = _prepare(m, True)
    return _best_of(m, x, mask, True, _init_centers(m, x, col_means, k, n_starts, seed))[0]


def lloyd_trace(m: DataMatrix, init_centers) -> tuple[Partition, np.ndarray]:
    """Single Lloyd run from given centers, with the WSS after every iteration."""
    use_mask = not m.complete
    x, mask, _ = _prepare(m, use_mask)
    centers = np.array(init_centers, dtype=float)
    hist = np.full(_lloyd.MAX_ITER, np.nan)
    labels, wss, it = _lloyd.lloyd(x, mask, use_mask, centers, _lloyd.MAX_ITER, hist)
    return Partition(labels, centers, wss), hist[:it]


def select_k_jump(curve: WssCurve, n: int, p: int, y: float | None = None) -> int:
    """Jump statistic with distortion ``WSS_K / (n p)`` and power ``-y``.

    ``y`` defaults to ``p / 2``.  A perfect fit (``WSS_K = 0``) before
    ``K_max`` is returned immediately.
    """
    if y is None:
        y = p / 2
    if y <= 0:
        raise DataError("jump power y must be positive")
    wss = curve.wss
    zeros = np.flatnonzero(wss[:-1] == 0)
    if zeros.size:
        return int(curve.ks[zeros[0]])
    d = wss / (n * p)
    with np.errstate(divide="ignore", over="ignore"):
        t = np.where(d > 0, d ** (-y), np.inf)
        jumps = np.diff(np.concatenate(([0.0], t)))
    if np.isinf(t[-1]) and not np.isinf(t[:-1]).any():
        return int(curve.ks[-1])
    jumps = np.nan_to_num(jumps, nan=-np.inf)
    return int(curve.ks[int(np.argmax(jumps))])


def kl_values(curve: WssCurve, p: int) -> np.ndarray:
    """KL(K) for K = 2..K_max-1 (NaN where the next difference is zero)."""
    ks = curve.ks.astype(float)
    w = curve.wss
    diff = (ks[:-1]) ** (2 / p) * w[:-1] - ks[1:] ** (2 / p) * w[1:]  # DIFF_K, K = 2..K_max
    num, den = diff[:-1], diff[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.abs(num / den)
    kl[den == 0] = np.nan
    return kl


def select_k_kl(curve: WssCurve, p: int) -> int:
    """Krzanowski-Lai choice of K; K with a zero successor difference is skipped."""
    if curve.kmax < 3:
        raise DataError("KL criterion needs a WSS curve with K_max >= 3")
    kl = kl_values(curve, p)
    if np.all(np.isnan(kl)):
        raise DataError("KL criterion undefined: every successive difference is zero")
    return int(np.nanargmax(kl)) + 2


def jump_values(curve: WssCurve, n: int, p: int, y: float) -> np.ndarray:
    d = curve.wss / (n * p)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        t = np.where(d > 0, d ** (-y), np.inf)
        return np.diff(np.concatenate(([0.0], t)))


@dataclass
class PhaseConfig:
    kmax: int | None = None
    start_cap: int = 1000
    n_starts: int | None = None
    criterion: str = "auto"  # auto | jump | kl
    jump_power: float | None = None
    split_candidate: bool = True  # also try the K-1 solution plus its farthest point


@dataclass
class PhaseResult:
    partition: Partition
    k_hat: int
    curve: WssCurve
    criterion: str
    criterion_values: np.ndarray
    partitions: dict = field(repr=False, default_factory=dict)


def _n_starts(cfg: PhaseConfig, n: int, k: int, p: int) -> int:
    if k == 1:
        return 1
    if cfg.n_starts is not None:
        return cfg.n_starts
    return max(1, min(n * k * p, cfg.start_cap))


def _split_refit(m, x, mask, use_mask, prev: Partition) -> Partition:
    # Seed K+1 from the K solution plus its worst-fitted observation.
    diff = np.where(mask, x - prev.centroids[prev.labels], 0.0)
    far = int(np.argmax((diff ** 2).sum(axis=1)))
    init = np.vstack([prev.centroids, np.where(mask[far], x[far], prev.centroids[prev.labels[far]])])
    return _finish(x, mask, use_mask, init)


def kmeans_phase(m: DataMatrix, config: PhaseConfig | None = None, seed: int = 0) -> PhaseResult:
    """Best-of-starts k-means for K = 1..K_max followed by selection of K.

    The KL criterion is used when ``n < p**2``, the jump statistic with
    ``y = p/2`` otherwise.  Incomplete data switch to k_m-means.

    With ``split_candidate`` the refit of the K-1 solution seeded with its
    farthest point competes with the random starts at every K; without it the
    refit is only used when the random starts fail to lower the WSS.
    """
    cfg = config or PhaseConfig()
    n, p = m.n, m.p
    kmax = min(cfg.kmax or default_kmax(n), n)
    if kmax < 1:
        raise DataError("K_max must be at least 1")
    use_mask = not m.complete
    if use_mask and not m.mask.any(axis=0).all():
        raise DataError("every feature must be observed in at least one row")
    x, mask, col_means = _prepare(m, use_mask)
    parts: dict[int, Partition] = {}
    wss = np.empty(kmax)
    for k in range(1, kmax + 1):
        inits = _init_centers(m, x, col_means, k, _n_starts(cfg, n, k, p), seed)
        part, _ = _best_of(m, x, mask, use_mask, inits)
        if k > 1 and (cfg.split_candidate or part.wss > wss[k - 2]):
            alt = _split_refit(m, x, mask, use_mask, parts[k - 1])
            if alt.wss < part.wss:
                part = alt
        parts[k] = part
        wss[k - 1] = part.wss
    curve = WssCurve(np.arange(1, kmax + 1), wss)

    crit = cfg.criterion
    if crit == "auto":
        crit = "kl" if n < p * p else "jump"
    if kmax == 1:
        k_hat, values = 1, np.zeros(1)
    elif crit == "kl":
        k_hat = select_k_kl(curve, p)
        values = np.concatenate(([np.nan], kl_values(curve, p), [np.nan]))
    elif crit == "jump":
        y = cfg.jump_power if cfg.jump_power is not None else p / 2
        k_hat = select_k_jump(curve, n, p, y)
        values = jump_values(curve, n, p, y)
    else:
        raise DataError(f"unknown criterion {crit!r}")
    return PhaseResult(parts[k_hat], k_hat, curve, crit, values, parts)
