"""The merging phase and the full k-means-then-merge pipeline."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .data import DataError, DataMatrix
from .kernelcdf import ResidualCdf, fit_residual_cdf
from .kmeans import Partition, PhaseConfig, PhaseResult, kmeans_phase
from .overlap import (
    ClusterForest,
    OverlapEngine,
    OverlapMatrix,
    generalized_overlap,
    max_overlap,
    normed_residuals,
)

__all__ = [
    "NEGLIGIBLE",
    "DEFAULT_KAPPAS",
    "IterationRecord",
    "MergeTrace",
    "KnobSyncConfig",
    "KnobSyncResult",
    "merge_iteration",
    "run_merging",
    "run_knobsync",
    "ingest_partition",
    "merging_triggered",
]

NEGLIGIBLE = 1e-5
DEFAULT_KAPPAS = (1.0, 2.0, 3.0, 4.0, 5.0, math.inf)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    k_before: int
    omega_max: float
    omega_gen: float
    merged_pairs: tuple
    k_after: int
    omega_gen_after: float
    omega_max_after: float
    accepted: bool


@dataclass
class MergeTrace:
    kappa: float
    initial_omega_gen: float
    initial_omega_max: float
    triggered: bool
    records: list = field(default_factory=list)
    terminal_reason: str = "no_trigger"
    terminal_omega_gen: float = 0.0
    forest: ClusterForest | None = None
    overlap: OverlapMatrix | None = None

    @property
    def n_clusters(self) -> int:
        return self.forest.n_groups


def merging_triggered(omega_gen: float, omega_max: float, variant: str = "printed") -> bool:
    """Whether the merging phase starts.

    ``printed``: generalized overlap not >= 4 x maximum overlap, or not
    negligible.  ``transposed``: maximum overlap >= 4 x generalized overlap,
    or generalized overlap not negligible.
    """
    if variant == "printed":
        first = not (omega_gen >= 4 * omega_max)
    elif variant == "transposed":
        first = omega_max >= 4 * omega_gen
    else:
        raise ValueError(f"unknown trigger variant {variant!r}")
    return first or omega_gen >= NEGLIGIBLE


def merge_iteration(forest: ClusterForest, om: OverlapMatrix, kappa: float):
    """Merge the maximum-overlap pair and every pair above ``kappa`` x generalized overlap.

    Qualifying pairs are joined transitively.  Returns the new forest and
    the merged pairs as indices into ``forest.groups``.
    """
    k = om.K
    if k < 2 or forest.n_groups != k:
        raise DataError("merging needs at least two groups matching the overlap matrix")
    gen = generalized_overlap(om)
    top, _ = max_overlap(om)
    iu, ju = np.triu_indices(k, 1)
    vals = om.entries[iu, ju]
    hit = (vals == top) | (vals > kappa * gen)
    assert hit.any(), "the maximum-overlap pair always qualifies"
    ds = DisjointSet(range(k))
    pairs = []
    for i, j in zip(iu[hit], ju[hit]):
        ds.merge(int(i), int(j))
        pairs.append((int(i), int(j)))
    groups = [tuple(r for gi in sub for r in forest.groups[gi]) for sub in ds.subsets()]
    return ClusterForest(tuple(groups), forest.sub_labels), tuple(pairs)


def run_merging(m: DataMatrix, part: Partition, cdf: ResidualCdf, kappa: float,
                trigger: str = "printed", engine: OverlapEngine | None = None,
                transform=None, allow_single_group: bool = False) -> MergeTrace:
    """Iterate merges until the generalized overlap stops falling.

    An iteration whose generalized overlap fails to drop by at least 1e-5
    is rolled back.  Otherwise merging stops once the generalized overlap is
    negligible or matches the maximum overlap to within 1e-5.

    A merge that leaves a single group has no defined generalized overlap
    and is rolled back (reason ``single_group``).  With
    ``allow_single_group`` it is instead accepted with generalized overlap 0.
    """
    eng = engine or OverlapEngine(cdf, m, part, transform)
    forest = ClusterForest.singletons(part)
    om = eng.matrix(forest)
    gen = generalized_overlap(om)
    top, _ = max_overlap(om)
    triggered = forest.n_groups >= 2 and merging_triggered(gen, top, trigger)
    trace = MergeTrace(kappa, gen, top, triggered, terminal_omega_gen=gen, forest=forest, overlap=om)
    if not triggered:
        return trace
    it = 0
    while True:
        it += 1
        new_forest, pairs = merge_iteration(forest, om, kappa)
        new_om = eng.matrix(new_forest, om, forest.groups)
        new_gen = generalized_overlap(new_om)
        new_top, _ = max_overlap(new_om)
        single = new_forest.n_groups == 1 and not allow_single_group
        accepted = not single and new_gen <= gen - NEGLIGIBLE
        trace.records.append(IterationRecord(it, forest.n_groups, top, gen, pairs,
                                             new_forest.n_groups, new_gen, new_top, accepted))
        if not accepted:
            trace.terminal_reason = "single_group" if single else "omega_increased"
            break
        forest, om, gen, top = new_forest, new_om, new_gen, new_top
        if gen <= NEGLIGIBLE or forest.n_groups == 1:
            trace.terminal_reason = "omega_zero"
            break
        if abs(gen - top) <= NEGLIGIBLE:
            trace.terminal_reason = "omega_equals_max"
            break
    trace.forest, trace.overlap, trace.terminal_omega_gen = forest, om, gen
    return trace


def ingest_partition(m: DataMatrix, labels, scatter_flags=None) -> Partition:
    """Partition from external labels, with scatter rows as singleton clusters.

    Labels are renumbered in sorted order of their distinct values.
    Centroids are per-coordinate means over observed cells; a coordinate with
    no observed member takes the column's observed mean.
    """
    labels = np.asarray(labels)
    if labels.shape != (m.n,):
        raise DataError("need one label per observation")
    uniq, codes = np.unique(labels, return_inverse=True)
    codes = codes.reshape(-1)
    k = uniq.size
    counts = np.bincount(codes, minlength=k)
    scatter = np.zeros(m.n, dtype=bool) if scatter_flags is None else np.asarray(scatter_flags, dtype=bool)
    if scatter.shape != (m.n,):
        raise DataError("need one scatter flag per observation")
    bad = np.flatnonzero(scatter & (counts[codes] != 1))
    if bad.size:
        raise DataError(f"scatter row {bad[0]} shares its label with another row")
    x = m.filled(0.0)
    mask = m.mask.astype(float)
    sums = np.zeros((k, m.p))
    cnt = np.zeros((k, m.p))
    np.add.at(sums, codes, x * mask)
    np.add.at(cnt, codes, mask)
    col_means = (x * mask).sum(axis=0) / mask.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cents = np.where(cnt > 0, sums / cnt, col_means)
    diff = np.where(m.mask, x - cents[codes], 0.0)
    is_scatter = np.zeros(k, dtype=bool)
    is_scatter[codes[scatter]] = True
    return Partition(codes, cents, float((diff ** 2).sum()), is_scatter)


@dataclass
class KnobSyncConfig:
    phase: PhaseConfig = field(default_factory=PhaseConfig)
    kappas: tuple = DEFAULT_KAPPAS
    trigger: str = "printed"
    row_order_invariant: bool = False
    composite_power: bool = False
    allow_single_group: bool = False


@dataclass
class KnobSyncResult:
    membership: np.ndarray
    n_clusters: int
    kappa: float
    terminal_omega_gen: float
    traces: list
    partition: Partition
    cdf: ResidualCdf
    phase: PhaseResult | None = None

    @property
    def chosen_trace(self) -> MergeTrace:
        return next(t for t in self.traces if t.kappa == self.kappa)

    @property
    def k_hat(self) -> int:
        return self.partition.K


def _content_seed(m: DataMatrix, order: np.ndarray, seed: int) -> int:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(m.filled(0.0)[order]).tobytes())
    h.update(np.ascontiguousarray(m.mask[order]).tobytes())
    digest = int.from_bytes(h.digest()[:8], "little")
    state = np.random.SeedSequence([int(seed) & (2**64 - 1), digest]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def canonical_order(m: DataMatrix) -> np.ndarray:
    """Row order determined by content alone (lexicographic on values, then mask)."""
    keys = [m.mask[:, j] for j in range(m.p)[::-1]] + [m.filled(0.0)[:, j] for j in range(m.p)[::-1]]
    return np.lexsort(keys)


def _sweep(m, part, cfg: KnobSyncConfig, transform=None):
    residuals = normed_residuals(m, part, transform)
    cdf = fit_residual_cdf(residuals)
    eng = OverlapEngine(cdf, m, part, transform, cfg.composite_power)
    traces = [run_merging(m, part, cdf, float(kp), cfg.trigger, eng, transform, cfg.allow_single_group)
              for kp in sorted(cfg.kappas)]
    best = traces[0]
    for t in traces[1:]:
        if t.terminal_omega_gen < best.terminal_omega_gen:
            best = t
    return cdf, traces, best


def run_knobsync(m: DataMatrix, config: KnobSyncConfig | None = None, seed: int = 0,
                 partition: Partition | None = None, transform=None) -> KnobSyncResult:
    """k-means phase (unless ``partition`` is given), then merging for each kappa.

    The reported clustering is the one with the smallest terminal
    generalized overlap; ties go to the smaller kappa.
    """
    cfg = config or KnobSyncConfig()
    if not cfg.kappas:
        raise DataError("kappa set must be nonempty")
    if cfg.row_order_invariant and partition is None:
        order = canonical_order(m)
        inner = run_knobsync(m.take(order), replace(cfg, row_order_invariant=False),
                             _content_seed(m, order, seed), None, transform)
        inv = np.empty_like(order)
        inv[order] = np.arange(order.size)
        p = inner.partition
        inner.partition = Partition(p.labels[inv], p.centroids, p.wss, p.is_scatter)
        inner.membership = inner.membership[inv]
        for t in inner.traces:
            t.forest = ClusterForest(t.forest.groups, inner.partition.labels)
        return inner
    phase = None
    if partition is None:
        phase = kmeans_phase(m, cfg.phase, seed)
        partition = phase.partition
    cdf, traces, best = _sweep(m, partition, cfg, transform)
    return KnobSyncResult(best.forest.membership, best.n_clusters, best.kappa, best.terminal_omega_gen,
                          traces, partition, cdf, phase)
