"""Command-line front end: read a table, cluster it, write JSON (and optionally an SVG)."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .data import DataError, needs_scaling, parse_numeric, pca_project, read_table, standardize
from .evaluation import adjusted_rand_index, confusion_matrix
from .kmeans import PhaseConfig, set_threads
from .overlap import ConvergenceError
from .plot import write_scatter_svg
from .syncytial import DEFAULT_KAPPAS, KnobSyncConfig, KnobSyncResult, MergeTrace, run_knobsync

SCHEMA = 1


@dataclass
class RunConfig:
    input: str
    missing_token: str = "NA"
    scale: str = "none"
    pca: int | None = None
    kmax: int | None = None
    kappas: tuple = DEFAULT_KAPPAS
    start_cap: int = 1000
    seed: int = 0
    trigger: str = "printed"
    truth_col: str | None = None
    output: str | None = None
    plot: str | None = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if not self.kappas:
            raise DataError("kappa set must be nonempty")


def parse_kappas(text: str) -> tuple:
    """Comma-separated kappa values; ``inf`` (or ``Inf``) is allowed."""
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            v = float(tok)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad kappa value {tok!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"kappa must be positive, got {tok!r}")
        out.append(v)
    if not out:
        raise argparse.ArgumentTypeError("kappa list is empty")
    return tuple(sorted(set(out)))


def _num(v: float):
    # JSON has no infinity literal
    return "inf" if math.isinf(v) else float(v)


def _is_number(tok: str, missing: str) -> bool:
    if tok == missing:
        return True
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_input(cfg: RunConfig):
    """Feature matrix and (optionally) truth labels from the input table.

    A header row is assumed when the first row has a non-numeric field.
    """
    header, rows = read_table(cfg.input, has_header=False)
    if rows and not all(_is_number(t, cfg.missing_token) for t in rows[0]):
        header, rows = rows[0], rows[1:]
    if not rows:
        raise DataError(f"{cfg.input}: no data rows")
    truth = None
    if cfg.truth_col is not None:
        if header is None or cfg.truth_col not in header:
            raise DataError(f"truth column {cfg.truth_col!r} not found in header")
        j = header.index(cfg.truth_col)
        truth = [r[j] for r in rows]
        rows = [r[:j] + r[j + 1:] for r in rows]
        header = header[:j] + header[j + 1:]
    return parse_numeric(rows, cfg.missing_token, header), truth


def _trace_json(t: MergeTrace) -> dict:
    return {
        "kappa": _num(t.kappa),
        "triggered": t.triggered,
        "initial_omega_gen": t.initial_omega_gen,
        "initial_omega_max": t.initial_omega_max,
        "iterations": [
            {
                "iteration": r.iteration,
                "k_before": r.k_before,
                "omega_max": r.omega_max,
                "omega_gen": r.omega_gen,
                "merged_pairs": [list(p) for p in r.merged_pairs],
                "k_after": r.k_after,
                "omega_gen_after": r.omega_gen_after,
                "omega_max_after": r.omega_max_after,
                "accepted": r.accepted,
            }
            for r in t.records
        ],
        "terminal_reason": t.terminal_reason,
        "terminal_omega_gen": t.terminal_omega_gen,
        "n_clusters": t.n_clusters,
        "groups": [list(g) for g in t.forest.groups],
    }


def result_json(res: KnobSyncResult, truth=None, warn=()) -> dict:
    best = res.chosen_trace
    doc = {
        "schema": SCHEMA,
        "labels": res.membership.tolist(),
        "C_hat": res.n_clusters,
        "K_hat": res.k_hat,
        "kappa": _num(res.kappa),
        "terminal_omega_gen": res.terminal_omega_gen,
        "overlap_matrix": best.overlap.entries.tolist(),
        "groups": [list(g) for g in best.forest.groups],
        "sub_labels": res.partition.labels.tolist(),
        "traces": [_trace_json(t) for t in res.traces],
        "bandwidth": res.cdf.bandwidth,
        "bandwidth_fallback": res.cdf.fallback,
        "warnings": list(warn),
    }
    if res.phase is not None:
        ph = res.phase
        doc["k_selection"] = {
            "criterion": ph.criterion,
            "K": ph.curve.ks.tolist(),
            "WSS": ph.curve.wss.tolist(),
            "value": [None if not np.isfinite(v) else float(v) for v in ph.criterion_values],
        }
    if truth is not None:
        cm = confusion_matrix(truth, res.membership.tolist())
        doc["ari"] = adjusted_rand_index(truth, res.membership.tolist())
        doc["confusion"] = {
            "true_labels": [str(v) for v in cm.row_labels],
            "est_labels": [int(v) for v in cm.col_labels],
            "counts": cm.counts.tolist(),
        }
    return doc


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute one clustering run; returns (exit status, JSON document)."""
    warn = cfg.warnings
    m, truth = load_input(cfg)
    if cfg.scale not in ("none", "sd"):
        raise DataError(f"unknown scale mode {cfg.scale!r}")
    if cfg.scale == "sd":
        m, _ = standardize(m, "sd")
    elif needs_scaling(m):
        warn.append("feature standard deviations differ by more than a factor of 4; consider --scale sd")
    if cfg.pca is not None:
        m = pca_project(m, cfg.pca)
    set_threads()
    config = KnobSyncConfig(PhaseConfig(kmax=cfg.kmax, start_cap=cfg.start_cap), cfg.kappas, cfg.trigger)
    res = run_knobsync(m, config, cfg.seed)
    if cfg.plot is not None:
        if m.p == 2:
            write_scatter_svg(cfg.plot, m.values, res.membership, truth)
        else:
            warn.append(f"plot skipped: data have {m.p} dimensions, plotting needs 2")
    return 0, result_json(res, truth, warn)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="knobsync", description="Syncytial clustering of a numeric table.")
    ap.add_argument("--input", required=True, help="delimited numeric table (comma, tab or semicolon)")
    ap.add_argument("--missing-token", default="NA", help="cell text marking an unobserved value")
    ap.add_argument("--scale", choices=("none", "sd"), default="none")
    ap.add_argument("--pca", type=int, metavar="N", help="project onto the leading N principal components")
    ap.add_argument("--kmax", type=int, metavar="N", help="largest K tried in the k-means phase")
    ap.add_argument("--kappa", type=parse_kappas, default=DEFAULT_KAPPAS, metavar="LIST",
                    help="comma-separated kappa values, e.g. 1,2,3,4,5,inf")
    ap.add_argument("--start-cap", type=int, default=1000, metavar="N", help="maximum k-means starts per K")
    ap.add_argument("--seed", type=int, default=0, metavar="N")
    ap.add_argument("--trigger", choices=("printed", "transposed"), default="printed")
    ap.add_argument("--truth-col", metavar="NAME", help="header name of a true-class column (excluded from features)")
    ap.add_argument("--output", metavar="PATH", help="JSON output file (default: stdout)")
    ap.add_argument("--plot", metavar="PATH", help="SVG scatter plot (2D data only)")
    return ap


def _emit(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=1)
    if path is None:
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(args.input, args.missing_token, args.scale, args.pca, args.kmax, args.kappa,
                        args.start_cap, args.seed, args.trigger, args.truth_col, args.output, args.plot)
        status, doc = run(cfg)
    except (DataError, ValueError, OSError, ConvergenceError) as exc:
        err = {"schema": SCHEMA, "error": type(exc).__name__, "message": str(exc)}
        _emit(err, args.output)
        print(f"knobsync: error: {exc}", file=sys.stderr)
        return 1
    for w in doc["warnings"]:
        print(f"knobsync: warning: {w}", file=sys.stderr)
    _emit(doc, args.output)
    return status


if __name__ == "__main__":
    sys.exit(main())
