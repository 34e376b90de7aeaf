"""Numeric matrix ingestion, feature scaling and principal components."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "DataMatrix",
    "ScalingSpec",
    "read_table",
    "load_matrix",
    "save_matrix",
    "standardize",
    "needs_scaling",
    "pca_project",
    "whiten",
]

DELIMITERS = (",", "\t", ";")


class DataError(ValueError):
    """Raised for malformed input or data that violates a precondition."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DataMatrix:
    """An ``n x p`` matrix with a per-cell observation mask.

    ``mask[i, j]`` is True when cell ``(i, j)`` was observed.  Values at
    unobserved cells are stored as NaN and never read.
    """

    values: np.ndarray
    mask: np.ndarray
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("values must be a 2-d array")
        mask = np.ones(values.shape, dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != values.shape:
            raise DataError("mask shape does not match values shape")
        n, p = values.shape
        if n < 2 or p < 1:
            raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        empty = np.flatnonzero(~mask.any(axis=1))
        if empty.size:
            raise DataError(f"row {empty[0]} has no observed entries")
        if not np.all(np.isfinite(values[mask])):
            raise DataError("observed cells must be finite")
        values = np.where(mask, values, np.nan)
        names = self.feature_names
        if names is not None:
            names = tuple(str(s) for s in names)
            if len(names) != p:
                raise DataError("feature_names length does not match p")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_array(cls, x, feature_names=None) -> "DataMatrix":
        """Build from an array where NaN marks a missing cell."""
        x = np.asarray(x, dtype=float)
        return cls(x, ~np.isnan(x), feature_names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def complete(self) -> bool:
        return bool(self.mask.all())

    @property
    def observed_counts(self) -> np.ndarray:
        """Number of observed features per row."""
        return self.mask.sum(axis=1)

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """Values with unobserved cells replaced by ``fill``."""
        return np.where(self.mask, self.values, fill)

    def take(self, rows) -> "DataMatrix":
        rows = np.asarray(rows)
        return DataMatrix(self.values[rows], self.mask[rows], self.feature_names)


@dataclass(frozen=True)
class ScalingSpec:
    mode: str = "none"
    sds: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.mode not in ("none", "per-feature-sd"):
            raise DataError(f"unknown scaling mode {self.mode!r}")
        if self.mode == "per-feature-sd":
            if self.sds is None:
                raise DataError("per-feature-sd scaling requires sds")
            sds = _frozen(np.asarray(self.sds, dtype=float))
            if not np.all(sds > 0):
                raise DataError("scaling sds must be strictly positive")
            object.__setattr__(self, "sds", sds)


def _sniff_delimiter(line: str) -> str:
    counts = [(line.count(d), -i, d) for i, d in enumerate(DELIMITERS)]
    best = max(counts)
    return best[2] if best[0] > 0 else ","


def read_table(path, has_header: bool = False):
    """Read a delimited text file into a header and rows of string fields.

    The delimiter is the most frequent of ``,``, tab and ``;`` on the first
    non-blank line.  Every row must have the same field count as the first.
    """
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    delim = _sniff_delimiter(lines[0])
    rows = [[f.strip() for f in r] for r in csv.reader(lines, delimiter=delim)]
    header = None
    if has_header:
        header, rows = rows[0], rows[1:]
    width = len(header) if header is not None else len(rows[0]) if rows else 0
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"row {i}: expected {width} fields, found {len(r)}")
    return header, rows


def parse_numeric(rows, missing_token: str = "NA", names=None) -> DataMatrix:
    n = len(rows)
    p = len(rows[0]) if n else 0
    values = np.full((n, p), np.nan)
    mask = np.ones((n, p), dtype=bool)
    for i, r in enumerate(rows):
        for j, f in enumerate(r):
            if f == missing_token:
                mask[i, j] = False
                continue
            try:
                values[i, j] = float(f)
            except ValueError:
                raise DataError(f"row {i}, column {j}: cannot parse {f!r} as a number") from None
        if not mask[i].any():
            raise DataError(f"row {i} has no observed entries")
    return DataMatrix(values, mask, names)


def load_matrix(path, missing_token: str = "NA", has_header: bool = False) -> DataMatrix:
    """Load a delimiter-separated numeric file.

    Cells equal to ``missing_token`` are unobserved.  Row and column indices
    in error messages are zero-based and count data rows only.
    """
    header, rows = read_table(path, has_header)
    return parse_numeric(rows, missing_token, header)


def save_matrix(m: DataMatrix, path, missing_token: str = "NA", delimiter: str = ",") -> None:
    """Write ``m`` so that :func:`load_matrix` reproduces values and mask."""
    out = []
    if m.feature_names is not None:
        out.append(delimiter.join(m.feature_names))
    for i in range(m.n):
        out.append(delimiter.join(
            repr(float(m.values[i, j])) if m.mask[i, j] else missing_token for j in range(m.p)
        ))
    Path(path).write_text("\n".join(out) + "\n")


def _feature_sds(m: DataMatrix) -> np.ndarray:
    sds = np.empty(m.p)
    for j in range(m.p):
        col = m.values[m.mask[:, j], j]
        sds[j] = np.std(col, ddof=1) if col.size >= 2 else np.nan
    return sds


def _feature_label(m: DataMatrix, j: int) -> str:
    return repr(m.feature_names[j]) if m.feature_names else f"#{j}"


def standardize(m: DataMatrix, mode: str = "none") -> tuple[DataMatrix, ScalingSpec]:
    """Divide each feature by its sample standard deviation.

    Standard deviations use observed cells only.  Features are not centred.
    """
    if mode in ("none", None):
        return m, ScalingSpec("none")
    if mode not in ("per-feature-sd", "sd"):
        raise DataError(f"unknown scaling mode {mode!r}")
    sds = _feature_sds(m)
    for j, s in enumerate(sds):
        if not np.isfinite(s):
            raise DataError(f"feature {_feature_label(m, j)} has fewer than 2 observed values")
        if s == 0:
            raise DataError(f"feature {_feature_label(m, j)} has zero variance")
    return DataMatrix(m.values / sds, m.mask, m.feature_names), ScalingSpec("per-feature-sd", sds)


def needs_scaling(m: DataMatrix, ratio: float = 4.0) -> bool:
    """True when the most variable feature's sd exceeds ``ratio`` times the least."""
    sds = _feature_sds(m)
    sds = sds[np.isfinite(sds)]
    if sds.size == 0:
        return False
    if sds.min() == 0:
        return bool(sds.max() > 0)
    return bool(sds.max() > ratio * sds.min())


def _require_complete(m: DataMatrix, what: str) -> None:
    if not m.complete:
        raise DataError(f"{what} requires fully observed data")


def _sign_fix(vecs: np.ndarray) -> np.ndarray:
    vecs = vecs.copy()
    for k in range(vecs.shape[1]):
        nz = np.flatnonzero(np.abs(vecs[:, k]) > 1e-12)
        if nz.size and vecs[nz[0], k] < 0:
            vecs[:, k] = -vecs[:, k]
    return vecs


def pca_project(m: DataMatrix, num_components: int, use_correlation: bool = False,
                return_model: bool = False):
    """Project onto the leading principal components.

    Components are ordered by decreasing eigenvalue of the sample covariance
    (or correlation) matrix and signed so that the first nonzero loading of
    each is positive.  With ``return_model`` the loadings, eigenvalues,
    centre and scale are also returned.
    """
    _require_complete(m, "PCA")
    if not 1 <= num_components <= m.p:
        raise DataError(f"num_components must be in 1..{m.p}, got {num_components}")
    x = m.values
    centre = x.mean(axis=0)
    z = x - centre
    scale = np.ones(m.p)
    if use_correlation:
        scale = x.std(axis=0, ddof=1)
        if np.any(scale == 0):
            raise DataError("correlation PCA needs every feature to vary")
        z = z / scale
    cov = z.T @ z / (m.n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:num_components]
    evals = np.clip(evals[order], 0.0, None)
    loadings = _sign_fix(evecs[:, order])
    names = tuple(f"PC{k + 1}" for k in range(num_components))
    scores = DataMatrix(z @ loadings, None, names)
    if return_model:
        return scores, {"loadings": loadings, "eigenvalues": evals, "centre": centre, "scale": scale}
    return scores


def whiten(m: DataMatrix, gamma: np.ndarray | None = None) -> tuple[DataMatrix, np.ndarray]:
    """Map data through ``W = (Gamma^-)^{1/2}``.

    ``gamma`` defaults to the sample covariance.  The Moore-Penrose inverse
    square root is used, so singular ``gamma`` is allowed.  Returns the
    transformed data (rows ``W x_i``) and ``W``.
    """
    _require_complete(m, "whitening")
    if gamma is None:
        gamma = np.cov(m.values, rowvar=False, ddof=1).reshape(m.p, m.p)
    gamma = np.asarray(gamma, dtype=float)
    evals, evecs = np.linalg.eigh((gamma + gamma.T) / 2)
    tol = evals.max() * m.p * np.finfo(float).eps if evals.size else 0.0
    inv_sqrt = np.where(evals > tol, 1.0 / np.sqrt(np.where(evals > tol, evals, 1.0)), 0.0)
    w = (evecs * inv_sqrt) @ evecs.T
    return DataMatrix(m.values @ w.T, None, m.feature_names), w
