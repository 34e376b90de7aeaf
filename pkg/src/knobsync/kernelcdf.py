"""Smooth CDF estimation on [0, inf) with the reciprocal inverse Gaussian kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtr

__all__ = [
    "ResidualCdf",
    "ZERO_FLOOR",
    "ecdf_eval",
    "gamma_mom_fit",
    "plugin_bandwidth",
    "cdf_eval",
    "fit_residual_cdf",
    "rig_density_eval",
    "ig_density_eval",
]

# Zero samples make sqrt(Y b) vanish; they are evaluated at this value instead.
ZERO_FLOOR = 1e-12
_CHUNK = 4_000_000


def ecdf_eval(samples, y):
    """Fraction of ``samples`` that are ``<= y``.  ``samples`` must be sorted."""
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise ValueError("ecdf_eval needs at least one sample")
    return np.searchsorted(s, y, side="right") / s.size


def gamma_mom_fit(samples) -> tuple[float, float]:
    """Method-of-moments gamma fit: shape = mean^2/var, scale = var/mean."""
    s = np.asarray(samples, dtype=float)
    if s.size < 2:
        raise ValueError("gamma fit needs at least two samples")
    mean = s.mean()
    var = s.var(ddof=1)
    if var <= 0:
        raise ValueError("gamma fit needs positive sample variance")
    if mean <= 0:
        raise ValueError("gamma fit needs a positive sample mean")
    return mean * mean / var, var / mean


def _log_plugin_constant(shape: float, scale: float) -> float:
    return ((2 * shape + 1) * math.log(2.0) + 3.5 * math.log(scale) + math.log(2 * shape - 1)
            + gammaln(shape - 0.5) + gammaln(shape) - 0.5 * math.log(math.pi)
            - math.log(6 * shape - 4) - math.log(shape - 1) - gammaln(2 * shape))


def plugin_bandwidth(shape: float, scale: float, n: int, samples=None) -> tuple[float, bool]:
    """Gamma-reference plug-in bandwidth for the RIG kernel.

    Returns ``(b, fallback)``.  For shape <= 3/2 the gamma-reference constant
    is undefined; then ``b = sd(samples) * n**(-2/5)`` and ``fallback`` is
    True.
    """
    if scale <= 0:
        raise ValueError("gamma scale must be positive")
    if n < 2:
        raise ValueError("bandwidth needs n >= 2")
    if shape > 1.5:
        return math.exp(-0.4 * math.log(n) + 0.4 * _log_plugin_constant(shape, scale)), False
    if samples is None:
        raise ValueError("shape <= 3/2: samples are required for the fallback bandwidth")
    sd = float(np.std(np.asarray(samples, dtype=float), ddof=1))
    if not sd > 0:
        raise ValueError("fallback bandwidth needs positive sample sd")
    return sd * n ** -0.4, True


@dataclass(frozen=True)
class ResidualCdf:
    """RIG-kernel estimate of the CDF of nonnegative samples."""

    samples: np.ndarray
    bandwidth: float
    gamma_shape: float
    gamma_scale: float
    fallback: bool = False

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float))
        if s.size == 0:
            raise ValueError("ResidualCdf needs samples")
        if np.any(s < 0):
            raise ValueError("samples must be nonnegative")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError("bandwidth must be positive and finite")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)
        yb = np.maximum(s, ZERO_FLOOR) * self.bandwidth
        object.__setattr__(self, "_root", np.sqrt(yb))
        object.__setattr__(self, "_shift", np.maximum(s, ZERO_FLOOR) + self.bandwidth)
        object.__setattr__(self, "_upper", ndtr(self._shift / self._root).mean())

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def upper_limit(self) -> float:
        """Limit of the estimate as ``y -> inf``; below 1 in general."""
        return float(self._upper)

    def __call__(self, y):
        return cdf_eval(self, y)


def cdf_eval(cdf: ResidualCdf, y):
    """Evaluate the smoothed CDF at scalar or array ``y``, clamped to [0, 1].

    ``(1/n) sum_i [Phi((Y_i + b)/sqrt(Y_i b)) - Phi((Y_i - (y - b))/sqrt(Y_i b))]``.
    """
    y_arr = np.asarray(y, dtype=float)
    flat = y_arr.reshape(-1)
    out = np.empty(flat.size)
    step = max(1, _CHUNK // cdf.n)
    for lo in range(0, flat.size, step):
        yy = flat[lo:lo + step]
        z = (cdf._shift[None, :] - yy[:, None]) / cdf._root[None, :]
        out[lo:lo + step] = cdf._upper - ndtr(z).mean(axis=1)
    out = np.clip(out, 0.0, 1.0)
    if y_arr.ndim == 0:
        return float(out[0])
    return out.reshape(y_arr.shape)


def fit_residual_cdf(samples) -> ResidualCdf:
    """Gamma moment fit, plug-in bandwidth and the resulting ResidualCdf."""
    s = np.asarray(samples, dtype=float)
    shape, scale = gamma_mom_fit(s)
    b, fallback = plugin_bandwidth(shape, scale, s.size, s)
    return ResidualCdf(s, b, shape, scale, fallback)


def rig_density_eval(v, mu: float, lam: float):
    """Reciprocal inverse Gaussian density; zero for ``v <= 0``."""
    v = np.asarray(v, dtype=float)
    pos = v > 0
    vv = np.where(pos, v, 1.0)
    dens = np.sqrt(lam / (2 * np.pi * vv)) * np.exp(-(lam / (2 * mu)) * (vv * mu - 2 + 1 / (mu * vv)))
    out = np.where(pos, dens, 0.0)
    return float(out) if out.ndim == 0 else out


def ig_density_eval(u, mu: float, lam: float):
    """Inverse Gaussian density; zero for ``u <= 0``."""
    u = np.asarray(u, dtype=float)
    pos = u > 0
    uu = np.where(pos, u, 1.0)
    dens = np.sqrt(lam) / (uu * np.sqrt(2 * np.pi * uu)) * np.exp(-(lam / (2 * mu)) * (uu / mu - 2 + mu / uu))
    out = np.where(pos, dens, 0.0)
    return float(out) if out.ndim == 0 else out
