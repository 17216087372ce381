"""Smoothed Gaussian noise: synthesis, derivative moments and peak heights.

The noise model is white noise convolved with a Gaussian of bandwidth
``nu``. After smoothing with bandwidth ``gamma`` the process is Gaussian
with effective bandwidth ``xi = sqrt(gamma**2 + nu**2)``, which fixes the
variances of its derivatives and, through the Kac-Rice formula, the height
distribution of its local maxima.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import log_ndtr, ndtr

__all__ = [
    "SmoothingConfig",
    "DerivativeMoments",
    "PeakHeightDistribution",
    "generate_noise",
    "derivative_moments",
    "peak_distribution",
    "tail_probability",
    "tail_quantile",
    "expected_extrema_density",
    "estimate_sigma0",
    "MAD_TO_SD",
]

MAD_TO_SD = 0.6745
_SQRT_PI = math.sqrt(math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# eta_l = -Corr(X, X'') for X the order-l derivative of the smoothed noise
_ETA = {1: math.sqrt(3.0 / 5.0), 2: math.sqrt(5.0 / 7.0)}


@dataclass(frozen=True)
class SmoothingConfig:
    """Kernel bandwidth ``gamma``, noise bandwidth ``nu`` and truncation ``c``.

    ``sigma0`` is the white-noise scale; ``None`` means unknown, in which
    case detection estimates it from the data.
    """

    gamma: float
    nu: float = 1.0
    c: float = 4.0
    sigma0: Optional[float] = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.nu < 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.sigma0 is not None and not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")

    @property
    def xi(self) -> float:
        return math.hypot(self.gamma, self.nu)

    @property
    def half_width(self) -> int:
        return int(math.floor(self.c * self.gamma))

    def with_sigma0(self, sigma0: Optional[float]) -> "SmoothingConfig":
        return SmoothingConfig(self.gamma, self.nu, self.c, sigma0)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "nu": self.nu, "c": self.c, "sigma0": self.sigma0}


@dataclass(frozen=True)
class DerivativeMoments:
    var1: float
    var2: float
    var3: float
    var4: float

    def variance(self, order: int) -> float:
        return {1: self.var1, 2: self.var2, 3: self.var3, 4: self.var4}[order]


class PeakHeightDistribution:
    """Right-tail distribution of the height of a local maximum.

    For a centred stationary Gaussian process with standard deviation
    ``sigma`` and ``eta = -Corr(X, X'')``::

        F(x) = 1 - Phi(x / (sigma s)) + sqrt(2 pi) eta phi(x / sigma) Phi(eta x / (sigma s))

    with ``s = sqrt(1 - eta**2)``.
    """

    __slots__ = ("sigma", "eta", "_s")

    def __init__(self, sigma: float, eta: float):
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        if not 0 < eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {eta}")
        self.sigma = float(sigma)
        self.eta = float(eta)
        self._s = math.sqrt(1.0 - eta * eta)

    def __repr__(self):
        return f"PeakHeightDistribution(sigma={self.sigma!r}, eta={self.eta!r})"

    def __eq__(self, other):
        if not isinstance(other, PeakHeightDistribution):
            return NotImplemented
        return self.sigma == other.sigma and self.eta == other.eta

    def __hash__(self):
        return hash((self.sigma, self.eta))

    def scaled(self, factor: float) -> "PeakHeightDistribution":
        return PeakHeightDistribution(self.sigma * factor, self.eta)

    def logsf(self, x):
        """Natural log of the tail probability, computed in log space."""
        u = np.asarray(x, dtype=float) / self.sigma
        a = u / self._s
        with np.errstate(divide="ignore"):
            first = log_ndtr(-a)
            second = (
                math.log(self.eta) - 0.5 * u * u + log_ndtr(self.eta * a)
            )  # log(sqrt(2 pi) eta phi(u) Phi(eta a)); the sqrt(2 pi) cancels
        out = np.logaddexp(first, second)
        return out if out.ndim else float(out)

    def sf(self, x):
        """Tail probability ``F(x) = P(height > x)``."""
        u = np.asarray(x, dtype=float) / self.sigma
        a = u / self._s
        direct = ndtr(-a) + self.eta * np.exp(-0.5 * u * u) * ndtr(self.eta * a)
        far = np.abs(u) > 8.0
        if np.any(far):
            direct = np.where(far, np.exp(self.logsf(x)), direct)
        out = np.clip(direct, 0.0, 1.0)
        return out if out.ndim else float(out)

    def cdf(self, x):
        """``1 - F(x)``, accurate where ``F`` is close to 1."""
        u = np.asarray(x, dtype=float) / self.sigma
        a = u / self._s
        out = ndtr(a) - self.eta * np.exp(-0.5 * u * u) * ndtr(self.eta * a)
        out = np.clip(out, 0.0, 1.0)
        return out if out.ndim else float(out)

    def isf(self, p: float) -> float:
        """Height ``x`` with ``F(x) = p``; inverse of :meth:`sf`."""
        p = float(p)
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must lie strictly between 0 and 1, got {p}")
        lo, hi = -self.sigma, self.sigma
        while self.sf(lo) <= p:
            lo *= 2.0
        while self.sf(hi) >= p:
            hi *= 2.0
        tol = dict(xtol=1e-15 * self.sigma, rtol=1e-15, maxiter=500)
        if p < 1e-3:
            # relative accuracy in the far tail
            logp = math.log(p)
            root = brentq(lambda v: self.logsf(v) - logp, lo, hi, **tol)
        elif p > 0.5:
            q = 1.0 - p  # exact for p >= 0.5
            root = brentq(lambda v: self.cdf(v) - q, lo, hi, **tol)
        else:
            root = brentq(lambda v: self.sf(v) - p, lo, hi, **tol)
        return float(root)


def tail_probability(dist: PeakHeightDistribution, x):
    return dist.sf(x)


def tail_quantile(dist: PeakHeightDistribution, p: float) -> float:
    return dist.isf(p)


def generate_noise(L: int, nu: float, sigma0: float = 1.0, seed=None) -> np.ndarray:
    """Draw ``L`` samples of Gaussian-smoothed white noise.

    ``z[t] = sigma0 * sum_s (1/nu) phi((t - s)/nu) e_s`` with ``e_s`` iid
    standard normal on a grid padded by ``ceil(4 nu)`` samples at both ends, so
    every output sample sees a full kernel. ``nu = 0`` gives iid
    ``N(0, sigma0**2)`` samples.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    rng = np.random.default_rng(seed)
    if nu == 0:
        return sigma0 * rng.standard_normal(L)
    pad = int(math.ceil(4.0 * nu))
    s = np.arange(-pad, pad + 1) / nu
    taps = np.exp(-0.5 * s * s) / (math.sqrt(2.0 * math.pi) * nu)
    white = rng.standard_normal(L + 2 * pad)
    return sigma0 * np.convolve(white, taps, mode="valid")


def derivative_moments(cfg: SmoothingConfig) -> DerivativeMoments:
    """Variances of the first four derivatives of the smoothed noise."""
    xi = cfg.xi
    s2 = 1.0 if cfg.sigma0 is None else cfg.sigma0 ** 2
    return DerivativeMoments(
        var1=s2 / (4.0 * _SQRT_PI * xi ** 3),
        var2=3.0 * s2 / (8.0 * _SQRT_PI * xi ** 5),
        var3=15.0 * s2 / (16.0 * _SQRT_PI * xi ** 7),
        var4=105.0 * s2 / (32.0 * _SQRT_PI * xi ** 9),
    )


def peak_distribution(cfg: SmoothingConfig, derivative_order: int) -> PeakHeightDistribution:
    """Peak height distribution of the order-1 or order-2 smoothed-noise derivative.

    An unknown ``sigma0`` is treated as 1 (unit scale).
    """
    if derivative_order not in _ETA:
        raise ValueError(f"derivative_order must be 1 or 2, got {derivative_order}")
    var = derivative_moments(cfg).variance(derivative_order)
    return PeakHeightDistribution(math.sqrt(var), _ETA[derivative_order])


def expected_extrema_density(cfg: SmoothingConfig, derivative_order: int) -> float:
    """Expected number of local extrema per unit length of the smoothed-noise derivative."""
    if derivative_order == 1:
        return math.sqrt(10.0) / (2.0 * math.pi * cfg.xi)
    if derivative_order == 2:
        return math.sqrt(14.0) / (2.0 * math.pi * cfg.xi)
    raise ValueError(f"derivative_order must be 1 or 2, got {derivative_order}")


def estimate_sigma0(derivative, cfg: SmoothingConfig, derivative_order: int) -> float:
    """Robust white-noise scale from a smoothed derivative sequence.

    MAD / 0.6745 of the (finite part of the) sequence, divided by the
    derivative standard deviation implied by unit white noise. Change points
    are assumed sparse, so the sequence is noise dominated.
    """
    x = np.asarray(derivative, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise ValueError("no finite samples to estimate the noise scale from")
    mad = np.median(np.abs(x - np.median(x)))
    unit_sd = peak_distribution(cfg.with_sigma0(1.0), derivative_order).sigma
    est = mad / MAD_TO_SD / unit_sd
    if not est > 0:
        raise ValueError("estimated noise scale is zero; the sequence looks noiseless")
    return float(est)
