"""Change-point detection by multiple testing of derivative extrema.

Continuous breaks (Type I) appear as extrema of the smoothed second
derivative; jumps (Type II) as extrema of the smoothed first derivative
above the local slope. Each candidate extremum gets a p-value from the
peak height distribution of smoothed noise and the set is thresholded with
Benjamini-Hochberg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Union

import numpy as np

from .kernel import KernelSpec, convolve, sample_kernel, truncated_mass
from .noise import MAD_TO_SD, PeakHeightDistribution, SmoothingConfig, estimate_sigma0, peak_distribution
from .signal import ChangeType

__all__ = [
    "CandidatePeak",
    "CandidatePeaks",
    "SlopeBaseline",
    "BHResult",
    "Detection",
    "FamilyThreshold",
    "DetectionResult",
    "smoothed_derivative",
    "find_local_extrema",
    "assign_pvalues",
    "bh_select",
    "huber_line",
    "estimate_slope_baseline",
    "detect_type1",
    "detect_type2",
    "detect_mixture",
    "removal_mask",
]

SCHEMA = "mstem/1"
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CandidatePeak:
    index: int
    derivative_order: Optional[int]
    sign: int  # +1 local maximum, -1 local minimum
    height: float
    baseline: float = 0.0
    p_value: Optional[float] = None

    @property
    def excess(self) -> float:
        """Height above the baseline, oriented so that larger means more extreme."""
        return self.sign * (self.height - self.baseline)


@dataclass(frozen=True)
class CandidatePeaks:
    """Candidate extrema stored as parallel arrays."""

    index: np.ndarray
    sign: np.ndarray
    height: np.ndarray
    baseline: np.ndarray
    p_value: np.ndarray  # NaN until assigned
    derivative_order: Optional[int] = None

    @classmethod
    def empty(cls, derivative_order=None) -> "CandidatePeaks":
        z = np.zeros(0)
        return cls(np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.int8), z, z, z, derivative_order)

    def __len__(self) -> int:
        return len(self.index)

    def __iter__(self) -> Iterator[CandidatePeak]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i) -> CandidatePeak:
        p = self.p_value[i]
        return CandidatePeak(
            int(self.index[i]),
            self.derivative_order,
            int(self.sign[i]),
            float(self.height[i]),
            float(self.baseline[i]),
            None if np.isnan(p) else float(p),
        )

    @property
    def excess(self) -> np.ndarray:
        return self.sign * (self.height - self.baseline)

    def select(self, keep) -> "CandidatePeaks":
        keep = np.asarray(keep)
        return CandidatePeaks(
            self.index[keep], self.sign[keep], self.height[keep], self.baseline[keep], self.p_value[keep], self.derivative_order
        )


@dataclass(frozen=True)
class SlopeBaseline:
    """Piecewise-constant slope ``k(t)``; ``slopes[i]`` holds left of ``breakpoints[i]``."""

    breakpoints: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        sl = np.asarray(self.slopes, dtype=float)
        if len(sl) != len(bp) + 1:
            raise ValueError("need exactly one more slope than breakpoints")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "slopes", sl)

    @classmethod
    def zero(cls) -> "SlopeBaseline":
        return cls(np.zeros(0), np.zeros(1))

    def scaled(self, factor: float) -> "SlopeBaseline":
        return SlopeBaseline(self.breakpoints, self.slopes * factor)

    def at(self, index) -> np.ndarray:
        idx = np.asarray(index, dtype=float)
        return self.slopes[np.searchsorted(self.breakpoints, idx, side="right")]


@dataclass(frozen=True)
class BHResult:
    cutoff: float
    rejected: np.ndarray  # boolean mask aligned with the input p-values
    ell: int

    @property
    def n_tests(self) -> int:
        return len(self.rejected)


@dataclass(frozen=True)
class Detection:
    location: float
    index: int
    kind: ChangeType
    sign: int
    p_value: float
    height: float
    baseline: float = 0.0

    def to_dict(self) -> dict:
        return {
            "location": self.location,
            "index": self.index,
            "type": self.kind.value,
            "sign": "max" if self.sign > 0 else "min",
            "p_value": self.p_value,
            "height": self.height,
            "baseline": self.baseline,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        sign = d["sign"]
        if isinstance(sign, str):
            sign = 1 if sign == "max" else -1
        return cls(
            float(d["location"]),
            int(d.get("index", round(d["location"]))),
            ChangeType(d["type"]),
            int(sign),
            float(d["p_value"]),
            float(d.get("height", math.nan)),
            float(d.get("baseline", 0.0)),
        )


@dataclass(frozen=True)
class FamilyThreshold:
    """BH outcome for one family of candidates.

    ``threshold`` is the equivalent height cutoff: a candidate is rejected iff
    its oriented excess over the baseline exceeds it.
    """

    kind: ChangeType
    derivative_order: int
    gamma: float
    n_candidates: int
    n_rejected: int
    cutoff: float
    threshold: float
    sigma0: float

    def to_dict(self) -> dict:
        return {
            "type": self.kind.value,
            "derivative_order": self.derivative_order,
            "gamma": self.gamma,
            "n_candidates": self.n_candidates,
            "n_rejected": self.n_rejected,
            "cutoff": self.cutoff,
            "threshold": _finite_or_str(self.threshold),
            "sigma0": self.sigma0,
        }


def _finite_or_str(x: float):
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf"


@dataclass
class DetectionResult:
    detections: List[Detection]
    thresholds: Dict[str, FamilyThreshold]
    alpha: float
    config: dict = field(default_factory=dict)
    candidates: Dict[str, CandidatePeaks] = field(default_factory=dict, repr=False)

    @property
    def locations(self) -> np.ndarray:
        return np.array([d.location for d in self.detections], dtype=float)

    def of_kind(self, kind: ChangeType) -> List[Detection]:
        return [d for d in self.detections if d.kind == kind]

    @property
    def estimated_sigma0(self) -> Dict[str, float]:
        return {k: t.sigma0 for k, t in self.thresholds.items()}

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "detections": [d.to_dict() for d in self.detections],
            "thresholds": {k: t.to_dict() for k, t in self.thresholds.items()},
            "alpha": self.alpha,
            "config": self.config,
            "estimated_sigma0": self.estimated_sigma0,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DetectionResult":
        if data.get("schema") != SCHEMA:
            raise ValueError(f"unsupported schema {data.get('schema')!r}")
        thresholds = {}
        for key, t in data.get("thresholds", {}).items():
            thresholds[key] = FamilyThreshold(
                ChangeType(t["type"]),
                int(t["derivative_order"]),
                float(t["gamma"]),
                int(t["n_candidates"]),
                int(t["n_rejected"]),
                float(t["cutoff"]),
                float(t["threshold"]),
                float(t["sigma0"]),
            )
        dets = [Detection.from_dict(d) for d in data["detections"]]
        return cls(dets, thresholds, float(data["alpha"]), dict(data.get("config", {})))


# -- building blocks -------------------------------------------------------


def smoothed_derivative(y, cfg: SmoothingConfig, order: int) -> np.ndarray:
    """``order``-th derivative of the smoothed sequence; NaN within ``c gamma`` of the ends."""
    return convolve(y, sample_kernel(KernelSpec(cfg.gamma, cfg.c, order)))


def find_local_extrema(x, valid_range=None, derivative_order: Optional[int] = None) -> CandidatePeaks:
    """Strict local maxima and minima of ``x`` inside ``valid_range``.

    A run of equal values counts once, at its leftmost index, when both
    neighbouring runs are strictly lower (maximum) or higher (minimum).
    Runs touching either end of the range never qualify.

    Parameters
    ----------
    x : array_like
    valid_range : (int, int), optional
        Half-open index range ``[lo, hi)``. Defaults to the span of finite
        values of ``x``.
    """
    x = np.asarray(x, dtype=float)
    if valid_range is None:
        finite = np.flatnonzero(np.isfinite(x))
        if finite.size == 0:
            raise ValueError("no finite values to search")
        lo, hi = int(finite[0]), int(finite[-1]) + 1
    else:
        lo, hi = int(valid_range[0]), int(valid_range[1])
    if hi <= lo:
        raise ValueError("empty search range")
    seg = x[lo:hi]
    if not np.all(np.isfinite(seg)):
        raise ValueError("search range contains non-finite values")
    starts = np.flatnonzero(np.r_[True, seg[1:] != seg[:-1]])
    vals = seg[starts]
    if len(vals) < 3:
        return CandidatePeaks.empty(derivative_order)
    mid, left, right = vals[1:-1], vals[:-2], vals[2:]
    is_max = (mid > left) & (mid > right)
    is_min = (mid < left) & (mid < right)
    pick = np.flatnonzero(is_max | is_min) + 1
    index = (lo + starts[pick]).astype(np.intp)
    sign = np.where(is_max[pick - 1], 1, -1).astype(np.int8)
    height = vals[pick]
    n = len(index)
    return CandidatePeaks(index, sign, height, np.zeros(n), np.full(n, np.nan), derivative_order)


def assign_pvalues(
    peaks: CandidatePeaks,
    dist: PeakHeightDistribution,
    baseline: Union[SlopeBaseline, None] = None,
) -> CandidatePeaks:
    """P-values ``F(+(h - k))`` for maxima and ``F(-(h - k))`` for minima."""
    if baseline is None:
        base = np.zeros(len(peaks))
    else:
        base = baseline.at(peaks.index)
        if not np.all(np.isfinite(base)):
            raise ValueError("baseline undefined at some peak locations")
    excess = peaks.sign * (peaks.height - base)
    pv = np.asarray(dist.sf(excess), dtype=float).reshape(-1)
    return CandidatePeaks(peaks.index, peaks.sign, peaks.height, base, pv, peaks.derivative_order)


def bh_select(pvalues, alpha: float) -> BHResult:
    """Benjamini-Hochberg step-up with the strict rule ``p_(i) < i alpha / m``.

    Returns cutoff ``ell alpha / m``; 0 when nothing qualifies and 1 when
    there are no p-values at all. A p-value within a relative ``1e-12`` of
    its bound counts as equal, so decimal ties such as ``0.03`` against
    ``3 * 0.05 / 5`` are not rejected because of rounding.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    p = np.asarray(pvalues, dtype=float).reshape(-1)
    m = len(p)
    if m == 0:
        return BHResult(1.0, np.zeros(0, dtype=bool), 0)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    order = np.argsort(p, kind="stable")
    ranks = np.arange(1, m + 1)
    ok = np.flatnonzero(p[order] < ranks * alpha / m * (1.0 - _TIE_RTOL))
    if ok.size == 0:
        return BHResult(0.0, np.zeros(m, dtype=bool), 0)
    ell = int(ok[-1]) + 1
    rejected = np.zeros(m, dtype=bool)
    rejected[order[:ell]] = True
    return BHResult(ell * alpha / m, rejected, ell)


def huber_line(t, y, tuning: float = 1.345, max_iter: int = 50, tol: float = 1e-8):
    """Fit ``y ~ a + b t`` under Huber loss by iteratively reweighted least squares.

    The residual scale is re-estimated each iteration as MAD / 0.6745 and the
    Huber threshold is ``tuning`` times that scale.

    Returns
    -------
    (intercept, slope)
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 2:
        raise ValueError("need at least two points for a line")
    t0 = t.mean()
    X = np.column_stack([np.ones_like(t), t - t0])
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    for _ in range(max_iter):
        r = y - X @ beta
        scale = np.median(np.abs(r - np.median(r))) / MAD_TO_SD
        if scale <= 0:
            break
        u = np.abs(r) / (tuning * scale)
        w = np.where(u <= 1.0, 1.0, 1.0 / np.maximum(u, 1.0))
        sw = np.sqrt(w)
        new = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)[0]
        done = np.max(np.abs(new - beta)) < tol
        beta = new
        if done:
            break
    return float(beta[0] - beta[1] * t0), float(beta[1])


# -- algorithms ------------------------------------------------------------


def _valid_range(L: int, cfg: SmoothingConfig):
    h = cfg.half_width
    if L <= 2 * h:
        raise ValueError(f"sequence of length {L} is too short for gamma={cfg.gamma}, c={cfg.c}")
    return h, L - h


def _resolve_sigma0(y, cfg: SmoothingConfig, d2=None) -> float:
    if cfg.sigma0 is not None:
        return float(cfg.sigma0)
    if d2 is None:
        d2 = smoothed_derivative(y, cfg, 2)
    return estimate_sigma0(d2, cfg, 2)


def _as_mask(mask, L: int) -> Optional[np.ndarray]:
    if mask is None:
        return None
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if len(mask) != L:
            raise ValueError("boolean mask must match the sequence length")
        return mask
    out = np.zeros(L, dtype=bool)
    idx = mask.astype(np.intp)
    out[idx[(idx >= 0) & (idx < L)]] = True
    return out


def _test_family(deriv, cfg, sigma0, order, alpha, baseline, mask):
    L = len(deriv)
    peaks = find_local_extrema(deriv, _valid_range(L, cfg), derivative_order=order)
    if mask is not None and len(peaks):
        peaks = peaks.select(~mask[peaks.index])
    dist = peak_distribution(cfg.with_sigma0(sigma0), order)
    peaks = assign_pvalues(peaks, dist, baseline)
    bh = bh_select(peaks.p_value, alpha)
    if bh.cutoff >= 1.0:
        u = -math.inf
    elif bh.cutoff <= 0.0:
        u = math.inf
    else:
        u = dist.isf(bh.cutoff)
    return peaks, bh, u


def _family_result(kind, order, cfg, sigma0, peaks, bh, u, origin):
    dets = [
        Detection(
            float(origin + peaks.index[i]),
            int(peaks.index[i]),
            kind,
            int(peaks.sign[i]),
            float(peaks.p_value[i]),
            float(peaks.height[i]),
            float(peaks.baseline[i]),
        )
        for i in np.flatnonzero(bh.rejected)
    ]
    thr = FamilyThreshold(kind, order, cfg.gamma, len(peaks), int(bh.rejected.sum()), bh.cutoff, u, sigma0)
    return dets, thr


def detect_type1(y, cfg: SmoothingConfig, alpha: float = 0.05, mask=None, *, origin: float = 0) -> DetectionResult:
    """Detect continuous breaks from extrema of the smoothed second derivative.

    Parameters
    ----------
    y : array_like
        Observations on a unit grid.
    cfg : SmoothingConfig
        ``cfg.sigma0 = None`` estimates the noise scale from the data.
    alpha : float
        BH level.
    mask : array_like, optional
        Boolean array over ``y`` or integer indices; candidates there are dropped
        before testing.
    origin : float
        Location of ``y[0]``; detections report ``origin + index``.
    """
    y = np.asarray(y, dtype=float)
    _valid_range(len(y), cfg)
    d2 = smoothed_derivative(y, cfg, 2)
    sigma0 = _resolve_sigma0(y, cfg, d2)
    peaks, bh, u = _test_family(d2, cfg, sigma0, 2, alpha, None, _as_mask(mask, len(y)))
    dets, thr = _family_result(ChangeType.TYPE_I, 2, cfg, sigma0, peaks, bh, u, origin)
    return DetectionResult(
        dets,
        {ChangeType.TYPE_I.value: thr},
        alpha,
        {"mode": "type1", "type1": cfg.to_dict(), "origin": origin},
        {ChangeType.TYPE_I.value: peaks},
    )


def _cluster_cuts(
    locations: Sequence[float], pvalues: Sequence[float], width: float, signs: Optional[Sequence[int]] = None
):
    """One cut per run of locations at most ``width`` apart, with its smallest p-value.

    The cut sits at the run's most significant extremum. If an extremum of
    the opposite sign in the same run is comparably significant (at least
    half as many decades), the two form the pair a jump leaves at
    ``v +- gamma`` and the cut is their midpoint. Weak noise extrema chained
    into a run therefore never move the cut.
    """
    locs = np.asarray(locations, dtype=float)
    order = np.argsort(locs, kind="stable")
    locs = locs[order]
    ps = np.asarray(pvalues, dtype=float)[order]
    sg = np.ones(locs.size, dtype=int) if signs is None else np.asarray(signs, dtype=int)[order]
    if locs.size == 0:
        return [], []
    logp = np.log(np.maximum(ps, np.finfo(float).tiny))
    cuts, strength = [], []
    start = 0
    for i in range(1, locs.size + 1):
        if i == locs.size or locs[i] - locs[i - 1] > width:
            run = np.arange(start, i)
            lead = run[np.argmin(ps[run])]
            mates = run[(sg[run] != sg[lead]) & (logp[run] <= 0.5 * logp[lead])]
            if mates.size:
                mate = mates[np.argmin(ps[mates])]
                cuts.append(0.5 * (locs[lead] + locs[mate]))
            else:
                cuts.append(float(locs[lead]))
            strength.append(float(ps[lead]))
            start = i
    return cuts, strength


def _merge_short(cuts: List[float], L: int, min_len: float, strength: Optional[List[float]] = None) -> List[float]:
    """Remove cuts until every piece is at least ``min_len`` long.

    A short interior piece loses the weaker of its two cuts (larger p-value;
    without strengths, the one shared with the shorter neighbour).
    """
    cuts = list(cuts)
    strength = list(strength) if strength is not None else None
    while cuts:
        edges = [0.0] + cuts + [float(L)]
        lengths = np.diff(edges)
        j = int(np.argmin(lengths))
        if lengths[j] >= min_len:
            break
        if j == 0:
            drop = 0
        elif j == len(lengths) - 1:
            drop = j - 1
        elif strength is not None and strength[j - 1] != strength[j]:
            drop = j - 1 if strength[j - 1] > strength[j] else j
        else:
            drop = j - 1 if lengths[j - 1] <= lengths[j + 1] else j
        del cuts[drop]
        if strength is not None:
            del strength[drop]
    return cuts


def estimate_slope_baseline(y, cfg: SmoothingConfig, pre_alpha: float = 0.1) -> SlopeBaseline:
    """Piecewise slopes from a liberal second-derivative pre-detection.

    Second-derivative extrema significant at ``pre_alpha`` are grouped into
    clusters (neighbours at most ``3 gamma`` apart, which joins the pair a jump
    leaves near ``v +- gamma``); each cluster yields one cut (see
    :func:`_cluster_cuts`) and a Huber line is fitted to every piece. Pieces shorter than ``2 c gamma``
    are merged into a neighbour by dropping the less significant of their
    two cuts.
    """
    y = np.asarray(y, dtype=float)
    L = len(y)
    pre = detect_type1(y, cfg, pre_alpha)
    dets = pre.detections
    cuts, strength = _cluster_cuts(
        [d.index for d in dets], [d.p_value for d in dets], 3.0 * cfg.gamma, [d.sign for d in dets]
    )
    cuts = _merge_short(cuts, L, 2.0 * cfg.c * cfg.gamma, strength)
    # index i sits right of a cut c iff i >= c, matching SlopeBaseline.at
    edges = [0] + [int(math.ceil(c)) for c in cuts] + [L]
    t = np.arange(L, dtype=float)
    slopes = []
    for a, b in zip(edges[:-1], edges[1:]):
        slopes.append(huber_line(t[a:b], y[a:b])[1])
    return SlopeBaseline(np.asarray(cuts, dtype=float), np.asarray(slopes))


def _resolve_baseline(y, cfg, baseline, pre_alpha) -> SlopeBaseline:
    if isinstance(baseline, SlopeBaseline):
        return baseline
    if baseline is None or baseline == "zero":
        return SlopeBaseline.zero()
    if baseline == "estimate":
        return estimate_slope_baseline(y, cfg, pre_alpha)
    raise ValueError(f"unknown baseline {baseline!r}; expected 'estimate', 'zero' or a SlopeBaseline")


def detect_type2(
    y,
    cfg: SmoothingConfig,
    alpha: float = 0.05,
    baseline: Union[str, SlopeBaseline] = "estimate",
    *,
    pre_alpha: float = 0.1,
    origin: float = 0,
) -> DetectionResult:
    """Detect jumps from extrema of the smoothed first derivative above the local slope.

    ``baseline="zero"`` skips slope estimation (piecewise-constant data);
    ``"estimate"`` runs :func:`estimate_slope_baseline`.
    """
    y = np.asarray(y, dtype=float)
    _valid_range(len(y), cfg)
    sigma0 = _resolve_sigma0(y, cfg)
    base = _resolve_baseline(y, cfg.with_sigma0(sigma0), baseline, pre_alpha)
    d1 = smoothed_derivative(y, cfg, 1)
    # on a line of slope k the truncated kernel returns k (2 Phi(c) - 1), not k
    level = base.scaled(truncated_mass(cfg.c))
    peaks, bh, u = _test_family(d1, cfg, sigma0, 1, alpha, level, None)
    dets, thr = _family_result(ChangeType.TYPE_II, 1, cfg, sigma0, peaks, bh, u, origin)
    return DetectionResult(
        dets,
        {ChangeType.TYPE_II.value: thr},
        alpha,
        {
            "mode": "type2",
            "type2": cfg.to_dict(),
            "origin": origin,
            "baseline": {"breakpoints": base.breakpoints.tolist(), "slopes": base.slopes.tolist()},
        },
        {ChangeType.TYPE_II.value: peaks},
    )


def removal_mask(indices: Sequence[float], gamma: float, L: int) -> np.ndarray:
    """Boolean mask of grid points in ``[ceil(v - 2 gamma), floor(v + 2 gamma)]`` for each ``v``."""
    mask = np.zeros(L, dtype=bool)
    for v in indices:
        lo = max(int(math.ceil(v - 2.0 * gamma)), 0)
        hi = min(int(math.floor(v + 2.0 * gamma)), L - 1)
        if hi >= lo:
            mask[lo : hi + 1] = True
    return mask


def detect_mixture(
    y,
    cfg_type2: SmoothingConfig,
    cfg_type1: Optional[SmoothingConfig] = None,
    alpha: float = 0.05,
    baseline: Union[str, SlopeBaseline] = "estimate",
    *,
    pre_alpha: float = 0.1,
    origin: float = 0,
) -> DetectionResult:
    """Detect jumps first, then continuous breaks away from the detected jumps.

    Second-derivative candidates within ``2 gamma`` (the Type I bandwidth) of a
    detected jump are removed before the Type I test. Both families are
    BH-thresholded separately at ``alpha``.
    """
    if cfg_type1 is None:
        cfg_type1 = cfg_type2
    y = np.asarray(y, dtype=float)
    r2 = detect_type2(y, cfg_type2, alpha, baseline, pre_alpha=pre_alpha, origin=origin)
    mask = removal_mask([d.index for d in r2.detections], cfg_type1.gamma, len(y))
    r1 = detect_type1(y, cfg_type1, alpha, mask, origin=origin)
    dets = sorted(r2.detections + r1.detections, key=lambda d: (d.location, d.kind.value))
    config = {
        "mode": "mixture",
        "type1": cfg_type1.to_dict(),
        "type2": cfg_type2.to_dict(),
        "origin": origin,
        "baseline": r2.config["baseline"],
    }
    return DetectionResult(
        dets, {**r2.thresholds, **r1.thresholds}, alpha, config, {**r2.candidates, **r1.candidates}
    )
