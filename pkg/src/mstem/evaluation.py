"""Scoring detections against known change points.

A detection is true if it lies within ``b`` of some change point, i.e. in
the open window ``(v - b, v + b)``. Per replication we report the false
discovery proportion, the fraction of change points found by a detection of
the right family (and optionally the right extremum sign), and capture
rates: the share of detections whose distance to the nearest change point
falls in each interval, divided by the number of change points.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .detect import Detection, DetectionResult
from .noise import SmoothingConfig, expected_extrema_density
from .signal import ChangePoint, ChangeType

__all__ = [
    "ScoringConfig",
    "ScoreReport",
    "Aggregate",
    "Matching",
    "match_detections",
    "score_replication",
    "aggregate",
    "asymptotic_fdr_limit",
    "bh_equivalent_threshold_level",
    "write_reports_csv",
]


def _default_edges(gamma: float) -> Tuple[float, ...]:
    return (0.0, gamma / 3.0, gamma, 2.0 * gamma, 4.0 * gamma, math.inf)


@dataclass(frozen=True)
class ScoringConfig:
    """Location tolerance ``b`` and capture-interval edges.

    ``edges`` are the boundaries of the half-open capture intervals
    ``[e0, e1), [e1, e2), ...``; they must start at 0, increase strictly and
    end at infinity. Use :meth:`for_gamma` for the standard set
    ``0, gamma/3, gamma, 2 gamma, 4 gamma, inf``.
    """

    b: float = 10.0
    edges: Tuple[float, ...] = field(default_factory=lambda: _default_edges(10.0))
    sign_aware: bool = True

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")
        e = tuple(float(x) for x in self.edges)
        if len(e) < 2 or e[0] != 0.0 or e[-1] != math.inf:
            raise ValueError("capture edges must start at 0 and end at inf")
        if any(not hi > lo for lo, hi in zip(e, e[1:])):
            raise ValueError("capture edges must be strictly increasing")
        object.__setattr__(self, "edges", e)

    @classmethod
    def for_gamma(cls, gamma: float, b: float = 10.0, sign_aware: bool = True) -> "ScoringConfig":
        return cls(b, _default_edges(gamma), sign_aware)

    @property
    def intervals(self) -> List[Tuple[float, float]]:
        return list(zip(self.edges, self.edges[1:]))

    def interval_labels(self) -> List[str]:
        return [f"[{_fmt(lo)},{_fmt(hi)})" for lo, hi in self.intervals]


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:g}"


@dataclass(frozen=True)
class Matching:
    """Nearest change point for each detection."""

    truth_index: np.ndarray
    truth_location: np.ndarray
    distance: np.ndarray


def match_detections(detected: Sequence[float], truth: Sequence[float]) -> Matching:
    """Map each detection to its nearest change point.

    Ties go to the change point with the smaller index.

    Raises
    ------
    ValueError
        If ``truth`` is empty.
    """
    truth = np.asarray(truth, dtype=float)
    if truth.size == 0:
        raise ValueError("truth must contain at least one change point")
    det = np.asarray(detected, dtype=float).reshape(-1)
    if det.size == 0:
        empty = np.zeros(0)
        return Matching(empty.astype(int), empty, empty)
    dist = np.abs(det[:, None] - truth[None, :])
    idx = np.argmin(dist, axis=1)  # first minimum, so ties go to the smaller index
    d = dist[np.arange(det.size), idx]
    return Matching(idx, truth[idx], d)


@dataclass(frozen=True)
class ScoreReport:
    fdp: float
    power: float
    capture_rates: Tuple[float, ...]
    R: int
    V: int
    J: int
    runtime: float = 0.0

    def to_dict(self, labels: Optional[Sequence[str]] = None) -> dict:
        caps = list(self.capture_rates)
        out = {"fdp": self.fdp, "power": self.power, "R": self.R, "V": self.V, "J": self.J}
        out["capture_rates"] = dict(zip(labels, caps)) if labels is not None else caps
        out["runtime"] = self.runtime
        return out


def _truth_arrays(truth) -> Tuple[np.ndarray, Optional[List[ChangePoint]]]:
    truth = list(truth)
    if truth and isinstance(truth[0], ChangePoint):
        return np.array([t.location for t in truth], dtype=float), truth
    return np.asarray(truth, dtype=float), None


def score_replication(
    result,
    truth,
    cfg: ScoringConfig = ScoringConfig(),
    runtime: float = 0.0,
) -> ScoreReport:
    """Score one replication.

    Parameters
    ----------
    result : DetectionResult or sequence of Detection
    truth : sequence of ChangePoint, or of locations
        With bare locations the family and sign of each change point are
        unknown and power only checks the location.
    cfg : ScoringConfig
    runtime : float
        Seconds spent on detection, carried through to the report.
    """
    dets: List[Detection] = list(result.detections if isinstance(result, DetectionResult) else result)
    locs, points = _truth_arrays(truth)
    J = int(locs.size)
    if J == 0:
        raise ValueError("truth must contain at least one change point")
    n_int = len(cfg.intervals)
    R = len(dets)
    if R == 0:
        return ScoreReport(0.0, 0.0, (0.0,) * n_int, 0, 0, J, runtime)

    det_locs = np.array([d.location for d in dets], dtype=float)
    match = match_detections(det_locs, locs)
    V = int(np.count_nonzero(match.distance >= cfg.b))

    counts, _ = np.histogram(match.distance, bins=np.asarray(cfg.edges))
    capture = tuple(float(c) / J for c in counts)

    found = 0
    for j in range(J):
        near = np.abs(det_locs - locs[j]) < cfg.b
        if points is not None:
            tp = points[j]
            ok = [d.kind == tp.kind and (not cfg.sign_aware or d.sign == tp.sign) for d in dets]
            near &= np.array(ok, dtype=bool)
        found += bool(np.any(near))
    return ScoreReport(V / R, found / J, capture, R, V, J, runtime)


@dataclass(frozen=True)
class Aggregate:
    """Means and standard errors over replications."""

    n: int
    fdr: float
    fdr_se: float
    power: float
    power_se: float
    capture_rates: Tuple[float, ...]
    runtime: float

    def to_dict(self, labels: Optional[Sequence[str]] = None) -> dict:
        caps = list(self.capture_rates)
        return {
            "n": self.n,
            "fdr": self.fdr,
            "fdr_se": self.fdr_se,
            "power": self.power,
            "power_se": self.power_se,
            "capture_rates": dict(zip(labels, caps)) if labels is not None else caps,
            "runtime": self.runtime,
        }

    def csv_row(self, labels: Sequence[str]) -> Dict[str, float]:
        row = {lab: cap for lab, cap in zip(labels, self.capture_rates)}
        row.update(fdr=self.fdr, power=self.power, time=self.runtime)
        return row


def _se(x: np.ndarray) -> float:
    return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0


def aggregate(reports: Iterable[ScoreReport]) -> Aggregate:
    """Average replication reports.

    Raises
    ------
    ValueError
        If ``reports`` is empty.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report to aggregate")
    fdp = np.array([r.fdp for r in reports])
    pw = np.array([r.power for r in reports])
    caps = np.array([r.capture_rates for r in reports], dtype=float)
    rt = np.array([r.runtime for r in reports])
    return Aggregate(
        len(reports),
        float(fdp.mean()),
        _se(fdp),
        float(pw.mean()),
        _se(pw),
        tuple(float(c) for c in caps.mean(axis=0)),
        float(rt.mean()),
    )


def write_reports_csv(reports: Sequence[ScoreReport], labels: Sequence[str]) -> str:
    """Per-replication rows: index, FDP, power, R, V and capture rates."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rep", "fdp", "power", "R", "V", *labels])
    for i, r in enumerate(reports):
        w.writerow([i, repr(r.fdp), repr(r.power), r.R, r.V, *map(repr, r.capture_rates)])
    return buf.getvalue()


# -- asymptotic oracles ----------------------------------------------------


def _null_share(cfg: SmoothingConfig, A: float, order: int) -> float:
    if not A > 0:
        raise ValueError(f"change-point density A must be positive, got {A}")
    free = 1.0 - 2.0 * cfg.c * cfg.gamma * A
    if not free > 0:
        raise ValueError(f"2 c gamma A = {2 * cfg.c * cfg.gamma * A:g} >= 1; signal windows cover the line")
    return expected_extrema_density(cfg, order) * free


def bh_equivalent_threshold_level(cfg: SmoothingConfig, A: float, alpha: float, order: int) -> float:
    """Tail level ``F(u*)`` of the deterministic threshold that BH mimics asymptotically.

    ``F(u*) = alpha A / (A + E (1 - 2 c gamma A) (1 - alpha))`` with ``E`` the
    expected extrema density of the noise derivative of the given order.
    """
    n = _null_share(cfg, A, order)
    return alpha * A / (A + n * (1.0 - alpha))


def asymptotic_fdr_limit(
    cfg: SmoothingConfig,
    A,
    alpha: float,
    family: ChangeType | str = ChangeType.TYPE_I,
    cfg_type1: Optional[SmoothingConfig] = None,
) -> float:
    """Large-sample FDR of the BH-thresholded procedure.

    Parameters
    ----------
    cfg : SmoothingConfig
        Smoothing of the tested family. For ``"mixture"`` this is the
        first-derivative (jump) smoothing.
    A : float or (float, float)
        Change points per unit length. For ``"mixture"`` a pair
        ``(A1, A2)`` of continuous-break and jump densities.
    alpha : float
    family : {"TypeI", "TypeII", "mixture"}
    cfg_type1 : SmoothingConfig, optional
        Second-derivative smoothing for ``"mixture"``; defaults to ``cfg``.

    Returns
    -------
    float
        The limit for a single family. For ``"mixture"`` an upper bound:
        the fixed-threshold bound evaluated at each family's BH-equivalent
        threshold, which never exceeds ``alpha``.

    Raises
    ------
    ValueError
        If ``2 c gamma A >= 1`` or ``A <= 0``.
    """
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    family = str(family)
    if family in (ChangeType.TYPE_I.value, ChangeType.TYPE_II.value):
        order = 2 if family == ChangeType.TYPE_I.value else 1
        A = float(A)
        n = _null_share(cfg, A, order)
        return alpha * n / (n + A)
    if family != "mixture":
        raise ValueError(f"unknown family {family!r}")
    A1, A2 = (float(a) for a in A)
    c1 = cfg if cfg_type1 is None else cfg_type1
    n1 = _null_share(c1, A1, 2) * bh_equivalent_threshold_level(c1, A1, alpha, 2)
    n2 = _null_share(cfg, A2, 1) * bh_equivalent_threshold_level(cfg, A2, alpha, 1)
    return (n1 + n2) / (n1 + n2 + A1 + A2)
