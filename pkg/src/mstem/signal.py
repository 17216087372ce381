"""Piecewise-linear mean signals, change-point ground truth and analytic oracles."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr

from .noise import SmoothingConfig

__all__ = [
    "ChangeType",
    "Segment",
    "ChangePoint",
    "PiecewiseLinearSignal",
    "ExtremumLocations",
    "evaluate_signal",
    "smoothed_derivative_closed_form",
    "extremum_location",
    "snr",
    "make_scenario",
    "SCENARIO_DEFAULTS",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ChangeType(str, enum.Enum):
    TYPE_I = "TypeI"    # continuous break: slope changes, no jump
    TYPE_II = "TypeII"  # jump

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Segment:
    """Line ``intercept + slope * t`` on ``(previous end, end]``.

    The last segment of a signal has ``end = None`` (unbounded).
    """

    intercept: float
    slope: float
    end: Optional[float] = None

    def __call__(self, t):
        return self.intercept + self.slope * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class ChangePoint:
    """Ground truth for one change point between two segments."""

    location: float
    jump: float
    slope_left: float
    slope_right: float

    @property
    def slope_change(self) -> float:
        return self.slope_right - self.slope_left

    @property
    def kind(self) -> ChangeType:
        return ChangeType.TYPE_I if self.jump == 0 else ChangeType.TYPE_II

    @property
    def ratio(self) -> Optional[float]:
        """Slope change over jump size; ``None`` for a continuous break."""
        if self.jump == 0:
            return None
        return self.slope_change / self.jump

    @property
    def sign(self) -> int:
        """+1 if the change produces a local maximum in its derivative, -1 for a minimum."""
        value = self.slope_change if self.jump == 0 else self.jump
        return 1 if value > 0 else -1


def _jump_at(left: Segment, right: Segment, v: float) -> float:
    a = (right.intercept - left.intercept) + (right.slope - left.slope) * v
    # snap round-off from constructing continuous breaks to an exact zero
    scale = max(1.0, abs(left.intercept), abs(right.intercept), abs(left.slope * v), abs(right.slope * v))
    return 0.0 if abs(a) <= 1e-12 * scale else a


@dataclass(frozen=True)
class PiecewiseLinearSignal:
    """A mean function made of consecutive line segments.

    Parameters
    ----------
    segments : sequence of Segment
        Ordered left to right. Every segment but the last has a finite ``end``.
    length : int, optional
        Number of grid samples ``t = 1 .. length`` the signal is meant for.
    """

    segments: Tuple[Segment, ...]
    length: Optional[int] = None
    _ends: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("a signal needs at least one segment")
        object.__setattr__(self, "segments", segs)
        ends = [s.end for s in segs[:-1]]
        if any(e is None for e in ends):
            raise ValueError("only the last segment may be unbounded")
        if segs[-1].end is not None:
            segs = segs[:-1] + (Segment(segs[-1].intercept, segs[-1].slope, None),)
            object.__setattr__(self, "segments", segs)
        ends = np.asarray(ends, dtype=float)
        if np.any(np.diff(ends) <= 0):
            raise ValueError("segment endpoints must be strictly increasing")
        for left, right in zip(segs[:-1], segs[1:]):
            if left.intercept == right.intercept and left.slope == right.slope:
                raise ValueError(f"consecutive segments are identical at t={left.end}")
        object.__setattr__(self, "_ends", ends)

    @property
    def change_points(self) -> List[ChangePoint]:
        out = []
        for left, right in zip(self.segments[:-1], self.segments[1:]):
            v = float(left.end)
            out.append(ChangePoint(v, _jump_at(left, right, v), left.slope, right.slope))
        return out

    @property
    def min_gap(self) -> float:
        """Smallest distance between neighbouring change points (inf if fewer than two)."""
        if len(self._ends) < 2:
            return math.inf
        return float(np.min(np.diff(self._ends)))

    def check_separation(self, cfg: SmoothingConfig) -> None:
        """Raise if neighbouring smoothing windows overlap (gap <= 2 c gamma)."""
        if self.min_gap <= 2.0 * cfg.c * cfg.gamma:
            raise ValueError(
                f"change points {self.min_gap} apart overlap under smoothing; need more than {2 * cfg.c * cfg.gamma}"
            )

    def segment_index(self, t) -> np.ndarray:
        # segment j owns (v_{j-1}, v_j]
        return np.searchsorted(self._ends, np.asarray(t, dtype=float), side="left")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = self.segment_index(t)
        icpt = np.array([s.intercept for s in self.segments])
        slope = np.array([s.slope for s in self.segments])
        return icpt[idx] + slope[idx] * t

    def grid(self) -> np.ndarray:
        if self.length is None:
            raise ValueError("signal has no length; pass an explicit grid")
        return np.arange(1, self.length + 1, dtype=float)

    def sampled(self) -> np.ndarray:
        """Signal on its default grid ``t = 1 .. length``."""
        return self(self.grid())

    def cell_equivalent(self) -> "PiecewiseLinearSignal":
        """Continuous signal whose unit-cell discretisation equals the samples.

        A sample at integer ``t`` stands for the cell ``(t - 1/2, t + 1/2]``, so
        a jump owned by the left segment at ``v`` is seen by any Riemann sum as
        a jump at ``v + 1/2``. Continuous breaks are left where they are.
        """
        segs = []
        for seg, cp in zip(self.segments[:-1], self.change_points):
            shift = 0.5 if cp.jump != 0 else 0.0
            segs.append(Segment(seg.intercept, seg.slope, seg.end + shift))
        segs.append(self.segments[-1])
        return PiecewiseLinearSignal(segs, self.length)

    def to_dict(self) -> dict:
        return {
            "segments": [{"c": s.intercept, "k": s.slope, "v": s.end} for s in self.segments],
            "L": self.length,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewiseLinearSignal":
        segs = [Segment(float(s["c"]), float(s["k"]), None if s.get("v") is None else float(s["v"])) for s in data["segments"]]
        length = data.get("L")
        return cls(segs, None if length is None else int(length))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PiecewiseLinearSignal":
        return cls.from_dict(json.loads(text))


def evaluate_signal(sig: PiecewiseLinearSignal, t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.size == 0:
        raise ValueError("empty grid")
    return sig(t)


def smoothed_derivative_closed_form(sig: PiecewiseLinearSignal, cfg: SmoothingConfig, order: int, t: float) -> float:
    """First or second derivative of the kernel-smoothed signal at ``t``.

    Exact for the truncated Gaussian kernel as long as smoothing windows of
    neighbouring change points do not overlap.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    sig.check_separation(cfg)
    g, c = cfg.gamma, cfg.c
    phi_c = float(ndtr(c))
    for cp in sig.change_points:
        if abs(t - cp.location) < c * g:
            x = (cp.location - t) / g
            pdf = _INV_SQRT_2PI * math.exp(-0.5 * x * x)
            if order == 1:
                return (
                    cp.jump / g * pdf
                    + (cp.slope_left - cp.slope_right) * float(ndtr(x))
                    + (cp.slope_left + cp.slope_right) * phi_c
                    - cp.slope_left
                )
            return (cp.jump * (cp.location - t) + cp.slope_change * g * g) / g ** 3 * pdf
    if order == 2:
        return 0.0
    k = sig.segments[int(sig.segment_index(t))].slope
    return k * (2.0 * phi_c - 1.0)


class ExtremumLocations(NamedTuple):
    first_deriv: Optional[float]
    second_deriv: Tuple[float, ...]


def extremum_location(truth: ChangePoint, cfg: SmoothingConfig) -> ExtremumLocations:
    """Where the change point puts local extrema of the smoothed derivatives.

    Both second-derivative roots are reported for a jump even when one falls
    outside the smoothing window; callers filter.
    """
    v, g = truth.location, cfg.gamma
    if truth.jump == 0:
        return ExtremumLocations(None, (v,))
    q = truth.ratio
    shift = g * g * q
    half = g * math.sqrt(g * g * q * q + 4.0)
    return ExtremumLocations(v + shift, (v + 0.5 * (shift - half), v + 0.5 * (shift + half)))


def snr(truth: ChangePoint, cfg: SmoothingConfig) -> float:
    """Signal-to-noise ratio of the derivative peak a change point produces."""
    g = cfg.gamma
    m2 = (cfg.nu / g) ** 2
    sigma0 = 1.0 if cfg.sigma0 is None else cfg.sigma0
    if truth.jump == 0:
        val = 2.0 * g ** 1.5 / (math.sqrt(3.0) * math.pi ** 0.25) * (1.0 + m2) ** 1.25 * abs(truth.slope_change)
        return val / sigma0
    scale = (1.0 + m2) ** 0.75
    jump_term = math.sqrt(2.0) * truth.jump / math.pi ** 0.25 * scale * math.sqrt(g)
    slope_term = (
        truth.slope_change + 2.0 * (truth.slope_left + truth.slope_right) * (float(ndtr(cfg.c)) - 1.0)
    ) * math.pi ** 0.25 * scale * g ** 1.5
    return abs(jump_term + slope_term) / sigma0


SCENARIO_DEFAULTS = {
    1: {"L": 1500, "d": 150},
    2: {"L": 1500, "d": 150},
    3: {"L": 1500, "d": 150},
    4: {"L": 3000, "d": 150},
}


def _build(
    L: int,
    d: float,
    increments: Sequence[Tuple[float, float]],
    start: Tuple[float, float] = (0.0, 0.0),
    offset: float = 0.0,
) -> List[Segment]:
    # increments[j] = (jump a_j, slope change) at v_j = offset + (j+1) d
    c, k = start
    segs = []
    for j, (a, dk) in enumerate(increments):
        v = offset + (j + 1) * d
        segs.append(Segment(c, k, v))
        k_new = k + dk
        c = c + a - dk * v
        k = k_new
    segs.append(Segment(c, k, None))
    return segs


def make_scenario(
    scenario: int,
    L: Optional[int] = None,
    d: float = 150,
    *,
    slope_change: float = 0.1,
    jump: float = 10.0,
    alt_slope: float = 0.05,
    cfg: Optional[SmoothingConfig] = None,
) -> Tuple[PiecewiseLinearSignal, List[ChangePoint]]:
    """Build one of the four simulation signals.

    Change points sit at ``v_j = j d`` for ``j = 1 .. floor(L/d) - 1``.

    1. continuous breaks, every slope change ``slope_change``;
    2. piecewise constant, every jump ``jump``;
    3. jumps ``jump`` with slope changes ``+alt_slope`` (odd j) / ``-alt_slope`` (even j);
    4. scenario 1 on the first half followed by scenario 3 on the second half.
       The second half continues the last line of the first half, so the
       junction at ``L/2`` is not a change point.
    """
    if scenario not in SCENARIO_DEFAULTS:
        raise ValueError(f"unknown scenario {scenario}; expected one of 1, 2, 3, 4")
    if L is None:
        L = SCENARIO_DEFAULTS[scenario]["L"]
    L = int(L)
    if scenario == 4:
        half = L // 2
        n1 = int(half // d) - 1
        n2 = int((L - half) // d) - 1
        first = [(0.0, slope_change)] * n1
        second = [(jump, alt_slope if (j + 1) % 2 else -alt_slope) for j in range(n2)]
        # first-half breaks at j d; second-half jumps at half + j d
        segs = _build(L, d, first)
        last = segs.pop()
        segs += _build(L, d, second, start=(last.intercept, last.slope), offset=half)
    else:
        n = int(L // d) - 1
        if n < 1:
            raise ValueError(f"L={L} and d={d} leave no change point")
        if scenario == 1:
            inc = [(0.0, slope_change)] * n
        elif scenario == 2:
            inc = [(jump, 0.0)] * n
        else:
            inc = [(jump, alt_slope if (j + 1) % 2 else -alt_slope) for j in range(n)]
        segs = _build(L, d, inc)
    sig = PiecewiseLinearSignal(segs, L)
    if cfg is not None:
        sig.check_separation(cfg)
    return sig, sig.change_points
