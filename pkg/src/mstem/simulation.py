"""Monte Carlo replications of the detection procedures on the test signals.

Replication ``i`` draws its noise from ``numpy.random.default_rng(seed + i)``,
so results depend only on the master seed, never on the worker count.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .detect import DetectionResult, detect_mixture, detect_type1, detect_type2
from .evaluation import Aggregate, ScoreReport, ScoringConfig, aggregate, asymptotic_fdr_limit, score_replication
from .noise import SmoothingConfig, generate_noise
from .signal import SCENARIO_DEFAULTS, ChangePoint, ChangeType, PiecewiseLinearSignal, make_scenario, snr

__all__ = [
    "SimulationConfig",
    "SimulationResult",
    "SweepPoint",
    "default_mode",
    "build_signal",
    "run_detection",
    "run_replication",
    "simulate",
    "snr_sweep",
    "fdr_limit_for",
    "base_snr",
    "parse_sweep",
]

MODES = ("type1", "type2", "mixture")
LONG_TERM_FACTOR = 10


def default_mode(scenario: int) -> str:
    return {1: "type1", 2: "type2", 3: "type2", 4: "mixture"}[scenario]


@dataclass(frozen=True)
class SimulationConfig:
    """Everything that determines a simulation campaign.

    ``mode`` and ``baseline`` default per scenario: Type I for scenario 1,
    Type II for 2 and 3, mixture for 4; a zero slope baseline for the
    piecewise-constant scenario 2 and an estimated one otherwise. ``scale``
    multiplies every jump and slope change, which scales every SNR by the
    same factor.
    """

    scenario: int = 1
    L: Optional[int] = None
    d: float = 150.0
    gamma: float = 10.0
    nu: float = 1.0
    c: float = 4.0
    alpha: float = 0.05
    b: float = 10.0
    mode: Optional[str] = None
    baseline: Optional[str] = None
    sigma0: float = 1.0
    known_sigma0: bool = True
    reps: int = 1000
    seed: int = 0
    long_term: bool = False
    scale: float = 1.0
    sign_aware: bool = True

    def __post_init__(self):
        if self.scenario not in SCENARIO_DEFAULTS:
            raise ValueError(f"unknown scenario {self.scenario}; expected one of 1, 2, 3, 4")
        if self.mode is not None and self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.baseline is not None and self.baseline not in ("estimate", "zero"):
            raise ValueError(f"baseline must be 'estimate' or 'zero', got {self.baseline!r}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")

    @property
    def resolved_mode(self) -> str:
        return self.mode or default_mode(self.scenario)

    @property
    def resolved_baseline(self) -> str:
        if self.baseline is not None:
            return self.baseline
        return "zero" if self.scenario == 2 else "estimate"

    @property
    def length(self) -> int:
        L = self.L if self.L is not None else SCENARIO_DEFAULTS[self.scenario]["L"]
        return int(L) * (LONG_TERM_FACTOR if self.long_term else 1)

    def smoothing(self) -> SmoothingConfig:
        return SmoothingConfig(self.gamma, self.nu, self.c, self.sigma0 if self.known_sigma0 else None)

    def scoring(self) -> ScoringConfig:
        return ScoringConfig.for_gamma(self.gamma, self.b, self.sign_aware)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(L=self.length, mode=self.resolved_mode, baseline=self.resolved_baseline)
        return out


def build_signal(cfg: SimulationConfig) -> Tuple[PiecewiseLinearSignal, List[ChangePoint]]:
    s = cfg.scale
    return make_scenario(
        cfg.scenario, cfg.length, cfg.d, slope_change=0.1 * s, jump=10.0 * s, alt_slope=0.05 * s
    )


def run_detection(y, cfg: SimulationConfig, origin: float = 1.0) -> DetectionResult:
    """Apply the configured procedure; ``origin`` is the time of ``y[0]``."""
    sm = cfg.smoothing()
    mode = cfg.resolved_mode
    if mode == "type1":
        return detect_type1(y, sm, cfg.alpha, origin=origin)
    if mode == "type2":
        return detect_type2(y, sm, cfg.alpha, cfg.resolved_baseline, origin=origin)
    return detect_mixture(y, sm, None, cfg.alpha, cfg.resolved_baseline, origin=origin)


def run_replication(cfg: SimulationConfig, i: int, signal=None) -> ScoreReport:
    """Run and score replication ``i``."""
    sig, truth = signal if signal is not None else build_signal(cfg)
    mu = sig.sampled()
    y = mu + generate_noise(len(mu), cfg.nu, cfg.sigma0, seed=cfg.seed + i)
    t0 = time.perf_counter()
    res = run_detection(y, cfg)
    elapsed = time.perf_counter() - t0
    return score_replication(res, truth, cfg.scoring(), runtime=elapsed)


def _chunk(args):
    cfg, start, stop = args
    sig = build_signal(cfg)
    return [run_replication(cfg, i, sig) for i in range(start, stop)]


def _resolve_threads(threads: Optional[int]) -> int:
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return int(threads)


def _run_all(cfg: SimulationConfig, threads: Optional[int]) -> List[ScoreReport]:
    n_workers = min(_resolve_threads(threads), cfg.reps)
    if n_workers <= 1:
        return _chunk((cfg, 0, cfg.reps))
    bounds = np.linspace(0, cfg.reps, 4 * n_workers + 1).astype(int)
    jobs = [(cfg, int(a), int(b)) for a, b in zip(bounds, bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        parts = list(pool.map(_chunk, jobs))  # map keeps submission order
    return [r for part in parts for r in part]


@dataclass
class SimulationResult:
    config: SimulationConfig
    reports: List[ScoreReport]
    summary: Aggregate
    wall_time: float

    def labels(self) -> List[str]:
        return self.config.scoring().interval_labels()


def simulate(cfg: SimulationConfig, threads: Optional[int] = None) -> SimulationResult:
    """Run ``cfg.reps`` replications and aggregate them.

    Output is identical for any ``threads``; rows are ordered by
    replication index.
    """
    build_signal(cfg)[0].check_separation(cfg.smoothing())
    t0 = time.perf_counter()
    reports = _run_all(cfg, threads)
    return SimulationResult(cfg, reports, aggregate(reports), time.perf_counter() - t0)


def _effective_length(cfg: SimulationConfig) -> float:
    # candidates are only taken where the kernel fits inside the data
    return cfg.length - 2.0 * math.floor(cfg.c * cfg.gamma)


def fdr_limit_for(cfg: SimulationConfig) -> float:
    """Asymptotic BH FDR for the campaign's signal density and procedure.

    Densities are counted against the testable stretch of the series,
    which excludes ``floor(c gamma)`` samples at each end.
    """
    _, truth = build_signal(cfg)
    Leff = _effective_length(cfg)
    sm = cfg.smoothing().with_sigma0(cfg.sigma0)
    mode = cfg.resolved_mode
    if mode == "mixture":
        J1 = sum(t.kind == ChangeType.TYPE_I for t in truth)
        J2 = len(truth) - J1
        return asymptotic_fdr_limit(sm, (J1 / Leff, J2 / Leff), cfg.alpha, "mixture")
    family = ChangeType.TYPE_I if mode == "type1" else ChangeType.TYPE_II
    return asymptotic_fdr_limit(sm, len(truth) / Leff, cfg.alpha, family)


def base_snr(cfg: SimulationConfig) -> float:
    """Smallest change-point SNR of the scenario at ``scale = 1``."""
    sig, truth = build_signal(replace(cfg, scale=1.0))
    sm = cfg.smoothing().with_sigma0(cfg.sigma0)
    return min(snr(t, sm) for t in truth)


@dataclass(frozen=True)
class SweepPoint:
    snr: float
    scale: float
    summary: Aggregate
    fdr_limit: float


def snr_sweep(
    cfg: SimulationConfig, snrs: Sequence[float], threads: Optional[int] = None
) -> List[SweepPoint]:
    """Simulate at each target SNR by rescaling every jump and slope change."""
    unit = base_snr(cfg)
    limit = fdr_limit_for(cfg)
    out = []
    for target in snrs:
        s = float(target) / unit
        res = simulate(replace(cfg, scale=s), threads)
        out.append(SweepPoint(float(target), s, res.summary, limit))
    return out


def parse_sweep(spec: str) -> np.ndarray:
    """Parse ``"lo:hi:steps"`` into ``steps`` evenly spaced values."""
    try:
        lo, hi, steps = spec.split(":")
        lo_f, hi_f, n = float(lo), float(hi), int(steps)
    except ValueError as exc:
        raise ValueError(f"sweep must look like lo:hi:steps, got {spec!r}") from exc
    if n < 1 or not lo_f > 0 or hi_f < lo_f:
        raise ValueError(f"invalid sweep {spec!r}: need 0 < lo <= hi and steps >= 1")
    return np.linspace(lo_f, hi_f, n)
