import numpy as np
import pytest

from mstem.simulation import (
    SimulationConfig,
    base_snr,
    build_signal,
    fdr_limit_for,
    parse_sweep,
    run_replication,
    simulate,
    snr_sweep,
)


class TestConfig:
    def test_defaults_per_scenario(self):
        assert SimulationConfig(scenario=1).resolved_mode == "type1"
        assert SimulationConfig(scenario=3).resolved_mode == "type2"
        assert SimulationConfig(scenario=4).resolved_mode == "mixture"
        assert SimulationConfig(scenario=2).resolved_baseline == "zero"
        assert SimulationConfig(scenario=3).resolved_baseline == "estimate"

    def test_lengths(self):
        assert SimulationConfig(scenario=1).length == 1500
        assert SimulationConfig(scenario=4).length == 3000
        assert SimulationConfig(scenario=1, long_term=True).length == 15000

    def test_long_term_truth(self):
        _, truth = build_signal(SimulationConfig(scenario=1, long_term=True))
        assert len(truth) == 99

    @pytest.mark.parametrize(
        "kw", [dict(scenario=7), dict(mode="both"), dict(baseline="ols"), dict(reps=0), dict(alpha=1.0), dict(sigma0=0.0)]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SimulationConfig(**kw)


class TestDeterminism:
    def test_same_seed_same_reports(self):
        cfg = SimulationConfig(scenario=3, reps=1, seed=7)
        a = run_replication(cfg, 0)
        b = run_replication(cfg, 0)
        assert (a.fdp, a.power, a.capture_rates) == (b.fdp, b.power, b.capture_rates)

    def test_independent_of_threads(self):
        cfg = SimulationConfig(scenario=1, reps=12, seed=3)
        one = simulate(cfg, threads=1)
        three = simulate(cfg, threads=3)
        strip = lambda rs: [(r.fdp, r.power, r.capture_rates, r.R, r.V) for r in rs]
        assert strip(one.reports) == strip(three.reports)

    def test_replication_seed_offset(self):
        # replication i of seed s is replication 0 of seed s + i
        a = run_replication(SimulationConfig(scenario=1, seed=10), 5)
        b = run_replication(SimulationConfig(scenario=1, seed=15), 0)
        assert (a.fdp, a.R, a.V) == (b.fdp, b.R, b.V)


class TestSweep:
    def test_parse(self):
        assert list(parse_sweep("2:8:4")) == [2.0, 4.0, 6.0, 8.0]

    @pytest.mark.parametrize("bad", ["2:8", "a:b:c", "0:4:3", "5:4:3", "1:4:0"])
    def test_parse_invalid(self, bad):
        with pytest.raises(ValueError):
            parse_sweep(bad)

    def test_base_snr(self):
        assert base_snr(SimulationConfig(scenario=1)) == pytest.approx(2.777, abs=1e-3)

    def test_sweep_scales_snr(self):
        pts = snr_sweep(SimulationConfig(scenario=1, reps=3), [5.554])
        assert pts[0].scale == pytest.approx(2.0, rel=1e-3)
        assert pts[0].summary.n == 3

    def test_limit(self):
        lim = fdr_limit_for(SimulationConfig(scenario=1))
        assert 0.03 < lim < 0.05
        assert fdr_limit_for(SimulationConfig(scenario=4)) < 0.05


def test_high_snr_runs_clean():
    res = simulate(SimulationConfig(scenario=2, reps=5, scale=2.0), threads=1)
    assert res.summary.power == 1.0
    assert np.isfinite(res.summary.fdr)
