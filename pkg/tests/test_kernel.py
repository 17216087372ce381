import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from mstem.kernel import KernelSpec, convolve, kernel_value, sample_kernel, truncated_mass

MASS4 = 2 * norm.cdf(4.0) - 1


class TestKernelValue:
    def test_order0_at_origin(self):
        assert kernel_value(KernelSpec(1.0, 4.0, 0), 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)

    def test_order1_at_origin(self):
        assert kernel_value(KernelSpec(1.0, 4.0, 1), 0.0) == 0.0

    def test_order2_at_origin(self):
        assert kernel_value(KernelSpec(2.0, 4.0, 2), 0.0) == pytest.approx(-0.0498678, abs=5e-8)

    # symbolic derivatives of (1/g) phi(t/g), evaluated to 17 digits
    @pytest.mark.parametrize(
        "gamma, order, t, expected",
        [
            (10.0, 1, 5.0, -0.0017603266338214974),
            (10.0, 2, 3.0, -0.00034706291206907692),
            (10.0, 3, 7.0, 5.4863016092539953e-5),
            (10.0, 4, 12.0, -6.9254514649213063e-6),
            (3.0, 3, -2.0, -0.0067190709894962056),
        ],
    )
    def test_against_symbolic_derivative(self, gamma, order, t, expected):
        assert kernel_value(KernelSpec(gamma, 4.0, order), t) == pytest.approx(expected, rel=1e-12)

    def test_zero_outside_support(self):
        spec = KernelSpec(10.0, 4.0, 0)
        assert kernel_value(spec, 40.0001) == 0.0
        assert kernel_value(spec, -41.0) == 0.0
        assert kernel_value(spec, 40.0) > 0.0

    @pytest.mark.parametrize("order", [-1, 5, 1.5])
    def test_invalid_order(self, order):
        with pytest.raises(ValueError):
            KernelSpec(10.0, 4.0, order)

    @given(
        gamma=st.floats(0.5, 30.0),
        order=st.integers(0, 4),
        t=st.floats(-200.0, 200.0, allow_nan=False),
    )
    def test_parity(self, gamma, order, t):
        spec = KernelSpec(gamma, 4.0, order)
        a, b = kernel_value(spec, t), kernel_value(spec, -t)
        assert a == pytest.approx((-1) ** order * b, abs=1e-300)

    @given(gamma=st.floats(0.5, 30.0), t=st.floats(-200.0, 200.0, allow_nan=False))
    def test_order0_nonnegative(self, gamma, t):
        assert kernel_value(KernelSpec(gamma, 4.0, 0), t) >= 0.0


class TestSampleKernel:
    def test_order0_shape_and_peak(self):
        k = sample_kernel(KernelSpec(10.0, 4.0, 0))
        assert len(k) == 81
        assert k.half_width == 40
        assert np.array_equal(k.taps, k.taps[::-1])
        assert k.taps[40] == pytest.approx(0.0398942, abs=5e-7)

    def test_order1_antisymmetric(self):
        taps = sample_kernel(KernelSpec(10.0, 4.0, 1)).taps
        assert np.array_equal(taps, -taps[::-1])

    @pytest.mark.parametrize("gamma", [3.0, 5.0, 7.3, 10.0, 25.0])
    def test_tap_sums(self, gamma):
        assert sample_kernel(KernelSpec(gamma, 4.0, 0)).taps.sum() == pytest.approx(MASS4, abs=1e-6)
        for order in range(1, 5):
            assert abs(sample_kernel(KernelSpec(gamma, 4.0, order)).taps.sum()) < 1e-6

    def test_order2_gamma5_sum(self):
        assert abs(sample_kernel(KernelSpec(5.0, 4.0, 2)).taps.sum()) < 1e-6

    @pytest.mark.parametrize("order, rel", [(0, 1e-5), (1, 1e-3), (2, 3e-3)])
    def test_taps_close_to_analytic_samples(self, order, rel):
        spec = KernelSpec(10.0, 4.0, order)
        k = sample_kernel(spec)
        raw = kernel_value(spec, k.offsets)
        # the moment correction only absorbs the truncation boundary terms
        assert np.max(np.abs(k.taps - raw)) < rel * np.max(np.abs(raw))

    def test_gamma_below_one_rejected(self):
        with pytest.raises(ValueError):
            sample_kernel(KernelSpec(0.9, 4.0, 0))

    def test_taps_read_only(self):
        k = sample_kernel(KernelSpec(10.0, 4.0, 1))
        with pytest.raises(ValueError):
            k.taps[0] = 1.0

    @given(gamma=st.floats(1.0, 20.0), order=st.integers(0, 4))
    def test_exact_symmetry(self, gamma, order):
        taps = sample_kernel(KernelSpec(gamma, 4.0, order)).taps
        assert len(taps) == 2 * math.floor(4.0 * gamma) + 1
        assert np.array_equal(taps, (-1) ** order * taps[::-1])


class TestConvolve:
    def test_constant_annihilated(self):
        out = convolve(np.full(300, 5.0), sample_kernel(KernelSpec(10.0, 4.0, 1)))
        inner = out[np.isfinite(out)]
        assert inner.size == 300 - 80
        assert np.max(np.abs(inner)) < 1e-6

    def test_ramp_second_derivative(self):
        y = np.arange(1, 401, dtype=float)
        out = convolve(y, sample_kernel(KernelSpec(10.0, 4.0, 2)))
        assert np.nanmax(np.abs(out)) < 1e-6

    def test_ramp_first_derivative(self):
        y = 0.1 * np.arange(1, 401, dtype=float)
        out = convolve(y, sample_kernel(KernelSpec(10.0, 4.0, 1)))
        assert np.nanmax(np.abs(out - 0.0999937)) < 1e-6

    @pytest.mark.parametrize("order", [1, 2, 3, 4])
    def test_polynomial_annihilation(self, order):
        t = np.arange(600, dtype=float) - 300.0
        k = sample_kernel(KernelSpec(5.0, 4.0, order))
        for deg in range(order):
            out = convolve((t / 300.0) ** deg, k)
            assert np.nanmax(np.abs(out)) < 1e-6

    def test_minimum_length(self):
        out = convolve(np.ones(81), sample_kernel(KernelSpec(10.0, 4.0, 0)))
        assert np.isfinite(out).sum() == 1

    def test_interior_marks_ends(self):
        out = convolve(np.ones(100), sample_kernel(KernelSpec(3.0, 4.0, 0)))
        assert np.all(np.isnan(out[:12])) and np.all(np.isnan(out[-12:]))
        assert np.all(np.isfinite(out[12:-12]))

    def test_zero_mode_keeps_ends(self):
        out = convolve(np.ones(100), sample_kernel(KernelSpec(3.0, 4.0, 0)), mode="zero")
        assert np.all(np.isfinite(out))
        assert out[0] < out[50]

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(1)
        y = rng.standard_normal(200)
        k = sample_kernel(KernelSpec(4.0, 4.0, 1))
        out = convolve(y, k)
        h = k.half_width
        t = 100
        direct = sum(k.taps[j + h] * y[t - j] for j in range(-h, h + 1))
        assert out[t] == pytest.approx(direct, rel=1e-12)

    def test_too_short(self):
        with pytest.raises(ValueError):
            convolve(np.ones(80), sample_kernel(KernelSpec(10.0, 4.0, 0)))

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            convolve(np.ones(100), sample_kernel(KernelSpec(3.0, 4.0, 0)), mode="wrap")

    def test_composition_with_differencing(self):
        rng = np.random.default_rng(3)
        y = rng.standard_normal(20000)
        s0 = convolve(y, sample_kernel(KernelSpec(10.0, 4.0, 0)))
        s2 = convolve(y, sample_kernel(KernelSpec(10.0, 4.0, 2)))
        fd = np.full_like(s0, np.nan)
        fd[1:-1] = s0[2:] - 2 * s0[1:-1] + s0[:-2]
        ok = np.isfinite(fd) & np.isfinite(s2)
        rel = np.sqrt(np.mean((fd[ok] - s2[ok]) ** 2) / np.mean(s2[ok] ** 2))
        assert rel <= 0.05


def test_truncated_mass():
    assert truncated_mass(4.0) == pytest.approx(0.9999366575163338, rel=1e-14)
