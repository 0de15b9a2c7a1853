import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowsteer import (
    ParameterError,
    SCHEDULE_PRESETS,
    a_t_coeff,
    adaptive_lambda_gamma,
    ddpm_schedule,
    fraction_to_step,
    posterior_coeffs,
    preset_schedule,
    rect_schedule,
    two_step_schedule,
)


class TestRectSchedule:
    def test_general_recommendation_at_30(self):
        sched = rect_schedule(30, 15, 27, 1.0)
        expected = np.zeros(30)
        expected[14:27] = 1.0
        np.testing.assert_array_equal(sched.values, expected)

    def test_all_ones(self):
        sched = rect_schedule(30, 1, 30, 1.0)
        np.testing.assert_array_equal(sched.values, np.ones(30))

    def test_single_entry(self):
        sched = rect_schedule(10, 3, 3, 0.5)
        assert sched.values[2] == 0.5
        assert np.count_nonzero(sched.values) == 1

    def test_window_count_invariant(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(1, 50))
            a = int(rng.integers(1, n + 1))
            b = int(rng.integers(a, n + 1))
            h = float(rng.uniform(0.01, 1.0))
            v = rect_schedule(n, a, b, h).values
            assert np.count_nonzero(v) == b - a + 1
            assert np.all(v[v > 0] == h)

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ParameterError):
            rect_schedule(30, 20, 10, 1.0)
        with pytest.raises(ParameterError):
            rect_schedule(30, 0, 10, 1.0)


class TestTwoStepSchedule:
    def test_colorization_preset_values(self):
        sched = two_step_schedule(30, 12, 15, 28, 1.0, 0.3, 1)
        v = sched.values
        assert np.all(v[11:14] == 1.0)
        assert np.all(v[14:28] == 0.3)
        assert np.all(v[:11] == 0.0) and np.all(v[28:] == 0.0)

    def test_deblur_preset_values(self):
        v = two_step_schedule(30, 21, 24, 27, 1.0, 0.3, 1).values
        assert np.all(v[20:23] == 1.0)
        assert np.all(v[23:27] == 0.3)
        assert np.count_nonzero(v) == 7  # steps 21..27; the pad only touches 30

    def test_collapses_to_rect(self):
        for i_step in (5, 9, 14):
            two = two_step_schedule(20, 5, i_step, 14, 0.7, 0.7, 0)
            rect = rect_schedule(20, 5, 14, 0.7)
            np.testing.assert_array_equal(two.values, rect.values)

    def test_final_pad_zeroes_tail(self):
        v = two_step_schedule(10, 2, 5, 10, 1.0, 0.5, 3).values
        assert np.all(v[-3:] == 0.0)

    def test_fallback_entry_when_padding_clears_everything(self):
        # the window sits entirely inside the padded tail
        v = two_step_schedule(10, 9, 10, 10, 1.0, 0.5, 4).values
        assert np.count_nonzero(v) == 1
        assert v[10 - 4 - 1] == 1.0

    def test_out_of_range_indices_clamp(self):
        v = two_step_schedule(10, -5, 3, 99, 0.8, 0.2, 0).values
        assert np.all(v[:2] == 0.8)
        assert np.all(v[2:] == 0.2)

    @given(
        n=st.integers(1, 40),
        i_start=st.integers(-10, 50),
        i_step=st.integers(-10, 50),
        i_end=st.integers(-10, 50),
        h1=st.floats(0.0, 1.0),
        h2=st.floats(0.0, 1.0),
        pad=st.integers(0, 10),
    )
    @settings(max_examples=200, deadline=None)
    def test_output_always_valid(self, n, i_start, i_step, i_end, h1, h2, pad):
        v = two_step_schedule(n, i_start, i_step, i_end, h1, h2, pad).values
        assert v.shape == (n,)
        assert np.all(v >= 0.0) and np.all(v <= 1.0)
        if 0 < pad < n:
            fallback_fired = np.count_nonzero(v) == 1 and v[n - pad - 1] == 1.0
            tail_ok = np.all(v[-pad:] == 0.0)
            assert tail_ok or fallback_fired


class TestFractionToStep:
    def test_ties_and_clamping(self):
        assert fraction_to_step(0.75, 30) == 22  # 22.5: banker's rounding
        assert fraction_to_step(0.95, 30) == 28  # 28.5, matching the presets
        assert fraction_to_step(0.5, 30) == 15
        assert fraction_to_step(0.0, 30) == 1  # clamped into the grid
        assert fraction_to_step(1.2, 30) == 30

    def test_table_presets_at_30(self):
        assert [fraction_to_step(f, 30) for f in (0.4, 0.50, 0.95)] == [12, 15, 28]
        assert [fraction_to_step(f, 30) for f in (0.7, 0.80, 0.90)] == [21, 24, 27]
        assert [fraction_to_step(f, 30) for f in (0.5, 0.70, 0.85)] == [15, 21, 26]


class TestPresets:
    def test_all_presets_expand_at_30(self):
        for name in SCHEDULE_PRESETS:
            sched = preset_schedule(name, 30)
            assert sched.n_steps == 30
            assert sched.values.max() == 1.0

    def test_general_matches_rect(self):
        np.testing.assert_array_equal(
            preset_schedule("general", 30).values, rect_schedule(30, 15, 27, 1.0).values
        )

    def test_unknown_preset(self):
        with pytest.raises(ParameterError):
            preset_schedule("nope", 30)


class TestDdpmSchedule:
    def test_t100_shapes(self):
        s = ddpm_schedule(100)
        assert s.n_steps == 100
        assert s.sigmas[0] == 0.0  # sigma_1 vanishes because alpha_bar_0 = 1
        assert np.all(np.diff(s.alpha_bars) < 0)

    def test_t2_hand_computed(self):
        s = ddpm_schedule(2, 0.1, 0.3)
        np.testing.assert_allclose(s.betas, [0.1, 0.3])
        np.testing.assert_allclose(s.alpha_bars, [0.9, 0.9 * 0.7])
        expected_sigma2 = math.sqrt(0.3 * (1 - 0.9) / (1 - 0.63))
        assert s.sigma(2) == pytest.approx(expected_sigma2)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ParameterError):
            ddpm_schedule(1)
        with pytest.raises(ParameterError):
            ddpm_schedule(10, 0.5, 0.1)
        with pytest.raises(ParameterError):
            ddpm_schedule(10, 0.0, 0.1)


class TestPosteriorCoeffs:
    def test_a1_is_one(self):
        s = ddpm_schedule(10)
        assert a_t_coeff(s, 1) == pytest.approx(1.0)

    def test_t2_closed_form(self):
        s = ddpm_schedule(2, 0.1, 0.3)
        expected = math.sqrt(0.9) * 0.3 / (1 - 0.63)
        assert a_t_coeff(s, 2) == pytest.approx(expected)

    def test_posterior_mean_identity(self):
        # conjugate-Gaussian oracle: combine N(x_t; sqrt(a_t) x_{t-1}, b_t) with
        # N(x_{t-1}; sqrt(ab_prev) x0, 1 - ab_prev) and compare coefficients
        s = ddpm_schedule(50, 1e-3, 0.05)
        rng = np.random.default_rng(0)
        for t in (1, 7, 25, 50):
            alpha = 1.0 - s.betas[t - 1]
            ab_prev = s.alpha_bar(t - 1)
            var = 1.0 / (alpha / s.betas[t - 1] + 1.0 / (1.0 - ab_prev)) if ab_prev < 1 else 0.0
            x0, x_t = rng.normal(), rng.normal()
            if ab_prev < 1:
                oracle = var * (
                    np.sqrt(alpha) * x_t / s.betas[t - 1]
                    + np.sqrt(ab_prev) * x0 / (1.0 - ab_prev)
                )
                assert s.sigma(t) == pytest.approx(math.sqrt(var))
            else:
                oracle = x0  # t = 1: posterior collapses onto the clean sample
            a_t, b_t = posterior_coeffs(s, t)
            assert a_t * x0 + b_t * x_t == pytest.approx(oracle, rel=1e-12, abs=1e-12)


class TestAdaptiveLambdaGamma:
    def test_noise_free_measurement(self):
        step = adaptive_lambda_gamma(0.7, 1.3, 0.0)
        assert step.lambda_t == 1.0
        assert step.gamma_t == pytest.approx(0.7)

    def test_flow_collapse(self):
        step = adaptive_lambda_gamma(0.0, 1.0, 0.5)
        assert step.lambda_t == 0.0 and step.gamma_t == 0.0
        corner = adaptive_lambda_gamma(0.0, 0.0, 0.0)
        assert corner.lambda_t == 0.0 and corner.gamma_t == 0.0

    def test_boundary_case(self):
        step = adaptive_lambda_gamma(0.5, 1.0, 1.0)
        assert step.lambda_t == pytest.approx(0.5)
        assert step.gamma_t == 0.0

    @given(
        sigma_t=st.floats(0.0, 10.0),
        a_t=st.floats(0.0, 10.0),
        sigma_y=st.floats(0.0, 10.0),
    )
    @settings(max_examples=300, deadline=None)
    def test_variance_preservation(self, sigma_t, a_t, sigma_y):
        step = adaptive_lambda_gamma(sigma_t, a_t, sigma_y)
        if sigma_t >= a_t * sigma_y:
            assert step.gamma_t**2 + (a_t * step.lambda_t * sigma_y) ** 2 == pytest.approx(
                sigma_t**2, abs=1e-12, rel=1e-9
            )
        else:
            assert step.gamma_t == 0.0
            assert step.lambda_t == pytest.approx(sigma_t / (a_t * sigma_y))

    def test_monotonicity(self):
        grid = np.linspace(0.0, 2.0, 21)
        lams_in_sigma_t = [adaptive_lambda_gamma(s, 1.0, 0.7).lambda_t for s in grid]
        assert np.all(np.diff(lams_in_sigma_t) >= 0)
        lams_in_sigma_y = [adaptive_lambda_gamma(0.7, 1.0, s).lambda_t for s in grid]
        assert np.all(np.diff(lams_in_sigma_y) <= 0)
