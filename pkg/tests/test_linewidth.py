"""Tests for detuning sweeps, model fitting and window comparison."""

import math

import numpy as np
import pytest

from twpacorr import (
    DetuningSweep,
    FrequencyPlan,
    WindowSpec,
    compare_windows,
    fit_model,
    fwhm_from_scale,
    model_prediction,
    sweep_detuning,
)
from twpacorr.linewidth import (
    GAUSSIAN_HALF_MAX_ARG,
    SINC_FIRST_LOBE_ARG,
    SINC_FIRST_LOBE_LEVEL,
    SINC_HALF_MAX_ARG,
    _model_jacobian,
    default_model_for,
)

from conftest import F_IDLER, F_PUMP, make_acquisition, make_band

TAU = 6e-6
XI_RECT = math.pi * TAU


def synthetic_sweep(model, detunings, amplitude, scale, window=None, errors=None):
    values = model_prediction(model, detunings, amplitude, scale)
    if errors is None:
        errors = np.zeros_like(values)
    if window is None:
        window = WindowSpec("rectangular" if model == "abs_sinc" else "gaussian", TAU)
    return DetuningSweep(np.asarray(detunings, float), values, errors, window)


class TestDetuningSweepType:
    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError):
            DetuningSweep(
                np.linspace(-1, 1, 5), np.zeros(4), np.zeros(5), WindowSpec("rectangular", TAU)
            )

    def test_rejects_too_few_points(self):
        with pytest.raises(ValueError):
            DetuningSweep(
                np.linspace(-1, 1, 4), np.zeros(4), np.zeros(4), WindowSpec("rectangular", TAU)
            )

    def test_rejects_unsorted_detunings(self):
        with pytest.raises(ValueError):
            DetuningSweep(
                np.array([0.0, -1.0, 1.0, 2.0, 3.0]),
                np.zeros(5),
                np.zeros(5),
                WindowSpec("rectangular", TAU),
            )


class TestFitModel:
    def test_recovers_exact_sinc_kernel(self):
        detunings = np.linspace(-1e6, 1e6, 51)
        sweep = synthetic_sweep("abs_sinc", detunings, 0.93, XI_RECT)
        fit = fit_model(sweep, "abs_sinc")
        assert fit.converged
        assert fit.amplitude == pytest.approx(0.93, rel=1e-6)
        assert fit.scale_xi == pytest.approx(XI_RECT, rel=1e-6)
        assert fit.fwhm * TAU == pytest.approx(2.0 * SINC_HALF_MAX_ARG / math.pi, rel=1e-6)

    def test_recovers_exact_gaussian_kernel(self):
        detunings = np.linspace(-1e6, 1e6, 41)
        sweep = synthetic_sweep("gaussian", detunings, 0.88, 5.2e-6)
        fit = fit_model(sweep, "gaussian")
        assert fit.amplitude == pytest.approx(0.88, rel=1e-6)
        assert fit.scale_xi == pytest.approx(5.2e-6, rel=1e-6)

    @pytest.mark.parametrize("model,scale", [("abs_sinc", XI_RECT), ("gaussian", 5.2e-6)])
    def test_half_max_identity(self, model, scale):
        fwhm = fwhm_from_scale(model, scale)
        value = model_prediction(model, [fwhm / 2.0], 1.0, scale)[0]
        assert value == pytest.approx(0.5, abs=1e-10)

    def test_scale_covariance(self):
        detunings = np.linspace(-1e6, 1e6, 51)
        sweep = synthetic_sweep("abs_sinc", detunings, 0.9, XI_RECT)
        fit = fit_model(sweep, "abs_sinc")
        factor = 4.0
        scaled = synthetic_sweep("abs_sinc", detunings * factor, 0.9, XI_RECT / factor)
        fit_scaled = fit_model(scaled, "abs_sinc")
        assert fit_scaled.scale_xi == pytest.approx(fit.scale_xi / factor, rel=1e-9)
        assert fit_scaled.fwhm == pytest.approx(fit.fwhm * factor, rel=1e-9)

    def test_refit_from_converged_parameters_is_idempotent(self):
        detunings = np.linspace(-1e6, 1e6, 51)
        rng = np.random.default_rng(3)
        noisy = model_prediction("abs_sinc", detunings, 0.9, XI_RECT)
        noisy = noisy + 0.01 * rng.standard_normal(noisy.size)
        sweep = DetuningSweep(
            detunings, noisy, np.full(noisy.size, 0.01), WindowSpec("rectangular", TAU)
        )
        first = fit_model(sweep, "abs_sinc")
        second = fit_model(sweep, "abs_sinc", initial_guess=(first.amplitude, first.scale_xi))

        def objective(fit):
            residuals = (
                np.abs(sweep.rho_values)
                - model_prediction("abs_sinc", detunings, fit.amplitude, fit.scale_xi)
            ) / 0.01
            return float(np.sum(residuals**2))

        base = objective(first)
        assert abs(objective(second) - base) < 1e-12 * max(1.0, base)

    def test_jacobian_matches_central_differences(self):
        detunings = np.linspace(-1e6, 1e6, 31)
        for model, scale in (("abs_sinc", 1.7e-5), ("gaussian", 5.0e-6)):
            amplitude = 0.9
            jacobian = _model_jacobian(model, detunings, amplitude, scale)
            for column, (h_a, h_s) in enumerate(((amplitude * 1e-6, 0.0), (0.0, scale * 1e-6))):
                upper = model_prediction(model, detunings, amplitude + h_a, scale + h_s)
                lower = model_prediction(model, detunings, amplitude - h_a, scale - h_s)
                finite = (upper - lower) / (2.0 * (h_a or h_s))
                norm = np.max(np.abs(jacobian[:, column]))
                assert np.max(np.abs(finite - jacobian[:, column])) <= 1e-5 * norm

    def test_flat_data_raises(self):
        detunings = np.linspace(-1e6, 1e6, 11)
        sweep = DetuningSweep(
            detunings, np.full(11, 0.4), np.zeros(11), WindowSpec("rectangular", TAU)
        )
        with pytest.raises(ValueError, match="flat"):
            fit_model(sweep, "abs_sinc")

    def test_unknown_model_rejected(self):
        detunings = np.linspace(-1e6, 1e6, 11)
        sweep = synthetic_sweep("abs_sinc", detunings, 0.9, XI_RECT)
        with pytest.raises(ValueError):
            fit_model(sweep, "lorentzian")

    def test_weighted_fit_uses_errors(self):
        # Corrupt one point and give it a huge error bar: the weighted fit
        # should ignore it while an unweighted fit is dragged away.
        detunings = np.linspace(-1e6, 1e6, 51)
        values = model_prediction("abs_sinc", detunings, 0.9, XI_RECT)
        values[25] = 0.2  # center point clobbered
        errors = np.full(values.size, 1e-4)
        errors[25] = 10.0
        weighted = fit_model(
            DetuningSweep(detunings, values, errors, WindowSpec("rectangular", TAU)), "abs_sinc"
        )
        unweighted = fit_model(
            DetuningSweep(detunings, values, np.zeros_like(values), WindowSpec("rectangular", TAU)),
            "abs_sinc",
        )
        assert weighted.amplitude == pytest.approx(0.9, rel=1e-3)
        assert abs(unweighted.amplitude - 0.9) > 10.0 * abs(weighted.amplitude - 0.9)


class TestCompareWindows:
    def test_sinc_sidelobe_level_on_synthetic_data(self):
        detunings = np.linspace(-1.2e6, 1.2e6, 201)
        sweep = synthetic_sweep("abs_sinc", detunings, 0.9, XI_RECT)
        fit = fit_model(sweep, "abs_sinc")
        row = compare_windows([fit], [sweep])[0]
        assert row.sidelobe == pytest.approx(0.9 * SINC_FIRST_LOBE_LEVEL, rel=0.01)
        assert row.fwhm_tau == pytest.approx(1.2067, rel=1e-3)

    def test_gaussian_tail_is_empty_when_span_is_short(self):
        detunings = np.linspace(-0.3e6, 0.3e6, 21)
        sweep = synthetic_sweep("gaussian", detunings, 0.9, 5.2e-6)
        fit = fit_model(sweep, "gaussian")
        row = compare_windows([fit], [sweep])[0]
        assert row.n_sidelobe_points == 0
        assert math.isnan(row.sidelobe)

    def test_requires_matching_lengths(self):
        detunings = np.linspace(-1e6, 1e6, 21)
        sweep = synthetic_sweep("abs_sinc", detunings, 0.9, XI_RECT)
        fit = fit_model(sweep, "abs_sinc")
        with pytest.raises(ValueError):
            compare_windows([fit], [sweep, sweep])

    def test_default_model_mapping(self):
        assert default_model_for(WindowSpec("rectangular", TAU)) == "abs_sinc"
        assert default_model_for(WindowSpec("gaussian", TAU)) == "gaussian"


@pytest.fixture(scope="module")
def small_sweep(plan_matched):
    band = make_band(halfwidth=2.2e6, spacing=80e3)
    acq = make_acquisition(n_shots=2500, seed=606)
    detunings = np.linspace(-0.3e6, 0.3e6, 13)
    return sweep_detuning(plan_matched, band, acq, detunings)


class TestSweepDetuning:
    def test_center_matches_phase_optimized_maximum(self, small_sweep, plan_matched):
        from twpacorr import phase_sweep, run_experiment

        band = make_band(halfwidth=2.2e6, spacing=80e3)
        acq = make_acquisition(n_shots=2500, seed=606)
        calibration = run_experiment(plan_matched, band, acq, stream=0)
        swept = phase_sweep(
            calibration.on, calibration.off, 1.0, 1.0, np.linspace(0, 2 * math.pi, 73)
        )
        center = small_sweep.detunings.size // 2
        tol = 3.0 * math.hypot(small_sweep.rho_errors[center], float(np.max(swept.rho_errors)))
        assert small_sweep.rho_values[center] == pytest.approx(swept.rho_max, abs=tol)

    def test_curve_is_even_within_errors(self, small_sweep):
        rho = small_sweep.rho_values
        err = small_sweep.rho_errors
        n = rho.size
        for k in range(n // 2):
            mirrored = n - 1 - k
            tol = 3.0 * math.hypot(err[k], err[mirrored])
            assert abs(rho[k] - rho[mirrored]) <= tol

    def test_first_zero_near_reciprocal_window_time(self, plan_matched):
        # For a flat 6 us window the fitted kernel's first zero should land
        # near 1/tau ~ 166.7 kHz.
        band = make_band(halfwidth=2.6e6, spacing=80e3)
        acq = make_acquisition(n_shots=4000, seed=909)
        detunings = np.linspace(-0.4e6, 0.4e6, 17)
        sweep = sweep_detuning(plan_matched, band, acq, detunings)
        fit = fit_model(sweep, "abs_sinc")
        first_zero = math.pi / fit.scale_xi
        assert first_zero == pytest.approx(1.0 / TAU, rel=0.05)

    def test_sweep_carries_calibrated_phase_and_shot_count(self, small_sweep):
        assert small_sweep.n_shots == 2500
        distance = math.degrees(small_sweep.alpha_star) % 360.0
        assert min(distance, 360.0 - distance) < 10.0

    def test_detuning_outside_band_is_rejected(self, plan_matched):
        band = make_band(halfwidth=2.2e6, spacing=80e3)
        acq = make_acquisition(n_shots=100, seed=2)
        detunings = np.linspace(-1.5e6, 1.5e6, 7)
        with pytest.raises(ValueError, match="band"):
            sweep_detuning(plan_matched, band, acq, detunings)

    def test_jobs_parameter_reproduces_serial_results(self, plan_matched):
        band = make_band(halfwidth=2.2e6, spacing=80e3)
        acq = make_acquisition(n_shots=500, seed=31)
        detunings = np.linspace(-0.2e6, 0.2e6, 5)
        serial = sweep_detuning(plan_matched, band, acq, detunings, jobs=1)
        threaded = sweep_detuning(plan_matched, band, acq, detunings, jobs=3)
        np.testing.assert_array_equal(serial.rho_values, threaded.rho_values)


class TestSnrGrowth:
    def test_snr_nondecreasing_with_shots(self, plan_matched):
        # More shots shrink the residual RMS, so SNR = A / RMS must grow
        # (up to a one-sigma-scale slack).
        band = make_band(halfwidth=2.2e6, spacing=80e3)
        detunings = np.linspace(-0.3e6, 0.3e6, 9)
        snrs = []
        for n_shots in (10**3, 10**4, 10**5):
            acq = make_acquisition(n_shots=n_shots, seed=112)
            sweep = sweep_detuning(plan_matched, band, acq, detunings)
            snrs.append(fit_model(sweep, "abs_sinc").snr)
        assert snrs[1] >= snrs[0] * 0.9
        assert snrs[2] >= snrs[1] * 0.9
