"""Detuning sweeps and linewidth extraction.

Runs the two-mode correlation experiment across a detuning grid, fits the
frequency-domain response with either ``|A sinc(xi df)|`` (rectangular
windows) or ``A exp(-(xi df)^2 / 2)`` (gaussian windows), and reduces fits
to FWHM, SNR and side-lobe figures for window comparisons.

The sinc convention is fixed to sinc(x) = sin(x)/x with sinc(0) = 1; every
half-max and lobe constant below follows from that choice.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .acquisition import (
    AcquisitionConfig,
    EmissionBandModel,
    FrequencyPlan,
    WindowSpec,
    run_experiment,
)
from .estimators import DEFAULT_JACKKNIFE_BLOCKS, inferred_pearson, phase_sweep

MODELS = ("abs_sinc", "gaussian")

#: Positive root of sinc(x) = 1/2; the half width of |sinc| at half maximum.
SINC_HALF_MAX_ARG = 1.8954942670339809
#: First zero of sinc is at pi; first side lobe peak and its level.
SINC_FIRST_LOBE_ARG = 4.493409457909064
SINC_FIRST_LOBE_LEVEL = 0.21723362821122166
#: Half width at half maximum of exp(-x^2 / 2).
GAUSSIAN_HALF_MAX_ARG = math.sqrt(2.0 * math.log(2.0))

#: Gaussian side lobes are judged beyond this multiple of the fitted FWHM.
GAUSSIAN_TAIL_START = 1.5

MAX_AMPLITUDE = 1.05
FIT_MAX_EVALUATIONS = 200
FIT_OBJECTIVE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class DetuningSweep:
    """Pearson correlation versus detuning for one (window, tau) case."""

    detunings: np.ndarray
    rho_values: np.ndarray
    rho_errors: np.ndarray
    window: WindowSpec
    alpha_star: float = 0.0
    n_shots: int = 0

    def __post_init__(self) -> None:
        detunings = np.asarray(self.detunings, dtype=float)
        rho = np.asarray(self.rho_values, dtype=float)
        err = np.asarray(self.rho_errors, dtype=float)
        if not (detunings.size == rho.size == err.size):
            raise ValueError("detunings, rho_values and rho_errors must match in length")
        if detunings.size < 5:
            raise ValueError(f"a sweep needs at least 5 points, got {detunings.size}")
        if np.any(np.diff(detunings) <= 0.0):
            raise ValueError("detunings must be strictly increasing")
        object.__setattr__(self, "detunings", detunings)
        object.__setattr__(self, "rho_values", rho)
        object.__setattr__(self, "rho_errors", err)


@dataclass(frozen=True)
class LinewidthFit:
    """Fitted linewidth model for one sweep."""

    model: str
    amplitude: float
    scale_xi: float
    fwhm: float
    snr: float
    residual_rms: float
    converged: bool
    n_iterations: int


@dataclass(frozen=True)
class WindowComparison:
    """Reduced per-case figures for the window comparison report."""

    window: str
    tau: float
    amplitude: float
    fwhm: float
    snr: float
    fwhm_tau: float
    sidelobe: float
    sidelobe_se: float
    n_sidelobe_points: int


def model_prediction(model: str, detunings, amplitude: float, scale_xi: float) -> np.ndarray:
    """Evaluate the fitted response model on a detuning grid."""
    detunings = np.asarray(detunings, dtype=float)
    x = scale_xi * detunings
    if model == "abs_sinc":
        return amplitude * np.abs(np.sinc(x / np.pi))
    if model == "gaussian":
        return amplitude * np.exp(-0.5 * x * x)
    raise ValueError(f"model must be one of {MODELS}, got {model!r}")


def _model_jacobian(model: str, detunings: np.ndarray, amplitude: float, scale_xi: float) -> np.ndarray:
    """Analytic d(model)/d(amplitude, scale_xi), one row per detuning."""
    x = scale_xi * detunings
    if model == "abs_sinc":
        sinc = np.sinc(x / np.pi)
        d_amplitude = np.abs(sinc)
        with np.errstate(divide="ignore", invalid="ignore"):
            dsinc = np.where(x != 0.0, (np.cos(x) - sinc) / np.where(x != 0.0, x, 1.0), 0.0)
        d_scale = amplitude * np.sign(sinc) * dsinc * detunings
    else:
        envelope = np.exp(-0.5 * x * x)
        d_amplitude = envelope
        d_scale = -amplitude * envelope * x * detunings
    return np.column_stack([d_amplitude, d_scale])


def fwhm_from_scale(model: str, scale_xi: float) -> float:
    """Full width at half maximum implied by the fitted scale parameter."""
    if model == "abs_sinc":
        return 2.0 * SINC_HALF_MAX_ARG / scale_xi
    if model == "gaussian":
        return 2.0 * GAUSSIAN_HALF_MAX_ARG / scale_xi
    raise ValueError(f"model must be one of {MODELS}, got {model!r}")


def default_model_for(window: WindowSpec) -> str:
    return "abs_sinc" if window.shape == "rectangular" else "gaussian"


def sweep_detuning(
    plan: FrequencyPlan,
    band: EmissionBandModel,
    config: AcquisitionConfig,
    detunings: Sequence[float],
    alpha_grid: Optional[Sequence[float]] = None,
    n_blocks: int = DEFAULT_JACKKNIFE_BLOCKS,
    jobs: int = 1,
) -> DetuningSweep:
    """Run the correlation experiment across a detuning grid.

    The relative LO phase is calibrated once with a phase sweep at zero
    detuning, then held fixed while the signal demodulation frequency walks
    the grid (substream 0 is the calibration run; point k uses substream
    k + 1, so points are independent and order-insensitive).
    """
    detunings = np.asarray(detunings, dtype=float)
    if alpha_grid is None:
        alpha_grid = np.linspace(0.0, 2.0 * math.pi, 73)

    calibration_plan = FrequencyPlan.for_detuning(plan.f_pump, plan.f_idler_demod, 0.0)
    calibration = run_experiment(calibration_plan, band, config, stream=0)
    swept = phase_sweep(
        calibration.on,
        calibration.off,
        config.chain_gain_signal,
        config.chain_gain_idler,
        alpha_grid,
        n_blocks=n_blocks,
    )
    alpha_star = swept.alpha_star

    def one_point(index_detuning: tuple[int, float]) -> tuple[float, float]:
        index, detuning = index_detuning
        point_plan = FrequencyPlan.for_detuning(plan.f_pump, plan.f_idler_demod, detuning)
        data = run_experiment(point_plan, band, config, stream=index + 1)
        return inferred_pearson(
            data.on,
            data.off,
            config.chain_gain_signal,
            config.chain_gain_idler,
            idler_rotation=alpha_star,
            n_blocks=n_blocks,
        )

    work = list(enumerate(detunings))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one_point, work))
    else:
        results = [one_point(item) for item in work]

    rho_values = np.array([r[0] for r in results])
    rho_errors = np.array([r[1] for r in results])
    return DetuningSweep(
        detunings=detunings,
        rho_values=rho_values,
        rho_errors=rho_errors,
        window=config.window,
        alpha_star=alpha_star,
        n_shots=config.n_shots,
    )


def _initial_guess(model: str, detunings: np.ndarray, magnitudes: np.ndarray) -> tuple[float, float]:
    """Amplitude from the peak, scale from the half-max crossing of the raw curve."""
    amplitude = float(magnitudes.max())
    order = np.argsort(np.abs(detunings))
    abs_detuning = np.abs(detunings)[order]
    values = magnitudes[order]
    half = amplitude / 2.0
    half_crossing = abs_detuning[-1] if abs_detuning[-1] > 0 else 1.0
    below = np.nonzero(values <= half)[0]
    for index in below:
        if index == 0:
            continue
        lo, hi = values[index - 1], values[index]
        if hi == lo:
            half_crossing = abs_detuning[index]
        else:
            fraction = (lo - half) / (lo - hi)
            half_crossing = abs_detuning[index - 1] + fraction * (
                abs_detuning[index] - abs_detuning[index - 1]
            )
        break
    constant = SINC_HALF_MAX_ARG if model == "abs_sinc" else GAUSSIAN_HALF_MAX_ARG
    return amplitude, constant / half_crossing


def fit_model(
    sweep: DetuningSweep,
    model: str,
    initial_guess: Optional[tuple[float, float]] = None,
) -> LinewidthFit:
    """Weighted nonlinear least-squares fit of |rho| versus detuning.

    Minimizes sum(((|rho_k| - m(df_k)) / se_k)^2) with inverse-variance
    weights when per-point errors are available (unweighted otherwise).
    Follows the magnitude of the correlation since the analysis always
    targets the maximum positive correlation.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    detunings = sweep.detunings
    magnitudes = np.abs(sweep.rho_values)
    if float(np.ptp(magnitudes)) < 1e-12:
        raise ValueError("flat sweep: cannot fit a linewidth model to constant data")

    errors = np.asarray(sweep.rho_errors, dtype=float)
    if errors.size == magnitudes.size and np.all(np.isfinite(errors)) and np.all(errors > 0.0):
        weights = 1.0 / errors
    else:
        weights = np.ones_like(magnitudes)

    if initial_guess is None:
        amplitude0, scale0 = _initial_guess(model, detunings, magnitudes)
    else:
        amplitude0, scale0 = initial_guess
    amplitude0 = min(max(amplitude0, 1e-9), MAX_AMPLITUDE)
    scale0 = max(scale0, 1e-12)

    def residuals(params: np.ndarray) -> np.ndarray:
        amplitude, scale = params
        return (magnitudes - model_prediction(model, detunings, amplitude, scale)) * weights

    def jacobian(params: np.ndarray) -> np.ndarray:
        amplitude, scale = params
        return -_model_jacobian(model, detunings, amplitude, scale) * weights[:, np.newaxis]

    result = least_squares(
        residuals,
        x0=[amplitude0, scale0],
        jac=jacobian,
        bounds=([1e-12, 1e-15], [MAX_AMPLITUDE, np.inf]),
        ftol=FIT_OBJECTIVE_TOLERANCE,
        xtol=1e-14,
        gtol=1e-14,
        max_nfev=FIT_MAX_EVALUATIONS,
    )

    amplitude, scale = (float(v) for v in result.x)
    converged = bool(result.success) and result.status != 0
    fit_residuals = magnitudes - model_prediction(model, detunings, amplitude, scale)
    residual_rms = float(np.sqrt(np.mean(fit_residuals**2)))
    snr = amplitude / residual_rms if residual_rms > 0.0 else math.inf
    return LinewidthFit(
        model=model,
        amplitude=amplitude,
        scale_xi=scale,
        fwhm=fwhm_from_scale(model, scale),
        snr=snr,
        residual_rms=residual_rms,
        converged=converged,
        n_iterations=int(result.nfev),
    )


def _sidelobe(sweep: DetuningSweep, fit: LinewidthFit) -> tuple[float, float, int]:
    """Max |rho| outside the main peak, with the SE at that point.

    Rectangular fits look beyond the first model minimum (the first sinc
    zero); gaussian fits look beyond GAUSSIAN_TAIL_START times the FWHM.
    Returns NaNs when the sweep never reaches the tail region.
    """
    if fit.model == "abs_sinc":
        start = math.pi / fit.scale_xi
    else:
        start = GAUSSIAN_TAIL_START * fit.fwhm
    mask = np.abs(sweep.detunings) > start
    count = int(np.count_nonzero(mask))
    if count == 0:
        return math.nan, math.nan, 0
    magnitudes = np.abs(sweep.rho_values)[mask]
    peak = int(np.argmax(magnitudes))
    return (
        float(magnitudes[peak]),
        float(np.asarray(sweep.rho_errors)[mask][peak]),
        count,
    )


def compare_windows(
    fits: Sequence[LinewidthFit], sweeps: Sequence[DetuningSweep]
) -> list[WindowComparison]:
    """Per-case FWHM / SNR / side-lobe / FWHM*tau summary across windows."""
    if len(fits) != len(sweeps):
        raise ValueError("need one fit per sweep")
    rows = []
    for fit, sweep in zip(fits, sweeps):
        sidelobe, sidelobe_se, count = _sidelobe(sweep, fit)
        rows.append(
            WindowComparison(
                window=sweep.window.shape,
                tau=sweep.window.tau,
                amplitude=fit.amplitude,
                fwhm=fit.fwhm,
                snr=fit.snr,
                fwhm_tau=fit.fwhm * sweep.window.tau,
                sidelobe=sidelobe,
                sidelobe_se=sidelobe_se,
                n_sidelobe_points=count,
            )
        )
    return rows
