"""Configuration-driven command line for simulation, sweeps and reports.

Every output file embeds the config hash, master seed and tool version in
``# key=value`` header lines; numeric cells are written with 9 significant
digits. Re-running a command with an identical config and seed reproduces
byte-identical files. Angles are degrees at this boundary, radians inside.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .acquisition import FrequencyPlan, run_experiment, synthesize_baseband_pair, shot_rng
from .config import ConfigError, ExperimentConfig, load_config
from .estimators import estimate_covariance, infer_tmsvs, phase_sweep
from .gaussian import (
    QUADRATURE_ORDER,
    pearson_xx,
    physicality_min_eigenvalue,
    rotate_quadrature_array,
    squeezing_db,
)
from .linewidth import compare_windows, default_model_for, fit_model, sweep_detuning

EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3

PHASE_SWEEP_COLUMNS = ("alpha_deg", "rho", "rho_se")
LINEWIDTH_COLUMNS = ("delta_f_hz", "rho_abs", "rho_se")
FITS_COLUMNS = (
    "window",
    "tau_us",
    "A",
    "xi_s",
    "fwhm_hz",
    "snr",
    "sidelobe",
    "residual_rms",
    "converged",
    "n_iterations",
)
COMPARISON_COLUMNS = (
    "window",
    "tau_us",
    "fwhm_hz",
    "snr",
    "fwhm_tau",
    "sidelobe",
    "sidelobe_se",
    "n_sidelobe_points",
)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    return str(value)


def _metadata(config: ExperimentConfig) -> dict:
    return {
        "config_hash": config.hash(),
        "seed": config.seed,
        "version": f"twpacorr {__version__}",
    }


def _write_csv(path: Path, meta: dict, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {key}={_format_value(value)}" for key, value in meta.items()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_format_value(value) for value in row))
    path.write_text("\n".join(lines) + "\n")
    click.echo(f"wrote {path}")


def _write_json(path: Path, meta: dict, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(payload)
    payload.update(meta)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {path}")


def _load(config_path: str, out: str | None, seed: int | None) -> ExperimentConfig:
    config = load_config(config_path)
    if seed is not None:
        config = config.with_seed(seed)
    if out is not None:
        config = replace(config, output_dir=Path(out))
    return config


def _config_options(fn):
    fn = click.option("--config", "config_path", required=True, type=click.Path(), help="Experiment config file (YAML).")(fn)
    fn = click.option("--out", default=None, type=click.Path(), help="Output directory (overrides config).")(fn)
    fn = click.option("--seed", default=None, type=int, help="Master seed (overrides config).")(fn)
    fn = click.option("--jobs", default=1, type=int, show_default=True, help="Worker threads for sweep points.")(fn)
    fn = click.option("--strict", is_flag=True, help="Exit with code 3 on any numerical failure.")(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="twpacorr")
def main() -> None:
    """Simulate two-mode correlation measurements and their linewidth analysis."""


@main.command()
@_config_options
@click.option("--dump-traces", default=0, type=int, help="Also dump the first N pump-on baseband traces.")
def simulate(config_path, out, seed, jobs, strict, dump_traces) -> None:
    """Run one pump-on/off experiment and report the inferred covariance."""
    try:
        config = _load(config_path, out, seed)
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)

    acq = config.acquisition
    data = run_experiment(config.plan(), config.band, acq)
    on = estimate_covariance(data.on)
    off = estimate_covariance(data.off)
    inferred = infer_tmsvs(on, off, acq.chain_gain_signal, acq.chain_gain_idler)
    meta = _metadata(config)

    rows = [
        (name, *inferred[index]) for index, name in enumerate(QUADRATURE_ORDER)
    ]
    _write_csv(
        config.output_dir / "covariance_tmsvs.csv",
        meta,
        ("row", *QUADRATURE_ORDER),
        rows,
    )
    summary = {
        "n_shots": acq.n_shots,
        "detuning_hz": config.plan().detuning,
        "rho_xx": pearson_xx(inferred),
        "squeezing_db": squeezing_db(inferred),
        "physicality_min_eigenvalue": physicality_min_eigenvalue(inferred),
        "variance_x_signal": float(inferred[0, 0]),
        "variance_x_idler": float(inferred[2, 2]),
    }
    _write_json(config.output_dir / "summary.json", meta, summary)

    if dump_traces > 0:
        rows = []
        for shot in range(min(dump_traces, acq.n_shots)):
            rng = shot_rng(acq.seed, shot, "pump_on")
            trace_s, trace_i = synthesize_baseband_pair(
                config.band, config.plan(), acq.window, "pump_on", rng, acq.sample_rate
            )
            for sample in range(trace_s.size):
                rows.append(
                    (
                        shot,
                        sample,
                        trace_s[sample].real,
                        trace_s[sample].imag,
                        trace_i[sample].real,
                        trace_i[sample].imag,
                    )
                )
        _write_csv(
            config.output_dir / "traces_pump_on.csv",
            meta,
            ("shot", "sample", "signal_re", "signal_im", "idler_re", "idler_im"),
            rows,
        )


@main.command("phase-sweep")
@_config_options
@click.option("--points", default=None, type=int, help="Phase grid points over [0, 360] degrees.")
@click.option(
    "--dump-shots",
    default=None,
    help="Comma-separated angles (deg) whose rotated (X_s, X_i) shots are dumped for histograms.",
)
def cmd_phase_sweep(config_path, out, seed, jobs, strict, points, dump_shots) -> None:
    """Sweep the relative LO phase and locate the correlation maximum."""
    try:
        config = _load(config_path, out, seed)
        dump_angles = _parse_angle_list(dump_shots)
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)

    acq = config.acquisition
    n_points = points if points is not None else config.phase_points
    alphas_deg = np.linspace(0.0, 360.0, n_points)
    data = run_experiment(config.plan(), config.band, acq)
    result = phase_sweep(
        data.on,
        data.off,
        acq.chain_gain_signal,
        acq.chain_gain_idler,
        np.radians(alphas_deg),
    )
    meta = _metadata(config)
    rows = list(zip(alphas_deg, result.rho_values, result.rho_errors))
    _write_csv(config.output_dir / "phase_sweep.csv", meta, PHASE_SWEEP_COLUMNS, rows)
    _write_json(
        config.output_dir / "phase_sweep_summary.json",
        meta,
        {
            "alpha_star_deg": math.degrees(result.alpha_star),
            "rho_max": result.rho_max,
            "refined": result.refined,
            "n_points": int(n_points),
        },
    )

    for angle_deg in dump_angles:
        rotated = rotate_quadrature_array(data.on, "idler", math.radians(angle_deg))
        x_signal = rotated[:, 0] / math.sqrt(acq.chain_gain_signal)
        x_idler = rotated[:, 2] / math.sqrt(acq.chain_gain_idler)
        rows = list(zip(x_signal, x_idler))
        _write_csv(
            config.output_dir / f"shots_alpha_{angle_deg:g}deg.csv",
            meta,
            ("x_signal", "x_idler"),
            rows,
        )


def _parse_angle_list(raw: str | None) -> list[float]:
    if raw is None or raw.strip() == "":
        return []
    try:
        return [float(part) for part in raw.split(",")]
    except ValueError as err:
        raise ConfigError(f"invalid --dump-shots angle list {raw!r}") from err


def _case_label(window) -> str:
    return f"{window.shape}_{window.tau * 1e6:g}us"


def _run_linewidth_cases(config: ExperimentConfig, points, span, jobs, strict):
    """Run every configured (window, tau) case; returns (rows, fits, sweeps)."""
    n_points = points if points is not None else config.linewidth_points
    full_span = span if span is not None else config.linewidth_span
    detunings = np.linspace(-full_span / 2.0, full_span / 2.0, n_points)
    plan = FrequencyPlan.for_detuning(config.f_pump, config.f_idler_demod, 0.0)
    meta = _metadata(config)

    fit_rows = []
    fits = []
    sweeps = []
    for window in config.cases:
        label = _case_label(window)
        acq = config.acquisition_for(window)
        try:
            sweep = sweep_detuning(plan, config.band, acq, detunings, jobs=jobs)
            fit = fit_model(sweep, default_model_for(window))
        except ValueError as err:
            click.echo(f"case {label}: numerical failure: {err}", err=True)
            if strict:
                sys.exit(EXIT_NUMERICAL_FAILURE)
            fit_rows.append(
                (window.shape, window.tau * 1e6, math.nan, math.nan, math.nan,
                 math.nan, math.nan, math.nan, False, 0)
            )
            continue
        if strict and not fit.converged:
            click.echo(f"case {label}: fit did not converge", err=True)
            sys.exit(EXIT_NUMERICAL_FAILURE)
        _write_csv(
            config.output_dir / f"linewidth_{label}.csv",
            meta,
            LINEWIDTH_COLUMNS,
            list(zip(sweep.detunings, np.abs(sweep.rho_values), sweep.rho_errors)),
        )
        comparison = compare_windows([fit], [sweep])[0]
        fit_rows.append(
            (
                window.shape,
                window.tau * 1e6,
                fit.amplitude,
                fit.scale_xi,
                fit.fwhm,
                fit.snr,
                comparison.sidelobe,
                fit.residual_rms,
                fit.converged,
                fit.n_iterations,
            )
        )
        fits.append(fit)
        sweeps.append(sweep)

    _write_csv(config.output_dir / "fits.csv", meta, FITS_COLUMNS, fit_rows)
    return fits, sweeps


@main.command()
@_config_options
@click.option("--points", default=None, type=int, help="Detuning grid points per sweep.")
@click.option("--span", default=None, type=float, help="Total detuning span in Hz.")
def linewidth(config_path, out, seed, jobs, strict, points, span) -> None:
    """Sweep detuning for every configured (window, tau) case and fit linewidths."""
    try:
        config = _load(config_path, out, seed)
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    _run_linewidth_cases(config, points, span, jobs, strict)


@main.command("compare-windows")
@_config_options
@click.option("--points", default=None, type=int, help="Detuning grid points per sweep.")
@click.option("--span", default=None, type=float, help="Total detuning span in Hz.")
def cmd_compare_windows(config_path, out, seed, jobs, strict, points, span) -> None:
    """Run the linewidth cases and emit the cross-window comparison table."""
    try:
        config = _load(config_path, out, seed)
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    fits, sweeps = _run_linewidth_cases(config, points, span, jobs, strict)
    rows = [
        (
            row.window,
            row.tau * 1e6,
            row.fwhm,
            row.snr,
            row.fwhm_tau,
            row.sidelobe,
            row.sidelobe_se,
            row.n_sidelobe_points,
        )
        for row in compare_windows(fits, sweeps)
    ]
    _write_csv(
        config.output_dir / "comparison.csv", _metadata(config), COMPARISON_COLUMNS, rows
    )


if __name__ == "__main__":
    main()
