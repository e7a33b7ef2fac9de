"""Covariance and correlation estimation from demodulated shot records.

Turns (n, 4) quadrature arrays from the ON and OFF acquisition stages into
the inferred two-mode squeezed covariance (background subtraction plus
vacuum restoration) and its Pearson correlation, with standard errors from
a leave-one-block-out jackknife that sees the full inference chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gaussian import VACUUM_VARIANCE, pearson_xx, rotate_quadrature_array

DEFAULT_JACKKNIFE_BLOCKS = 50


@dataclass(frozen=True)
class CovarianceEstimate:
    """Sample covariance with entrywise standard errors."""

    matrix: np.ndarray
    n_shots: int
    standard_errors: np.ndarray


@dataclass(frozen=True)
class PhaseSweepResult:
    """Pearson correlation versus relative LO phase, with its maximizer.

    ``refined`` reports whether ``alpha_star`` came from parabolic
    interpolation around the grid maximum or is a bare grid point.
    """

    alphas: np.ndarray
    rho_values: np.ndarray
    rho_errors: np.ndarray
    alpha_star: float
    rho_max: float
    refined: bool


def _as_shot_array(shots) -> np.ndarray:
    if isinstance(shots, np.ndarray):
        values = np.asarray(shots, dtype=float)
    else:
        values = np.array([np.asarray(getattr(s, "as_array", lambda: s)(), dtype=float) for s in shots])
    if values.ndim != 2 or values.shape[1] != 4:
        raise ValueError(f"expected shots with 4 quadratures, got shape {values.shape}")
    return values


def estimate_covariance(shots) -> CovarianceEstimate:
    """Unbiased (n-1 divisor) sample covariance of the quadrature 4-vector.

    Standard errors use the Gaussian-theory formula
    ``SE(sigma_ij) = sqrt((sigma_ii sigma_jj + sigma_ij^2) / (n - 1))``.
    Accepts an (n, 4) array or any sequence of QuadratureSet-like items.
    """
    values = _as_shot_array(shots)
    n = values.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 shots to estimate a covariance, got {n}")
    matrix = np.cov(values, rowvar=False, ddof=1)
    diag = np.diag(matrix)
    standard_errors = np.sqrt((np.outer(diag, diag) + matrix**2) / (n - 1))
    return CovarianceEstimate(matrix=matrix, n_shots=n, standard_errors=standard_errors)


def _chain_scaling(chain_gain_signal: float, chain_gain_idler: float) -> np.ndarray:
    if chain_gain_signal <= 0.0 or chain_gain_idler <= 0.0:
        raise ValueError(
            f"chain gains must be positive, got ({chain_gain_signal}, {chain_gain_idler})"
        )
    return np.diag(
        [
            1.0 / math.sqrt(chain_gain_signal),
            1.0 / math.sqrt(chain_gain_signal),
            1.0 / math.sqrt(chain_gain_idler),
            1.0 / math.sqrt(chain_gain_idler),
        ]
    )


def infer_tmsvs(
    on: CovarianceEstimate,
    off: CovarianceEstimate,
    chain_gain_signal: float,
    chain_gain_idler: float,
) -> np.ndarray:
    """Background-subtracted squeezed-state covariance with vacuum restored.

    Scales signal rows/columns by 1/chain_gain_signal, idler ones by
    1/chain_gain_idler (cross blocks pick up the geometric mean), then
    returns ON - OFF + I/4. No positivity projection is applied; physicality
    is a downstream diagnostic.
    """
    scale = _chain_scaling(chain_gain_signal, chain_gain_idler)
    on_scaled = scale @ on.matrix @ scale
    off_scaled = scale @ off.matrix @ scale
    return on_scaled - off_scaled + VACUUM_VARIANCE * np.eye(4)


def _inferred_from_matrices(
    cov_on: np.ndarray,
    cov_off: np.ndarray,
    scale: np.ndarray,
) -> np.ndarray:
    return scale @ (cov_on - cov_off) @ scale + VACUUM_VARIANCE * np.eye(4)


def _block_bounds(n: int, n_blocks: int) -> np.ndarray:
    n_blocks = max(2, min(n_blocks, n))
    return np.linspace(0, n, n_blocks + 1, dtype=int)


class _MomentSums:
    """First/second moment sums per jackknife block for one shot array."""

    def __init__(self, values: np.ndarray, bounds: np.ndarray) -> None:
        self.n = values.shape[0]
        self.counts = np.diff(bounds)
        starts = bounds[:-1]
        self.block_first = np.add.reduceat(values, starts, axis=0)
        outer = values[:, :, np.newaxis] * values[:, np.newaxis, :]
        self.block_second = np.add.reduceat(outer, starts, axis=0)
        self.total_first = self.block_first.sum(axis=0)
        self.total_second = self.block_second.sum(axis=0)

    def covariance(self, leave_out: int | None = None) -> np.ndarray:
        if leave_out is None:
            first, second, n = self.total_first, self.total_second, self.n
        else:
            first = self.total_first - self.block_first[leave_out]
            second = self.total_second - self.block_second[leave_out]
            n = self.n - int(self.counts[leave_out])
        mean = first / n
        return (second - n * np.outer(mean, mean)) / (n - 1)


def _pearson_with_jackknife(
    sums_on: _MomentSums,
    sums_off: _MomentSums,
    scale: np.ndarray,
) -> tuple[float, float]:
    inferred = _inferred_from_matrices(sums_on.covariance(), sums_off.covariance(), scale)
    rho = pearson_xx(inferred)
    n_blocks = sums_on.counts.size
    replicates = np.empty(n_blocks)
    for k in range(n_blocks):
        cov = _inferred_from_matrices(
            sums_on.covariance(leave_out=k), sums_off.covariance(leave_out=k), scale
        )
        replicates[k] = pearson_xx(cov)
    spread = replicates - replicates.mean()
    se = math.sqrt((n_blocks - 1) / n_blocks * float(np.dot(spread, spread)))
    return rho, se


def inferred_pearson(
    shots_on,
    shots_off,
    chain_gain_signal: float,
    chain_gain_idler: float,
    idler_rotation: float = 0.0,
    n_blocks: int = DEFAULT_JACKKNIFE_BLOCKS,
) -> tuple[float, float]:
    """Pearson rho of the inferred covariance, with a block-jackknife SE.

    Both stages get the same idler rotation before estimation, mirroring the
    phase-sweep convention.
    """
    on = _as_shot_array(shots_on)
    off = _as_shot_array(shots_off)
    if idler_rotation != 0.0:
        on = rotate_quadrature_array(on, "idler", idler_rotation)
        off = rotate_quadrature_array(off, "idler", idler_rotation)
    scale = _chain_scaling(chain_gain_signal, chain_gain_idler)
    bounds_on = _block_bounds(on.shape[0], n_blocks)
    bounds_off = _block_bounds(off.shape[0], n_blocks)
    return _pearson_with_jackknife(
        _MomentSums(on, bounds_on), _MomentSums(off, bounds_off), scale
    )


def phase_sweep(
    shots_on,
    shots_off,
    chain_gain_signal: float,
    chain_gain_idler: float,
    alphas: Sequence[float],
    n_blocks: int = DEFAULT_JACKKNIFE_BLOCKS,
) -> PhaseSweepResult:
    """Pearson correlation versus idler rotation angle.

    For every alpha the idler quadratures of both stages are rotated, the
    covariances re-estimated, the squeezed state re-inferred and rho
    recorded. The OFF stage is rotated too: a no-op for an isotropic
    background but bias-free if it is not. The maximizer is refined by a
    three-point parabola around the grid maximum when possible.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size == 0:
        raise ValueError("phase grid must contain at least one angle")
    on = _as_shot_array(shots_on)
    off = _as_shot_array(shots_off)
    scale = _chain_scaling(chain_gain_signal, chain_gain_idler)

    rho_values = np.empty(alphas.size)
    rho_errors = np.empty(alphas.size)
    for k, alpha in enumerate(alphas):
        on_rot = rotate_quadrature_array(on, "idler", alpha)
        off_rot = rotate_quadrature_array(off, "idler", alpha)
        sums_on = _MomentSums(on_rot, _block_bounds(on.shape[0], n_blocks))
        sums_off = _MomentSums(off_rot, _block_bounds(off.shape[0], n_blocks))
        rho_values[k], rho_errors[k] = _pearson_with_jackknife(sums_on, sums_off, scale)

    alpha_star, rho_max, refined = _refine_maximum(alphas, rho_values)
    return PhaseSweepResult(
        alphas=alphas,
        rho_values=rho_values,
        rho_errors=rho_errors,
        alpha_star=alpha_star,
        rho_max=rho_max,
        refined=refined,
    )


def _refine_maximum(alphas: np.ndarray, rho_values: np.ndarray) -> tuple[float, float, bool]:
    """Parabolic refinement of the grid maximum; falls back to the grid point."""
    peak = int(np.argmax(rho_values))
    alpha_star = float(alphas[peak])
    rho_max = float(rho_values[peak])
    if alphas.size < 3:
        return alpha_star, rho_max, False

    span = alphas[-1] - alphas[0]
    step = span / (alphas.size - 1)
    wraps = span >= 2.0 * math.pi - 1.5 * step
    # A full-circle grid listing both endpoints repeats one sample; wrap
    # around the distinct points only.
    period = alphas.size
    if wraps and abs(span - 2.0 * math.pi) < 1e-9:
        period = alphas.size - 1

    def neighbor(index: int) -> float | None:
        if 0 <= index < alphas.size:
            return float(rho_values[index])
        if wraps:
            return float(rho_values[index % period])
        return None

    left = neighbor(peak - 1)
    right = neighbor(peak + 1)
    if left is None or right is None:
        return alpha_star, rho_max, False
    denom = left - 2.0 * rho_max + right
    if denom >= 0.0 or not math.isfinite(denom):
        return alpha_star, rho_max, False
    shift = 0.5 * (left - right) / denom
    if abs(shift) > 1.0:
        return alpha_star, rho_max, False
    refined_alpha = alpha_star + shift * step
    refined_rho = rho_max - 0.25 * (left - right) * shift
    return float(refined_alpha), float(refined_rho), True
