"""Two-mode Gaussian state algebra for a traveling-wave parametric amplifier.

Everything operates on 4x4 real covariance matrices over the quadrature basis
``(X_s, P_s, X_i, P_i)`` in vacuum-normalized units: each quadrature of the
vacuum has variance 1/4. The closed forms here are the analytic oracle the
rest of the acquisition/estimation pipeline is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Variance of a single vacuum quadrature in these units.
VACUUM_VARIANCE = 0.25

#: Column order used for bulk quadrature arrays of shape (n, 4).
QUADRATURE_ORDER = ("x_signal", "p_signal", "x_idler", "p_idler")

#: Block-diagonal symplectic form for two modes in (X_s, P_s, X_i, P_i) order.
#: The quadrature commutator in vacuum-1/4 units is [R_j, R_k] = (i/2) OMEGA_jk.
OMEGA = np.array(
    [
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
    ]
)

_MODES = {"signal": 0, "idler": 2}

#: Worst acceptable negativity when checking positive semidefiniteness.
PSD_TOLERANCE = 1e-9


def _reduce_angle(theta: float) -> float:
    """Reduce an angle to the interval (-pi, pi]."""
    reduced = math.remainder(theta, 2.0 * math.pi)
    if reduced <= -math.pi:
        reduced += 2.0 * math.pi
    return reduced


@dataclass(frozen=True)
class TwpaParams:
    """Operating point of the amplifier.

    Parameters
    ----------
    gain_signal, gain_idler:
        Linear power gains at the signal and idler frequencies. Parametric
        gain cannot drop below unity, so both must be >= 1.
    phase_mismatch:
        Pump/signal/idler phase mismatch in radians, stored reduced to
        (-pi, pi]. Zero maximizes the two-mode correlation.
    """

    gain_signal: float
    gain_idler: float
    phase_mismatch: float = 0.0

    def __post_init__(self) -> None:
        if not (self.gain_signal >= 1.0 and self.gain_idler >= 1.0):
            raise ValueError(
                f"gains must be >= 1, got ({self.gain_signal}, {self.gain_idler})"
            )
        object.__setattr__(
            self, "phase_mismatch", _reduce_angle(float(self.phase_mismatch))
        )


@dataclass(frozen=True)
class QuadratureSet:
    """One demodulated (X, P) pair per mode, in vacuum-normalized units."""

    x_signal: float
    p_signal: float
    x_idler: float
    p_idler: float

    def __post_init__(self) -> None:
        values = (self.x_signal, self.p_signal, self.x_idler, self.p_idler)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"quadratures must be finite, got {values}")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.x_signal, self.p_signal, self.x_idler, self.p_idler]
        )

    @classmethod
    def from_array(cls, values) -> "QuadratureSet":
        x_s, p_s, x_i, p_i = (float(v) for v in values)
        return cls(x_s, p_s, x_i, p_i)


def tmsvs_covariance(params: TwpaParams) -> np.ndarray:
    """Covariance of the amplifier output seeded by two-mode vacuum.

    Each output quadrature variance is (G_s + G_i - 1)/4 and the
    signal-idler cross block carries the phase mismatch:

        cov(X_s, X_i) = +kappa cos(theta)    cov(X_s, P_i) = kappa sin(theta)
        cov(P_s, X_i) = +kappa sin(theta)    cov(P_s, P_i) = -kappa cos(theta)

    with kappa = (sqrt(G_s (G_s - 1)) + sqrt(G_i (G_i - 1)))/4. The opposite
    signs of the XX and PP correlations are what make the state physical: the
    collective quadratures X_s - X_i and P_s + P_i are squeezed together.
    """
    g_s = float(params.gain_signal)
    g_i = float(params.gain_idler)
    if g_s < 1.0 or g_i < 1.0:
        raise ValueError(f"gains must be >= 1, got ({g_s}, {g_i})")
    theta = params.phase_mismatch

    diag = (g_s + g_i - 1.0) / 4.0
    kappa = (math.sqrt(g_s * (g_s - 1.0)) + math.sqrt(g_i * (g_i - 1.0))) / 4.0
    c = kappa * math.cos(theta)
    s = kappa * math.sin(theta)

    return np.array(
        [
            [diag, 0.0, c, s],
            [0.0, diag, s, -c],
            [c, s, diag, 0.0],
            [s, -c, 0.0, diag],
        ]
    )


def rotate_quadrature(q: QuadratureSet, mode: str, angle: float) -> QuadratureSet:
    """Rotate the (X, P) pair of one mode by ``angle`` radians.

    Applies (X', P') = (X cos a + P sin a, -X sin a + P cos a) to the chosen
    mode and leaves the other mode untouched.
    """
    rotated = rotate_quadrature_array(q.as_array()[np.newaxis, :], mode, angle)
    return QuadratureSet.from_array(rotated[0])


def rotate_quadrature_array(values: np.ndarray, mode: str, angle: float) -> np.ndarray:
    """Vectorized :func:`rotate_quadrature` for an (n, 4) quadrature array."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[1] != 4:
        raise ValueError(f"expected an (n, 4) array, got shape {values.shape}")
    col = _mode_column(mode)
    c, s = math.cos(angle), math.sin(angle)
    rotation = np.array([[c, -s], [s, c]])
    out = values.copy()
    out[:, col : col + 2] = values[:, col : col + 2] @ rotation
    return out


def rotate_covariance(cov: np.ndarray, mode: str, angle: float) -> np.ndarray:
    """Covariance of a state whose ``mode`` quadratures were rotated by ``angle``."""
    col = _mode_column(mode)
    c, s = math.cos(angle), math.sin(angle)
    block = np.eye(4)
    block[col : col + 2, col : col + 2] = np.array([[c, s], [-s, c]])
    return block @ np.asarray(cov, dtype=float) @ block.T


def _mode_column(mode: str) -> int:
    try:
        return _MODES[mode]
    except KeyError:
        raise ValueError(f"mode must be 'signal' or 'idler', got {mode!r}") from None


def pearson_xx(cov: np.ndarray) -> float:
    """Pearson correlation of the (X_s, X_i) pair of a covariance matrix.

    Raises if either X variance is non-positive rather than returning NaN.
    """
    cov = np.asarray(cov, dtype=float)
    v_s, v_i = cov[0, 0], cov[2, 2]
    if v_s <= 0.0 or v_i <= 0.0:
        raise ValueError(
            f"X variances must be strictly positive, got ({v_s}, {v_i})"
        )
    return float(cov[0, 2] / math.sqrt(v_s * v_i))


def squeezing_db(cov: np.ndarray) -> float:
    """Squeezing of the collective quadrature X_s - X_i, in dB.

    Computes sigma^2(X_s - X_i) and returns 10 log10 of its ratio to 0.5,
    the two-mode vacuum reference. Negative values mean squeezing.
    """
    cov = np.asarray(cov, dtype=float)
    variance = cov[0, 0] + cov[2, 2] - 2.0 * cov[0, 2]
    return float(10.0 * math.log10(variance / 0.5))


def physicality_min_eigenvalue(cov: np.ndarray) -> float:
    """Minimum eigenvalue of the Heisenberg-uncertainty matrix.

    A covariance matrix describes a physical state iff
    ``cov + (i/2) * (OMEGA / 2) >= 0`` in these vacuum-1/4 units (the factor
    OMEGA/2 is the quadrature commutator matrix). Returns the smallest
    eigenvalue of that Hermitian matrix; physical states give >= 0 up to
    rounding, with pure states sitting at the boundary.
    """
    cov = np.asarray(cov, dtype=float)
    hermitian = cov + 0.25j * OMEGA
    return float(np.linalg.eigvalsh(hermitian)[0])


def is_physical(cov: np.ndarray, tol: float = PSD_TOLERANCE) -> bool:
    """True if the covariance satisfies the uncertainty bound within ``tol``."""
    return physicality_min_eigenvalue(cov) >= -tol


def sample_shots(cov: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` zero-mean Gaussian quadrature samples with covariance ``cov``.

    Returns an (n, 4) array in :data:`QUADRATURE_ORDER`. Uses a Cholesky
    factorization with a single diagonal-jitter retry for marginally
    semidefinite inputs (e.g. matrices inferred by subtraction). Output is
    bit-reproducible for a fixed (cov, n, seed) on a given platform.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (4, 4):
        raise ValueError(f"expected a 4x4 covariance, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12, rtol=0.0):
        raise ValueError("covariance must be symmetric to 1e-12")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    min_eig = float(np.linalg.eigvalsh(cov)[0])
    if min_eig < -PSD_TOLERANCE:
        raise ValueError(
            f"covariance is not positive semidefinite (min eigenvalue {min_eig:.3e})"
        )
    factor = _cholesky_with_jitter(cov)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, 4)) @ factor.T


def _cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    # One jitter retry only: inferred matrices can sit a hair below PSD.
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * float(np.trace(cov)) / 4.0
        return np.linalg.cholesky(cov + jitter * np.eye(4))


def as_quadrature_sets(shots: np.ndarray) -> list[QuadratureSet]:
    """View an (n, 4) quadrature array as a list of :class:`QuadratureSet`."""
    return [QuadratureSet.from_array(row) for row in np.asarray(shots, dtype=float)]
