"""Parameter types and the algebraic layer of the cavity-magnon-phonon model.

Units
-----
Every frequency, decay rate and coupling handled here is an *angular*
frequency in rad/s. Conversion from/to ordinary frequency (Hz, the
``omega / 2 pi`` values used in configuration files and CSV output) happens
only in :mod:`cmmkit.cli_io` via :func:`hz` and :func:`to_hz`.

Decay rates are amplitude half-linewidths: a mode with complex frequency
``omega - 1j * kappa`` has a power-spectrum FWHM of ``2 * kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi

#: Gyromagnetic ratio of YIG, rad/s per tesla (28 GHz/T).
GAMMA = TWO_PI * 28e9


def hz(f):
    """Ordinary frequency (Hz) to angular frequency (rad/s)."""
    return TWO_PI * np.asarray(f, dtype=float) if np.ndim(f) else TWO_PI * float(f)


def to_hz(w):
    """Angular frequency (rad/s) to ordinary frequency (Hz)."""
    return np.asarray(w) / TWO_PI if np.ndim(w) else w / TWO_PI


@dataclass(frozen=True)
class ModeParams:
    omega: float
    kappa: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"mode frequency must be positive, got {self.omega}")
        if not self.kappa >= 0:
            raise ValueError(f"mode decay rate must be non-negative, got {self.kappa}")


@dataclass(frozen=True)
class CavityParams:
    """Cavity mode with intrinsic and external (port) decay channels."""

    omega_a: float
    kappa_int: float
    kappa_e: float

    def __post_init__(self):
        if not self.omega_a > 0:
            raise ValueError(f"cavity frequency must be positive, got {self.omega_a}")
        if self.kappa_int < 0 or self.kappa_e < 0:
            raise ValueError("cavity decay rates must be non-negative")

    @property
    def kappa_a(self) -> float:
        return self.kappa_int + self.kappa_e

    @property
    def kappa_gain(self) -> float:
        """Effective cavity gain rate ``kappa_e - kappa_int`` seen at a reflection zero."""
        return self.kappa_e - self.kappa_int


@dataclass(frozen=True)
class MechanicalModeParams:
    omega_b: float
    kappa_b: float
    g_mb: float

    def __post_init__(self):
        if not self.omega_b > 0:
            raise ValueError(f"mechanical frequency must be positive, got {self.omega_b}")
        if not self.kappa_b > 0:
            raise ValueError(f"mechanical damping must be positive, got {self.kappa_b}")
        if self.g_mb < 0:
            raise ValueError(f"bare magnomechanical coupling must be >= 0, got {self.g_mb}")


@dataclass(frozen=True)
class SystemParams:
    cavity: CavityParams
    magnon: ModeParams
    g_ma: float
    mechanics: tuple[MechanicalModeParams, ...] = ()

    def __post_init__(self):
        if self.g_ma < 0:
            raise ValueError(f"g_ma must be non-negative, got {self.g_ma}")
        object.__setattr__(self, "mechanics", tuple(self.mechanics))

    def with_kappa_e(self, kappa_e: float) -> SystemParams:
        return replace(self, cavity=replace(self.cavity, kappa_e=kappa_e))

    def with_magnon_frequency(self, omega_m: float) -> SystemParams:
        return replace(self, magnon=replace(self.magnon, omega=omega_m))


@dataclass(frozen=True)
class DriveParams:
    """Microwave drive applied directly to the magnon mode.

    ``power_to_amplitude`` maps sqrt(P / 1 mW) onto the steady-state magnon
    amplitude |M|; ``kerr_coefficient`` is the self-Kerr frequency shift per
    magnon excitation (rad/s).
    """

    omega_d: float
    power_dbm: float
    power_to_amplitude: float
    kerr_coefficient: float = 0.0

    def __post_init__(self):
        if self.power_to_amplitude < 0:
            raise ValueError("power_to_amplitude must be non-negative")
        if math.isnan(self.power_dbm) or self.power_dbm == math.inf:
            raise ValueError(f"drive power must be finite or -inf dBm, got {self.power_dbm}")

    @property
    def power_mw(self) -> float:
        if self.power_dbm == -math.inf:
            return 0.0
        return 10.0 ** (self.power_dbm / 10.0)

    def with_power(self, power_dbm: float) -> DriveParams:
        return replace(self, power_dbm=power_dbm)


@dataclass(frozen=True)
class PolaritonPair:
    omega_plus: float
    omega_minus: float
    kappa_plus: float
    kappa_minus: float
    theta: float
    # which bare mode dominates the upper branch: "cavity", "magnon" or "balanced"
    upper_character: str = field(default="balanced")

    @property
    def eigenvalues(self) -> tuple[complex, complex]:
        return (complex(self.omega_plus, -self.kappa_plus),
                complex(self.omega_minus, -self.kappa_minus))


def polariton_eigenvalues(omega_a, kappa_a, omega_m, kappa_m, g_ma):
    """Closed-form eigenvalues of ``[[omega_a - i kappa_a, g], [g, omega_m - i kappa_m]]``.

    Decay rates may be negative (gain). Returns ``(lambda_plus, lambda_minus)``
    with ``Re lambda_plus >= Re lambda_minus``; at exact degeneracy of the real
    parts the branch with the smaller decay rate is labelled ``+``.
    """
    center = 0.5 * (omega_a + omega_m)
    mean_kappa = 0.5 * (kappa_a + kappa_m)
    diff = complex(omega_a - omega_m, -(kappa_a - kappa_m))
    xi = 4.0 * g_ma * g_ma + diff * diff
    q = np.sqrt(complex(xi.real, xi.imag + 0.0))
    if q.real < 0 or (q.real == 0 and q.imag < 0):
        q = -q
    half_re, half_im = 0.5 * q.real, 0.5 * q.imag
    lam_plus = complex(center + half_re, -(mean_kappa - half_im))
    lam_minus = complex(center - half_re, -(mean_kappa + half_im))
    return lam_plus, lam_minus


def mixing_angle(omega_a, omega_m, g_ma):
    """Cavity-magnon mixing angle theta in [0, pi/2].

    ``p_+ = a cos(theta) + m sin(theta)``, so theta -> 0 leaves the upper branch
    cavity-like (cavity above the magnon) and theta = pi/4 at resonance.
    """
    if g_ma < 0:
        raise ValueError("g_ma must be non-negative")
    return 0.5 * math.atan2(2.0 * g_ma, omega_a - omega_m)


def diagonalize_polaritons(cavity: CavityParams, magnon: ModeParams, g_ma: float) -> PolaritonPair:
    lam_p, lam_m = polariton_eigenvalues(cavity.omega_a, cavity.kappa_a, magnon.omega, magnon.kappa, g_ma)
    return _pair(lam_p, lam_m, cavity.omega_a, magnon.omega, g_ma)


def _pair(lam_p, lam_m, omega_a, omega_m, g_ma) -> PolaritonPair:
    theta = mixing_angle(omega_a, omega_m, g_ma)
    if math.isclose(theta, math.pi / 4, rel_tol=0, abs_tol=1e-15):
        character = "balanced"
    else:
        character = "cavity" if theta < math.pi / 4 else "magnon"
    return PolaritonPair(
        omega_plus=lam_p.real,
        omega_minus=lam_m.real,
        kappa_plus=-lam_p.imag,
        kappa_minus=-lam_m.imag,
        theta=theta,
        upper_character=character,
    )


def effective_couplings(g_mb, M, theta):
    """Polariton-phonon couplings ``(G_plus, G_minus) = sqrt(2) g_mb M (sin, cos)(theta)``."""
    base = math.sqrt(2.0) * g_mb * complex(M)
    return base * math.sin(theta), base * math.cos(theta)


def steady_state_magnon_amplitude(drive: DriveParams, system: SystemParams | None = None) -> complex:
    """Steady-state magnon amplitude M for the given drive.

    Uses the single-scalar calibration ``|M| = power_to_amplitude * sqrt(P_mW)``
    with the global phase of M fixed to zero, so every enhanced coupling scales
    as the square root of the linear drive power. ``system`` is accepted for
    interface symmetry and not used by this calibration.
    """
    return complex(drive.power_to_amplitude * math.sqrt(drive.power_mw), 0.0)


def calibrate_power_to_amplitude(G_plus, power_dbm, g_mb, theta):
    """Return the ``power_to_amplitude`` constant that yields ``G_plus`` at ``power_dbm``."""
    if g_mb <= 0 or math.sin(theta) == 0:
        raise ValueError("calibration needs g_mb > 0 and a magnon admixture (sin(theta) > 0)")
    amplitude = abs(G_plus) / (math.sqrt(2.0) * g_mb * math.sin(theta))
    return amplitude / math.sqrt(10.0 ** (power_dbm / 10.0))


def kerr_shifted_frequency(omega_m0, kerr_coefficient, M):
    return omega_m0 + kerr_coefficient * abs(M) ** 2


def magnon_frequency_from_field(B0):
    if B0 < 0:
        raise ValueError(f"bias field must be non-negative, got {B0}")
    return GAMMA * B0


def field_from_magnon_frequency(omega_m):
    return omega_m / GAMMA


def driven_magnon_frequency(system: SystemParams, drive: DriveParams | None) -> float:
    """Magnon frequency including the drive-induced self-Kerr shift."""
    if drive is None:
        return system.magnon.omega
    M = steady_state_magnon_amplitude(drive, system)
    return kerr_shifted_frequency(system.magnon.omega, drive.kerr_coefficient, M)


def yig_sphere_system(kappa_e_hz: float = 1.88e6, detuning_hz: float = 0.0, mechanics=None) -> SystemParams:
    """Device constants of the 0.28 mm YIG sphere in a copper TE102 cavity.

    ``detuning_hz`` is ``omega_m - omega_a`` in Hz. ``mechanics`` defaults to the
    single 10.9485 MHz vibration mode.
    """
    if mechanics is None:
        mechanics = (MechanicalModeParams(omega_b=hz(10.9485e6), kappa_b=hz(150.0), g_mb=hz(1.25e-3)),)
    return SystemParams(
        cavity=CavityParams(omega_a=hz(10.0524e9), kappa_int=hz(1.12e6), kappa_e=hz(kappa_e_hz)),
        magnon=ModeParams(omega=hz(10.0524e9 + detuning_hz), kappa=hz(0.775e6)),
        g_ma=hz(5.83e6),
        mechanics=tuple(mechanics),
    )
