"""One-port reflection of the driven cavity-magnon-phonon system.

Time convention is ``exp(-i omega t)``. The cavity obeys

    da/dt = -(i omega_a + kappa_a) a - i g_ma m + sqrt(2 kappa_e) a_in,
    a_out = sqrt(2 kappa_e) a - a_in,

which gives ``r = 2 kappa_e / D - 1`` with the nested susceptibility

    D = i(Delta_a - delta) + kappa_a + g_ma**2 / (i(Delta_m - delta) + kappa_m + Sigma(delta)).

Without a drive ``delta`` is the lab-frame probe frequency and the mechanics
is ignored. With a drive everything is written in the frame rotating at
``omega_d`` and ``Sigma`` is the mechanical self-energy.

Reflection zeros sit at the eigenvalues of the *effective-gain* coupled-mode
matrix, in which the cavity decay ``kappa_a`` is replaced by the gain
``-(kappa_e - kappa_int)``. A zero ``omega - i kappa`` with small ``kappa``
is a near-perfect absorption point; ``kappa < 0`` puts it in the upper half
plane.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .core_model import (
    DriveParams,
    PolaritonPair,
    SystemParams,
    _pair,
    driven_magnon_frequency,
    polariton_eigenvalues,
    steady_state_magnon_amplitude,
)


class Delay(enum.Enum):
    """Sentinel returned instead of a number when |r| is below the CPA floor."""

    AT_CPA = "at-CPA divergence"


AT_CPA = Delay.AT_CPA


@dataclass(frozen=True)
class Spectrum:
    """Complex reflection sampled on a strictly increasing probe grid (rad/s).

    Measured dB-only data is stored with ``values=None`` and ``magnitude_db``
    set; such spectra have no phase.
    """

    frequencies: np.ndarray
    values: np.ndarray | None
    magnitude_db: np.ndarray | None = None
    provenance: str = "model"
    system: SystemParams | None = None
    drive: DriveParams | None = None

    def __post_init__(self):
        freq = np.asarray(self.frequencies, dtype=float)
        if freq.ndim != 1 or freq.size < 2:
            raise ValueError("spectrum needs a one-dimensional grid of at least two points")
        if not np.all(np.isfinite(freq)):
            raise ValueError("probe grid contains non-finite frequencies")
        bad = np.flatnonzero(np.diff(freq) <= 0)
        if bad.size:
            raise ValueError(f"probe grid not strictly increasing at index {bad[0] + 1}")
        object.__setattr__(self, "frequencies", freq)
        if self.values is None and self.magnitude_db is None:
            raise ValueError("spectrum needs complex values or a magnitude_db column")
        if self.values is not None:
            vals = np.asarray(self.values, dtype=complex)
            if vals.shape != freq.shape:
                raise ValueError("values and frequencies differ in length")
            if not np.all(np.isfinite(vals)):
                raise ValueError("reflection values must be finite")
            object.__setattr__(self, "values", vals)
        if self.magnitude_db is not None:
            mag = np.asarray(self.magnitude_db, dtype=float)
            if mag.shape != freq.shape:
                raise ValueError("magnitude_db and frequencies differ in length")
            object.__setattr__(self, "magnitude_db", mag)

    @property
    def has_phase(self) -> bool:
        return self.values is not None

    @property
    def db(self) -> np.ndarray:
        if self.values is not None:
            with np.errstate(divide="ignore"):
                return 20.0 * np.log10(np.abs(self.values))
        return self.magnitude_db

    @property
    def magnitude(self) -> np.ndarray:
        if self.values is not None:
            return np.abs(self.values)
        return 10.0 ** (self.magnitude_db / 20.0)


@dataclass(frozen=True)
class ComplexZero:
    """A reflection zero; ``residual`` is ``|r|`` evaluated at the complex location."""

    location: complex
    residual: float
    converged: bool
    iterations: int


# --- nested susceptibility -------------------------------------------------


@dataclass(frozen=True)
class _Frame:
    """Everything the reflection formula needs, reduced to plain numbers."""

    omega_ref: float  # rotating-frame frequency (0 for the undriven lab frame)
    delta_a: float
    delta_m: float
    kappa_a: float
    kappa_m: float
    kappa_e: float
    g_ma: float
    mech: tuple = ()  # (omega_b, kappa_b, |G_m|^2) per mechanical mode
    rwa: bool = True


def _frame(system: SystemParams, drive: DriveParams | None, rwa: bool = True) -> _Frame:
    cav = system.cavity
    if drive is None:
        return _Frame(0.0, cav.omega_a, system.magnon.omega, cav.kappa_a, system.magnon.kappa,
                      cav.kappa_e, system.g_ma, (), rwa)
    M = steady_state_magnon_amplitude(drive, system)
    omega_m = driven_magnon_frequency(system, drive)
    mech = tuple((mb.omega_b, mb.kappa_b, 2.0 * mb.g_mb ** 2 * abs(M) ** 2) for mb in system.mechanics)
    return _Frame(drive.omega_d, cav.omega_a - drive.omega_d, omega_m - drive.omega_d,
                  cav.kappa_a, system.magnon.kappa, cav.kappa_e, system.g_ma, mech, rwa)


def _self_energy(fr: _Frame, delta):
    """Mechanical self-energy of the magnon and its derivative in ``delta``."""
    sigma = np.zeros_like(delta, dtype=complex)
    dsigma = np.zeros_like(delta, dtype=complex)
    for omega_b, kappa_b, G2 in fr.mech:
        den = 1j * (omega_b - delta) + kappa_b
        sigma = sigma + G2 / den
        dsigma = dsigma + 1j * G2 / den ** 2
        if not fr.rwa:
            den_c = 1j * (-omega_b - delta) + kappa_b
            sigma = sigma - G2 / den_c
            dsigma = dsigma - 1j * G2 / den_c ** 2
    return sigma, dsigma


def _denominator(fr: _Frame, omega_p, derivative: bool = False):
    """``D`` (and ``dD/domega_p``) at probe frequencies ``omega_p`` (may be complex)."""
    delta = np.asarray(omega_p) - fr.omega_ref
    sigma, dsigma = _self_energy(fr, delta)
    dm = 1j * (fr.delta_m - delta) + fr.kappa_m + sigma
    D = 1j * (fr.delta_a - delta) + fr.kappa_a + fr.g_ma ** 2 / dm
    if not derivative:
        return D
    dD = -1j - fr.g_ma ** 2 * (-1j + dsigma) / dm ** 2
    return D, dD


def _admittance(fr: _Frame, omega_p, derivative: bool = False):
    """``1/D`` (and its derivative) with the inner fraction cleared.

    Finite even where the magnon susceptibility diverges (a lossless magnon
    probed exactly on resonance), where ``D`` itself is infinite.
    """
    delta = np.asarray(omega_p) - fr.omega_ref
    c = 1j * (fr.delta_a - delta) + fr.kappa_a
    if fr.g_ma == 0:
        # the magnon (and mechanics) drop out: bare cavity
        return (1.0 / c, 1j / c ** 2) if derivative else 1.0 / c
    sigma, dsigma = _self_energy(fr, delta)
    dm = 1j * (fr.delta_m - delta) + fr.kappa_m + sigma
    den = c * dm + fr.g_ma ** 2
    Y = dm / den
    if not derivative:
        return Y
    dY = (1j * dm ** 2 + fr.g_ma ** 2 * (-1j + dsigma)) / den ** 2
    return Y, dY


def _scalar_or_array(x, like):
    return complex(x) if np.ndim(like) == 0 else x


def reflection_two_mode(system: SystemParams, omega_p):
    """Reflection of the undriven cavity-magnon system; mechanics is ignored."""
    fr = _frame(system, None)
    r = 2.0 * fr.kappa_e * _admittance(fr, omega_p) - 1.0
    return _scalar_or_array(r, omega_p)


def reflection_three_mode(system: SystemParams, drive: DriveParams, omega_p, rwa: bool = True):
    """Reflection with the drive-enhanced magnon-phonon coupling ``G_m = sqrt(2) g_mb M``.

    ``omega_p`` is the lab-frame probe frequency. With ``rwa=False`` the
    counter-rotating mechanical term is kept in the self-energy.
    """
    fr = _frame(system, drive, rwa)
    r = 2.0 * fr.kappa_e * _admittance(fr, omega_p) - 1.0
    return _scalar_or_array(r, omega_p)


def reflection_derivative(system: SystemParams, omega_p, drive: DriveParams | None = None, rwa: bool = True):
    fr = _frame(system, drive, rwa)
    return _scalar_or_array(2.0 * fr.kappa_e * _admittance(fr, omega_p, derivative=True)[1], omega_p)


@dataclass(frozen=True)
class ReflectionModel:
    """Callable reflection model; two-mode when ``drive`` is None."""

    system: SystemParams
    drive: DriveParams | None = None
    rwa: bool = True
    _fr: _Frame = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_fr", _frame(self.system, self.drive, self.rwa))

    def __call__(self, omega_p):
        r = 2.0 * self._fr.kappa_e * _admittance(self._fr, omega_p) - 1.0
        return _scalar_or_array(r, omega_p)

    def derivative(self, omega_p):
        dY = _admittance(self._fr, omega_p, derivative=True)[1]
        return _scalar_or_array(2.0 * self._fr.kappa_e * dY, omega_p)

    def spectrum(self, grid) -> Spectrum:
        grid = np.asarray(grid, dtype=float)
        return Spectrum(grid, self(grid), provenance="model", system=self.system, drive=self.drive)

    # numerator of r: 2 kappa_e - D, and its derivative
    def _numerator(self, omega):
        D, dD = _denominator(self._fr, omega, derivative=True)
        return 2.0 * self._fr.kappa_e - D, -dD

    @property
    def zero_count(self) -> int:
        if self._fr.g_ma == 0:
            return 1  # magnon and mechanics decouple from the port
        n = len(self._fr.mech)
        return 2 + (n if self.rwa else 2 * n)


# --- Wigner time delay -----------------------------------------------------


def wigner_time_delay(source, omega=None, floor: float = 1e-12):
    """Complex delay ``tau = -i r* dr/domega / |r|^2``; the Wigner delay is ``Re tau``.

    ``source`` is either a :class:`ReflectionModel` (analytic derivative,
    evaluated at ``omega``) or a :class:`Spectrum` with phase (central finite
    differences on its grid; ``omega`` optionally interpolates the result).

    Where ``|r| < floor`` the delay diverges: a scalar query returns
    :data:`AT_CPA`, array results carry NaN at those points.
    """
    if isinstance(source, Spectrum):
        if not source.has_phase:
            raise ValueError("phase required: the Wigner delay cannot be computed from dB-only data")
        r = source.values
        dr = np.gradient(r, source.frequencies)
        tau = _delay(r, dr, floor)
        if omega is None:
            return tau
        re = np.interp(omega, source.frequencies, tau.real)
        im = np.interp(omega, source.frequencies, tau.imag)
        out = re + 1j * im
        if np.ndim(omega) == 0:
            return AT_CPA if np.isnan(out) else complex(out)
        return out
    if omega is None:
        raise TypeError("a model source needs the evaluation frequency omega")
    tau = _delay(np.asarray(source(omega)), np.asarray(source.derivative(omega)), floor)
    if np.ndim(omega) == 0:
        tau = complex(tau)
        return AT_CPA if np.isnan(tau.real) else tau
    return tau


def _delay(r, dr, floor):
    mag2 = np.abs(r) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = -1j * np.conj(r) * dr / mag2
    return np.where(np.abs(r) < floor, complex(np.nan, np.nan), tau)


# --- zeros, gain picture, balance ------------------------------------------


def gain_picture_matrix(system: SystemParams, drive: DriveParams | None = None, rwa: bool = True) -> np.ndarray:
    """Coupled-mode matrix whose eigenvalues are the reflection zeros.

    Lab frame when ``drive`` is None (mechanics ignored), otherwise the frame
    rotating at ``omega_d``; see :func:`cmmkit.magnomech.coupled_mode_matrix`.
    """
    from .magnomech import coupled_mode_matrix

    return coupled_mode_matrix(system, drive, rwa=rwa, picture="gain")


def _seeds(model: ReflectionModel) -> list[complex]:
    fr = model._fr
    seeds = list(np.linalg.eigvals(gain_picture_matrix(model.system, model.drive, model.rwa)) + fr.omega_ref)
    seeds.append(complex(fr.delta_a + fr.omega_ref))
    seeds.append(complex(fr.delta_m + fr.omega_ref))
    for omega_b, kappa_b, _ in fr.mech:
        seeds.append(complex(fr.omega_ref + omega_b, -kappa_b))
        if not fr.rwa:
            seeds.append(complex(fr.omega_ref - omega_b, -kappa_b))
    return seeds


def _in_box(z, box):
    if box is None:
        return True
    lo, hi = complex(box[0]), complex(box[1])
    return lo.real <= z.real <= hi.real and lo.imag <= z.imag <= hi.imag


def find_reflection_zeros(system: SystemParams, search_box=None, drive: DriveParams | None = None,
                          rwa: bool = True, max_iter: int = 100) -> list[ComplexZero]:
    """Complex zeros of r (lab-frame rad/s) by deflated Newton iteration.

    Seeds are the effective-gain eigenvalues followed by the bare-mode
    frequencies. ``search_box`` is ``(lower_left, upper_right)`` as complex
    numbers; zeros outside it are discarded. A seed that fails to converge
    inside the box is reported with ``converged=False``.
    """
    model = ReflectionModel(system, drive, rwa)
    found: list[ComplexZero] = []
    roots: list[complex] = []
    scale = max(system.cavity.kappa_a, system.magnon.kappa, system.g_ma, 1.0)
    for seed in _seeds(model):
        if len(roots) == model.zero_count:
            break
        z, iterations, ok = _deflated_newton(model, complex(seed), roots, scale, max_iter)
        if ok:
            z = _polish(model, z, scale)
            if any(abs(z - w) <= 1e-9 * scale for w in roots):
                continue
            roots.append(z)
            if _in_box(z, search_box):
                found.append(ComplexZero(z, float(abs(model(z))), True, iterations))
        elif _in_box(seed, search_box):
            found.append(ComplexZero(z, float(abs(model(z))), False, iterations))
    found.sort(key=lambda c: (c.location.real, c.location.imag))
    return found


def _deflated_newton(model, z, roots, scale, max_iter):
    with np.errstate(divide="ignore", invalid="ignore"):
        return _newton_loop(model, z, roots, scale, max_iter)


def _newton_loop(model, z, roots, scale, max_iter):
    for it in range(1, max_iter + 1):
        f, df = model._numerator(z)
        if f == 0:
            return z, it, True
        log_deriv = df / f - sum(1.0 / (z - w) for w in roots)
        if log_deriv == 0 or not np.isfinite(log_deriv):
            return z, it, False
        step = 1.0 / log_deriv
        z = z - step
        if abs(step) <= 1e-14 * abs(z) + 1e-12 * scale:
            return z, it, True
    return z, max_iter, False


def _polish(model, z, scale, steps: int = 3):
    for _ in range(steps):
        f, df = model._numerator(z)
        if f == 0 or df == 0:
            break
        step = f / df
        if abs(step) > 1e-6 * scale:
            break
        z = z - step
    return z


def effective_gain_polaritons(system: SystemParams) -> PolaritonPair:
    """Polaritons with the cavity loss replaced by the gain ``kappa_e - kappa_int``.

    Their complex frequencies are the two reflection zeros; the returned
    ``kappa_plus``/``kappa_minus`` are minus the zeros' imaginary parts.
    """
    cav, mag = system.cavity, system.magnon
    lam_p, lam_m = polariton_eigenvalues(cav.omega_a, -cav.kappa_gain, mag.omega, mag.kappa, system.g_ma)
    return _pair(lam_p, lam_m, cav.omega_a, mag.omega, system.g_ma)


def cpa_balance(system: SystemParams) -> float:
    """External decay rate at which cavity gain balances magnon loss (resonant case)."""
    return system.cavity.kappa_int + system.magnon.kappa


def cpa_balance_numerical(system: SystemParams, rel_span: float = 0.5) -> float:
    """Refine :func:`cpa_balance` by minimising the largest |Im| over the reflection zeros."""
    guess = cpa_balance(system)

    def worst(kappa_e):
        zeros = find_reflection_zeros(system.with_kappa_e(kappa_e))
        return max(abs(z.location.imag) for z in zeros)

    res = minimize_scalar(worst, bounds=(guess * (1 - rel_span), guess * (1 + rel_span)),
                          method="bounded", options={"xatol": guess * 1e-9})
    return float(res.x)


def find_exceptional_point(kappa_a_prime, kappa_m):
    """Coupling ``(kappa_a' + kappa_m) / 2`` at which the resonant gain-picture pair coalesces."""
    return 0.5 * (kappa_a_prime + kappa_m)


def tune_upper_polariton(system: SystemParams, kappa_plus: float, via: str = "kappa_e") -> SystemParams:
    """Return a copy of ``system`` whose upper reflection zero has decay ``kappa_plus``.

    ``via="kappa_e"`` adjusts the port coupling below the balance value;
    ``via="magnon_detuning"`` red-shifts the magnon at fixed ``kappa_e``.
    Either way the zero stays in the lower half plane.
    """
    if via == "kappa_e":
        def excess(kappa_e):
            return effective_gain_polaritons(system.with_kappa_e(kappa_e)).kappa_plus - kappa_plus

        lo, hi = 0.0, cpa_balance(system) + 2.0 * system.magnon.kappa
        if excess(lo) < 0 or excess(hi) > 0:
            raise ValueError("target kappa_plus not reachable by tuning kappa_e")
        return system.with_kappa_e(brentq(excess, lo, hi, xtol=1e-9, rtol=1e-15))
    if via == "magnon_detuning":
        omega_a = system.cavity.omega_a

        def excess(detuning):
            return effective_gain_polaritons(system.with_magnon_frequency(omega_a - detuning)).kappa_plus - kappa_plus

        hi = system.g_ma
        if excess(0.0) < 0:
            raise ValueError("upper polariton already narrower than the target at resonance")
        if excess(hi) > 0:
            raise ValueError("target kappa_plus not reachable by red-shifting the magnon")
        detuning = brentq(excess, 0.0, hi, xtol=1e-9, rtol=1e-15)
        return system.with_magnon_frequency(omega_a - detuning)
    raise ValueError(f"unknown tuning knob {via!r}")


def polariton_zero(system: SystemParams, branch: str = "+", drive: DriveParams | None = None) -> complex:
    """Lab-frame location of the upper (``+``) or lower (``-``) cavity-magnon reflection zero."""
    cav = system.cavity
    omega_m = driven_magnon_frequency(system, drive)
    lam_p, lam_m = polariton_eigenvalues(cav.omega_a, -cav.kappa_gain, omega_m, system.magnon.kappa, system.g_ma)
    return lam_p if branch == "+" else lam_m


def with_sideband_lock(system: SystemParams, drive: DriveParams, mode: int = 0) -> DriveParams:
    """Drive red-detuned by ``omega_b`` of ``system.mechanics[mode]`` from the upper polariton zero.

    The polariton position includes the drive's own Kerr shift, which depends
    on power only.
    """
    omega_b = system.mechanics[mode].omega_b
    return replace(drive, omega_d=polariton_zero(system, "+", drive).real - omega_b)


def dip_depth_db(system: SystemParams, omega, drive: DriveParams | None = None) -> float:
    r = ReflectionModel(system, drive)(omega)
    return 20.0 * math.log10(abs(r)) if r != 0 else -math.inf
