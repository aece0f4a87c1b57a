"""Polariton-mechanics physics: hybrid normal modes, damping, cooperativity, regimes.

The dynamics is kept in the bare (cavity, magnon, phonon) basis. Rows of the
coupled-mode matrix are written in ``omega - i kappa`` form in the frame
rotating at the drive frequency, so eigenvalues read directly as
``delta - i kappa`` with ``delta = omega_p - omega_d``.

Two pictures are available. ``picture="loss"`` gives the physical poles of
the reflection (zeros of its denominator D). ``picture="gain"`` replaces
the cavity loss with the effective port gain and gives the reflection zeros.
The narrow polariton linewidths produced by coherent perfect absorption
exist only in the gain picture, so normal-mode splitting of reflection dips
is read from ``picture="gain"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core_model import (
    DriveParams,
    SystemParams,
    driven_magnon_frequency,
    effective_couplings,
    mixing_angle,
    steady_state_magnon_amplitude,
)
from .response import Spectrum


class CooperativityError(ValueError):
    """Cooperativity requested with a vanishing polariton or mechanical linewidth."""


def coupled_mode_matrix(system: SystemParams, drive: DriveParams | None = None,
                        rwa: bool = True, picture: str = "loss") -> np.ndarray:
    """Dynamical matrix ``H`` with ``dx/dt = -i H x`` for x = (a, m, b_1, ..., b_N).

    Without a drive the matrix is the lab-frame 2x2 cavity-magnon block. With
    ``rwa=False`` each phonon gets an extra conjugate partner at
    ``-omega_b`` carrying the counter-rotating coupling.
    """
    if picture not in ("loss", "gain"):
        raise ValueError(f"picture must be 'loss' or 'gain', got {picture!r}")
    cav = system.cavity
    kappa_cav = cav.kappa_a if picture == "loss" else -cav.kappa_gain
    if drive is None:
        H = np.array([[cav.omega_a - 1j * kappa_cav, system.g_ma],
                      [system.g_ma, system.magnon.omega - 1j * system.magnon.kappa]], dtype=complex)
        return H

    M = steady_state_magnon_amplitude(drive, system)
    omega_m = driven_magnon_frequency(system, drive)
    n = len(system.mechanics)
    size = 2 + (n if rwa else 2 * n)
    H = np.zeros((size, size), dtype=complex)
    H[0, 0] = (cav.omega_a - drive.omega_d) - 1j * kappa_cav
    H[1, 1] = (omega_m - drive.omega_d) - 1j * system.magnon.kappa
    H[0, 1] = H[1, 0] = system.g_ma
    for j, mb in enumerate(system.mechanics):
        G = math.sqrt(2.0) * mb.g_mb * M
        k = 2 + j
        H[k, k] = mb.omega_b - 1j * mb.kappa_b
        H[1, k] = G
        H[k, 1] = np.conj(G)
        if not rwa:
            c = 2 + n + j
            H[c, c] = -mb.omega_b - 1j * mb.kappa_b
            H[1, c] = G
            H[c, 1] = -np.conj(G)
    return H


@dataclass(frozen=True)
class HybridModeSet:
    """Normal modes of the linearised system, sorted by real part.

    ``eigenvalues`` are in the frame rotating at ``frame_frequency``.
    ``composition[k]`` holds the weights of mode k over (cavity, magnon,
    phonon_1, ..., phonon_N); each row sums to one.
    """

    eigenvalues: np.ndarray
    composition: np.ndarray
    frame_frequency: float
    picture: str = "loss"

    @property
    def lab_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues + self.frame_frequency

    def most_like(self, component: int) -> int:
        """Index of the mode with the largest weight on ``component`` (0 cavity, 1 magnon, 2+j phonon j)."""
        return int(np.argmax(self.composition[:, component]))


def normal_modes(system: SystemParams, drive: DriveParams | None, rwa: bool = True,
                 picture: str = "loss") -> HybridModeSet:
    H = coupled_mode_matrix(system, drive, rwa=rwa, picture=picture)
    vals, vecs = np.linalg.eig(H)
    order = np.lexsort((vals.imag, vals.real))
    vals, vecs = vals[order], vecs[:, order]
    weights = np.abs(vecs.T) ** 2
    n = len(system.mechanics) if drive is not None else 0
    if drive is not None and not rwa:
        # fold each conjugate partner onto its phonon
        weights = np.concatenate([weights[:, :2], weights[:, 2:2 + n] + weights[:, 2 + n:]], axis=1)
    weights = weights / weights.sum(axis=1, keepdims=True)
    return HybridModeSet(vals, weights, 0.0 if drive is None else drive.omega_d, picture)


def polariton_couplings(system: SystemParams, drive: DriveParams, mode: int = 0) -> tuple[complex, complex]:
    """``(G_plus, G_minus)`` for mechanical mode ``mode`` at the drive's Kerr-shifted magnon frequency."""
    theta = mixing_angle(system.cavity.omega_a, driven_magnon_frequency(system, drive), system.g_ma)
    M = steady_state_magnon_amplitude(drive, system)
    return effective_couplings(system.mechanics[mode].g_mb, M, theta)


class DampingEstimate(NamedTuple):
    value: float
    approximate: bool


def cooperativity(G_plus, kappa_plus, kappa_b) -> float:
    """Polariton-mechanics cooperativity ``|G_+|^2 / (kappa_+ kappa_b)``."""
    if not kappa_plus > 0 or not kappa_b > 0:
        raise CooperativityError(
            f"cooperativity undefined for kappa_plus={kappa_plus!r}, kappa_b={kappa_b!r}")
    return abs(G_plus) ** 2 / (kappa_plus * kappa_b)


def effective_mechanical_damping(G_plus, kappa_plus, kappa_b, omega_b=None) -> DampingEstimate:
    """Optically-broadened damping ``(1 + C) kappa_b``.

    Only valid for resolved sidebands and weak coupling; the estimate is
    flagged ``approximate`` when ``|G_+| >= kappa_+ / 2`` or, if ``omega_b``
    is given, ``kappa_+ >= omega_b / 10``.
    """
    value = (1.0 + cooperativity(G_plus, kappa_plus, kappa_b)) * kappa_b
    approximate = abs(G_plus) >= 0.5 * kappa_plus
    if omega_b is not None:
        approximate = approximate or kappa_plus >= 0.1 * omega_b
    return DampingEstimate(value, approximate)


class NMSResult(NamedTuple):
    splitting: float | None
    dips: tuple[float, ...]
    resolved: bool


def _local_minima(y: np.ndarray) -> np.ndarray:
    inner = (y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:])
    return np.flatnonzero(inner) + 1


def _parabolic_vertex(x, y, i):
    # local coordinates: absolute probe frequencies are ~1e10 and would cancel
    h0, h2 = x[i - 1] - x[i], x[i + 1] - x[i]
    d0, d2 = y[i - 1] - y[i], y[i + 1] - y[i]
    a = (d0 * h2 - d2 * h0) / (h0 * h2 * (h0 - h2))
    b = (d0 * h2 * h2 - d2 * h0 * h0) / (h0 * h2 * (h2 - h0))
    if not a > 0:
        return float(x[i])
    return float(x[i] + np.clip(-b / (2 * a), h0, h2))


def find_dips(spectrum: Spectrum, lo: float | None = None, hi: float | None = None,
              count: int | None = None) -> list[tuple[float, float]]:
    """Local minima of |r| in dB as ``(frequency, dB)`` pairs, deepest first.

    Frequencies are refined by a parabola through the three points around each
    grid minimum.
    """
    x = spectrum.frequencies
    y = spectrum.db
    mask = np.ones_like(x, dtype=bool)
    if lo is not None:
        mask &= x >= lo
    if hi is not None:
        mask &= x <= hi
    idx = np.flatnonzero(mask)
    if idx.size < 3:
        return []
    sel = slice(idx[0], idx[-1] + 1)
    xs, ys = x[sel], np.where(np.isfinite(y[sel]), y[sel], -400.0)
    dips = [(_parabolic_vertex(xs, ys, i), float(ys[i])) for i in _local_minima(ys)]
    dips.sort(key=lambda d: d[1])
    return dips[:count] if count is not None else dips


def nms_splitting(spectrum: Spectrum, center: float, half_width: float) -> NMSResult:
    """Separation of the two deepest dips within ``center +/- half_width``.

    Returns an unresolved result when fewer than two dips exist. When the
    polariton linewidth approaches the coupling, the dips repel slightly and
    the splitting overestimates the eigenvalue separation.
    """
    dips = find_dips(spectrum, center - half_width, center + half_width, count=2)
    if len(dips) < 2:
        return NMSResult(None, tuple(d[0] for d in dips), False)
    f1, f2 = sorted(d[0] for d in dips)
    return NMSResult(f2 - f1, (f1, f2), True)


@dataclass(frozen=True)
class RegimeReport:
    G_plus: float
    kappa_plus: float
    kappa_b_eff: float
    cooperativity: float
    regime: str


def classify_regime(G_plus, kappa_plus, kappa_b, *, kappa_b_eff=None, g_ma=None,
                    kappa_a=None, kappa_m=None, omega_b=None) -> RegimeReport:
    """Classify the polariton-mechanics coupling regime.

    Strong coupling needs ``|G_+|`` above both ``kappa_+`` and the effective
    mechanical damping. A measured ``kappa_b_eff`` should be supplied when
    available: the ``(1 + C) kappa_b`` estimate breaks down exactly where the
    distinction matters, so without a measurement the bare ``kappa_b`` is
    compared instead once that estimate is flagged approximate.
    Triple-strong additionally needs ``g_ma > kappa_a, kappa_m``.
    ``unresolved`` means ``kappa_+ >= omega_b / 10`` (sideband not resolved).
    """
    G = abs(G_plus)
    coop = cooperativity(G, kappa_plus, kappa_b)
    estimate = effective_mechanical_damping(G, kappa_plus, kappa_b)
    if kappa_b_eff is None:
        kappa_b_eff = kappa_b if estimate.approximate else estimate.value
    if omega_b is not None and kappa_plus >= 0.1 * omega_b:
        regime = "unresolved"
    elif G > kappa_plus and G > kappa_b_eff:
        regime = "strong"
        if None not in (g_ma, kappa_a, kappa_m) and g_ma > kappa_a and g_ma > kappa_m:
            regime = "triple-strong"
    else:
        regime = "weak"
    return RegimeReport(G, kappa_plus, kappa_b_eff, coop, regime)
