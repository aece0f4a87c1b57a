"""Declarative parameter sweeps that reproduce the reflection-spectroscopy figures.

A :class:`SweepSpec` names one swept quantity, its values, a probe grid and
the outputs wanted at every point. Each point is evaluated by a pure
function of the spec and the value, so points run in a thread pool (size
from ``CMMKIT_WORKERS``, default the CPU count) and results are assembled in
spec order. Identical specs give bit-identical records.

Swept values are in internal units: rad/s for ``kappa_e`` and
``magnon_detuning`` (``omega_m - omega_a``), dBm for ``drive_power`` and
``anticrossing``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .core_model import DriveParams, SystemParams, driven_magnon_frequency
from .fitting import DipFit, NoDipError, extract_linewidth
from .magnomech import (
    CooperativityError,
    DampingEstimate,
    HybridModeSet,
    NMSResult,
    classify_regime,
    cooperativity,
    effective_mechanical_damping,
    find_dips,
    nms_splitting,
    normal_modes,
    polariton_couplings,
)
from .response import (
    ComplexZero,
    ReflectionModel,
    Spectrum,
    effective_gain_polaritons,
    find_reflection_zeros,
    polariton_zero,
    tune_upper_polariton,
    wigner_time_delay,
    with_sideband_lock,
)

SWEEP_KINDS = ("kappa_e", "magnon_detuning", "drive_power", "anticrossing")
OUTPUTS = frozenset({"spectra", "wtd", "zeros", "eigenvalues", "splitting", "kappa_b_eff",
                     "cooperativity", "linewidth"})
ANCHORS = ("absolute", "cavity", "sideband")


@dataclass(frozen=True)
class ProbeGrid:
    """Uniform probe grid, optionally refined around predicted reflection zeros.

    ``start``/``stop`` are offsets (rad/s) from the anchor: 0 for
    ``"absolute"``, ``omega_a`` for ``"cavity"``, ``omega_d + omega_b`` of the
    target mechanical mode for ``"sideband"``.
    """

    start: float
    stop: float
    points: int = 2001
    anchor: str = "absolute"
    refine: bool = True

    def __post_init__(self):
        if self.anchor not in ANCHORS:
            raise ValueError(f"probe anchor must be one of {ANCHORS}, got {self.anchor!r}")
        if not self.stop > self.start:
            raise ValueError("probe stop must exceed start")
        if self.points < 3:
            raise ValueError("probe grid needs at least three points")

    def resolve(self, system: SystemParams, drive: DriveParams | None, mode: int = 0) -> np.ndarray:
        if self.anchor == "absolute":
            center = 0.0
        elif self.anchor == "cavity":
            center = system.cavity.omega_a
        else:
            if drive is None or not system.mechanics:
                raise ValueError("a sideband-anchored grid needs a drive and a mechanical mode")
            center = drive.omega_d + system.mechanics[mode].omega_b
        lo, hi = center + self.start, center + self.stop
        grid = np.linspace(lo, hi, self.points)
        if self.refine:
            extra = []
            for z in find_reflection_zeros(system, drive=drive):
                width = abs(z.location.imag)
                for k in (-3.0, -1.0, -0.3, 0.0, 0.3, 1.0, 3.0):
                    extra.append(z.location.real + k * width)
            extra = np.asarray(extra)
            grid = np.unique(np.concatenate([grid, extra[(extra > lo) & (extra < hi)]]))
        return grid


DEFAULT_GRIDS = {
    "kappa_e": ProbeGrid(-2 * math.pi * 15e6, 2 * math.pi * 15e6, anchor="cavity"),
    "magnon_detuning": ProbeGrid(-2 * math.pi * 15e6, 2 * math.pi * 15e6, anchor="cavity"),
    "drive_power": ProbeGrid(-2 * math.pi * 60e3, 2 * math.pi * 60e3, anchor="sideband"),
    "anticrossing": ProbeGrid(-2 * math.pi * 150e3, 2 * math.pi * 150e3, anchor="absolute"),
}


@dataclass(frozen=True)
class SweepSpec:
    """One swept quantity over a base operating point.

    ``kappa_plus`` optionally pins the upper-polariton zero's decay rate per
    point (tuned through ``kappa_e``), mirroring per-row drift in
    measurements. ``sideband_lock`` re-centres the drive so the anti-Stokes
    sideband of ``target_mode`` sits on the upper polariton. ``window`` is the
    half-width (rad/s) used for dip and splitting analysis.
    """

    kind: str
    system: SystemParams
    values: tuple
    drive: DriveParams | None = None
    probe: ProbeGrid | None = None
    outputs: frozenset = frozenset({"spectra", "zeros"})
    kappa_plus: tuple | None = None
    sideband_lock: bool = False
    target_mode: int = 0
    window: float | None = None

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ValueError(f"unknown sweep kind {self.kind!r}; choose from {SWEEP_KINDS}")
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ValueError("sweep needs at least one value")
        object.__setattr__(self, "values", values)
        outputs = frozenset(self.outputs)
        unknown = outputs - OUTPUTS
        if unknown:
            raise ValueError(f"unknown outputs {sorted(unknown)}; choose from {sorted(OUTPUTS)}")
        object.__setattr__(self, "outputs", outputs)
        if self.kind in ("drive_power", "anticrossing"):
            if self.drive is None:
                raise ValueError(f"a {self.kind} sweep needs a drive")
            if not self.system.mechanics:
                raise ValueError(f"a {self.kind} sweep needs at least one mechanical mode")
            if not 0 <= self.target_mode < len(self.system.mechanics):
                raise ValueError(f"target_mode {self.target_mode} out of range")
        if self.kappa_plus is not None:
            kp = tuple(float(v) for v in self.kappa_plus)
            if len(kp) != len(values):
                raise ValueError("kappa_plus overrides must match the number of swept values")
            object.__setattr__(self, "kappa_plus", kp)
        if self.probe is None:
            object.__setattr__(self, "probe", DEFAULT_GRIDS[self.kind])

    @property
    def analysis_window(self) -> float:
        if self.window is not None:
            return self.window
        return 0.5 * (self.probe.stop - self.probe.start)

    def digest(self) -> str:
        """SHA-256 of a canonical JSON rendering of the spec."""
        doc = asdict(self)
        doc["outputs"] = sorted(self.outputs)
        text = json.dumps(doc, sort_keys=True, default=repr, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class PointRecord:
    value: float
    system: SystemParams
    drive: DriveParams | None
    grid: np.ndarray
    spectrum: Spectrum | None = None
    wtd: np.ndarray | None = None
    zeros: list[ComplexZero] | None = None
    modes: HybridModeSet | None = None
    splitting: NMSResult | None = None
    linewidths: list[DipFit | None] | None = None
    dips: list[tuple[float, float]] | None = None
    G_plus: float | None = None
    kappa_plus: float | None = None
    kappa_minus: float | None = None
    kappa_b_eff: DampingEstimate | None = None
    cooperativity: float | None = None
    regime: str | None = None
    min_db: float | None = None


@dataclass
class SweepResult:
    spec: SweepSpec
    records: list[PointRecord]
    provenance: dict
    summary: dict = field(default_factory=dict)

    def __getitem__(self, value) -> PointRecord:
        for rec in self.records:
            if rec.value == value:
                return rec
        raise KeyError(value)


def worker_count() -> int:
    env = os.environ.get("CMMKIT_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"CMMKIT_WORKERS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"CMMKIT_WORKERS must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


def _run(spec: SweepSpec, point_fn) -> list[PointRecord]:
    items = list(enumerate(spec.values))
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [point_fn(i, v) for i, v in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda iv: point_fn(*iv), items))


def _provenance(spec: SweepSpec) -> dict:
    return {"spec_hash": spec.digest(), "code_version": __version__}


def _min_db(spectrum: Spectrum) -> float:
    return float(np.min(spectrum.db))


def _pin_kappa_plus(system: SystemParams, drive: DriveParams | None, kappa_plus: float) -> SystemParams:
    """Tune kappa_e so the (Kerr-shifted) upper polariton zero decays at ``kappa_plus``."""
    omega_m = driven_magnon_frequency(system, drive)
    shifted = system.with_magnon_frequency(omega_m)
    tuned = tune_upper_polariton(shifted, kappa_plus, via="kappa_e")
    return system.with_kappa_e(tuned.cavity.kappa_e)


def _linewidths(spectrum: Spectrum, zeros: list[ComplexZero]) -> list[DipFit | None]:
    out = []
    lo, hi = spectrum.frequencies[0], spectrum.frequencies[-1]
    for z in zeros:
        if not lo <= z.location.real <= hi:
            out.append(None)  # dip lies outside the probe window
            continue
        try:
            out.append(extract_linewidth(spectrum, z.location.real))
        except NoDipError:
            out.append(None)
    return out


def _cavity_magnon_point(spec: SweepSpec, system: SystemParams, value: float) -> PointRecord:
    grid = spec.probe.resolve(system, None)
    model = ReflectionModel(system)
    rec = PointRecord(value, system, None, grid)
    spectrum = model.spectrum(grid)
    rec.min_db = _min_db(spectrum)
    pair = effective_gain_polaritons(system)
    rec.kappa_plus, rec.kappa_minus = pair.kappa_plus, pair.kappa_minus
    zeros = find_reflection_zeros(system)
    if "spectra" in spec.outputs:
        rec.spectrum = spectrum
    if "zeros" in spec.outputs:
        rec.zeros = zeros
    if "eigenvalues" in spec.outputs:
        rec.modes = normal_modes(system, None, picture="gain")
    if "wtd" in spec.outputs:
        rec.wtd = wigner_time_delay(model, grid)
    if "linewidth" in spec.outputs:
        rec.linewidths = _linewidths(spectrum, zeros)
    return rec


def sweep_kappa_e(spec: SweepSpec) -> SweepResult:
    """Spectra of the undriven cavity-magnon system versus port coupling.

    The summary names the value with the narrowest measured dips (mean of
    the two extracted half-linewidths) when linewidths are requested.
    """
    _expect(spec, "kappa_e")

    def point(i, value):
        return _cavity_magnon_point(spec, spec.system.with_kappa_e(value), value)

    records = _run(spec, point)
    summary = {}
    if "linewidth" in spec.outputs:
        widths = [_mean_width(r.linewidths) for r in records]
        best = int(np.nanargmin(widths))
        summary = {"narrowest_value": records[best].value, "mean_linewidths": widths}
    return SweepResult(spec, records, _provenance(spec), summary)


def sweep_magnon_detuning(spec: SweepSpec) -> SweepResult:
    """Spectra and delays versus magnon detuning ``omega_m - omega_a``.

    The summary reports the point with the smallest upper-polariton zero
    decay, with its dip depth and the delay at that zero's frequency.
    """
    _expect(spec, "magnon_detuning")
    omega_a = spec.system.cavity.omega_a

    def point(i, value):
        return _cavity_magnon_point(spec, spec.system.with_magnon_frequency(omega_a + value), value)

    records = _run(spec, point)
    best = min(records, key=lambda r: abs(r.kappa_plus))
    z = polariton_zero(best.system)
    tau = wigner_time_delay(ReflectionModel(best.system), z.real)
    summary = {
        "best_value": best.value,
        "best_kappa_plus": best.kappa_plus,
        "cpa_frequency": z.real,
        "dip_depth_db": float(20 * np.log10(abs(ReflectionModel(best.system)(z.real)))),
        "delay_at_cpa": tau,
    }
    return SweepResult(spec, records, _provenance(spec), summary)


def _driven_point(spec: SweepSpec, i: int, power: float, lock: bool) -> PointRecord:
    system, drive = spec.system, spec.drive.with_power(power)
    if spec.kappa_plus is not None:
        system = _pin_kappa_plus(system, drive, spec.kappa_plus[i])
    if lock:
        drive = with_sideband_lock(system, drive, spec.target_mode)
    grid = spec.probe.resolve(system, drive, spec.target_mode)
    model = ReflectionModel(system, drive)
    spectrum = model.spectrum(grid)
    rec = PointRecord(power, system, drive, grid)
    rec.min_db = _min_db(spectrum)

    z_plus = polariton_zero(system, "+", drive)
    rec.kappa_plus = -z_plus.imag
    rec.kappa_minus = -polariton_zero(system, "-", drive).imag
    rec.G_plus = abs(polariton_couplings(system, drive, spec.target_mode)[0])
    kappa_b = system.mechanics[spec.target_mode].kappa_b
    omega_b = system.mechanics[spec.target_mode].omega_b
    # linewidth of the absorbing polariton is the zero's distance from the axis
    kp = abs(rec.kappa_plus)
    try:
        rec.cooperativity = cooperativity(rec.G_plus, kp, kappa_b)
        rec.kappa_b_eff = effective_mechanical_damping(rec.G_plus, kp, kappa_b, omega_b)
        cav = system.cavity
        rec.regime = classify_regime(rec.G_plus, kp, kappa_b, g_ma=system.g_ma, kappa_a=cav.kappa_a,
                                     kappa_m=system.magnon.kappa, omega_b=omega_b).regime
    except CooperativityError:
        pass

    center = drive.omega_d + omega_b
    window = spec.analysis_window
    if "spectra" in spec.outputs:
        rec.spectrum = spectrum
    if "zeros" in spec.outputs:
        rec.zeros = find_reflection_zeros(system, drive=drive)
    if "eigenvalues" in spec.outputs:
        rec.modes = normal_modes(system, drive, picture="gain")
    if "wtd" in spec.outputs:
        rec.wtd = wigner_time_delay(model, grid)
    if "splitting" in spec.outputs:
        rec.splitting = nms_splitting(spectrum, center, window)
    rec.dips = find_dips(spectrum, center - window, center + window, count=2)
    if "linewidth" in spec.outputs:
        zeros = rec.zeros if rec.zeros is not None else find_reflection_zeros(system, drive=drive)
        near = [z for z in zeros if abs(z.location.real - center) <= window]
        rec.linewidths = _linewidths(spectrum, near)
    return rec


def sweep_drive_power(spec: SweepSpec) -> SweepResult:
    """Sideband spectra versus drive power, with G_+, C and the sideband-cooling damping estimate."""
    _expect(spec, "drive_power")
    records = _run(spec, lambda i, p: _driven_point(spec, i, p, spec.sideband_lock))
    return SweepResult(spec, records, _provenance(spec), {})


def _hybrid_pair(modes: HybridModeSet, center: float) -> tuple[complex, complex]:
    """The two eigenvalues (lab frame) closest to ``center``."""
    lab = modes.lab_eigenvalues
    idx = np.argsort(np.abs(lab.real - center))[:2]
    a, b = sorted(lab[idx], key=lambda z: z.real)
    return a, b


def anticrossing_map(spec: SweepSpec) -> SweepResult:
    """Power x probe-frequency reflection map around a fixed drive.

    The Kerr shift walks the upper polariton through the anti-Stokes
    sideband ``omega_d + omega_b``. Per power the two dips nearest the
    sideband form the traces; their closest approach is compared with the
    real-part separation of the two hybrid reflection zeros (gain-picture
    normal modes). The summary also carries the cooperativity versus the
    polariton frequency.
    """
    _expect(spec, "anticrossing")
    mb = spec.system.mechanics[spec.target_mode]
    center = spec.drive.omega_d + mb.omega_b

    def point(i, power):
        rec = _driven_point(spec, i, power, False)
        if rec.modes is None:
            rec.modes = normal_modes(rec.system, rec.drive, picture="gain")
        return rec

    records = _run(spec, point)
    traces, sep, eig_sep, polariton = [], [], [], []
    for rec in records:
        pair = sorted(d[0] for d in rec.dips) if len(rec.dips) == 2 else [math.nan, math.nan]
        traces.append(pair)
        sep.append(pair[1] - pair[0])
        lo, hi = _hybrid_pair(rec.modes, center)
        eig_sep.append(hi.real - lo.real)
        polariton.append(polariton_zero(rec.system, "+", rec.drive).real)
    sep = np.asarray(sep)
    eig_sep = np.asarray(eig_sep)
    # no resolved pair anywhere (e.g. the polariton never reaches the sideband)
    i_trace = int(np.nanargmin(sep)) if np.any(np.isfinite(sep)) else None
    i_eig = int(np.argmin(eig_sep))
    depths = np.array([r.min_db for r in records])
    summary = {
        "traces": np.asarray(traces),
        "trace_separation": sep,
        "eigen_separation": eig_sep,
        "min_trace_separation": math.nan if i_trace is None else float(sep[i_trace]),
        "min_trace_power": None if i_trace is None else records[i_trace].value,
        "min_eigen_separation": float(eig_sep[i_eig]),
        "min_eigen_power": records[i_eig].value,
        "deepest_power": records[int(np.argmin(depths))].value,
        "depths_db": depths,
        "polariton_frequency": np.asarray(polariton),
        "cooperativity": np.array([np.nan if r.cooperativity is None else r.cooperativity for r in records]),
    }
    return SweepResult(spec, records, _provenance(spec), summary)


SWEEPS = {
    "kappa_e": sweep_kappa_e,
    "magnon_detuning": sweep_magnon_detuning,
    "drive_power": sweep_drive_power,
    "anticrossing": anticrossing_map,
}


def run_sweep(spec: SweepSpec) -> SweepResult:
    return SWEEPS[spec.kind](spec)


def _expect(spec: SweepSpec, kind: str):
    if spec.kind != kind:
        raise ValueError(f"expected a {kind} sweep, got {spec.kind!r}")


def _mean_width(fits) -> float:
    widths = [f.kappa for f in fits or () if f is not None]
    return float(np.mean(widths)) if widths else math.nan


def with_values(spec: SweepSpec, values, kappa_plus=None) -> SweepSpec:
    """Copy of ``spec`` with new swept values (and matching overrides)."""
    return replace(spec, values=tuple(values), kappa_plus=kappa_plus)
