"""Spectrum files, report tables and sweep bundles.

Spectrum files are comma-separated with ``#`` comment lines and one header
row. The first column is ``frequency_hz``; the rest are either ``re,im``
(optionally followed by a redundant ``magnitude_db``) or ``magnitude_db``
alone. Spectrum files are written losslessly. Derived report tables use
twelve significant digits and carry units in their column names.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..experiments import PointRecord, SweepResult
from ..response import Spectrum
from .numbers import format_float, format_hz, format_report, hz_to_rad, parse_number, rad_to_hz


class SpectrumFileError(ValueError):
    pass


COMPLEX_HEADERS = (("frequency_hz", "re", "im"), ("frequency_hz", "re", "im", "magnitude_db"))
DB_HEADER = ("frequency_hz", "magnitude_db")


def write_spectrum(spectrum: Spectrum, path: str | Path, include_db: bool = True) -> None:
    """Write ``spectrum`` so that :func:`read_spectrum` returns identical arrays."""
    _write_text(Path(path), spectrum_text(spectrum, include_db))


def spectrum_text(spectrum: Spectrum, include_db: bool = True) -> str:
    lines = [f"# provenance={spectrum.provenance}"]
    if spectrum.has_phase:
        header = COMPLEX_HEADERS[1] if include_db else COMPLEX_HEADERS[0]
        lines.append(",".join(header))
        db = spectrum.db
        for w, r, m in zip(spectrum.frequencies, spectrum.values, db):
            row = [format_hz(w), format_float(r.real), format_float(r.imag)]
            if include_db:
                row.append(format_float(m))
            lines.append(",".join(row))
    else:
        lines.append(",".join(DB_HEADER))
        for w, m in zip(spectrum.frequencies, spectrum.magnitude_db):
            lines.append(f"{format_hz(w)},{format_float(m)}")
    return "\n".join(lines) + "\n"


def read_spectrum(path: str | Path) -> Spectrum:
    """Load a spectrum file; dB-only files give a spectrum without phase."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpectrumFileError(f"{path}: cannot read spectrum file: {exc.strerror}") from None
    header = None
    provenance = "measured"
    freqs, cols = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if "provenance=" in stripped:
                provenance = stripped.split("provenance=", 1)[1].strip() or provenance
            continue
        fields = [f.strip() for f in next(csv.reader([stripped]))]
        if header is None:
            header = tuple(fields)
            if header not in COMPLEX_HEADERS and header != DB_HEADER:
                raise SpectrumFileError(
                    f"{path}:{lineno}: header must be one of 'frequency_hz,re,im', "
                    f"'frequency_hz,re,im,magnitude_db' or 'frequency_hz,magnitude_db', got {stripped!r}")
            continue
        if len(fields) != len(header):
            raise SpectrumFileError(
                f"{path}:{lineno}: expected {len(header)} columns, found {len(fields)}")
        try:
            freqs.append(hz_to_rad(fields[0]))
            cols.append([parse_number(f) for f in fields[1:]])
        except ValueError as exc:
            raise SpectrumFileError(f"{path}:{lineno}: {exc}") from None
        if len(freqs) > 1 and not freqs[-1] > freqs[-2]:
            raise SpectrumFileError(f"{path}:{lineno}: frequency column not strictly increasing")
    if header is None or len(freqs) < 2:
        raise SpectrumFileError(f"{path}: spectrum file needs a header and at least two rows")
    data = np.asarray(cols, dtype=float)
    freqs = np.asarray(freqs)
    try:
        if header == DB_HEADER:
            return Spectrum(freqs, None, magnitude_db=data[:, 0], provenance=provenance)
        return Spectrum(freqs, data[:, 0] + 1j * data[:, 1], provenance=provenance)
    except ValueError as exc:
        raise SpectrumFileError(f"{path}: {exc}") from None


def write_table(path: str | Path, header: list[str], rows) -> None:
    """CSV report with twelve-significant-digit numbers."""
    _write_text(Path(path), table_text(header, rows))


def table_text(header: list[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_report(value) if math.isfinite(value) else str(float(value))
    return str(value)


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"{path}: cannot write: {exc.strerror}") from None


# --- report tables ---------------------------------------------------------


def zeros_rows(zeros, value=None):
    rows = []
    for i, z in enumerate(zeros):
        row = [] if value is None else [value]
        row += [i, rad_to_hz(z.location.real), rad_to_hz(z.location.imag), z.residual, z.converged, z.iterations]
        rows.append(row)
    return rows


ZEROS_HEADER = ["index", "re_hz", "im_hz", "residual", "converged", "iterations"]


def wtd_rows(grid, tau):
    return [[rad_to_hz(w), t.real, t.imag, bool(np.isnan(t.real))] for w, t in zip(grid, tau)]


WTD_HEADER = ["frequency_hz", "re_tau_s", "im_tau_s", "at_cpa"]


def modes_rows(modes, value=None):
    rows = []
    for i, (lam, lab, weights) in enumerate(zip(modes.eigenvalues, modes.lab_eigenvalues, modes.composition)):
        row = [] if value is None else [value]
        row += [i, rad_to_hz(lam.real), rad_to_hz(lam.imag), rad_to_hz(lab.real)] + [float(w) for w in weights]
        rows.append(row)
    return rows


def modes_header(n_mech: int) -> list[str]:
    return (["index", "re_hz", "im_hz", "lab_re_hz", "weight_cavity", "weight_magnon"]
            + [f"weight_phonon{j}" for j in range(n_mech)])


# --- sweep bundles ---------------------------------------------------------


def _value_column(kind: str) -> tuple[str, callable]:
    if kind in ("drive_power", "anticrossing"):
        return "power_dbm", float
    name = "kappa_e_hz" if kind == "kappa_e" else "magnon_detuning_hz"
    return name, rad_to_hz


def _opt_hz(x):
    return None if x is None else rad_to_hz(x)


def write_bundle(result: SweepResult, outdir: str | Path, config_text: str | None = None) -> list[Path]:
    """Write a sweep result as a directory of CSV files; returns the written paths."""
    out = Path(outdir)
    spec = result.spec
    vname, vconv = _value_column(spec.kind)
    written = []

    def table(name, header, rows):
        path = out / name
        write_table(path, header, rows)
        written.append(path)

    rows = []
    for rec in result.records:
        split = rec.splitting.splitting if rec.splitting is not None else None
        damping = rec.kappa_b_eff
        rows.append([vconv(rec.value), _opt_hz(rec.kappa_plus), _opt_hz(rec.kappa_minus), _opt_hz(rec.G_plus),
                     rec.cooperativity, None if damping is None else rad_to_hz(damping.value),
                     None if damping is None else damping.approximate, rec.regime, rec.min_db,
                     _opt_hz(split), rad_to_hz(rec.system.cavity.kappa_e),
                     None if rec.drive is None else rad_to_hz(rec.drive.omega_d)])
    table("summary.csv", [vname, "kappa_plus_hz", "kappa_minus_hz", "G_plus_hz", "cooperativity",
                          "kappa_b_eff_hz", "kappa_b_eff_approximate", "regime", "min_magnitude_db",
                          "nms_splitting_hz", "kappa_e_hz", "omega_d_hz"], rows)

    for i, rec in enumerate(result.records):
        if rec.spectrum is not None:
            path = out / "spectra" / f"point_{i:03d}.csv"
            write_spectrum(rec.spectrum, path)
            written.append(path)
        if rec.wtd is not None:
            table(f"wtd/point_{i:03d}.csv", WTD_HEADER, wtd_rows(rec.grid, rec.wtd))
    if any(r.zeros is not None for r in result.records):
        table("zeros.csv", [vname] + ZEROS_HEADER,
              [row for r in result.records if r.zeros is not None for row in zeros_rows(r.zeros, vconv(r.value))])
    if any(r.modes is not None for r in result.records):
        n = len(spec.system.mechanics) if spec.drive is not None else 0
        table("modes.csv", [vname] + modes_header(n),
              [row for r in result.records if r.modes is not None for row in modes_rows(r.modes, vconv(r.value))])
    if any(r.linewidths is not None for r in result.records):
        lw = []
        for r in result.records:
            for j, fit in enumerate(r.linewidths or ()):
                if fit is None:
                    lw.append([vconv(r.value), j, None, None, None, None])
                else:
                    lw.append([vconv(r.value), j, rad_to_hz(fit.kappa), rad_to_hz(fit.center),
                               rad_to_hz(fit.pole_width), fit.min_db])
        table("linewidths.csv", [vname, "dip", "kappa_hz", "center_hz", "pole_width_hz", "min_magnitude_db"], lw)

    if spec.kind == "anticrossing":
        sm = result.summary
        trows = []
        for rec, (lo, hi), s, e, depth, wp, coop in zip(result.records, sm["traces"], sm["trace_separation"],
                                                       sm["eigen_separation"], sm["depths_db"],
                                                       sm["polariton_frequency"], sm["cooperativity"]):
            trows.append([rec.value, rad_to_hz(lo), rad_to_hz(hi), rad_to_hz(s), rad_to_hz(e), depth,
                          rad_to_hz(wp), coop])
        table("traces.csv", ["power_dbm", "lower_dip_hz", "upper_dip_hz", "trace_separation_hz",
                             "eigen_separation_hz", "min_magnitude_db", "polariton_frequency_hz",
                             "cooperativity"], trows)
        mrows = []
        for rec in result.records:
            if rec.spectrum is not None:
                mrows += [[rec.value, rad_to_hz(w), m] for w, m in zip(rec.spectrum.frequencies, rec.spectrum.db)]
        if mrows:
            table("map.csv", ["power_dbm", "frequency_hz", "magnitude_db"], mrows)

    meta = dict(result.provenance)
    meta["kind"] = spec.kind
    meta["summary"] = _jsonable(result.summary, spec.kind)
    path = out / "provenance.json"
    _write_text(path, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    written.append(path)
    if config_text is not None:
        path = out / "config.yaml"
        _write_text(path, config_text)
        written.append(path)
    return written


def _jsonable(summary: dict, kind: str) -> dict:
    out = {}
    for key, value in summary.items():
        if isinstance(value, np.ndarray) or (isinstance(value, list) and key != "best"):
            continue  # arrays go to their own tables
        if isinstance(value, complex):
            out[key] = {"re": value.real, "im": value.imag}
        elif isinstance(value, (float, np.floating)):
            out[key] = float(value)
        elif isinstance(value, (int, str, bool)) or value is None:
            out[key] = value
        else:
            out[key] = str(value)
    # frequencies in the summary are internal rad/s; add Hz views
    for key in ("best_value", "best_kappa_plus", "cpa_frequency", "narrowest_value",
                "min_trace_separation", "min_eigen_separation"):
        if key in out and isinstance(out[key], float) and not (kind in ("drive_power", "anticrossing")
                                                                and key.endswith("value")):
            out[key + "_hz"] = rad_to_hz(out.pop(key))
    return out


def record_value_hz(rec: PointRecord, kind: str) -> float:
    return _value_column(kind)[1](rec.value)
