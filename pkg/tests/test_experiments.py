import math
from dataclasses import replace

import numpy as np
import pytest

from cmmkit.cli_io.config import load_config
from cmmkit.core_model import hz, to_hz
from cmmkit.experiments import (ProbeGrid, SweepSpec, run_sweep, sweep_drive_power, sweep_kappa_e,
                                sweep_magnon_detuning, with_values, worker_count)
from cmmkit.magnomech import find_dips, polariton_couplings
from cmmkit.response import ReflectionModel, effective_gain_polaritons, find_reflection_zeros


def _spec(name):
    return load_config(name).sweep_spec()


def _same_record(a, b):
    assert a.value == b.value
    assert np.array_equal(a.grid, b.grid)
    for name in ("kappa_plus", "kappa_minus", "G_plus", "cooperativity", "min_db", "regime"):
        assert getattr(a, name) == getattr(b, name)
    if a.spectrum is not None:
        assert np.array_equal(a.spectrum.values, b.spectrum.values)
    if a.wtd is not None:
        assert np.array_equal(a.wtd, b.wtd)
    if a.zeros is not None:
        assert [z.location for z in a.zeros] == [z.location for z in b.zeros]


@pytest.mark.parametrize("name", ["fig2b", "fig3"])
def test_sweeps_are_deterministic(name, monkeypatch):
    monkeypatch.setenv("CMMKIT_WORKERS", "4")
    first = run_sweep(_spec(name))
    monkeypatch.setenv("CMMKIT_WORKERS", "1")
    second = run_sweep(_spec(name))
    assert first.provenance == second.provenance
    assert len(first.records) == len(first.spec.values)
    for a, b in zip(first.records, second.records):
        _same_record(a, b)


def test_single_point_matches_direct_call():
    spec = with_values(_spec("fig2a"), [hz(1.88e6)])
    rec = sweep_kappa_e(spec).records[0]
    system = spec.system.with_kappa_e(hz(1.88e6))
    direct = ReflectionModel(system).spectrum(spec.probe.resolve(system, None))
    assert np.array_equal(rec.spectrum.values, direct.values)
    assert [z.location for z in rec.zeros] == [z.location for z in find_reflection_zeros(system)]


def test_kappa_e_sweep_narrowest_near_balance():
    result = sweep_kappa_e(_spec("fig2a"))
    assert to_hz(result.summary["narrowest_value"]) == pytest.approx(1.88e6)
    widths = np.array(result.summary["mean_linewidths"])
    assert np.all(np.isfinite(widths))


def test_kappa_e_far_from_balance_follows_gain_picture():
    result = sweep_kappa_e(with_values(_spec("fig2a"), [hz(0.76e6), hz(3.91e6)]))
    for rec in result.records:
        pair = effective_gain_polaritons(rec.system)
        widths = sorted(-z.location.imag for z in rec.zeros)
        assert widths == pytest.approx(sorted([pair.kappa_plus, pair.kappa_minus]), rel=1e-6)
        fitted = sorted(f.kappa for f in rec.linewidths if f is not None)
        assert fitted == pytest.approx(sorted(abs(w) for w in widths), rel=0.05)


def test_red_shift_trades_decay_rates():
    result = sweep_magnon_detuning(_spec("fig2b"))
    kp = np.array([r.kappa_plus for r in result.records])
    km = np.array([r.kappa_minus for r in result.records])
    assert np.all(np.diff(kp) < 0) and np.all(np.diff(km) > 0)
    assert np.allclose(kp + km, kp[0] + km[0], rtol=1e-9)
    s = result.summary
    assert to_hz(s["best_kappa_plus"]) == pytest.approx(140.0, rel=1e-6)
    assert s["dip_depth_db"] <= -80
    # the zero sits below the axis, so the delay peak is negative with magnitude 1/kappa_+
    assert abs(s["delay_at_cpa"].real) >= 1e-3


def test_resonant_detuning_point_matches_kappa_e_record():
    det = sweep_magnon_detuning(with_values(_spec("fig2b"), [0.0])).records[0]
    spec = _spec("fig2a")
    ke = sweep_kappa_e(with_values(spec, [spec.system.cavity.kappa_e])).records[0]
    assert det.system == ke.system
    assert det.kappa_plus == ke.kappa_plus and det.kappa_minus == ke.kappa_minus
    assert [z.location for z in det.zeros] == [z.location for z in ke.zeros]


def test_drive_power_sqrt_law_and_monotone():
    spec = _spec("fig3")
    result = sweep_drive_power(spec)
    G = np.array([r.G_plus for r in result.records])
    P = np.array(spec.values)
    assert np.all(np.diff(G) > 0)
    ref = G[-1] * np.sqrt(10 ** ((P - P[-1]) / 10))
    assert np.allclose(G, ref, rtol=1e-9)
    assert to_hz(G[-1]) == pytest.approx(23.19e3, rel=1e-9)


def test_cooperativity_rises_with_power_at_fixed_kappa_plus():
    spec = _spec("fig3")
    spec = with_values(spec, spec.values, kappa_plus=[hz(1e3)] * len(spec.values))
    C = [r.cooperativity for r in sweep_drive_power(spec).records]
    assert np.all(np.diff(C) > 0)


def test_resolved_splitting_at_low_power():
    rec = sweep_drive_power(_spec("fig3"))[-9.3]
    assert rec.splitting.resolved
    assert to_hz(rec.splitting.splitting) == pytest.approx(2 * to_hz(rec.G_plus), rel=0.03)
    assert rec.regime == "triple-strong"


def test_three_modes_give_three_features():
    rec = run_sweep(_spec("three_modes")).records[0]
    dips = [f for f, _ in find_dips(rec.spectrum)]
    for k, mb in enumerate(rec.system.mechanics):
        sideband = rec.drive.omega_d + mb.omega_b
        near = [f for f in dips if abs(f - sideband) < hz(5e3)]
        assert near, f"no feature at mechanical mode {k}"
    # the locked mode carries the split pair
    assert rec.splitting.resolved
    assert to_hz(rec.splitting.splitting) == pytest.approx(
        2 * to_hz(abs(polariton_couplings(rec.system, rec.drive, 0)[0])), rel=0.05)


def test_anticrossing_centre_and_no_crossing_without_kerr():
    spec = _spec("fig4")
    result = run_sweep(spec)
    s = result.summary
    assert s["min_trace_power"] == pytest.approx(10.32, abs=0.05)
    assert s["deepest_power"] == pytest.approx(10.32, abs=0.05)
    assert s["min_trace_separation"] == pytest.approx(s["min_eigen_separation"], rel=0.05)

    # without Kerr the polariton stays ~1 MHz below the sideband: two parallel traces
    center = spec.drive.omega_d + spec.system.mechanics[0].omega_b
    flat = SweepSpec("anticrossing", spec.system, spec.values[::10], drive=replace(spec.drive, kerr_coefficient=0.0),
                     probe=ProbeGrid(center - hz(3e6), center + hz(0.5e6), 8001), outputs=spec.outputs,
                     window=hz(3e6))
    sep = run_sweep(flat).summary["trace_separation"]
    assert np.all(sep > hz(500e3))
    assert np.ptp(sep) <= 1e-3 * np.mean(sep)


def test_spec_validation():
    base = _spec("fig2a")
    with pytest.raises(ValueError, match="kind"):
        SweepSpec("field", base.system, (1.0,))
    with pytest.raises(ValueError, match="at least one"):
        SweepSpec("kappa_e", base.system, ())
    with pytest.raises(ValueError, match="outputs"):
        SweepSpec("kappa_e", base.system, (1.0,), outputs={"movies"})
    with pytest.raises(ValueError, match="drive"):
        SweepSpec("drive_power", base.system, (0.0,))
    with pytest.raises(ValueError, match="kappa_plus"):
        with_values(_spec("fig3"), [0.0, 1.0], kappa_plus=[1.0])
    with pytest.raises(ValueError):
        ProbeGrid(1.0, 0.0)
    with pytest.raises(ValueError, match="expected"):
        sweep_kappa_e(_spec("fig2b"))


def test_worker_count(monkeypatch):
    monkeypatch.setenv("CMMKIT_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.delenv("CMMKIT_WORKERS")
    assert worker_count() >= 1
    for bad in ("0", "many"):
        monkeypatch.setenv("CMMKIT_WORKERS", bad)
        with pytest.raises(ValueError):
            worker_count()


def test_provenance_tracks_spec():
    a = _spec("fig2a")
    assert a.digest() == _spec("fig2a").digest()
    assert a.digest() != with_values(a, a.values[:-1]).digest()
    assert math.isfinite(run_sweep(with_values(a, a.values[:1])).records[0].min_db)
