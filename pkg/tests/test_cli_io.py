import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import dense_reflection

from cmmkit.cli_io.config import (ConfigError, bundled_configs, dump_config, load_config, parse_config,
                                  to_document)
from cmmkit.cli_io.files import SpectrumFileError, read_spectrum, spectrum_text, write_spectrum
from cmmkit.cli_io.main import main
from cmmkit.cli_io.numbers import format_hz, hz_to_rad, rad_to_hz
from cmmkit.core_model import hz, to_hz
from cmmkit.response import ReflectionModel, Spectrum

BASE = """\
name: test
system:
  cavity: {omega_a_hz: 10.0524e9, kappa_int_hz: 1.12e6, kappa_e_hz: 1.88e6}
  magnon: {omega_m_hz: 10.0524e9, kappa_m_hz: 0.775e6}
  g_ma_hz: 5.83e6
"""

# columns that carry no unit because they are labels or dimensionless
DIMENSIONLESS = {"index", "dip", "re", "im", "residual", "converged", "iterations", "at_cpa", "regime",
                 "cooperativity", "kappa_b_eff_approximate"}
UNIT_SUFFIXES = ("_hz", "_s", "_db", "_dbm")


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(path_or_text):
    text = Path(path_or_text).read_text() if isinstance(path_or_text, Path) else path_or_text
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


# --- numbers ---------------------------------------------------------------


@given(st.floats(0, 1e12, allow_nan=False))
def test_hz_text_round_trips_exactly(f):
    omega = hz_to_rad(repr(f))
    assert hz_to_rad(format_hz(omega)) == omega


def test_hz_conversion_examples():
    assert hz_to_rad("1") == 2 * math.pi
    assert rad_to_hz(hz_to_rad("10.0524e9")) == pytest.approx(10.0524e9, rel=1e-16)
    assert format_hz(hz_to_rad("10.0524e9")) == "10052400000.0"


# --- configuration ---------------------------------------------------------


@pytest.mark.parametrize("name", bundled_configs())
def test_bundled_configs_round_trip(name):
    config = load_config(name)
    text = dump_config(config)
    again = parse_config(text)
    assert again == config
    assert to_document(again) == to_document(config)
    assert dump_config(again) == text


_hz_text = st.floats(1e3, 5e6).map(repr)


@given(_hz_text, _hz_text, _hz_text, _hz_text, st.floats(-5e7, 5e7).map(repr),
       st.booleans(), st.floats(-20, 15).map(repr))
def test_config_round_trip(kint, ke, km, g, det, driven, power):
    text = (f"system:\n  cavity: {{omega_a_hz: 10.05e9, kappa_int_hz: {kint}, kappa_e_hz: {ke}}}\n"
            f"  magnon: {{omega_m_hz: {10.05e9 + float(det)!r}, kappa_m_hz: {km}}}\n  g_ma_hz: {g}\n")
    if driven:
        text += ("  mechanics:\n    - {omega_b_hz: 10.9485e6, kappa_b_hz: 150, g_mb_hz: 1.25e-3}\n"
                 f"drive: {{omega_d_hz: 10.04e9, power_dbm: {power}, power_to_amplitude: 5.6e6}}\n"
                 f"sweep: {{kind: drive_power, values_dbm: [{power}, 10.32], window_hz: 60e3}}\n")
    config = parse_config(text)
    assert config.system.cavity.kappa_e == hz_to_rad(ke)
    again = parse_config(dump_config(config))
    assert again == config
    assert to_document(again) == to_document(config)


def test_unknown_key_names_key_and_line():
    text = BASE.replace("g_ma_hz: 5.83e6", "g_ma_hz: 5.83e6\n  g_mb_hz: 1.0")
    with pytest.raises(ConfigError) as err:
        parse_config(text, source="bad.yaml")
    assert "g_mb_hz" in str(err.value) and "bad.yaml:6:" in str(err.value)


def test_bad_value_names_key_and_line():
    text = BASE.replace("kappa_m_hz: 0.775e6", "kappa_m_hz: fast")
    with pytest.raises(ConfigError) as err:
        parse_config(text, source="bad.yaml")
    assert "kappa_m_hz" in str(err.value) and "bad.yaml:4:" in str(err.value)


def test_missing_omega_a_exits_1(tmp_path, capsys):
    path = tmp_path / "missing.yaml"
    path.write_text(BASE.replace("omega_a_hz: 10.0524e9, ", ""))
    code, out, err = run(["spectrum", "--config", path], capsys)
    assert code == 1 and out == ""
    assert "omega_a_hz" in err and str(path) in err


def test_unit_suffix_is_enforced():
    with pytest.raises(ConfigError, match="g_ma"):
        parse_config(BASE.replace("g_ma_hz", "g_ma"))


def test_missing_config_file_is_a_usage_error(tmp_path, capsys):
    code, _, err = run(["zeros", "--config", tmp_path / "nope.yaml"], capsys)
    assert code == 1 and "nope.yaml" in err


# --- spectrum files --------------------------------------------------------


def test_spectrum_file_round_trip(tmp_path, rng):
    w = np.sort(hz(10e9) + rng.uniform(-1e8, 1e8, 257))
    r = rng.normal(size=w.size) + 1j * rng.normal(size=w.size)
    spec = Spectrum(w, r, provenance="synthetic")
    path = tmp_path / "s.csv"
    write_spectrum(spec, path)
    back = read_spectrum(path)
    assert np.array_equal(back.frequencies, spec.frequencies)
    assert np.array_equal(back.values, spec.values)
    assert back.provenance == "synthetic"


def test_three_column_file_is_complex(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("frequency_hz,re,im\n1e9,0.5,-0.25\n2e9,0.1,0.2\n")
    spec = read_spectrum(path)
    assert spec.has_phase
    assert spec.values[0] == 0.5 - 0.25j
    assert spec.frequencies[1] == hz_to_rad("2e9")


def test_db_only_file(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("frequency_hz,magnitude_db\n1e9,-3\n2e9,-6\n")
    spec = read_spectrum(path)
    assert not spec.has_phase
    assert np.array_equal(spec.db, [-3.0, -6.0])


@pytest.mark.parametrize("body, message", [
    ("frequency_hz,re,im\n1,0,0\n3,0,0\n2,0,0\n", ":4: frequency column not strictly increasing"),
    ("frequency_hz,re,im\n1,0,0\n2,0\n", ":3: expected 3 columns"),
    ("frequency_hz,phase\n1,0\n2,0\n", ":1: header must be"),
    ("frequency_hz,re,im\n1,0,x\n2,0,0\n", ":2: expected a number"),
])
def test_malformed_spectrum_files(tmp_path, body, message):
    path = tmp_path / "s.csv"
    path.write_text(body)
    with pytest.raises(SpectrumFileError) as err:
        read_spectrum(path)
    assert str(path) + message in str(err.value)


def test_db_only_file_rejected_for_wtd(tmp_path, capsys):
    path = tmp_path / "s.csv"
    path.write_text("frequency_hz,magnitude_db\n1e9,-3\n2e9,-6\n3e9,-3\n")
    code, _, err = run(["wtd", "--data", path], capsys)
    assert code == 1 and "phase required" in err


# --- subcommands -----------------------------------------------------------


def test_spectrum_dips_straddle_polaritons(capsys):
    code, out, _ = run(["spectrum", "--config", "paper_fig2_center"], capsys)
    assert code == 0
    header, rows = read_csv(out)
    assert header == ["frequency_hz", "re", "im", "magnitude_db"]
    data = np.array(rows, dtype=float)
    config = load_config("paper_fig2_center")
    w = np.array([hz_to_rad(r[0]) for r in rows])
    oracle = dense_reflection(config.system, w)
    assert np.allclose(data[:, 1] + 1j * data[:, 2], oracle, rtol=0, atol=1e-10)

    f, db = data[:, 0], data[:, 3]
    fa, g = to_hz(config.system.cavity.omega_a), to_hz(config.system.g_ma)
    lower = np.argmin(np.where(f < fa, db, np.inf))
    upper = np.argmin(np.where(f > fa, db, np.inf))
    assert f[lower] == pytest.approx(fa - g, abs=0.05 * g)
    assert f[upper] == pytest.approx(fa + g, abs=0.05 * g)


def test_spectrum_output_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert run(["spectrum", "--config", "fig3", "--points", "201", "--out", path], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_spectrum_file_feeds_wtd(tmp_path, capsys):
    path = tmp_path / "s.csv"
    run(["spectrum", "--config", "fig2c", "--out", path], capsys)
    code, out, _ = run(["wtd", "--data", path], capsys)
    assert code == 0
    header, rows = read_csv(out)
    assert header == ["frequency_hz", "re_tau_s", "im_tau_s", "at_cpa"]
    assert len(rows) == len(read_spectrum(path).frequencies)


def test_zeros_and_modes_tables(capsys):
    code, out, _ = run(["zeros", "--config", "paper_fig2_center"], capsys)
    assert code == 0
    header, rows = read_csv(out)
    assert header[:3] == ["index", "re_hz", "im_hz"]
    assert len(rows) == 2 and all(r[4] == "true" for r in rows)
    assert float(rows[1][1]) - float(rows[0][1]) == pytest.approx(2 * 5.83e6, rel=0.02)

    code, out, _ = run(["modes", "--config", "fig3", "--picture", "gain"], capsys)
    assert code == 0
    header, rows = read_csv(out)
    assert header[-1] == "weight_phonon0" and len(rows) == 3


def test_unconverged_zeros_exit_2(monkeypatch, capsys):
    import cmmkit.response as response

    monkeypatch.setattr(response, "_newton_loop", lambda model, z, roots, scale, max_iter: (z, max_iter, False))
    code, out, err = run(["zeros", "--config", "paper_fig2_center"], capsys)
    assert code == 2
    assert "numerical failure" in err
    assert "false" in out  # the table is still written


def test_singular_fit_exits_2(tmp_path, capsys):
    cfg = tmp_path / "uncoupled.yaml"
    cfg.write_text(BASE.replace("g_ma_hz: 5.83e6", "g_ma_hz: 0").replace("omega_m_hz: 10.0524e9",
                                                                        "omega_m_hz: 10.06e9"))
    data = tmp_path / "s.csv"
    run(["spectrum", "--config", cfg, "--points", "401", "--out", data], capsys)
    report = tmp_path / "fit.json"
    code, out, err = run(["fit", "--config", cfg, "--data", data, "--free", "kappa_e,kappa_m",
                          "--loss", "complex", "--json", report], capsys)
    assert code == 2 and "singular" in err
    assert json.loads(report.read_text())["status"] == "singular"


def test_fit_reports_estimates(tmp_path, capsys):
    data = tmp_path / "s.csv"
    run(["spectrum", "--config", "paper_fig2_center", "--out", data], capsys)
    cfg = tmp_path / "start.yaml"
    cfg.write_text(BASE.replace("kappa_e_hz: 1.88e6", "kappa_e_hz: 1.6e6").replace("g_ma_hz: 5.83e6",
                                                                                  "g_ma_hz: 6.2e6"))
    report = tmp_path / "fit.json"
    code, out, _ = run(["fit", "--config", cfg, "--data", data, "--free", "kappa_e,g_ma", "--json", report],
                       capsys)
    assert code == 0
    est = json.loads(report.read_text())["estimates_hz"]
    assert est["kappa_e"] == pytest.approx(1.88e6, rel=1e-6)
    assert est["g_ma"] == pytest.approx(5.83e6, rel=1e-6)
    assert "estimate_hz" in out


@pytest.mark.parametrize("argv", [
    [], ["spectrum"], ["frobnicate"], ["figures", "fig9"], ["fit", "--config", "paper_fig2_center",
                                                             "--data", "x.csv", "--free", "kappa_e"],
])
def test_usage_errors_exit_1(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 1 and err


def test_unknown_free_parameter(tmp_path, capsys):
    data = tmp_path / "s.csv"
    run(["spectrum", "--config", "paper_fig2_center", "--points", "101", "--out", data], capsys)
    code, _, err = run(["fit", "--config", "paper_fig2_center", "--data", data, "--free", "G_plus"], capsys)
    assert code == 1 and "G_plus" in err


# --- figures and bundles ---------------------------------------------------


def test_fig2c_delay_peak(tmp_path, capsys):
    assert run(["figures", "fig2c", "--out", tmp_path], capsys)[0] == 0
    header, rows = read_csv(tmp_path / "fig2c" / "wtd" / "point_000.csv")
    tau = np.array([float(r[1]) for r in rows])
    peak = np.max(np.abs(tau[np.isfinite(tau)]))
    assert peak == pytest.approx(1.12e-3, rel=0.02)
    assert (tmp_path / "fig2c" / "plot_fig2c.py").exists()


def test_bundles_declare_units_and_are_deterministic(tmp_path, capsys):
    for sub in ("a", "b"):
        assert run(["figures", "fig2b", "fig3", "--out", tmp_path / sub], capsys)[0] == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
        if rel.suffix != ".csv":
            continue
        header, _ = read_csv(tmp_path / "a" / rel)
        for name in header:
            ok = name.endswith(UNIT_SUFFIXES) or name in DIMENSIONLESS or name.startswith("weight_")
            assert ok, f"{rel}: column {name!r}"
    meta = json.loads((tmp_path / "a" / "fig3" / "provenance.json").read_text())
    assert meta["kind"] == "drive_power" and len(meta["spec_hash"]) == 64


def test_sweep_subcommand_writes_bundle(tmp_path, capsys):
    out = tmp_path / "bundle"
    assert run(["sweep", "--config", "three_modes", "--out", out], capsys)[0] == 0
    header, rows = read_csv(out / "summary.csv")
    assert header[0] == "power_dbm" and len(rows) == 1
    assert rows[0][header.index("regime")] == "triple-strong"
    assert parse_config((out / "config.yaml").read_text()) == load_config("three_modes")


def test_spectrum_text_for_model_output():
    config = load_config("paper_fig2_center")
    w = config.system.cavity.omega_a + np.linspace(-hz(1e6), hz(1e6), 5)
    text = spectrum_text(ReflectionModel(config.system).spectrum(w))
    assert text.splitlines()[1] == "frequency_hz,re,im,magnitude_db"
