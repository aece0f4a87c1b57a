"""YAML configuration documents.

Layout (all frequencies in Hz, powers in dBm, fields in tesla; the unit is
carried by the key suffix)::

    system:
      cavity: {omega_a_hz: 10.0524e9, kappa_int_hz: 1.12e6, kappa_e_hz: 1.88e6}
      magnon: {omega_m_hz: 10.0524e9, kappa_m_hz: 0.775e6}   # or field_t instead of omega_m_hz
      g_ma_hz: 5.83e6
      mechanics:
        - {omega_b_hz: 10.9485e6, kappa_b_hz: 150, g_mb_hz: 1.25e-3}
    drive:            # optional
      omega_d_hz: ...
      power_dbm: ...
      power_to_amplitude: ...
      kerr_hz: 0      # optional, shift per |M|^2
    probe:            # optional
      start_hz: -15e6
      stop_hz: 15e6
      points: 2001
      anchor: cavity  # absolute | cavity | sideband
      refine: true
    sweep:            # optional
      kind: kappa_e   # kappa_e | magnon_detuning | drive_power | anticrossing
      values_hz: [...]          # values_dbm for the power sweeps
      outputs: [spectra, zeros]
      kappa_plus_hz: [...]      # optional per-point overrides
      sideband_lock: false
      target_mode: 0
      window_hz: 60e3

Unknown keys are rejected. Errors carry the line of the offending key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..core_model import (
    CavityParams,
    DriveParams,
    MechanicalModeParams,
    ModeParams,
    SystemParams,
    magnon_frequency_from_field,
)
from ..experiments import ANCHORS, OUTPUTS, SWEEP_KINDS, ProbeGrid, SweepSpec
from .numbers import format_float, format_hz, hz_to_rad, parse_number

BUNDLED_DIR = Path(__file__).resolve().parent.parent / "configs"


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and, when known, its line."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = source or "<config>"
        prefix = f"{where}:{line}: " if line is not None else f"{where}: "
        super().__init__(prefix + message)
        self.line = line


class _Map(dict):
    """Mapping that remembers the source line of itself and each key."""

    line: int | None = None

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.lines: dict = {}


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _Map()
    out.line = node.start_mark.line + 1
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", key_node.start_mark.line + 1)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = key_node.start_mark.line + 1
    return out


def _keep_number_text(loader, node):
    # keep the literal so Hz values convert without an intermediate rounding
    return _NumberText(node.value, node.start_mark.line + 1)


class _NumberText(str):
    def __new__(cls, text, line):
        obj = super().__new__(cls, text)
        obj.line = line
        return obj


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)
_Loader.add_constructor("tag:yaml.org,2002:float", _keep_number_text)
_Loader.add_constructor("tag:yaml.org,2002:int", _keep_number_text)


@dataclass(frozen=True)
class SweepSection:
    kind: str
    values: tuple
    outputs: tuple = ("spectra", "zeros")
    kappa_plus: tuple | None = None
    sideband_lock: bool = False
    target_mode: int = 0
    window: float | None = None


@dataclass(frozen=True)
class Config:
    """Parsed configuration in internal units (rad/s, dBm, tesla)."""

    system: SystemParams
    drive: DriveParams | None = None
    probe: ProbeGrid | None = None
    sweep: SweepSection | None = None
    name: str | None = None
    magnon_field: float | None = None  # set when the magnon was given as a bias field
    # optional keys present in the source, so serialisation mirrors it
    explicit: frozenset = field(default_factory=frozenset)

    def sweep_spec(self) -> SweepSpec:
        if self.sweep is None:
            raise ConfigError("configuration has no sweep section")
        sw = self.sweep
        return SweepSpec(kind=sw.kind, system=self.system, values=sw.values, drive=self.drive,
                         probe=self.probe, outputs=frozenset(sw.outputs), kappa_plus=sw.kappa_plus,
                         sideband_lock=sw.sideband_lock, target_mode=sw.target_mode, window=sw.window)


# --- validation helpers ----------------------------------------------------


class _Parser:
    def __init__(self, source: str | None):
        self.source = source
        self.explicit: set[str] = set()

    def fail(self, message, line=None):
        raise ConfigError(message, line, self.source)

    def section(self, parent: _Map, key: str, path: str, required=True):
        if key not in parent:
            if required:
                self.fail(f"missing required key {key!r} in {path or 'document'}", parent.line)
            return None
        value = parent[key]
        if not isinstance(value, _Map):
            self.fail(f"{_join(path, key)} must be a mapping", parent.lines.get(key))
        return value

    def check_keys(self, mapping: _Map, allowed, path: str):
        for key in mapping:
            if key not in allowed:
                hint = ""
                for suffix in ("_hz", "_dbm", "_t"):
                    if f"{key}{suffix}" in allowed:
                        hint = f" (units go in the key: did you mean {key + suffix!r}?)"
                self.fail(f"unknown key {key!r} in {path or 'document'}{hint}", mapping.lines.get(key))

    def number(self, mapping: _Map, key: str, path: str, required=True, default=None):
        if key not in mapping:
            if required:
                self.fail(f"missing required key {key!r} in {path}", mapping.line)
            return default
        self.explicit.add(_join(path, key))
        raw = mapping[key]
        line = mapping.lines.get(key)
        try:
            if key.endswith("_hz"):
                value = hz_to_rad(raw)
            else:
                value = parse_number(raw)
        except ValueError:
            self.fail(f"{_join(path, key)} must be a number, got {raw!r}", line)
        if math.isnan(value):
            self.fail(f"{_join(path, key)} must not be NaN", line)
        return value

    def number_list(self, mapping: _Map, key: str, path: str, required=True):
        if key not in mapping:
            if required:
                self.fail(f"missing required key {key!r} in {path}", mapping.line)
            return None
        self.explicit.add(_join(path, key))
        raw = mapping[key]
        line = mapping.lines.get(key)
        if not isinstance(raw, list) or not raw:
            self.fail(f"{_join(path, key)} must be a non-empty list", line)
        convert = hz_to_rad if key.endswith("_hz") else parse_number
        out = []
        for item in raw:
            try:
                out.append(convert(item))
            except ValueError:
                self.fail(f"{_join(path, key)} entry {item!r} is not a number", getattr(item, "line", line))
        return tuple(out)

    def flag(self, mapping, key, path, default):
        if key not in mapping:
            return default
        self.explicit.add(_join(path, key))
        value = mapping[key]
        if not isinstance(value, bool):
            self.fail(f"{_join(path, key)} must be true or false", mapping.lines.get(key))
        return value

    def integer(self, mapping, key, path, default):
        if key not in mapping:
            return default
        self.explicit.add(_join(path, key))
        raw = mapping[key]
        try:
            value = int(str(raw))
        except ValueError:
            self.fail(f"{_join(path, key)} must be an integer, got {raw!r}", mapping.lines.get(key))
        return value

    def choice(self, mapping, key, path, options, default=None, required=False):
        if key not in mapping:
            if required:
                self.fail(f"missing required key {key!r} in {path}", mapping.line)
            return default
        self.explicit.add(_join(path, key))
        value = mapping[key]
        if value not in options:
            self.fail(f"{_join(path, key)} must be one of {list(options)}, got {value!r}",
                      mapping.lines.get(key))
        return value

    def wrap(self, mapping, key, fn):
        """Run a constructor and re-raise its ValueError at ``key``'s line."""
        try:
            return fn()
        except ConfigError:
            raise
        except ValueError as exc:
            self.fail(str(exc), mapping.lines.get(key, mapping.line) if key else mapping.line)


def _join(path, key):
    return f"{path}.{key}" if path else key


# --- parsing ---------------------------------------------------------------


def parse_config(text: str, source: str | None = None) -> Config:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.line, source) from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None, source) from None
    p = _Parser(source)
    if not isinstance(doc, _Map):
        p.fail("configuration must be a mapping with a 'system' section", 1)
    p.check_keys(doc, ("name", "system", "drive", "probe", "sweep"), "")

    name = None
    if "name" in doc:
        name = str(doc["name"])
        p.explicit.add("name")

    system, magnon_field = _parse_system(p, p.section(doc, "system", ""))
    drive = _parse_drive(p, p.section(doc, "drive", "", required=False))
    probe = _parse_probe(p, p.section(doc, "probe", "", required=False))
    sweep = _parse_sweep(p, p.section(doc, "sweep", "", required=False), system, drive)
    config = Config(system, drive, probe, sweep, name, magnon_field, frozenset(p.explicit))
    if sweep is not None:
        sweep_map = doc["sweep"]
        p.wrap(sweep_map, None, config.sweep_spec)
    return config


def _parse_system(p: _Parser, sysmap: _Map):
    p.check_keys(sysmap, ("cavity", "magnon", "g_ma_hz", "mechanics"), "system")
    cav = p.section(sysmap, "cavity", "system")
    p.check_keys(cav, ("omega_a_hz", "kappa_int_hz", "kappa_e_hz"), "system.cavity")
    cavity = p.wrap(cav, None, lambda: CavityParams(
        p.number(cav, "omega_a_hz", "system.cavity"),
        p.number(cav, "kappa_int_hz", "system.cavity"),
        p.number(cav, "kappa_e_hz", "system.cavity")))

    mag = p.section(sysmap, "magnon", "system")
    p.check_keys(mag, ("omega_m_hz", "field_t", "kappa_m_hz"), "system.magnon")
    has_freq, has_field = "omega_m_hz" in mag, "field_t" in mag
    if has_freq == has_field:
        p.fail("system.magnon needs exactly one of 'omega_m_hz' or 'field_t'", mag.line)
    magnon_field = None
    if has_field:
        magnon_field = p.number(mag, "field_t", "system.magnon")
        omega_m = p.wrap(mag, "field_t", lambda: magnon_frequency_from_field(magnon_field))
    else:
        omega_m = p.number(mag, "omega_m_hz", "system.magnon")
    kappa_m = p.number(mag, "kappa_m_hz", "system.magnon")
    magnon = p.wrap(mag, None, lambda: ModeParams(omega_m, kappa_m))

    g_ma = p.number(sysmap, "g_ma_hz", "system")
    mechanics = []
    if "mechanics" in sysmap:
        p.explicit.add("system.mechanics")
        items = sysmap["mechanics"]
        if not isinstance(items, list):
            p.fail("system.mechanics must be a list", sysmap.lines.get("mechanics"))
        for i, item in enumerate(items):
            path = f"system.mechanics[{i}]"
            if not isinstance(item, _Map):
                p.fail(f"{path} must be a mapping", sysmap.lines.get("mechanics"))
            p.check_keys(item, ("omega_b_hz", "kappa_b_hz", "g_mb_hz"), path)
            mechanics.append(p.wrap(item, None, lambda: MechanicalModeParams(
                p.number(item, "omega_b_hz", path),
                p.number(item, "kappa_b_hz", path),
                p.number(item, "g_mb_hz", path))))
    system = p.wrap(sysmap, "g_ma_hz", lambda: SystemParams(cavity, magnon, g_ma, tuple(mechanics)))
    return system, magnon_field


def _parse_drive(p: _Parser, dmap: _Map | None):
    if dmap is None:
        return None
    p.explicit.add("drive")
    p.check_keys(dmap, ("omega_d_hz", "power_dbm", "power_to_amplitude", "kerr_hz"), "drive")
    return p.wrap(dmap, None, lambda: DriveParams(
        p.number(dmap, "omega_d_hz", "drive"),
        p.number(dmap, "power_dbm", "drive"),
        p.number(dmap, "power_to_amplitude", "drive"),
        p.number(dmap, "kerr_hz", "drive", required=False, default=0.0)))


def _parse_probe(p: _Parser, pmap: _Map | None):
    if pmap is None:
        return None
    p.explicit.add("probe")
    p.check_keys(pmap, ("start_hz", "stop_hz", "points", "anchor", "refine"), "probe")
    return p.wrap(pmap, None, lambda: ProbeGrid(
        p.number(pmap, "start_hz", "probe"),
        p.number(pmap, "stop_hz", "probe"),
        p.integer(pmap, "points", "probe", 2001),
        p.choice(pmap, "anchor", "probe", ANCHORS, "absolute"),
        p.flag(pmap, "refine", "probe", True)))


def _parse_sweep(p: _Parser, smap: _Map | None, system, drive):
    if smap is None:
        return None
    p.explicit.add("sweep")
    p.check_keys(smap, ("kind", "values_hz", "values_dbm", "outputs", "kappa_plus_hz",
                        "sideband_lock", "target_mode", "window_hz"), "sweep")
    kind = p.choice(smap, "kind", "sweep", SWEEP_KINDS, required=True)
    wanted = "values_dbm" if kind in ("drive_power", "anticrossing") else "values_hz"
    other = "values_hz" if wanted == "values_dbm" else "values_dbm"
    if other in smap:
        p.fail(f"a {kind} sweep takes {wanted!r}, not {other!r}", smap.lines.get(other))
    values = p.number_list(smap, wanted, "sweep")
    outputs = ("spectra", "zeros")
    if "outputs" in smap:
        p.explicit.add("sweep.outputs")
        raw = smap["outputs"]
        if not isinstance(raw, list) or not all(isinstance(o, str) for o in raw):
            p.fail("sweep.outputs must be a list of names", smap.lines.get("outputs"))
        bad = [o for o in raw if o not in OUTPUTS]
        if bad:
            p.fail(f"unknown sweep output {bad[0]!r}; choose from {sorted(OUTPUTS)}", smap.lines.get("outputs"))
        outputs = tuple(raw)
    return SweepSection(
        kind=kind,
        values=values,
        outputs=outputs,
        kappa_plus=p.number_list(smap, "kappa_plus_hz", "sweep", required=False),
        sideband_lock=p.flag(smap, "sideband_lock", "sweep", False),
        target_mode=p.integer(smap, "target_mode", "sweep", 0),
        window=p.number(smap, "window_hz", "sweep", required=False),
    )


def load_config(ref: str | Path) -> Config:
    """Load a config from a path, or by name from the bundled set."""
    path = resolve_config_path(ref)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return parse_config(text, source=str(path))


def resolve_config_path(ref: str | Path) -> Path:
    path = Path(ref)
    if path.exists():
        return path
    bundled = BUNDLED_DIR / f"{ref}.yaml"
    if bundled.exists():
        return bundled
    names = ", ".join(bundled_configs())
    raise ConfigError(f"no such config file or bundled config (bundled: {names})", source=str(ref))


def bundled_configs() -> list[str]:
    return sorted(p.stem for p in BUNDLED_DIR.glob("*.yaml"))


# --- serialisation ---------------------------------------------------------


class _HzText(str):
    """Decimal text emitted as a plain (unquoted) YAML scalar."""


class _Dumper(yaml.SafeDumper):
    pass


_Dumper.add_representer(_HzText, lambda d, v: d.represent_scalar("tag:yaml.org,2002:float", str(v)))


def _yaml_number(text: str) -> _HzText:
    if text in ("inf", "-inf", "nan"):
        return _HzText({"inf": ".inf", "-inf": "-.inf", "nan": ".nan"}[text])
    if "." not in text and "e" in text:
        # YAML 1.1 floats need a dot
        mant, exp = text.split("e")
        text = f"{mant}.0e{exp}"
    return _HzText(text)


def _hz(value):
    return _yaml_number(format_hz(value))


def _num(value):
    return _yaml_number(format_float(value))


def to_document(config: Config) -> dict:
    """Plain-data document (Hz units) that :func:`parse_config` maps back to ``config``."""
    ex = config.explicit
    s = config.system
    doc: dict = {}
    if config.name is not None:
        doc["name"] = config.name
    magnon = {}
    if config.magnon_field is not None:
        magnon["field_t"] = _num(config.magnon_field)
    else:
        magnon["omega_m_hz"] = _hz(s.magnon.omega)
    magnon["kappa_m_hz"] = _hz(s.magnon.kappa)
    system = {
        "cavity": {"omega_a_hz": _hz(s.cavity.omega_a), "kappa_int_hz": _hz(s.cavity.kappa_int),
                   "kappa_e_hz": _hz(s.cavity.kappa_e)},
        "magnon": magnon,
        "g_ma_hz": _hz(s.g_ma),
    }
    if s.mechanics or "system.mechanics" in ex:
        system["mechanics"] = [{"omega_b_hz": _hz(m.omega_b), "kappa_b_hz": _hz(m.kappa_b),
                                "g_mb_hz": _hz(m.g_mb)} for m in s.mechanics]
    doc["system"] = system
    if config.drive is not None:
        d = config.drive
        drive = {"omega_d_hz": _hz(d.omega_d), "power_dbm": _num(d.power_dbm),
                 "power_to_amplitude": _num(d.power_to_amplitude)}
        if d.kerr_coefficient != 0 or "drive.kerr_hz" in ex:
            drive["kerr_hz"] = _hz(d.kerr_coefficient)
        doc["drive"] = drive
    if config.probe is not None:
        pr = config.probe
        probe = {"start_hz": _hz(pr.start), "stop_hz": _hz(pr.stop)}
        _optional(probe, ex, "probe", "points", pr.points, 2001)
        _optional(probe, ex, "probe", "anchor", pr.anchor, "absolute")
        _optional(probe, ex, "probe", "refine", pr.refine, True)
        doc["probe"] = probe
    if config.sweep is not None:
        sw = config.sweep
        sweep = {"kind": sw.kind}
        if sw.kind in ("drive_power", "anticrossing"):
            sweep["values_dbm"] = [_num(v) for v in sw.values]
        else:
            sweep["values_hz"] = [_hz(v) for v in sw.values]
        _optional(sweep, ex, "sweep", "outputs", list(sw.outputs), ["spectra", "zeros"])
        if sw.kappa_plus is not None:
            sweep["kappa_plus_hz"] = [_hz(v) for v in sw.kappa_plus]
        _optional(sweep, ex, "sweep", "sideband_lock", sw.sideband_lock, False)
        _optional(sweep, ex, "sweep", "target_mode", sw.target_mode, 0)
        if sw.window is not None:
            sweep["window_hz"] = _hz(sw.window)
        doc["sweep"] = sweep
    return doc


def _optional(out, explicit, path, key, value, default):
    if value != default or f"{path}.{key}" in explicit:
        out[key] = value


def dump_config(config: Config) -> str:
    return yaml.dump(to_document(config), Dumper=_Dumper, sort_keys=False, default_flow_style=None)
