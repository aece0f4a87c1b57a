"""``cmmkit`` command line.

Exit codes: 0 success, 1 usage/configuration/file error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from ..core_model import driven_magnon_frequency
from ..experiments import DEFAULT_GRIDS, ProbeGrid, run_sweep
from ..fitting import MODEL_PARAMETERS, FitProblem, fit
from ..magnomech import normal_modes, polariton_couplings
from ..response import ReflectionModel, find_reflection_zeros, wigner_time_delay
from .config import Config, ConfigError, dump_config, load_config
from .files import (
    WTD_HEADER,
    ZEROS_HEADER,
    SpectrumFileError,
    modes_header,
    modes_rows,
    read_spectrum,
    write_bundle,
    spectrum_text,
    table_text,
    write_spectrum,
    write_table,
    wtd_rows,
    zeros_rows,
)
from .numbers import hz_to_rad, rad_to_hz
from .plots import plot_script

FIGURES = ("fig2a", "fig2b", "fig2c", "fig3", "fig4")


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cmmkit", description="Cavity magnomechanics spectra, zeros, delays, fits and sweeps.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="config path or bundled name")
        p.add_argument("--out", help="output file (default: stdout)")
        return p

    p = model_cmd("spectrum", "reflection spectrum as CSV (Hz, re, im, dB)")
    _grid_args(p)
    p.add_argument("--no-rwa", action="store_true", help="keep the counter-rotating mechanical term")

    p = model_cmd("zeros", "complex reflection zeros")
    p.add_argument("--no-rwa", action="store_true")

    p = sub.add_parser("wtd", help="Wigner time delay (seconds)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="config path or bundled name (analytic derivative)")
    src.add_argument("--data", help="spectrum file with re/im columns (finite differences)")
    p.add_argument("--out")
    _grid_args(p)

    p = model_cmd("modes", "normal-mode eigenvalues and composition")
    p.add_argument("--picture", choices=("loss", "gain"), default="loss",
                   help="loss: reflection poles; gain: reflection zeros")
    p.add_argument("--no-rwa", action="store_true")

    p = sub.add_parser("fit", help="least-squares fit of a spectrum file")
    p.add_argument("--config", required=True, help="initial values")
    p.add_argument("--data", required=True, help="spectrum file")
    p.add_argument("--model", choices=sorted(MODEL_PARAMETERS), default="two-mode")
    p.add_argument("--free", required=True, help="comma-separated free parameters")
    p.add_argument("--loss", choices=("magnitude-dB", "complex"), default="magnitude-dB")
    p.add_argument("--json", help="write the machine-readable result here")
    p.add_argument("--out", help="text report (default: stdout)")

    p = sub.add_parser("sweep", help="run the config's sweep and write a bundle directory")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="bundle directory")

    p = sub.add_parser("figures", help="reproduce the figure sweeps (CSV + plot scripts)")
    p.add_argument("names", nargs="*", metavar="FIG", help=f"any of {', '.join(FIGURES)} (default: all)")
    p.add_argument("--out", default="figures", help="output directory")
    return parser


def _grid_args(p):
    p.add_argument("--start-hz", type=float, help="probe start (offset from the config's anchor)")
    p.add_argument("--stop-hz", type=float)
    p.add_argument("--points", type=int)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cmmkit: error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, SpectrumFileError) as exc:
        print(f"cmmkit: error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        # downstream reader closed early (e.g. ``| head``)
        sys.stderr.close()
        return 0
    except OSError as exc:
        print(f"cmmkit: error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"cmmkit: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"cmmkit: numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"cmmkit: error: {exc}", file=sys.stderr)
        return 1


# --- helpers ---------------------------------------------------------------


def _probe(config: Config, args) -> ProbeGrid:
    if config.probe is not None:
        base = config.probe
    elif config.drive is not None and config.system.mechanics:
        base = DEFAULT_GRIDS["drive_power"]
    else:
        base = DEFAULT_GRIDS["kappa_e"]
    start = hz_to_rad(args.start_hz) if getattr(args, "start_hz", None) is not None else base.start
    stop = hz_to_rad(args.stop_hz) if getattr(args, "stop_hz", None) is not None else base.stop
    points = args.points if getattr(args, "points", None) is not None else base.points
    try:
        return ProbeGrid(start, stop, points, base.anchor, base.refine)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _emit_table(out, header, rows):
    if out is None:
        sys.stdout.write(table_text(header, rows))
    else:
        write_table(out, header, rows)


def _checked(values, what):
    if not np.all(np.isfinite(values)):
        raise NumericalFailure(f"non-finite {what}")


# --- commands --------------------------------------------------------------


def cmd_spectrum(args) -> int:
    config = load_config(args.config)
    grid = _probe(config, args).resolve(config.system, config.drive)
    model = ReflectionModel(config.system, config.drive, rwa=not args.no_rwa)
    spectrum = model.spectrum(grid)
    if args.out is None:
        sys.stdout.write(spectrum_text(spectrum))
    else:
        write_spectrum(spectrum, args.out)
    return 0


def cmd_zeros(args) -> int:
    config = load_config(args.config)
    zeros = find_reflection_zeros(config.system, drive=config.drive, rwa=not args.no_rwa)
    _emit_table(args.out, ZEROS_HEADER, zeros_rows(zeros))
    if not all(z.converged for z in zeros):
        raise NumericalFailure("some reflection zeros did not converge (reported with converged=false)")
    return 0


def cmd_wtd(args) -> int:
    if args.data is not None:
        spectrum = read_spectrum(args.data)
        if not spectrum.has_phase:
            raise UsageError(f"{args.data}: phase required: the Wigner delay needs re/im columns, not dB only")
        grid, tau = spectrum.frequencies, wigner_time_delay(spectrum)
    else:
        config = load_config(args.config)
        grid = _probe(config, args).resolve(config.system, config.drive)
        tau = wigner_time_delay(ReflectionModel(config.system, config.drive), grid)
    _emit_table(args.out, WTD_HEADER, wtd_rows(grid, tau))
    return 0


def cmd_modes(args) -> int:
    config = load_config(args.config)
    modes = normal_modes(config.system, config.drive, rwa=not args.no_rwa, picture=args.picture)
    _checked(modes.eigenvalues, "eigenvalues")
    n = len(config.system.mechanics) if config.drive is not None else 0
    _emit_table(args.out, modes_header(n), modes_rows(modes))
    return 0


def _fit_parameters(config: Config, model: str) -> dict:
    s, d = config.system, config.drive
    p = {"omega_0": s.cavity.omega_a, "omega_a": s.cavity.omega_a, "omega_m": s.magnon.omega,
         "kappa_int": s.cavity.kappa_int, "kappa_e": s.cavity.kappa_e, "kappa_m": s.magnon.kappa,
         "g_ma": s.g_ma}
    if model == "three-mode":
        if d is None or not s.mechanics:
            raise UsageError("the three-mode model needs a drive and a mechanical mode in the config")
        p["omega_m"] = driven_magnon_frequency(s, d)
        p.update(omega_d=d.omega_d, omega_b=s.mechanics[0].omega_b, kappa_b=s.mechanics[0].kappa_b,
                 G_plus=abs(polariton_couplings(s, d)[0]))
    return {k: p[k] for k in MODEL_PARAMETERS[model]}


def cmd_fit(args) -> int:
    config = load_config(args.config)
    data = read_spectrum(args.data)
    params = _fit_parameters(config, args.model)
    free_names = [n.strip() for n in args.free.split(",") if n.strip()]
    unknown = [n for n in free_names if n not in params]
    if unknown:
        raise UsageError(f"unknown free parameter {unknown[0]!r} for the {args.model} model "
                         f"(choose from {', '.join(params)})")
    span = data.frequencies[-1] - data.frequencies[0]
    free = {}
    for name in free_names:
        v = params[name]
        free[name] = (v, v - span, v + span) if name.startswith("omega") else (v, 0.0, max(3.0 * v, 1e-30))
    fixed = {k: v for k, v in params.items() if k not in free}
    problem = FitProblem(data, args.model, free, fixed, loss=args.loss)
    result = fit(problem)

    lines = [f"model: {args.model}", f"loss: {args.loss}", f"status: {result.status}",
             f"iterations: {result.iterations}", f"residual_norm: {result.residual_norm:.12g}", "",
             f"{'parameter':<12} {'estimate_hz':>22} {'stderr_hz':>14}"]
    report = {"model": args.model, "loss": args.loss, "status": result.status,
              "iterations": result.iterations, "residual_norm": result.residual_norm,
              "estimates_hz": {}, "stderr_hz": {}}
    for name in free_names:
        est, err = rad_to_hz(result.estimates[name]), rad_to_hz(result.stderr[name])
        report["estimates_hz"][name] = est
        report["stderr_hz"][name] = err if math.isfinite(err) else "inf"
        lines.append(f"{name:<12} {est:>22.12g} {err:>14.6g}")
    _emit("\n".join(lines) + "\n", args.out)
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2) + "\n")
    if result.status == "singular":
        raise NumericalFailure("fit Jacobian is rank-deficient at the optimum (status 'singular')")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    result = run_sweep(config.sweep_spec())
    write_bundle(result, args.out, dump_config(config))
    return 0


def cmd_figures(args) -> int:
    names = args.names or list(FIGURES)
    unknown = [n for n in names if n not in FIGURES]
    if unknown:
        raise UsageError(f"unknown figure {unknown[0]!r}; choose from {', '.join(FIGURES)}")
    out = Path(args.out)
    for name in names:
        run_figure(name, out / name)
    return 0


def run_figure(name: str, outdir: Path):
    """Run one bundled figure config and write its bundle plus a plot script."""
    config = load_config(name)
    spec = config.sweep_spec()
    result = run_sweep(spec)
    write_bundle(result, outdir, dump_config(config))
    s = config.system
    if spec.kind == "anticrossing":
        center = rad_to_hz(config.drive.omega_d + s.mechanics[spec.target_mode].omega_b)
        script = plot_script(name, spec.kind, offset_hz=center)
    elif spec.kind == "drive_power":
        script = plot_script(name, spec.kind, scale_hz=1e3, xlabel="probe offset from sideband (kHz)")
    elif "wtd" in spec.outputs and name == "fig2c":
        script = plot_script(name, spec.kind, wtd=True)
    else:
        script = plot_script(name, spec.kind, offset_hz=rad_to_hz(s.cavity.omega_a),
                             xlabel="probe - omega_a / 2 pi (MHz)")
    (outdir / f"plot_{name}.py").write_text(script)
    return result


COMMANDS = {
    "spectrum": cmd_spectrum,
    "zeros": cmd_zeros,
    "wtd": cmd_wtd,
    "modes": cmd_modes,
    "fit": cmd_fit,
    "sweep": cmd_sweep,
    "figures": cmd_figures,
}


if __name__ == "__main__":
    sys.exit(main())
