"""Least-squares estimation of model parameters from reflection spectra.

Three models are available, all with parameters in rad/s:

``single-mode``
    omega_0, kappa_int, kappa_e
``two-mode``
    omega_a, omega_m, kappa_int, kappa_e, kappa_m, g_ma
``three-mode``
    the two-mode set plus omega_d, omega_b, kappa_b and G_plus, the
    upper-polariton/phonon coupling (one mechanical mode, RWA).

Fits run on scipy's trust-region reflective solver with a central-difference
Jacobian. Parameters are rescaled internally: frequencies as offsets from
their initial value in units of the grid span, rates relative to their
initial value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares

from .core_model import mixing_angle
from .magnomech import find_dips
from .response import Spectrum, _admittance, _Frame

MODEL_PARAMETERS = {
    "single-mode": ("omega_0", "kappa_int", "kappa_e"),
    "two-mode": ("omega_a", "omega_m", "kappa_int", "kappa_e", "kappa_m", "g_ma"),
    "three-mode": ("omega_a", "omega_m", "kappa_int", "kappa_e", "kappa_m", "g_ma",
                   "omega_d", "omega_b", "kappa_b", "G_plus"),
}

LOSS_SPACES = ("magnitude-dB", "complex")


def model_reflection(model: str, p: dict, omega) -> np.ndarray:
    """Evaluate one of the fit models at probe frequencies ``omega``."""
    if model == "single-mode":
        fr = _Frame(0.0, p["omega_0"], 0.0, p["kappa_int"] + p["kappa_e"], 1.0, p["kappa_e"], 0.0)
    elif model == "two-mode":
        fr = _Frame(0.0, p["omega_a"], p["omega_m"], p["kappa_int"] + p["kappa_e"], p["kappa_m"],
                    p["kappa_e"], p["g_ma"])
    elif model == "three-mode":
        theta = mixing_angle(p["omega_a"], p["omega_m"], p["g_ma"])
        G_m = p["G_plus"] / math.sin(theta)
        fr = _Frame(p["omega_d"], p["omega_a"] - p["omega_d"], p["omega_m"] - p["omega_d"],
                    p["kappa_int"] + p["kappa_e"], p["kappa_m"], p["kappa_e"], p["g_ma"],
                    ((p["omega_b"], p["kappa_b"], G_m ** 2),))
    else:
        raise ValueError(f"unknown model {model!r}; choose from {sorted(MODEL_PARAMETERS)}")
    return 2.0 * fr.kappa_e * _admittance(fr, omega) - 1.0


@dataclass
class FitProblem:
    """Data, model choice and the split of parameters into free and fixed.

    ``free`` maps a parameter name to ``(initial, lower, upper)``.
    """

    data: Spectrum
    model: str
    free: dict
    fixed: dict = field(default_factory=dict)
    loss: str = "magnitude-dB"
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.model not in MODEL_PARAMETERS:
            raise ValueError(f"unknown model {self.model!r}; choose from {sorted(MODEL_PARAMETERS)}")
        if self.loss not in LOSS_SPACES:
            raise ValueError(f"loss must be one of {LOSS_SPACES}, got {self.loss!r}")
        names = set(MODEL_PARAMETERS[self.model])
        overlap = set(self.free) & set(self.fixed)
        if overlap:
            raise ValueError(f"parameters both free and fixed: {sorted(overlap)}")
        missing = names - set(self.free) - set(self.fixed)
        if missing:
            raise ValueError(f"parameters neither free nor fixed: {sorted(missing)}")
        unknown = (set(self.free) | set(self.fixed)) - names
        if unknown:
            raise ValueError(f"parameters not in the {self.model} model: {sorted(unknown)}")
        for name, (init, lo, hi) in self.free.items():
            if not lo <= init <= hi:
                raise ValueError(f"initial value of {name} outside its bounds [{lo}, {hi}]")
        if self.loss == "complex" and not self.data.has_phase:
            raise ValueError("complex loss needs a spectrum with phase")
        if self.data.frequencies.size < 3 * len(self.free):
            raise ValueError("need at least three data points per free parameter")


@dataclass
class FitResult:
    estimates: dict
    stderr: dict
    residual_norm: float
    status: str
    iterations: int
    parameters: dict = field(default_factory=dict)
    cost_history: list = field(default_factory=list)


class _Scaling:
    def __init__(self, problem: FitProblem):
        grid = problem.data.frequencies
        self.names = list(problem.free)
        self.offset = np.zeros(len(self.names))
        self.scale = np.ones(len(self.names))
        for i, name in enumerate(self.names):
            init, lo, hi = problem.free[name]
            if name.startswith("omega"):
                self.offset[i] = init
                self.scale[i] = grid[-1] - grid[0]
            else:
                self.scale[i] = abs(init) if init != 0 else (hi - lo)

    def to_x(self, values):
        return (np.asarray(values, dtype=float) - self.offset) / self.scale

    def to_p(self, x):
        return self.offset + np.asarray(x) * self.scale


def _residual_fn(problem: FitProblem, scaling: _Scaling, loss: str):
    data = problem.data
    omega = data.frequencies
    w = np.ones_like(omega) if problem.weights is None else np.asarray(problem.weights, dtype=float)
    if loss == "complex":
        target = data.values
    elif loss == "magnitude":
        target = data.magnitude
    else:
        target = data.db

    def residuals(x):
        params = dict(problem.fixed)
        params.update(zip(scaling.names, scaling.to_p(x)))
        r = model_reflection(problem.model, params, omega)
        if loss == "complex":
            diff = w * (r - target)
            return np.concatenate([diff.real, diff.imag])
        if loss == "magnitude":
            return w * (np.abs(r) - target)
        return w * (20.0 * np.log10(np.abs(r)) - target)

    return residuals


def _central_jacobian(fun, lower, upper, history, rel_step=1e-6):
    def jac(x, f0=None):
        if f0 is None:
            f0 = fun(x)
        history.append(0.5 * float(f0 @ f0))
        J = np.empty((f0.size, x.size))
        for i in range(x.size):
            h = rel_step * max(1.0, abs(x[i]))
            lo_room, hi_room = x[i] - lower[i], upper[i] - x[i]
            if lo_room >= h and hi_room >= h:
                xp, xm = x.copy(), x.copy()
                xp[i] += h
                xm[i] -= h
                J[:, i] = (fun(xp) - fun(xm)) / (2 * h)
            else:
                # one-sided at an active bound
                sign = 1.0 if hi_room >= lo_room else -1.0
                xs = x.copy()
                xs[i] += sign * h
                J[:, i] = sign * (fun(xs) - f0) / h
        return J

    return jac


def fit(problem: FitProblem, max_nfev: int = 2000) -> FitResult:
    """Minimise the selected loss over the free parameters.

    Deterministic for identical inputs. A run that stops on the evaluation
    budget still returns its best point with status ``"max-iterations"``; a
    rank-deficient Jacobian at the optimum gives status ``"singular"`` and
    infinite standard errors.

    The dB loss is very non-convex around deep dips, so it is warm-started
    from a fit of the linear magnitude ``|r|``; the reported optimum, cost
    history and errors all belong to the dB stage.
    """
    scaling = _Scaling(problem)
    x0 = scaling.to_x([problem.free[n][0] for n in scaling.names])
    lower = scaling.to_x([problem.free[n][1] for n in scaling.names])
    upper = scaling.to_x([problem.free[n][2] for n in scaling.names])
    opts = dict(method="trf", x_scale="jac", ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=max_nfev)

    if problem.loss == "magnitude-dB":
        fun = _residual_fn(problem, scaling, "magnitude")
        jac = _central_jacobian(fun, lower, upper, [])
        warm = least_squares(fun, x0, jac=lambda x: jac(x), bounds=(lower, upper), **opts)
        x0 = warm.x

    fun = _residual_fn(problem, scaling, problem.loss)
    history: list[float] = []
    jac = _central_jacobian(fun, lower, upper, history)
    res = least_squares(fun, x0, jac=lambda x: jac(x), bounds=(lower, upper), **opts)
    J = jac(res.x, res.fun)
    history.pop()  # the extra evaluation above is not a solver iterate

    p_hat = scaling.to_p(res.x)
    m, n = res.fun.size, res.x.size
    sv = np.linalg.svd(J, compute_uv=False)
    singular = sv.size == 0 or sv[-1] <= 1e-10 * sv[0]
    if singular:
        stderr = np.full(n, np.inf)
        status = "singular"
    else:
        dof = max(m - n, 1)
        s2 = 2.0 * res.cost / dof
        cov = s2 * np.linalg.inv(J.T @ J)
        stderr = np.sqrt(np.clip(np.diag(cov), 0.0, None)) * scaling.scale
        status = "converged" if res.status > 0 else "max-iterations"
    estimates = dict(zip(scaling.names, map(float, p_hat)))
    params = dict(problem.fixed)
    params.update(estimates)
    return FitResult(
        estimates=estimates,
        stderr=dict(zip(scaling.names, map(float, stderr))),
        residual_norm=float(np.linalg.norm(res.fun)),
        status=status,
        iterations=max(res.njev - 1, 0),
        parameters=params,
        cost_history=history,
    )


class DipFit(NamedTuple):
    kappa: float  # zero distance from the real axis: the dip's half-linewidth
    center: float
    pole_width: float
    min_db: float


class NoDipError(ValueError):
    pass


def extract_linewidth(spectrum: Spectrum, center_guess: float, window: float | None = None) -> DipFit:
    """Half-linewidth of the dip nearest ``center_guess``.

    Fits ``|r|^2 = A ((w - w0)^2 + kappa^2) / ((w - wp)^2 + Gamma^2)`` (one
    zero and one nearby pole) in log space over a local window.
    ``kappa`` is the distance of the reflection zero from the real axis,
    i.e. the decay rate of the absorbing mode in the ``omega - i kappa``
    convention. The window defaults to +/- 12 rough widths around the dip, clipped
    to half the distance to the nearest other dip.
    """
    omega = spectrum.frequencies
    mag2 = spectrum.magnitude ** 2
    dips = find_dips(spectrum)
    if not dips:
        raise NoDipError("no local minimum in the spectrum")
    w0 = min(dips, key=lambda d: abs(d[0] - center_guess))[0]
    i0 = int(np.argmin(np.abs(omega - w0)))
    floor = mag2[i0]

    # rough width: distance to where |r|^2 doubles
    def half_distance(direction):
        i = i0
        while 0 <= i + direction < omega.size and mag2[i] < 2.0 * floor:
            i += direction
        return abs(omega[i] - omega[i0]) if mag2[i] >= 2.0 * floor else None

    widths = [w for w in (half_distance(-1), half_distance(+1)) if w]
    k0 = min(widths) if widths else 0.25 * (omega[-1] - omega[0])
    k0 = max(k0, 0.5 * np.min(np.diff(omega)))
    half = window if window is not None else 12.0 * k0
    others = [abs(d[0] - w0) for d in dips if d[0] != w0]
    if window is None and others:
        half = min(half, 0.5 * min(others))
    sel = (omega >= w0 - half) & (omega <= w0 + half)
    if np.count_nonzero(sel) < 6:
        raise NoDipError("too few points around the dip; refine the grid")
    x, y = omega[sel], np.log(np.clip(mag2[sel], 1e-300, None))

    edge = max(mag2[sel][0], mag2[sel][-1])
    ratio = min(max(edge / max(floor, 1e-300), 1.0 + 1e-9), 1e12)
    g0 = max(k0 * math.sqrt(ratio), 2.0 * k0)

    def resid(q):
        c, cp, lk, lg, la = q
        u = (x - w0) / k0
        return la + np.log((u - c) ** 2 + math.exp(2 * lk)) - np.log((u - cp) ** 2 + math.exp(2 * lg)) - y

    q0 = np.array([0.0, 0.0, 0.0, math.log(g0 / k0), math.log(max(edge, 1e-300))])
    res = least_squares(resid, q0, method="trf", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=5000)
    c, _, lk, lg, _ = res.x
    center = w0 + c * k0
    kappa = k0 * math.exp(lk)
    gamma = k0 * math.exp(lg)
    if gamma < kappa:
        raise NoDipError("feature near the guess is a peak, not a dip")
    return DipFit(kappa, center, gamma, 10.0 * math.log10(max(floor, 1e-300)))
