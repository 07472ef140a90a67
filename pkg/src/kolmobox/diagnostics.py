"""Observables and verification quantities computed from states and trajectories.

Per-sample records hold energies, dissipation, sink terms, envelope-violation
depths and the minimum length scale; window operations evaluate the integral
balances of the omega and k equations (with the regularization source/damping
integrals separated out), the kinetic-energy equality gap, the entropy
functional, and log-log decay-exponent fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import fields as F
from . import model as M
from .errors import BadDelta, DegenerateOmega, InsufficientSamples, NonpositiveSamples
from .fields import ScalarField, VectorField
from .model import ComparisonEnvelope, ModelParams, State

__all__ = [
    "DiagnosticsRecord",
    "BalanceReport",
    "FitResult",
    "LengthScaleCheck",
    "record",
    "ndjson_line",
    "omega_balance_residual",
    "k_balance_residual",
    "energy_gap",
    "balance_report",
    "length_scale_check",
    "entropy_phi",
    "entropy_functional",
    "decay_fit",
]

_NDJSON_KEYS = (
    "t",
    "E_kin",
    "E_turb",
    "dissipation",
    "sink_k",
    "sink_omega",
    "power_in",
    "min_omega",
    "max_omega",
    "min_k",
    "envelope_violation_omega_low",
    "envelope_violation_omega_high",
    "envelope_violation_k",
    "L_min",
    "guard_activations",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    E_kin: float
    E_turb: float
    dissipation: float
    sink_k: float
    sink_omega: float
    power_in: float
    min_omega: float
    max_omega: float
    min_k: float
    envelope_violation_omega_low: float
    envelope_violation_omega_high: float
    envelope_violation_k: float
    L_min: float
    guard_activations: int


@dataclass(frozen=True)
class BalanceReport:
    """Window balances; epsilon_corrections holds the integrated eps terms."""

    window: Tuple[float, float]
    omega_residual: float
    k_residual: float
    mu_proxy: float
    energy_gap: float
    epsilon_corrections: dict


@dataclass(frozen=True)
class FitResult:
    exponent: float
    stderr: float
    window: Tuple[float, float]


@dataclass(frozen=True)
class LengthScaleCheck:
    L_min: float
    bound: float
    satisfied: bool
    bracket_low_ok: bool
    bracket_high_ok: bool


def record(
    state: State,
    forcing: Optional[VectorField],
    params: ModelParams,
    env: ComparisonEnvelope,
    guard_activations: int = 0,
) -> DiagnosticsRecord:
    """Evaluate all per-sample observables for one state."""
    g = state.grid
    u, om, kk = state.u, state.omega, state.k

    speed_sq = np.zeros(g.shape)
    for c in u.components:
        speed_sq += c.values**2
    e_kin = 0.5 * F.integrate(ScalarField(g, speed_sq, copy=False))

    eddy = M.eddy_coefficient(kk, om, params)
    dsq = F.frobenius_sq(F.sym_gradient(u))
    dissipation = params.nu0 * F.integrate(ScalarField(g, eddy.values * dsq.values, copy=False))

    om_pos = np.maximum(om.values, 0.0)
    sink_k = params.alpha2 * F.integrate(ScalarField(g, kk.values * om_pos, copy=False))
    sink_omega = params.alpha1 * F.integrate(ScalarField(g, om_pos * om.values, copy=False))

    power_in = 0.0
    if forcing is not None:
        fu = np.zeros(g.shape)
        for fc, uc in zip(forcing.components, u.components):
            fu += fc.values * uc.values
        power_in = F.integrate(ScalarField(g, fu, copy=False))

    lo = M.omega_lower(state.t, env, params)
    hi = M.omega_upper(state.t, env, params)
    kap = M.kappa(state.t, env, params)
    min_omega = om.min()
    max_omega = om.max()
    min_k = kk.min()

    if min_omega > 0.0:
        l_min = float(np.min(np.sqrt(np.maximum(kk.values, 0.0)) / om.values))
    else:
        l_min = 0.0  # degenerate omega; keep the record finite

    return DiagnosticsRecord(
        t=state.t,
        E_kin=e_kin,
        E_turb=F.integrate(kk),
        dissipation=dissipation,
        sink_k=sink_k,
        sink_omega=sink_omega,
        power_in=power_in,
        min_omega=min_omega,
        max_omega=max_omega,
        min_k=min_k,
        envelope_violation_omega_low=max(0.0, lo - min_omega),
        envelope_violation_omega_high=max(0.0, max_omega - hi),
        envelope_violation_k=max(0.0, kap - min_k),
        L_min=l_min,
        guard_activations=guard_activations,
    )


def ndjson_line(rec: DiagnosticsRecord) -> str:
    """One NDJSON object with fixed key order, floats at 17 significant digits."""
    parts = []
    for key in _NDJSON_KEYS:
        v = getattr(rec, key)
        parts.append(f'"{key}": {v:d}' if isinstance(v, int) else f'"{key}": {v:.17g}')
    return "{" + ", ".join(parts) + "}"


# ---------------------------------------------------------------------------
# window machinery


def _window_indices(traj, window, minimum: int):
    s, t = window
    times = np.asarray(traj.times, dtype=float)
    slack = 1e-12 * max(1.0, abs(s), abs(t))
    idx = np.nonzero((times >= s - slack) & (times <= t + slack))[0]
    if len(idx) < minimum:
        raise InsufficientSamples(f"window {window} holds {len(idx)} samples, need {minimum}")
    return idx, times[idx]


def _trapezoid(values, times) -> float:
    total = 0.0
    for i in range(len(times) - 1):
        total += 0.5 * (values[i] + values[i + 1]) * (times[i + 1] - times[i])
    return total


def _eps_correction_omega(state: State, params: ModelParams, env: ComparisonEnvelope) -> float:
    """eps * integral(source - odd-power damping) in the omega equation."""
    if not params.regularized:
        return 0.0
    g = state.grid
    src = M.omega_lower(state.t, env, params) ** (params.r - 1.0) * g.volume
    damp = F.integrate(ScalarField(g, F.signed_power(state.omega.values, params.r), copy=False))
    return params.eps * (src - damp)


def _eps_correction_k(state: State, params: ModelParams, env: ComparisonEnvelope) -> float:
    if not params.regularized:
        return 0.0
    g = state.grid
    src = M.kappa(state.t, env, params) ** (params.r - 1.0) * g.volume
    damp = F.integrate(ScalarField(g, F.signed_power(state.k.values, params.r), copy=False))
    return params.eps * (src - damp)


def _production_integral(state: State, params: ModelParams) -> float:
    g = state.grid
    prod = M.production_coefficient(state.k, state.omega, params)
    dsq = F.frobenius_sq(F.sym_gradient(state.u))
    return params.nu0 * F.integrate(ScalarField(g, prod.values * dsq.values, copy=False))


def omega_balance_residual(traj, window) -> float:
    """|d integral(omega) + time-integrated sink - eps corrections| over the window.

    Exact for the semi-discrete dynamics up to time quadrature: advection and
    fluxes integrate to zero, so only the damping (and eps terms) move the
    mean of omega.
    """
    idx, times = _window_indices(traj, window, 2)
    params, env = traj.params, traj.env
    mass = [F.integrate(traj.states[i].omega) for i in idx]
    sink = [traj.records[i].sink_omega for i in idx]
    eps_corr = [_eps_correction_omega(traj.states[i], params, env) for i in idx]
    net = [s - e for s, e in zip(sink, eps_corr)]
    return abs(mass[-1] - mass[0] + _trapezoid(net, times))


def k_balance_residual(traj, window):
    """(residual, mu_proxy) of the k balance over the window.

    mu_proxy = integral(k)(t) - integral(k)(s) - time-quadrature of
    (production - sink + eps corrections); for the continuous limit object
    this is the mass of the nonnegative defect measure on the window.
    """
    idx, times = _window_indices(traj, window, 2)
    params, env = traj.params, traj.env
    mass = [F.integrate(traj.states[i].k) for i in idx]
    production = [_production_integral(traj.states[i], params) for i in idx]
    sink = [traj.records[i].sink_k for i in idx]
    eps_corr = [_eps_correction_k(traj.states[i], params, env) for i in idx]
    net = [p - s + e for p, s, e in zip(production, sink, eps_corr)]
    mu_proxy = mass[-1] - mass[0] - _trapezoid(net, times)
    return abs(mu_proxy), mu_proxy


def energy_gap(traj, window, params: ModelParams) -> float:
    """Kinetic-energy equality defect: (E_kin(s) + work) - (E_kin(t) + dissipation).

    Zero means the discrete run satisfies the u-energy equality on the window;
    for u == 0 trajectories the gap vanishes identically.
    """
    del params  # coefficients already folded into the records
    idx, times = _window_indices(traj, window, 2)
    e_kin = [traj.records[i].E_kin for i in idx]
    power = [traj.records[i].power_in for i in idx]
    diss = [traj.records[i].dissipation for i in idx]
    return (e_kin[0] + _trapezoid(power, times)) - (e_kin[-1] + _trapezoid(diss, times))


def _eps_correction_u_energy(state: State, params: ModelParams) -> float:
    """eps * integral(u . (r-laplacian(u) - |u|^(r-2) u)), the regularized drain."""
    if not params.regularized:
        return 0.0
    g = state.grid
    rl = F.r_laplacian_vec(state.u, params.r)
    damp = F.vector_signed_power([c.values for c in state.u.components], params.r)
    tot = np.zeros(g.shape)
    for uc, rc, dc in zip(state.u.components, rl.components, damp):
        tot += uc.values * (rc.values - dc)
    return params.eps * F.integrate(ScalarField(g, tot, copy=False))


def balance_report(traj, window) -> BalanceReport:
    """Assemble all window balances in one report."""
    params, env = traj.params, traj.env
    idx, times = _window_indices(traj, window, 2)
    k_res, mu = k_balance_residual(traj, window)
    eps_corr = {
        "omega": _trapezoid(
            [_eps_correction_omega(traj.states[i], params, env) for i in idx], times
        ),
        "k": _trapezoid([_eps_correction_k(traj.states[i], params, env) for i in idx], times),
        "u_energy": _trapezoid(
            [_eps_correction_u_energy(traj.states[i], params) for i in idx], times
        ),
    }
    return BalanceReport(
        window=(float(times[0]), float(times[-1])),
        omega_residual=omega_balance_residual(traj, window),
        k_residual=k_res,
        mu_proxy=mu,
        energy_gap=energy_gap(traj, window, params),
        epsilon_corrections=eps_corr,
    )


# ---------------------------------------------------------------------------
# pointwise bound checks


_REL_TOL = 1e-10  # slack for saturated (equality) envelope comparisons


def length_scale_check(state: State, env: ComparisonEnvelope, params: ModelParams) -> LengthScaleCheck:
    """Compare min sqrt(k)/omega against its decaying lower bound.

    Also checks the reciprocal bracket 1/omega_sup + alpha1 t <= 1/omega <=
    1/omega_star + alpha1 t implied by the omega envelopes.
    """
    if state.omega.min() <= 0.0:
        raise DegenerateOmega("length scale undefined for nonpositive omega")
    t = state.t
    l_min = float(np.min(np.sqrt(np.maximum(state.k.values, 0.0)) / state.omega.values))
    growth = (1.0 + params.alpha1 * env.omega_sup * t) ** (
        1.0 - params.alpha2 / (2.0 * params.alpha1)
    )
    bound = math.sqrt(env.k_star) / env.omega_sup * growth
    inv = 1.0 / state.omega.values
    lo = 1.0 / env.omega_sup + params.alpha1 * t
    hi = 1.0 / env.omega_star + params.alpha1 * t
    return LengthScaleCheck(
        L_min=l_min,
        bound=bound,
        satisfied=l_min >= bound * (1.0 - _REL_TOL),
        bracket_low_ok=float(inv.min()) >= lo * (1.0 - _REL_TOL),
        bracket_high_ok=float(inv.max()) <= hi * (1.0 + _REL_TOL),
    )


# ---------------------------------------------------------------------------
# entropy functional


def entropy_phi(tau, delta: float):
    """Convex entropy density tau + (1 - (1+tau)^(1-delta)) / (1-delta)."""
    if not 0.0 < delta < 1.0:
        raise BadDelta(f"delta must be in ]0,1[, got {delta}")
    tau = np.asarray(tau, dtype=float)
    return tau + (1.0 - (1.0 + tau) ** (1.0 - delta)) / (1.0 - delta)


def entropy_functional(k: ScalarField, delta: float):
    """(integral of the entropy density, integral of |grad k|^2 / (1+k)^delta)."""
    if not 0.0 < delta < 1.0:
        raise BadDelta(f"delta must be in ]0,1[, got {delta}")
    g = k.grid
    phi = entropy_phi(k.values, delta)
    mag2 = np.zeros(g.shape)
    for c in F.gradient(k).components:
        mag2 += c.values**2
    weighted = mag2 / (1.0 + k.values) ** delta
    return (
        F.integrate(ScalarField(g, phi, copy=False)),
        F.integrate(ScalarField(g, weighted, copy=False)),
    )


# ---------------------------------------------------------------------------
# decay fits


def decay_fit(traj, quantity: str, window) -> FitResult:
    """Least-squares slope of log(quantity) against log(1 + alpha1*omega_sup*t)."""
    idx, times = _window_indices(traj, window, 3)
    params, env = traj.params, traj.env
    if quantity == "mean_k":
        vals = [F.integrate(traj.states[i].k) / traj.states[i].grid.volume for i in idx]
    elif quantity == "mean_omega":
        vals = [F.integrate(traj.states[i].omega) / traj.states[i].grid.volume for i in idx]
    elif quantity == "L_min":
        vals = [traj.records[i].L_min for i in idx]
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    vals = np.asarray(vals)
    if np.any(vals <= 0.0):
        raise NonpositiveSamples(f"{quantity} must be positive throughout the window")

    x = np.log(1.0 + params.alpha1 * env.omega_sup * times)
    y = np.log(vals)
    xbar, ybar = x.mean(), y.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - ybar)) / sxx)
    resid = y - (ybar + slope * (x - xbar))
    dof = len(x) - 2
    stderr = float(np.sqrt(np.sum(resid**2) / dof / sxx)) if dof > 0 else 0.0
    return FitResult(exponent=slope, stderr=stderr, window=(float(times[0]), float(times[-1])))
