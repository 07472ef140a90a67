"""Time integration of the semi-discrete system.

Two schemes: an explicit two-stage SSP Runge-Kutta (Heun) step with Leray
projection after each stage, and a Rothe step (implicit Euler solved by damped
Picard iteration on the stationary operator).  Both end with a positivity
guard that clamps omega and k at a small slack below their comparison
envelopes; clamping is counted, never silent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import diagnostics as diag
from . import fields as F
from . import model as M
from .errors import PicardDiverged, StepRejected
from .fields import ScalarField, VectorField
from .model import ComparisonEnvelope, ModelParams, State

__all__ = [
    "StepConfig",
    "Trajectory",
    "as_forcing",
    "cfl_dt",
    "step_explicit",
    "operator_apply",
    "step_rothe",
    "run",
]

Forcing = Union[None, VectorField, Callable[[float], Optional[VectorField]]]


@dataclass(frozen=True)
class StepConfig:
    scheme: str = "explicit_rk2"  # or "rothe_picard"
    cfl_safety: float = 0.4
    dt_max: float = math.inf
    k_floor: float = 1e-14
    picard_max_iters: int = 200
    picard_tol: float = 1e-10
    picard_damping: float = 0.7
    guard: bool = True
    guard_slack: float = 0.05

    def __post_init__(self):
        if self.scheme not in ("explicit_rk2", "rothe_picard"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError("cfl_safety must be in ]0,1]")
        if not self.dt_max > 0.0:
            raise ValueError("dt_max must be positive")
        if self.k_floor < 0.0:
            raise ValueError("k_floor must be nonnegative")
        if not 0.0 < self.picard_damping <= 1.0:
            raise ValueError("picard_damping must be in ]0,1]")


@dataclass(frozen=True)
class Trajectory:
    """Sampled simulation output: states and diagnostics at increasing times.

    The first sample time equals the initial state's time (0 for fresh runs;
    restarted segments start at their restart time).
    """

    times: tuple
    states: tuple
    records: tuple
    params: ModelParams
    env: ComparisonEnvelope

    def __post_init__(self):
        if len(self.times) != len(self.states) or len(self.times) != len(self.records):
            raise ValueError("times/states/records must have equal length")
        t = np.asarray(self.times)
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("sample times must be strictly increasing")


def as_forcing(forcing: Forcing) -> Callable[[float], Optional[VectorField]]:
    """Normalize None / constant field / callable into a callable of t."""
    if forcing is None:
        return lambda t: None
    if isinstance(forcing, VectorField):
        return lambda t: forcing
    return forcing


def cfl_dt(state: State, params: ModelParams, cfg: StepConfig) -> float:
    """Stable step from the advective and diffusive limits, times cfl_safety."""
    g = state.grid
    h = g.h
    vmax = state.u.max_abs()
    eddy = M.eddy_coefficient(state.k, state.omega, params)
    diff = max(params.nu0, params.nu1, params.nu2) * eddy.max()
    if params.regularized:
        gmax = max(
            F.max_face_gradient(state.omega),
            F.max_face_gradient(state.k),
            math.sqrt(max(F.frobenius_sq(F.sym_gradient(state.u)).max(), 0.0)),
        )
        diff += params.eps * gmax ** (params.r - 2.0)
    dt_adv = h / vmax if vmax > 0.0 else math.inf
    dt_dif = h * h / (2.0 * g.dim * diff) if diff > 0.0 else math.inf
    return min(cfg.cfl_safety * min(dt_adv, dt_dif), cfg.dt_max)


def _guard(arr: np.ndarray, level: float):
    """Clamp below `level`; returns (clamped array, number of clamped points)."""
    mask = arr < level
    hits = int(np.count_nonzero(mask))
    if hits == 0:
        return arr, 0
    return np.where(mask, level, arr), hits


def _finish_stage(
    g, u_arrays, om, kk, t_new, params, env, cfg
) -> State:
    """Project u, then apply the positivity guard against the envelopes at t_new."""
    w, p = F.leray_project(VectorField.from_arrays(g, u_arrays, copy=False))
    hits = 0
    if cfg.guard:
        om, n1 = _guard(om, M.omega_lower(t_new, env, params) * (1.0 - cfg.guard_slack))
        kk, n2 = _guard(kk, max(cfg.k_floor, M.kappa(t_new, env, params) * (1.0 - cfg.guard_slack)))
        hits = n1 + n2
    return State(
        t=t_new,
        u=w,
        omega=ScalarField(g, om, copy=False),
        k=ScalarField(g, kk, copy=False),
        p=p,
        guard_hits=hits,
    )


def _check_finite(state: State, dt: float):
    arrays = [c.values for c in state.u.components] + [state.omega.values, state.k.values]
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise StepRejected(f"non-finite field after step dt={dt}")


def step_explicit(
    state: State,
    dt: float,
    forcing: Forcing,
    params: ModelParams,
    env: ComparisonEnvelope,
    cfg: StepConfig,
) -> State:
    """One SSP-RK2 (Heun) step: s1 = U + dt f(U); U' = (U + s1 + dt f(s1)) / 2.

    Each stage projects u and applies the positivity guard at t + dt.  For
    spatially constant states the omega/k update reproduces the scalar Heun
    update of the homogeneous ODEs bit for bit.
    """
    fprov = as_forcing(forcing)
    g = state.grid
    t_new = state.t + dt

    du, dom, dk = M.rhs(state, state.t, fprov(state.t), params, env)
    s1 = _finish_stage(
        g,
        [c.values + dt * d.values for c, d in zip(state.u.components, du.components)],
        state.omega.values + dt * dom.values,
        state.k.values + dt * dk.values,
        t_new,
        params,
        env,
        cfg,
    )

    du1, dom1, dk1 = M.rhs(s1, t_new, fprov(t_new), params, env)
    out = _finish_stage(
        g,
        [
            0.5 * (c.values + (s.values + dt * d.values))
            for c, s, d in zip(state.u.components, s1.u.components, du1.components)
        ],
        0.5 * (state.omega.values + (s1.omega.values + dt * dom1.values)),
        0.5 * (state.k.values + (s1.k.values + dt * dk1.values)),
        t_new,
        params,
        env,
        cfg,
    )
    out = replace(out, guard_hits=out.guard_hits + s1.guard_hits)
    _check_finite(out, dt)
    return out


def operator_apply(
    state_candidate: State,
    state_old: State,
    dt: float,
    forcing: Forcing,
    params: ModelParams,
    env: ComparisonEnvelope,
):
    """Implicit-Euler residual (U - U_old)/dt + A(U) - F at time t_old + dt.

    A is the stationary operator of the regularized system assembled from the
    discrete field operators (advection in skew form, diffusion in flux form,
    r-terms, damping, production); F carries the external forcing and the
    envelope sources.  dt = inf drops the time term and returns A(U) - F.
    Zero residual characterizes the discrete implicit-Euler solution.
    """
    if not params.regularized:
        raise ValueError("operator_apply requires regularized parameters")
    t_new = state_old.t + dt if math.isfinite(dt) else state_old.t
    f_new = as_forcing(forcing)(t_new)
    du, dom, dk = M.rhs(state_candidate, t_new, f_new, params, env)
    g = state_candidate.grid
    ru = [
        (c.values - o.values) / dt - d.values
        for c, o, d in zip(state_candidate.u.components, state_old.u.components, du.components)
    ]
    rom = (state_candidate.omega.values - state_old.omega.values) / dt - dom.values
    rk = (state_candidate.k.values - state_old.k.values) / dt - dk.values
    return (
        VectorField.from_arrays(g, ru, copy=False),
        ScalarField(g, rom, copy=False),
        ScalarField(g, rk, copy=False),
    )


def _l2(grid, arrays: Sequence[np.ndarray]) -> float:
    s = 0.0
    with np.errstate(over="ignore"):  # overflow here is a divergence signal, not a bug
        for a in arrays:
            s += float(np.sum(a * a))
    return math.sqrt(grid.h**grid.dim * s)


def step_rothe(
    state: State,
    dt: float,
    forcing: Forcing,
    params: ModelParams,
    env: ComparisonEnvelope,
    cfg: StepConfig,
) -> State:
    """Implicit Euler via damped Picard: U <- U - damping * dt * residual(U).

    The u-residual is Leray-projected each iterate (the discarded gradient
    part is the pressure).  Convergence is declared when the residual norm
    drops below picard_tol relative to |U_old|/dt.
    """
    if dt == 0.0:
        return replace(state, guard_hits=0)
    g = state.grid
    t_new = state.t + dt
    theta = cfg.picard_damping * dt

    scale = (
        _l2(g, [c.values for c in state.u.components])
        + _l2(g, [state.omega.values])
        + _l2(g, [state.k.values])
    ) / dt + 1e-300

    u_arrays = [c.values for c in state.u.components]
    om = state.omega.values
    kk = state.k.values
    p_last = state.p

    for _ in range(cfg.picard_max_iters):
        cand = State(
            t=t_new,
            u=VectorField.from_arrays(g, u_arrays, copy=False),
            omega=ScalarField(g, om, copy=False),
            k=ScalarField(g, kk, copy=False),
            p=p_last,
        )
        ru, rom, rk = operator_apply(cand, state, dt, forcing, params, env)
        ru_sol, p_res = F.leray_project(ru)
        res = _l2(g, [c.values for c in ru_sol.components]) + _l2(g, [rom.values, rk.values])
        if not math.isfinite(res):
            raise PicardDiverged(f"non-finite residual at dt={dt}")
        p_last = ScalarField(g, -p_res.values, copy=False)
        if res <= cfg.picard_tol * scale:
            out = _finish_stage(g, u_arrays, om, kk, t_new, params, env, cfg)
            out = replace(out, p=p_last)
            _check_finite(out, dt)
            return out
        u_arrays = [a - theta * r.values for a, r in zip(u_arrays, ru_sol.components)]
        om = om - theta * rom.values
        kk = kk - theta * rk.values
    raise PicardDiverged(f"no convergence in {cfg.picard_max_iters} iterations at dt={dt}")


_MAX_RETRIES = 10


def _one_step(state, dt, forcing, params, env, cfg):
    """Attempt one step, halving dt on rejection; returns (state, dt actually used)."""
    stepper = step_explicit if cfg.scheme == "explicit_rk2" else step_rothe
    for _ in range(_MAX_RETRIES + 1):
        try:
            return stepper(state, dt, forcing, params, env, cfg), dt
        except (StepRejected, PicardDiverged):
            dt *= 0.5
    raise StepRejected(f"step rejected after {_MAX_RETRIES} dt halvings")


def run(
    initial: State,
    t_end: float,
    forcing: Forcing,
    params: ModelParams,
    env: ComparisonEnvelope,
    cfg: StepConfig,
    sample_every: float,
) -> Trajectory:
    """Advance to t_end, sampling diagnostics every `sample_every` time units.

    dt is the smaller of the CFL estimate and the distance to the next sample
    boundary, so runs are deterministic and restartable on aligned sample
    grids.  t_end itself is always the final sample.
    """
    if t_end < initial.t:
        raise ValueError("t_end must be >= initial.t")
    if sample_every <= 0.0:
        raise ValueError("sample_every must be positive")
    fprov = as_forcing(forcing)

    times = [initial.t]
    states = [initial]
    records = [diag.record(initial, fprov(initial.t), params, env)]

    state = initial
    i = 1
    while state.t < t_end:
        boundary = min(initial.t + i * sample_every, t_end)
        i += 1
        if boundary <= state.t:
            continue
        guard_hits = 0
        while state.t < boundary:
            remaining = boundary - state.t
            dt = min(cfl_dt(state, params, cfg), remaining)
            state, dt_used = _one_step(state, dt, forcing, params, env, cfg)
            if dt_used == remaining and state.t != boundary:
                state = replace(state, t=boundary)
            guard_hits += state.guard_hits
        times.append(state.t)
        states.append(state)
        records.append(
            diag.record(state, fprov(state.t), params, env, guard_activations=guard_hits)
        )

    return Trajectory(tuple(times), tuple(states), tuple(records), params, env)
