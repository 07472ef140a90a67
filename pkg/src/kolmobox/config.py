"""Line-oriented "key = value" run configuration.

'#' starts a comment, lists are comma-separated, unknown keys are errors.
Perturbation modes are colon-separated tuples field:axis:wavenumber:amplitude
(e.g. ``perturb_modes = omega:0:2:0.05, k:1:1:0.1``).  Validation happens at
parse time for scalar constraints and at state-construction time for the
pointwise initial-data constraints (omega0 within [omega_star, omega_sup],
k0 >= k_star).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import snapshot as snap
from .errors import ParseError, ValidationError
from .fields import Grid, ScalarField, VectorField, leray_project
from .model import ComparisonEnvelope, ModelParams, State
from .timestepper import StepConfig

__all__ = ["PerturbMode", "RunConfig", "parse_config", "load_config", "build_problem"]


@dataclass(frozen=True)
class PerturbMode:
    target: str  # "omega", "k" or "u1".."u3"
    axis: int
    wavenumber: int
    amplitude: float


@dataclass(frozen=True)
class RunConfig:
    # discretization
    dim: int = 2
    n: int = 32
    side: float = 1.0
    t_end: float = 1.0
    sample_every: float = 0.0  # 0 means t_end / 50
    # stepping
    scheme: str = "explicit_rk2"
    cfl_safety: float = 0.4
    dt_max: float = math.inf
    k_floor: float = 1e-14
    picard_max_iters: int = 200
    picard_tol: float = 1e-10
    picard_damping: float = 0.7
    guard: bool = True
    guard_slack: float = 0.05
    # closure coefficients and regularization
    nu0: float = 1.0
    nu1: float = 1.0
    nu2: float = 1.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    eps: float = 0.0
    r: float = 3.2
    regularized: bool = False
    # envelope bounds (non-positive means: derive from the initial data)
    omega_star: float = 0.0
    omega_sup: float = 0.0
    k_star: float = 0.0
    # initial data
    ic: str = "homogeneous"  # homogeneous | perturbed | snapshot
    ic_u: Tuple[float, ...] = ()
    ic_omega0: float = 1.0
    ic_k0: float = 1.0
    perturb_modes: Tuple[PerturbMode, ...] = ()
    perturb_random_modes: int = 0
    perturb_random_amplitude: float = 0.0
    snapshot_path: str = ""
    # forcing
    forcing: str = "none"  # none | constant | single_mode
    forcing_vector: Tuple[float, ...] = ()
    forcing_axis: int = 0
    forcing_wavenumber: int = 1
    forcing_amplitude: float = 0.0
    forcing_component: int = 0
    # misc
    seed: int = 0
    out_dir: str = "out"


_BOOL = {"true": True, "false": False, "on": True, "off": False, "1": True, "0": False}


def _parse_bool(text: str, key: str, line: int) -> bool:
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ParseError(line, f"{key}: expected a boolean, got {text!r}") from None


def _parse_float_list(text: str, key: str, line: int) -> Tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ParseError(line, f"{key}: expected comma-separated reals, got {text!r}") from None


def _parse_modes(text: str, key: str, line: int) -> Tuple[PerturbMode, ...]:
    modes = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 4:
            raise ParseError(line, f"{key}: expected field:axis:wavenumber:amplitude, got {item!r}")
        target = parts[0].strip()
        try:
            modes.append(
                PerturbMode(target, int(parts[1]), int(parts[2]), float(parts[3]))
            )
        except ValueError:
            raise ParseError(line, f"{key}: bad numbers in {item!r}") from None
    return tuple(modes)


_SCHEMA = {
    "dim": int,
    "n": int,
    "side": float,
    "t_end": float,
    "sample_every": float,
    "scheme": str,
    "cfl_safety": float,
    "dt_max": float,
    "k_floor": float,
    "picard_max_iters": int,
    "picard_tol": float,
    "picard_damping": float,
    "guard": bool,
    "guard_slack": float,
    "nu0": float,
    "nu1": float,
    "nu2": float,
    "alpha1": float,
    "alpha2": float,
    "eps": float,
    "r": float,
    "regularized": bool,
    "omega_star": float,
    "omega_sup": float,
    "k_star": float,
    "ic": str,
    "ic_u": "float_list",
    "ic_omega0": float,
    "ic_k0": float,
    "perturb_modes": "modes",
    "perturb_random_modes": int,
    "perturb_random_amplitude": float,
    "snapshot_path": str,
    "forcing": str,
    "forcing_vector": "float_list",
    "forcing_axis": int,
    "forcing_wavenumber": int,
    "forcing_amplitude": float,
    "forcing_component": int,
    "seed": int,
    "out_dir": str,
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text; unknown keys and bad values fail fast."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(lineno, f"expected 'key = value', got {body!r}")
        key, _, value = body.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ParseError(lineno, f"unknown key {key!r}")
        if key in raw:
            raise ParseError(lineno, f"duplicate key {key!r}")
        kind = _SCHEMA[key]
        try:
            if kind is int:
                raw[key] = int(value)
            elif kind is float:
                raw[key] = float(value)
            elif kind is bool:
                raw[key] = _parse_bool(value, key, lineno)
            elif kind is str:
                raw[key] = value
            elif kind == "float_list":
                raw[key] = _parse_float_list(value, key, lineno)
            elif kind == "modes":
                raw[key] = _parse_modes(value, key, lineno)
        except ParseError:
            raise
        except ValueError:
            raise ParseError(lineno, f"{key}: could not parse {value!r}") from None

    cfg = RunConfig(**raw)
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _require(cond: bool, fieldname: str, constraint: str):
    if not cond:
        raise ValidationError(fieldname, constraint)


def _validate(cfg: RunConfig):
    _require(cfg.dim in (1, 2, 3), "dim", "must be 1, 2 or 3")
    _require(cfg.n >= 4 and cfg.n % 2 == 0, "n", "must be even and >= 4")
    _require(cfg.side > 0, "side", "must be positive")
    _require(cfg.t_end >= 0, "t_end", "must be nonnegative")
    _require(cfg.sample_every >= 0, "sample_every", "must be nonnegative")
    _require(cfg.scheme in ("explicit_rk2", "rothe_picard"), "scheme", "unknown scheme")
    _require(0 < cfg.cfl_safety <= 1, "cfl_safety", "must be in ]0,1]")
    _require(cfg.dt_max > 0, "dt_max", "must be positive")
    _require(cfg.k_floor >= 0, "k_floor", "must be nonnegative")
    _require(cfg.picard_max_iters > 0, "picard_max_iters", "must be positive")
    _require(cfg.picard_tol > 0, "picard_tol", "must be positive")
    _require(0 < cfg.picard_damping <= 1, "picard_damping", "must be in ]0,1]")
    _require(0 <= cfg.guard_slack < 1, "guard_slack", "must be in [0,1[")
    for name in ("nu0", "nu1", "nu2", "alpha1", "alpha2"):
        _require(getattr(cfg, name) > 0, name, "must be positive")
    _require(cfg.eps >= 0, "eps", "must be nonnegative")
    if cfg.regularized:
        _require(cfg.eps > 0, "eps", "must be positive when regularized")
        _require(cfg.r > 2, "r", "must exceed 2 when regularized")
    if cfg.scheme == "rothe_picard":
        _require(cfg.regularized, "scheme", "rothe_picard requires regularized = true")
    for name in ("omega_star", "omega_sup", "k_star"):
        _require(getattr(cfg, name) >= 0, name, "must be nonnegative (0 = derive from IC)")
    if cfg.omega_star > 0 or cfg.omega_sup > 0:
        _require(
            cfg.omega_star > 0 and cfg.omega_sup >= cfg.omega_star,
            "omega_star",
            "need 0 < omega_star <= omega_sup when either is given",
        )
    _require(cfg.ic in ("homogeneous", "perturbed", "snapshot"), "ic", "unknown initial data kind")
    if cfg.ic == "snapshot":
        _require(bool(cfg.snapshot_path), "snapshot_path", "required for ic = snapshot")
    else:
        _require(cfg.ic_omega0 > 0, "ic_omega0", "must be positive")
        _require(cfg.ic_k0 > 0, "ic_k0", "must be positive")
        _require(
            len(cfg.ic_u) in (0, cfg.dim), "ic_u", f"must have {cfg.dim} entries (or be omitted)"
        )
    for m in cfg.perturb_modes:
        _require(
            m.target in ("omega", "k") or m.target in tuple(f"u{i+1}" for i in range(cfg.dim)),
            "perturb_modes",
            f"unknown target {m.target!r}",
        )
        _require(0 <= m.axis < cfg.dim, "perturb_modes", f"axis {m.axis} out of range")
        _require(
            1 <= m.wavenumber < cfg.n // 2,
            "perturb_modes",
            f"wavenumber {m.wavenumber} not resolvable on n = {cfg.n}",
        )
    _require(cfg.perturb_random_modes >= 0, "perturb_random_modes", "must be nonnegative")
    _require(cfg.forcing in ("none", "constant", "single_mode"), "forcing", "unknown forcing kind")
    if cfg.forcing == "constant":
        _require(
            len(cfg.forcing_vector) == cfg.dim, "forcing_vector", f"must have {cfg.dim} entries"
        )
    if cfg.forcing == "single_mode":
        _require(0 <= cfg.forcing_axis < cfg.dim, "forcing_axis", "out of range")
        _require(0 <= cfg.forcing_component < cfg.dim, "forcing_component", "out of range")
        _require(cfg.forcing_wavenumber >= 1, "forcing_wavenumber", "must be >= 1")
    _require(cfg.seed >= 0, "seed", "must be a nonnegative integer")


# ---------------------------------------------------------------------------
# constructing the simulation objects


def _mode_array(grid: Grid, axis: int, wavenumber: int, amplitude: float, phase: float = 0.0):
    x = grid.coords()[axis]
    return amplitude * np.sin(2.0 * np.pi * wavenumber * x / grid.side + phase)


def _build_state(cfg: RunConfig, grid: Grid) -> State:
    if cfg.ic == "snapshot":
        return snap.state_from_snapshot(cfg.snapshot_path)

    u_const = cfg.ic_u if cfg.ic_u else (0.0,) * cfg.dim
    u_arrays = [np.full(grid.shape, v) for v in u_const]
    om = np.full(grid.shape, cfg.ic_omega0)
    kk = np.full(grid.shape, cfg.ic_k0)

    if cfg.ic == "perturbed":
        modes = [(m, 0.0) for m in cfg.perturb_modes]
        if cfg.perturb_random_modes > 0:
            rng = np.random.default_rng(cfg.seed)
            targets = ["omega", "k"] + [f"u{i+1}" for i in range(cfg.dim)]
            for _ in range(cfg.perturb_random_modes):
                m = PerturbMode(
                    target=str(rng.choice(targets)),
                    axis=int(rng.integers(0, cfg.dim)),
                    wavenumber=int(rng.integers(1, max(2, cfg.n // 4))),
                    amplitude=cfg.perturb_random_amplitude * float(rng.uniform(-1.0, 1.0)),
                )
                modes.append((m, float(rng.uniform(0.0, 2.0 * np.pi))))
        for m, phase in modes:
            bump = _mode_array(grid, m.axis, m.wavenumber, m.amplitude, phase)
            if m.target == "omega":
                om = om + bump
            elif m.target == "k":
                kk = kk + bump
            else:
                i = int(m.target[1:]) - 1
                u_arrays[i] = u_arrays[i] + bump

    u, p = leray_project(VectorField.from_arrays(grid, u_arrays, copy=False))
    return State(
        t=0.0,
        u=u,
        omega=ScalarField(grid, om, copy=False),
        k=ScalarField(grid, kk, copy=False),
        p=p,
    )


def _build_env(cfg: RunConfig, state: State) -> ComparisonEnvelope:
    om_min, om_max = state.omega.min(), state.omega.max()
    k_min = state.k.min()
    omega_star = cfg.omega_star if cfg.omega_star > 0 else om_min
    omega_sup = cfg.omega_sup if cfg.omega_sup > 0 else om_max
    k_star = cfg.k_star if cfg.k_star > 0 else k_min
    if not om_min > 0:
        raise ValidationError("ic", "initial omega must be positive everywhere")
    if not k_min > 0:
        raise ValidationError("ic", "initial k must be positive everywhere")
    tol = 1e-12 * max(1.0, om_max)
    if om_min < omega_star - tol or om_max > omega_sup + tol:
        raise ValidationError(
            "ic", "initial omega must satisfy omega_star <= omega <= omega_sup pointwise"
        )
    if k_min < k_star - tol:
        raise ValidationError("ic", "initial k must satisfy k >= k_star pointwise")
    return ComparisonEnvelope(omega_star=omega_star, omega_sup=omega_sup, k_star=k_star)


def _build_forcing(cfg: RunConfig, grid: Grid) -> Optional[VectorField]:
    if cfg.forcing == "none":
        return None
    if cfg.forcing == "constant":
        return VectorField.constant(grid, np.asarray(cfg.forcing_vector))
    arrays = [np.zeros(grid.shape) for _ in range(grid.dim)]
    arrays[cfg.forcing_component] = _mode_array(
        grid, cfg.forcing_axis, cfg.forcing_wavenumber, cfg.forcing_amplitude
    )
    return VectorField.from_arrays(grid, arrays, copy=False)


@dataclass(frozen=True)
class Problem:
    """Everything a command needs to run one simulation."""

    cfg: RunConfig
    grid: Grid
    state: State
    env: ComparisonEnvelope
    params: ModelParams
    step: StepConfig
    forcing: Optional[VectorField]
    sample_every: float


def build_problem(cfg: RunConfig) -> Problem:
    grid = Grid(cfg.dim, cfg.n, cfg.side)
    params = ModelParams(
        nu0=cfg.nu0,
        nu1=cfg.nu1,
        nu2=cfg.nu2,
        alpha1=cfg.alpha1,
        alpha2=cfg.alpha2,
        eps=cfg.eps,
        r=cfg.r,
        regularized=cfg.regularized,
    )
    state = _build_state(cfg, grid)
    env = _build_env(cfg, state)
    step = StepConfig(
        scheme=cfg.scheme,
        cfl_safety=cfg.cfl_safety,
        dt_max=cfg.dt_max,
        k_floor=cfg.k_floor,
        picard_max_iters=cfg.picard_max_iters,
        picard_tol=cfg.picard_tol,
        picard_damping=cfg.picard_damping,
        guard=cfg.guard,
        guard_slack=cfg.guard_slack,
    )
    sample_every = cfg.sample_every if cfg.sample_every > 0 else max(cfg.t_end / 50.0, 1e-12)
    return Problem(
        cfg=cfg,
        grid=grid,
        state=state,
        env=env,
        params=params,
        step=step,
        forcing=_build_forcing(cfg, grid),
        sample_every=sample_every,
    )
