"""Periodic grid data model and discrete differential/integral operators.

Everything lives on a uniform lattice over the torus (]0,l[)^d with d in
{1,2,3}.  Spatial derivatives are second-order centered differences, diffusion
operators are written in conservative flux form, and the Leray projection uses
the discrete Fourier transform with the exact symbol of the centered
difference.  These choices make the discrete counterparts of the continuous
identities exact:

* integration by parts:   sum(div(v) * f) == -sum(v . grad(f))
* conservativity:         integrate(div_flux(a, f)) == 0
* dissipativity:          sum(f * div_flux(a, f)) <= 0        (a >= 0)
* skew symmetry:          sum(f * advect(u, f)) == 0
* energy identity:        sum(u . div_tensor_flux(a, D(u))) == -sum(a |D(u)|^2)

Reductions use numpy's fixed-order pairwise summation over the C-contiguous
value buffer, so diagnostics are bit-reproducible across runs and thread
counts.  Fields are immutable once constructed (the value buffers are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import IncompatibleGrid, NegativeCoefficient

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "SymTensorField",
    "gradient",
    "divergence",
    "sym_gradient",
    "frobenius_sq",
    "div_flux",
    "div_tensor_flux",
    "r_laplacian",
    "r_laplacian_vec",
    "leray_project",
    "integrate",
    "lp_norm",
    "w1p_seminorm",
    "advect",
    "advect_vec",
    "signed_power",
    "vector_signed_power",
    "max_face_gradient",
]

_COEFF_TOL = 1e-12  # negative coefficient entries beyond this raise


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on the cube (]0,side[)^dim with n points per axis.

    n must be even and at least 4: the Fourier symbol of the centered
    difference vanishes at the Nyquist mode, and the projection handles that
    mode explicitly only for even n.
    """

    dim: int
    n: int
    side: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 4 or self.n % 2 != 0:
            raise ValueError(f"n must be even and >= 4, got {self.n}")
        if not (self.side > 0.0 and np.isfinite(self.side)):
            raise ValueError(f"side must be positive and finite, got {self.side}")

    @property
    def h(self) -> float:
        return self.side / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def npoints(self) -> int:
        return self.n**self.dim

    @property
    def volume(self) -> float:
        return self.side**self.dim

    def coords(self) -> tuple:
        """Node coordinate arrays (x_1, ..., x_d), each of shape `self.shape`."""
        axes = [self.h * np.arange(self.n) for _ in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij")) if self.dim > 1 else (axes[0],)


def _prepare(grid: Grid, values, copy: bool) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape == (grid.npoints,):
        arr = arr.reshape(grid.shape)
    if arr.shape != grid.shape:
        raise IncompatibleGrid(f"values of shape {arr.shape} do not fit grid {grid.shape}")
    if copy:
        arr = arr.copy()
    elif not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


class ScalarField:
    """A real scalar sampled at the grid nodes (row-major, axes x1..xd)."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values, *, copy: bool = True):
        self.grid = grid
        self.values = _prepare(grid, values, copy)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)), copy=False)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "ScalarField":
        """Sample ``fn(x1, ..., xd)`` at the nodes."""
        return cls(grid, np.asarray(fn(*grid.coords()), dtype=np.float64), copy=False)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


class VectorField:
    """d scalar components sharing one grid."""

    __slots__ = ("grid", "components")

    def __init__(self, grid: Grid, components: Sequence[ScalarField]):
        if len(components) != grid.dim:
            raise IncompatibleGrid(f"expected {grid.dim} components, got {len(components)}")
        for c in components:
            if c.grid != grid:
                raise IncompatibleGrid("vector components must share the grid")
        self.grid = grid
        self.components = tuple(components)

    @classmethod
    def from_arrays(cls, grid: Grid, arrays, *, copy: bool = True) -> "VectorField":
        return cls(grid, [ScalarField(grid, a, copy=copy) for a in arrays])

    @classmethod
    def constant(cls, grid: Grid, vec) -> "VectorField":
        vec = np.asarray(vec, dtype=np.float64).reshape(grid.dim)
        return cls(grid, [ScalarField.constant(grid, v) for v in vec])

    @classmethod
    def zero(cls, grid: Grid) -> "VectorField":
        return cls.constant(grid, np.zeros(grid.dim))

    def arrays(self) -> tuple:
        return tuple(c.values for c in self.components)

    def max_abs(self) -> float:
        return max(float(np.abs(c.values).max()) for c in self.components)


def _sym_index(i: int, j: int, d: int) -> int:
    # upper-triangle storage, row-major: (0,0),(0,1),..,(0,d-1),(1,1),..
    if i > j:
        i, j = j, i
    return i * d - (i * (i - 1)) // 2 + (j - i)


class SymTensorField:
    """Symmetric d x d tensor with upper-triangle storage (d(d+1)/2 scalars)."""

    __slots__ = ("grid", "entries")

    def __init__(self, grid: Grid, entries: Sequence[ScalarField]):
        d = grid.dim
        want = d * (d + 1) // 2
        if len(entries) != want:
            raise IncompatibleGrid(f"expected {want} entries for dim {d}, got {len(entries)}")
        for e in entries:
            if e.grid != grid:
                raise IncompatibleGrid("tensor entries must share the grid")
        self.grid = grid
        self.entries = tuple(entries)

    def entry(self, i: int, j: int) -> ScalarField:
        return self.entries[_sym_index(i, j, self.grid.dim)]

    def entry_values(self, i: int, j: int) -> np.ndarray:
        return self.entries[_sym_index(i, j, self.grid.dim)].values

    def trace(self) -> ScalarField:
        d = self.grid.dim
        tr = sum(self.entry_values(i, i) for i in range(d))
        return ScalarField(self.grid, tr, copy=False)

    @classmethod
    def zero(cls, grid: Grid) -> "SymTensorField":
        d = grid.dim
        return cls(grid, [ScalarField.constant(grid, 0.0) for _ in range(d * (d + 1) // 2)])


# ---------------------------------------------------------------------------
# stencil primitives


def _centered(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second-order centered difference with periodic wrap."""
    return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2.0 * h)


def _fwd(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Two-point difference at the face j+1/2 along `axis`."""
    return (np.roll(a, -1, axis=axis) - a) / h


def _face_avg(a: np.ndarray, axis: int) -> np.ndarray:
    """Arithmetic mean of the two cells adjacent to face j+1/2."""
    return 0.5 * (a + np.roll(a, -1, axis=axis))


def _same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise IncompatibleGrid("operands must share a grid")
    return g


# ---------------------------------------------------------------------------
# differential operators


def gradient(f: ScalarField) -> VectorField:
    """Centered-difference gradient, one component per axis."""
    g = f.grid
    comps = [_centered(f.values, ax, g.h) for ax in range(g.dim)]
    return VectorField.from_arrays(g, comps, copy=False)


def divergence(v: VectorField) -> ScalarField:
    """Centered-difference divergence; exact negative adjoint of `gradient`."""
    g = v.grid
    out = np.zeros(g.shape)
    for ax in range(g.dim):
        out += _centered(v.components[ax].values, ax, g.h)
    return ScalarField(g, out, copy=False)


def sym_gradient(u: VectorField) -> SymTensorField:
    """Symmetrized velocity gradient 0.5*(du_i/dx_j + du_j/dx_i)."""
    g = u.grid
    d = g.dim
    entries = []
    for i in range(d):
        for j in range(i, d):
            dij = 0.5 * (
                _centered(u.components[i].values, j, g.h)
                + _centered(u.components[j].values, i, g.h)
            )
            entries.append(ScalarField(g, dij, copy=False))
    return SymTensorField(g, entries)


def frobenius_sq(D: SymTensorField) -> ScalarField:
    """Pointwise squared Frobenius norm; off-diagonal entries count twice."""
    g = D.grid
    d = g.dim
    out = np.zeros(g.shape)
    for i in range(d):
        out += D.entry_values(i, i) ** 2
        for j in range(i + 1, d):
            out += 2.0 * D.entry_values(i, j) ** 2
    return ScalarField(g, out, copy=False)


def _check_coefficient(a: ScalarField) -> np.ndarray:
    amin = a.values.min()
    if amin < -_COEFF_TOL:
        raise NegativeCoefficient(f"coefficient minimum {amin} < -{_COEFF_TOL}")
    # round-off negatives are treated as zero so the dissipation form stays nonneg
    return np.maximum(a.values, 0.0) if amin < 0.0 else a.values


def div_flux(a: ScalarField, f: ScalarField) -> ScalarField:
    """Conservative variable-coefficient diffusion div(a grad f).

    Face coefficients are arithmetic means of the adjacent cells; the discrete
    integral of the result over the torus is exactly zero, and the quadratic
    form sum(f * div_flux(a, f)) is nonpositive whenever a >= 0.
    """
    g = _same_grid(a, f)
    av = _check_coefficient(a)
    h2 = g.h * g.h
    out = np.zeros(g.shape)
    for ax in range(g.dim):
        flux = _face_avg(av, ax) * (np.roll(f.values, -1, axis=ax) - f.values)
        out += (flux - np.roll(flux, 1, axis=ax)) / h2
    return ScalarField(g, out, copy=False)


def div_tensor_flux(a: ScalarField, D: SymTensorField) -> VectorField:
    """Row-wise divergence of the tensor a*D using centered differences.

    Component i is sum_j d/dx_j (a * D_ij); the pointwise product keeps the
    discrete momentum/energy pairing with `sym_gradient` exact:
    sum(u . div_tensor_flux(a, D(u))) == -sum(a * |D(u)|^2).
    """
    g = _same_grid(a, D)
    av = _check_coefficient(a)
    comps = []
    for i in range(g.dim):
        out = np.zeros(g.shape)
        for j in range(g.dim):
            out += _centered(av * D.entry_values(i, j), j, g.h)
        comps.append(out)
    return VectorField.from_arrays(g, comps, copy=False)


def _face_gradient_sq(f: np.ndarray, normal_axis: int, g: Grid) -> tuple:
    """(normal derivative, squared gradient magnitude) at the faces j+1/2."""
    gn = _fwd(f, normal_axis, g.h)
    mag2 = gn * gn
    for ax in range(g.dim):
        if ax == normal_axis:
            continue
        t = _face_avg(_centered(f, ax, g.h), normal_axis)
        mag2 = mag2 + t * t
    return gn, mag2


def r_laplacian(f: ScalarField, r: float) -> ScalarField:
    """Degenerate diffusion div(|grad f|^(r-2) grad f) in flux form.

    The face flux uses the two-point normal derivative and face-averaged
    tangential centered differences for the gradient magnitude.  Conservative
    (integral exactly zero) and dissipative (sum(f * r_laplacian(f)) <= 0).
    r == 2 is allowed and reduces to div_flux with unit coefficient.
    """
    if r < 2.0:
        raise ValueError(f"r must be >= 2, got {r}")
    g = f.grid
    out = np.zeros(g.shape)
    for ax in range(g.dim):
        gn, mag2 = _face_gradient_sq(f.values, ax, g)
        flux = mag2 ** ((r - 2.0) / 2.0) * gn if r != 2.0 else gn
        out += (flux - np.roll(flux, 1, axis=ax)) / g.h
    return ScalarField(g, out, copy=False)


def r_laplacian_vec(u: VectorField, r: float) -> VectorField:
    """Row-wise div(|D(u)|^(r-2) D(u)) with face-assembled tensor magnitude.

    Mirrors the scalar construction: at a face with normal axis j, tensor
    entries involving direction j take their normal part from the two-point
    difference, all other parts are face averages of centered values.
    """
    if r < 2.0:
        raise ValueError(f"r must be >= 2, got {r}")
    g = u.grid
    d = g.dim
    h = g.h
    uv = [c.values for c in u.components]
    cent = [[_centered(uv[i], j, h) for j in range(d)] for i in range(d)]

    fluxes = []  # fluxes[j][i]: flux of component i through faces with normal j
    for j in range(d):
        face = {}
        for a in range(d):
            for b in range(a, d):
                if a == b == j:
                    face[(a, b)] = _fwd(uv[j], j, h)
                elif a == j or b == j:
                    i = b if a == j else a  # the non-normal index
                    two_point = _fwd(uv[i], j, h)
                    tangent = _face_avg(cent[j][i], j)
                    face[(a, b)] = 0.5 * (two_point + tangent)
                else:
                    dab = 0.5 * (cent[a][b] + cent[b][a])
                    face[(a, b)] = _face_avg(dab, j)
        mag2 = np.zeros(g.shape)
        for a in range(d):
            mag2 += face[(a, a)] ** 2
            for b in range(a + 1, d):
                mag2 += 2.0 * face[(a, b)] ** 2
        w = mag2 ** ((r - 2.0) / 2.0) if r != 2.0 else 1.0
        fluxes.append([w * face[(min(i, j), max(i, j))] for i in range(d)])

    comps = []
    for i in range(d):
        out = np.zeros(g.shape)
        for j in range(d):
            fij = fluxes[j][i]
            out += (fij - np.roll(fij, 1, axis=j)) / h
        comps.append(out)
    return VectorField.from_arrays(g, comps, copy=False)


def signed_power(x: np.ndarray, r: float) -> np.ndarray:
    """|x|^(r-2) * x, the odd power nonlinearity of the damping terms."""
    return np.abs(x) ** (r - 2.0) * x


def vector_signed_power(arrays: Sequence[np.ndarray], r: float) -> list:
    """|xi|^(r-2) * xi for a vector xi given as per-component arrays."""
    mag2 = sum(a * a for a in arrays)
    w = mag2 ** ((r - 2.0) / 2.0)
    return [w * a for a in arrays]


def max_face_gradient(f: ScalarField) -> float:
    """Largest face gradient magnitude, as used by the r-Laplacian fluxes."""
    g = f.grid
    m = 0.0
    for ax in range(g.dim):
        _, mag2 = _face_gradient_sq(f.values, ax, g)
        m = max(m, float(mag2.max()))
    return float(np.sqrt(m))


# ---------------------------------------------------------------------------
# Leray projection


def _difference_symbol(grid: Grid) -> list:
    """Fourier symbol sin(2 pi m / n) / h of the centered difference, per axis."""
    n, h, d = grid.n, grid.h, grid.dim
    base = np.sin(2.0 * np.pi * np.fft.fftfreq(n)) / h
    base[n // 2] = 0.0  # sin(pi) is only ~1e-16 in floats; the symbol must vanish exactly
    out = []
    for ax in range(d):
        shape = [1] * d
        shape[ax] = n
        out.append(base.reshape(shape))
    return out


def leray_project(v: VectorField) -> tuple:
    """Remove the discrete-gradient part of v.

    Returns (w, p) with w = v - gradient(p), mean(p) = 0, and the centered
    divergence of w at round-off level.  The pressure is solved in Fourier
    space with the exact centered-difference symbol; modes where the symbol
    vanishes (mean and Nyquist) carry no pressure and are left untouched in w,
    which is harmless because the centered divergence annihilates them.
    """
    g = v.grid
    sym = _difference_symbol(g)
    vhat = [np.fft.fftn(c.values) for c in v.components]
    denom = sum(s * s for s in sym)
    div_hat = sum(1j * s * vh for s, vh in zip(sym, vhat))
    with np.errstate(divide="ignore", invalid="ignore"):
        phat = np.where(denom > 0.0, -div_hat / np.where(denom > 0.0, denom, 1.0), 0.0)
    p = ScalarField(g, np.fft.ifftn(phat).real, copy=False)
    gp = gradient(p)
    comps = [cv.values - gc.values for cv, gc in zip(v.components, gp.components)]
    return VectorField.from_arrays(g, comps, copy=False), p


# ---------------------------------------------------------------------------
# reductions and advection


def integrate(f: ScalarField) -> float:
    """h^d * sum of values, fixed-order pairwise summation (deterministic)."""
    return float(f.grid.h**f.grid.dim * np.sum(f.values))


def lp_norm(f: ScalarField, p: float) -> float:
    """(h^d * sum |f|^p)^(1/p) for p >= 1."""
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    g = f.grid
    return float((g.h**g.dim * np.sum(np.abs(f.values) ** p)) ** (1.0 / p))


def w1p_seminorm(f: ScalarField, p: float) -> float:
    """L^p norm of the centered-gradient magnitude."""
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    g = f.grid
    mag2 = np.zeros(g.shape)
    for c in gradient(f).components:
        mag2 += c.values**2
    return float((g.h**g.dim * np.sum(mag2 ** (p / 2.0))) ** (1.0 / p))


def advect(u: VectorField, f: ScalarField) -> ScalarField:
    """Skew-symmetric advection 0.5*(u . grad f + div(u f)).

    The discrete pairing sum(f * advect(u, f)) vanishes exactly (integration
    by parts of the centered difference), which is the discrete counterpart of
    the convective terms dropping out of energy balances.
    """
    g = _same_grid(u, f)
    out = np.zeros(g.shape)
    for ax in range(g.dim):
        ua = u.components[ax].values
        out += 0.5 * (ua * _centered(f.values, ax, g.h) + _centered(ua * f.values, ax, g.h))
    return ScalarField(g, out, copy=False)


def advect_vec(u: VectorField, v: VectorField) -> VectorField:
    """Componentwise skew-symmetric advection of a vector field."""
    g = _same_grid(u, v)
    return VectorField(g, [advect(u, c) for c in v.components])
