"""Grids, fields, parameters, state containers and time-step control.

Storage follows the MAC (marker-and-cell) layout: scalars live at cell
centres, velocity component ``a`` lives on the faces normal to axis ``a``.

Face indexing
    periodic grids: face ``i`` along an axis sits between cells ``i`` and
    ``i+1`` (wrapping), so face arrays have the same shape as cell arrays.
    box grids: face ``k`` sits between cells ``k-1`` and ``k`` for
    ``k = 0..n``; faces ``0`` and ``n`` are the walls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import erf

PERIODIC = "periodic"
BOX = "box"
_BC_ALIASES = {"periodic": PERIODIC, "periodicall": PERIODIC, "box": BOX}

# Negative values above this fraction of ||n||_inf are treated as round-off.
CLIP_RELATIVE = 1e-14
_TINY = 1e-300


class KsflowError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(KsflowError, ValueError):
    pass


class NonFiniteError(KsflowError, FloatingPointError):
    pass


class NegativityError(KsflowError):
    """A density became negative beyond the round-off clipping threshold."""


class BlowupSuspected(KsflowError):
    """The stable time step dropped below ``dt_floor``."""

    def __init__(self, dt: float, dt_floor: float):
        super().__init__(f"time step {dt:.3e} collapsed below dt_floor={dt_floor:.3e}")
        self.dt = dt
        self.dt_floor = dt_floor


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(float(x))


@dataclass(frozen=True)
class GridSpec:
    """Uniform rectangular grid on ``[0, extent_0] x ... x [0, extent_{N-1}]``.

    ``extent`` is stored as exact fractions so that ``spacing * cells``
    reproduces ``extent`` exactly.
    """

    dim: int
    extent: tuple
    cells: tuple
    bc: str = PERIODIC

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        extent = tuple(_as_fraction(e) for e in self.extent)
        cells = tuple(int(n) for n in self.cells)
        if len(extent) != self.dim or len(cells) != self.dim:
            raise ConfigError("extent and cells need one entry per axis")
        if any(n < 4 for n in cells):
            raise ConfigError(f"need at least 4 cells per axis, got {cells}")
        if any(e <= 0 for e in extent):
            raise ConfigError(f"extent must be positive, got {extent}")
        bc = _BC_ALIASES.get(str(self.bc).lower())
        if bc is None:
            raise ConfigError(f"unknown boundary condition {self.bc!r}")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "bc", bc)
        if not all(math.isfinite(h) and h > 0 for h in self.h):
            raise ConfigError("grid spacing must be positive and finite")

    @property
    def spacing(self) -> tuple:
        return tuple(e / n for e, n in zip(self.extent, self.cells))

    @property
    def h(self) -> tuple:
        return tuple(float(s) for s in self.spacing)

    @property
    def h_min(self) -> float:
        return min(self.h)

    @property
    def cell_volume(self) -> float:
        return float(math.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(math.prod(self.extent))

    @property
    def shape(self) -> tuple:
        return self.cells

    @property
    def periodic(self) -> bool:
        return self.bc == PERIODIC

    def face_shape(self, axis: int) -> tuple:
        if self.periodic:
            return self.cells
        shape = list(self.cells)
        shape[axis] += 1
        return tuple(shape)

    def cell_centers(self, axis: int) -> np.ndarray:
        n = self.cells[axis]
        return (np.arange(n) + 0.5) * self.h[axis]

    def mesh(self) -> tuple:
        """Cell-centre coordinate arrays, ``indexing='ij'``."""
        return np.meshgrid(*(self.cell_centers(a) for a in range(self.dim)), indexing="ij")

    def face_mesh(self, axis: int) -> tuple:
        """Coordinates of the faces normal to ``axis``."""
        coords = []
        for b in range(self.dim):
            if b != axis:
                coords.append(self.cell_centers(b))
            elif self.periodic:
                coords.append((np.arange(self.cells[b]) + 1.0) * self.h[b])
            else:
                coords.append(np.arange(self.cells[b] + 1) * self.h[b])
        return np.meshgrid(*coords, indexing="ij")

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "extent": [float(e) for e in self.extent],
            "cells": list(self.cells),
            "bc": self.bc,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(dim=int(d["dim"]), extent=tuple(d["extent"]), cells=tuple(d["cells"]),
                   bc=d.get("bc", PERIODIC))


def check_finite(name: str, values) -> None:
    arrays = values if isinstance(values, tuple) else (values,)
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{name} contains NaN or Inf")


def check_scalar(grid: GridSpec, values: np.ndarray, name: str = "field") -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ConfigError(f"{name} has shape {values.shape}, grid expects {grid.shape}")
    check_finite(name, values)
    return values


def check_vector(grid: GridSpec, values: Sequence[np.ndarray], name: str = "u") -> tuple:
    values = tuple(np.asarray(v, dtype=float) for v in values)
    if len(values) != grid.dim:
        raise ConfigError(f"{name} needs {grid.dim} components, got {len(values)}")
    for a, v in enumerate(values):
        if v.shape != grid.face_shape(a):
            raise ConfigError(f"{name}[{a}] has shape {v.shape}, expected {grid.face_shape(a)}")
    check_finite(name, values)
    return values


def zero_velocity(grid: GridSpec) -> tuple:
    return tuple(np.zeros(grid.face_shape(a)) for a in range(grid.dim))


# ---------------------------------------------------------------------------
# MAC stencils shared by the transport and Stokes solvers.


def face_neighbors(q: np.ndarray, axis: int, grid: GridSpec) -> tuple:
    """Cell values on the low and high side of every face normal to ``axis``.

    Box walls have no outer cell; the inner value is repeated there.
    """
    if grid.periodic:
        return q, np.roll(q, -1, axis=axis)
    first = np.take(q, [0], axis=axis)
    last = np.take(q, [-1], axis=axis)
    low = np.concatenate([first, q], axis=axis)
    high = np.concatenate([q, last], axis=axis)
    return low, high


def face_gradient(q: np.ndarray, axis: int, grid: GridSpec) -> np.ndarray:
    """Central difference of a cell field onto faces; zero on box walls."""
    low, high = face_neighbors(q, axis, grid)
    return (high - low) / grid.h[axis]


def face_upwind(q: np.ndarray, velocity: np.ndarray, axis: int, grid: GridSpec) -> np.ndarray:
    """Donor-cell value of ``q`` for a face velocity."""
    low, high = face_neighbors(q, axis, grid)
    return np.where(velocity > 0, low, high)


def face_average(q: np.ndarray, axis: int, grid: GridSpec) -> np.ndarray:
    low, high = face_neighbors(q, axis, grid)
    return 0.5 * (low + high)


def divergence(faces: Sequence[np.ndarray], grid: GridSpec) -> np.ndarray:
    """Cell divergence of a face field (fluxes or MAC velocity)."""
    out = np.zeros(grid.shape)
    for a, f in enumerate(faces):
        if grid.periodic:
            out += (f - np.roll(f, 1, axis=a)) / grid.h[a]
        else:
            out += np.diff(f, axis=a) / grid.h[a]
    return out


def laplacian(q: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Cell Laplacian ``div(grad q)``; homogeneous Neumann on box walls."""
    return divergence([face_gradient(q, a, grid) for a in range(grid.dim)], grid)


def cell_gradient(q: np.ndarray, axis: int, grid: GridSpec) -> np.ndarray:
    """Centred gradient at cell centres (one-sided at box walls)."""
    if grid.periodic:
        return (np.roll(q, -1, axis=axis) - np.roll(q, 1, axis=axis)) / (2 * grid.h[axis])
    return np.gradient(q, grid.h[axis], axis=axis, edge_order=1)


# ---------------------------------------------------------------------------
# Parameters and state.


@dataclass(frozen=True)
class Params:
    """Model constants and time-step control.

    ``phi`` holds the potential sampled on cell centres (``None`` means zero);
    ``phi_slope`` adds a constant gradient, which is how a linear potential is
    represented on a torus.
    """

    m: float = 1.5
    eps: float = 1e-3
    phi: np.ndarray | None = field(default=None, compare=False, repr=False)
    phi_slope: tuple = ()
    cfl_adv: float = 0.05
    cfl_diff: float = 0.4
    t_end: float = 1.0
    dt_floor: float = 1e-10
    chemotaxis: bool = True
    fluid: bool = True

    def __post_init__(self):
        if not self.m > 1:
            raise ConfigError(f"m must exceed 1, got {self.m}")
        if not 0 < self.eps < 1:
            raise ConfigError(f"eps must lie in (0, 1), got {self.eps}")
        for name in ("cfl_adv", "cfl_diff"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if not self.dt_floor > 0:
            raise ConfigError("dt_floor must be positive")
        if self.phi is not None:
            phi = np.asarray(self.phi, dtype=float)
            check_finite("phi", phi)
            object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "phi_slope", tuple(float(s) for s in self.phi_slope))
        if not all(math.isfinite(s) for s in self.phi_slope):
            raise ConfigError("phi_slope must be finite")

    def grad_phi(self, grid: GridSpec) -> tuple:
        """Cell-centred gradient of the potential, one array per axis."""
        slope = self.phi_slope or (0.0,) * grid.dim
        if len(slope) != grid.dim:
            raise ConfigError("phi_slope needs one entry per axis")
        if self.phi is None:
            return tuple(np.full(grid.shape, s) for s in slope)
        phi = check_scalar(grid, self.phi, "phi")
        return tuple(cell_gradient(phi, a, grid) + slope[a] for a in range(grid.dim))

    def scalars(self) -> dict:
        return {
            "m": self.m, "eps": self.eps, "phi_slope": list(self.phi_slope),
            "cfl_adv": self.cfl_adv, "cfl_diff": self.cfl_diff, "t_end": self.t_end,
            "dt_floor": self.dt_floor, "chemotaxis": self.chemotaxis, "fluid": self.fluid,
        }


@dataclass(frozen=True)
class State:
    grid: GridSpec
    n: np.ndarray
    c: np.ndarray
    u: tuple
    p: np.ndarray
    t: float = 0.0

    def check(self) -> "State":
        check_scalar(self.grid, self.n, "n")
        check_scalar(self.grid, self.c, "c")
        check_scalar(self.grid, self.p, "p")
        check_vector(self.grid, self.u)
        if not math.isfinite(self.t):
            raise NonFiniteError("t is not finite")
        return self

    def evolve(self, **changes) -> "State":
        return replace(self, **changes)


def cfl_dt(state: State, params: Params) -> float:
    """Stable explicit step, capped so the run lands on ``t_end``.

    Raises :class:`BlowupSuspected` when the stability limit (before the
    ``t_end`` cap) falls below ``params.dt_floor``.
    """
    grid = state.grid
    check_finite("n", state.n)
    check_finite("c", state.c)
    check_finite("u", state.u)
    h = grid.h_min
    speed = max(float(np.max(np.abs(v))) for v in state.u)
    grad_c = max(float(np.max(np.abs(face_gradient(state.c, a, grid)))) for a in range(grid.dim))
    drift = max(speed, grad_c, _TINY)
    d_max = max(params.m * (float(np.max(state.n)) + params.eps) ** (params.m - 1), 1.0)
    dt = min(params.cfl_adv * h / drift, params.cfl_diff * h * h / (2 * grid.dim * d_max))
    if dt < params.dt_floor:
        raise BlowupSuspected(dt, params.dt_floor)
    remaining = params.t_end - state.t
    return min(dt, remaining) if remaining > 0 else dt


def enforce_nonnegative(q: np.ndarray, name: str, scale: float | None = None) -> tuple:
    """Clip round-off negativity; raise on anything larger.

    Returns the clipped array and the number of clipped cells.
    """
    check_finite(name, q)
    neg = q < 0
    if not neg.any():
        return q, 0
    ref = float(np.max(np.abs(q))) if scale is None else scale
    worst = float(-q[neg].min())
    if worst > CLIP_RELATIVE * ref:
        raise NegativityError(f"{name} reached {-worst:.3e} (threshold {CLIP_RELATIVE * ref:.3e})")
    q = q.copy()
    q[neg] = 0.0
    return q, int(neg.sum())


# ---------------------------------------------------------------------------
# Initial conditions and the field file format.

FIELD_MAGIC = "ksflow-field v1"


@dataclass(frozen=True)
class GaussianBump:
    center: tuple
    width: float
    mass: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        if not self.width > 0:
            raise ConfigError("bump width must be positive")
        if self.mass < 0:
            raise ConfigError("bump mass must be nonnegative")


@dataclass(frozen=True)
class VelocitySpec:
    """Initial velocity: ``zero`` or a projected Taylor-Green style field."""

    kind: str = "zero"
    amplitude: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "taylor_green"):
            raise ConfigError(f"unknown velocity kind {self.kind!r}")


@dataclass(frozen=True)
class InitialConditionSpec:
    """One of ``gaussian_bumps``, ``uniform`` (mean plus seeded perturbation)
    or ``file``.

    For bumps, ``mass`` is the integral of each bump over the whole space;
    ``background`` and ``c0`` are constant offsets for ``n`` and ``c``.
    """

    kind: str
    bumps: tuple = ()
    background: float = 0.0
    c0: float = 0.0
    mean: float = 1.0
    amplitude: float = 0.0
    seed: int | None = None
    n_path: str | None = None
    c_path: str | None = None
    velocity: VelocitySpec = VelocitySpec()

    def __post_init__(self):
        if self.kind not in ("gaussian_bumps", "uniform", "file"):
            raise ConfigError(f"unknown initial condition kind {self.kind!r}")
        bumps = tuple(b if isinstance(b, GaussianBump) else GaussianBump(**b) for b in self.bumps)
        object.__setattr__(self, "bumps", bumps)
        if isinstance(self.velocity, dict):
            object.__setattr__(self, "velocity", VelocitySpec(**self.velocity))
        if self.kind == "file" and not self.n_path:
            raise ConfigError("file initial condition needs n_path")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "gaussian_bumps":
            d["bumps"] = [{"center": list(b.center), "width": b.width, "mass": b.mass}
                          for b in self.bumps]
            d["background"] = self.background
            d["c0"] = self.c0
        elif self.kind == "uniform":
            d.update(mean=self.mean, amplitude=self.amplitude, seed=self.seed)
        else:
            d.update(n_path=self.n_path, c_path=self.c_path, c0=self.c0)
        d["velocity"] = {"kind": self.velocity.kind, "amplitude": self.velocity.amplitude}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InitialConditionSpec":
        d = dict(d)
        if "velocity" in d:
            d["velocity"] = VelocitySpec(**d["velocity"])
        if "bumps" in d:
            d["bumps"] = tuple(GaussianBump(**b) for b in d["bumps"])
        return cls(**d)


def gaussian_bump_field(grid: GridSpec, bump: GaussianBump) -> np.ndarray:
    """Normalised Gaussian of the given mass; nearest image on a torus."""
    r2 = np.zeros(grid.shape)
    for a, x in enumerate(grid.mesh()):
        d = x - bump.center[a]
        if grid.periodic:
            length = float(grid.extent[a])
            d = d - length * np.round(d / length)
        r2 = r2 + d * d
    s2 = bump.width ** 2
    return bump.mass * np.exp(-0.5 * r2 / s2) / (2 * np.pi * s2) ** (grid.dim / 2)


def gaussian_bump_mass(grid: GridSpec, bump: GaussianBump) -> float:
    """Exact integral of one bump over the computational cell of the grid."""
    total = bump.mass
    for a in range(grid.dim):
        length = float(grid.extent[a])
        if grid.periodic:
            lo, hi = -length / 2, length / 2
        else:
            lo, hi = -bump.center[a], length - bump.center[a]
        z = np.sqrt(2.0) * bump.width
        total *= 0.5 * (erf(hi / z) - erf(lo / z))
    return float(total)


def _taylor_green(grid: GridSpec, amplitude: float) -> tuple:
    k = [2 * np.pi / float(L) for L in grid.extent]
    comps = []
    for a in range(grid.dim):
        x = grid.face_mesh(a)
        b = (a + 1) % grid.dim
        # u_a = A sin(k_a x_a) cos(k_b x_b) with alternating signs on the first two axes.
        sign = 1.0 if a == 0 else (-1.0 if a == 1 else 0.0)
        comps.append(sign * amplitude * np.sin(k[a] * x[a]) * np.cos(k[b] * x[b]))
    if not grid.periodic:
        for a, v in enumerate(comps):
            idx = [slice(None)] * grid.dim
            idx[a] = [0, -1]
            v[tuple(idx)] = 0.0
    return tuple(comps)


def init_state(grid: GridSpec, ic: InitialConditionSpec, seed: int | None = None) -> State:
    """Build the ``t = 0`` state.  ``seed`` overrides ``ic.seed`` when given."""
    if ic.kind == "gaussian_bumps":
        n = np.full(grid.shape, float(ic.background))
        for bump in ic.bumps:
            n = n + gaussian_bump_field(grid, bump)
        c = np.full(grid.shape, float(ic.c0))
    elif ic.kind == "uniform":
        seed = ic.seed if seed is None else seed
        rng = np.random.Generator(np.random.Philox(0 if seed is None else seed))
        xi = rng.uniform(-1.0, 1.0, size=grid.shape)
        n = ic.mean + ic.amplitude * xi
        c = np.full(grid.shape, float(ic.mean))
    else:
        n = read_field(ic.n_path, grid)
        c = read_field(ic.c_path, grid) if ic.c_path else np.full(grid.shape, float(ic.c0))
    check_scalar(grid, n, "n0")
    check_scalar(grid, c, "c0")
    if (n < 0).any() or (c < 0).any():
        raise ConfigError("initial density and signal must be nonnegative")
    if ic.velocity.kind == "zero" or ic.velocity.amplitude == 0:
        u = zero_velocity(grid)
    else:
        from .stokes import PoissonSolver, project

        solver = PoissonSolver("fft" if grid.periodic else "cg")
        u, _ = project(_taylor_green(grid, ic.velocity.amplitude), grid, solver)
    return State(grid=grid, n=n, c=c, u=u, p=np.zeros(grid.shape), t=0.0).check()


def write_field(path, values: np.ndarray, binary: bool | None = None) -> None:
    """Write a cell field: header line then row-major values.

    ``.csv`` paths get one value per line; anything else gets raw
    little-endian float64 after the header.
    """
    path = Path(path)
    values = np.ascontiguousarray(values, dtype="<f8")
    binary = path.suffix.lower() != ".csv" if binary is None else binary
    header = ", ".join([FIELD_MAGIC, str(values.ndim)] + [str(s) for s in values.shape]) + "\n"
    if binary:
        path.write_bytes(header.encode("ascii") + values.tobytes(order="C"))
    else:
        body = "\n".join(repr(float(v)) for v in values.ravel(order="C"))
        path.write_text(header + body + "\n")


def read_field(path, grid: GridSpec) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    head, sep, body = raw.partition(b"\n")
    parts = [p.strip() for p in head.decode("ascii", errors="replace").split(",")]
    if not sep or parts[0] != FIELD_MAGIC:
        raise ConfigError(f"{path}: missing '{FIELD_MAGIC}' header")
    try:
        dim = int(parts[1])
        cells = tuple(int(p) for p in parts[2:])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed header {head!r}") from exc
    if dim != grid.dim or cells != grid.shape:
        raise ConfigError(f"{path}: field has cells {cells}, grid expects {grid.shape}")
    if path.suffix.lower() == ".csv":
        values = np.array([float(tok) for tok in body.decode("ascii").split()], dtype=float)
    else:
        values = np.frombuffer(body, dtype="<f8").astype(float)
    if values.size != math.prod(cells):
        raise ConfigError(f"{path}: expected {math.prod(cells)} values, found {values.size}")
    return check_scalar(grid, values.reshape(cells), str(path))
