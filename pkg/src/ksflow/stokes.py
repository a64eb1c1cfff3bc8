"""Time-dependent Stokes flow on the MAC grid with Chorin projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .core import (
    ConfigError,
    GridSpec,
    KsflowError,
    Params,
    State,
    check_finite,
    divergence,
    face_average,
    face_gradient,
    laplacian,
)


class SolverError(KsflowError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class PoissonSolver:
    """``fft`` (periodic grids only) or ``cg`` (any grid)."""

    method: str = "fft"
    tol: float = 1e-12
    max_iter: int = 2000

    def __post_init__(self):
        if self.method not in ("fft", "cg"):
            raise ConfigError(f"unknown Poisson method {self.method!r}")
        if not self.tol > 0:
            raise ConfigError("Poisson tolerance must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")

    def to_dict(self) -> dict:
        return {"method": self.method, "tol": self.tol, "max_iter": self.max_iter}


@dataclass
class PoissonResult:
    solution: np.ndarray
    residual: float
    iterations: int
    subtracted_mean: float


def discrete_symbol(grid: GridSpec) -> np.ndarray:
    """Eigenvalues of the periodic 2N+1 point Laplacian on the rfft layout."""
    lam = np.zeros(grid.shape[:-1] + (grid.shape[-1] // 2 + 1,))
    for a, (n, h) in enumerate(zip(grid.shape, grid.h)):
        k = np.fft.rfftfreq(n) if a == grid.dim - 1 else np.fft.fftfreq(n)
        shape = [1] * grid.dim
        shape[a] = k.size
        lam = lam - ((4.0 / h ** 2) * np.sin(np.pi * k) ** 2).reshape(shape)
    return lam


def pressure_poisson(rhs: np.ndarray, grid: GridSpec, solver: PoissonSolver,
                     guess: np.ndarray | None = None) -> PoissonResult:
    """Solve ``lap_h q = rhs`` with mean-zero gauge.

    The mean of ``rhs`` is the compatibility defect for periodic and pure
    Neumann problems; it is removed before solving and reported.  ``guess``
    warm-starts CG and is ignored by the FFT path.
    """
    check_finite("poisson rhs", rhs)
    mean = float(rhs.mean())
    b = rhs - mean
    scale = 1.0 + float(np.max(np.abs(b)))
    if solver.method == "fft":
        if not grid.periodic:
            raise ConfigError("the FFT Poisson solver needs a periodic grid")
        lam = discrete_symbol(grid)
        lam.flat[0] = 1.0
        bhat = np.fft.rfftn(b)
        qhat = bhat / lam
        qhat.flat[0] = 0.0
        q = np.fft.irfftn(qhat, s=grid.shape, axes=tuple(range(grid.dim)))
        iterations = 1
    else:
        size = b.size

        def matvec(x):
            return -laplacian(x.reshape(grid.shape), grid).ravel()

        op = LinearOperator((size, size), matvec=matvec, dtype=float)
        count = [0]

        def tick(_):
            count[0] += 1

        # ||r||_inf <= ||r||_2, so the 2-norm stopping test certifies the max-norm one.
        x0 = None if guess is None else np.asarray(guess, dtype=float).ravel()
        x, info = cg(op, -b.ravel(), x0=x0, rtol=0.0, atol=solver.tol * scale,
                     maxiter=solver.max_iter, callback=tick)
        q = x.reshape(grid.shape)
        iterations = count[0]
        if info != 0:
            res = float(np.max(np.abs(laplacian(q, grid) - b)))
            raise SolverError(f"CG did not converge in {solver.max_iter} iterations", res)
    q = q - q.mean()
    residual = float(np.max(np.abs(laplacian(q, grid) - b)))
    if solver.method == "cg" and residual > solver.tol * scale:
        raise SolverError("Poisson residual above tolerance", residual)
    return PoissonResult(q, residual, iterations, mean)


def project(u_star: tuple, grid: GridSpec, solver: PoissonSolver, dt: float = 1.0,
            guess: np.ndarray | None = None) -> tuple:
    """Helmholtz projection onto discretely solenoidal face fields.

    Solves ``lap_h q = div_h u_star / dt`` and returns
    ``(u_star - dt grad_h q, q)``.  Wall-normal faces of a box stay zero
    because the face gradient vanishes there.
    """
    check_finite("u_star", tuple(u_star))
    rhs = divergence(u_star, grid) / dt
    q = pressure_poisson(rhs, grid, solver, guess).solution
    u = tuple(u_star[a] - dt * face_gradient(q, a, grid) for a in range(grid.dim))
    return u, q


def vector_laplacian(u: tuple, grid: GridSpec) -> tuple:
    """Componentwise face Laplacian.

    On box walls the normal component is held at zero and tangential
    components use reflected ghosts (``u_ghost = -u_inside``), putting the
    no-slip wall exactly on the face.
    """
    out = []
    for a, ua in enumerate(u):
        lap = np.zeros_like(ua)
        for b in range(grid.dim):
            h2 = grid.h[b] ** 2
            if grid.periodic:
                lap += (np.roll(ua, -1, axis=b) - 2 * ua + np.roll(ua, 1, axis=b)) / h2
            elif b == a:
                inner = [slice(None)] * grid.dim
                inner[b] = slice(1, -1)
                d2 = np.diff(ua, n=2, axis=b) / h2
                lap[tuple(inner)] += d2
            else:
                lo = -np.take(ua, [0], axis=b)
                hi = -np.take(ua, [-1], axis=b)
                padded = np.concatenate([lo, ua, hi], axis=b)
                lap += np.diff(padded, n=2, axis=b) / h2
        if not grid.periodic:
            wall = [slice(None)] * grid.dim
            wall[a] = [0, -1]
            lap[tuple(wall)] = 0.0
        out.append(lap)
    return tuple(out)


def buoyancy_force(n: np.ndarray, params: Params, grid: GridSpec) -> tuple:
    """``n grad phi`` at cell centres, averaged onto the MAC faces."""
    forces = []
    for a, g in enumerate(params.grad_phi(grid)):
        f = face_average(n * g, a, grid)
        if not grid.periodic:
            wall = [slice(None)] * grid.dim
            wall[a] = [0, -1]
            f[tuple(wall)] = 0.0
        forces.append(f)
    return tuple(forces)


def stokes_step(u: tuple, force: tuple, dt: float, grid: GridSpec, solver: PoissonSolver,
                guess: np.ndarray | None = None) -> tuple:
    """Predictor ``u + dt (lap u + f)`` followed by projection."""
    lap = vector_laplacian(u, grid)
    u_star = tuple(u[a] + dt * (lap[a] + force[a]) for a in range(grid.dim))
    return project(u_star, grid, solver, dt, guess)


def step_velocity(state: State, dt: float, params: Params, solver: PoissonSolver) -> tuple:
    """Advance ``u_t + grad P = lap u + n grad phi``; returns ``(u_new, p_new)``."""
    force = buoyancy_force(state.n, params, state.grid)
    return stokes_step(state.u, force, dt, state.grid, solver, guess=state.p)


def max_divergence(u: tuple, grid: GridSpec) -> float:
    return float(np.max(np.abs(divergence(u, grid))))
