"""Explicit conservative steppers for the cell density and the signal.

The density obeys the regularised porous-medium Keller-Segel law

    n_t + u.grad n = lap (n + eps)^m - div(n grad c),

and the signal c_t + u.grad c = lap c - c + n.  All fluxes are evaluated at
the old time level and summed before a single divergence, so the discrete
mass telescopes exactly.
"""

from __future__ import annotations

import numpy as np

from .core import (
    GridSpec,
    Params,
    State,
    check_finite,
    divergence,
    enforce_nonnegative,
    face_gradient,
    face_upwind,
    laplacian,
)


def porous_diffusion_flux(n: np.ndarray, m: float, eps: float, grid: GridSpec) -> tuple:
    """Face flux ``-grad_h (n + eps)^m``; zero normal flux on box walls."""
    pressure = (n + eps) ** m
    return tuple(-face_gradient(pressure, a, grid) for a in range(grid.dim))


def chemotaxis_flux(n: np.ndarray, c: np.ndarray, grid: GridSpec) -> tuple:
    """Face flux ``n_up grad_h c`` with ``n`` taken upwind of the drift."""
    out = []
    for a in range(grid.dim):
        g = face_gradient(c, a, grid)
        out.append(face_upwind(n, g, a, grid) * g)
    return tuple(out)


def advective_flux(q: np.ndarray, u: tuple, grid: GridSpec) -> tuple:
    """First-order donor-cell flux ``u_face q_up``."""
    return tuple(u[a] * face_upwind(q, u[a], a, grid) for a in range(grid.dim))


def density_flux(state: State, params: Params) -> tuple:
    grid = state.grid
    total = list(porous_diffusion_flux(state.n, params.m, params.eps, grid))
    if params.chemotaxis:
        for a, f in enumerate(chemotaxis_flux(state.n, state.c, grid)):
            total[a] = total[a] + f
    if params.fluid:
        for a, f in enumerate(advective_flux(state.n, state.u, grid)):
            total[a] = total[a] + f
    return tuple(total)


def step_density(state: State, dt: float, params: Params, source: np.ndarray | None = None) -> tuple:
    """One explicit Euler step of the density.

    Returns ``(n_new, clipped_cells)``.  ``source`` is an optional cell-centred
    right-hand side; it is only used by manufactured-solution tests.
    """
    rate = -divergence(density_flux(state, params), state.grid)
    if source is not None:
        rate = rate + source
    n_new = state.n + dt * rate
    return enforce_nonnegative(n_new, "n", scale=float(np.max(np.abs(state.n))))


def step_signal(state: State, dt: float, params: Params | None = None,
                source: np.ndarray | None = None) -> tuple:
    """One explicit Euler step of ``c_t = lap c - c + n - div(u c)``.

    Returns ``(c_new, clipped_cells)``.
    """
    grid = state.grid
    rate = laplacian(state.c, grid) - state.c + state.n
    if params is None or params.fluid:
        rate = rate - divergence(advective_flux(state.c, state.u, grid), grid)
    if source is not None:
        rate = rate + source
    c_new = state.c + dt * rate
    check_finite("c", c_new)
    return enforce_nonnegative(c_new, "c", scale=max(float(np.max(np.abs(state.c))), dt * float(np.max(state.n))))
