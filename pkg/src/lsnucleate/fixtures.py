"""Benchmark geometries: supports, loads and solid non-design bands."""

from __future__ import annotations

import numpy as np

from .couple import MaterialModel
from .grid import build_grid
from .opt.problem import Fixture
from .solve import BoundaryConditions


def ex1_fixture(nx=120, ny=80, h=0.5, band=2, traction=-10.0, material=None) -> Fixture:
    """Half of a pressure-loaded support structure.

    Clamped over ``band`` elements at the bottom-left corner, x-symmetry on
    the right edge, uniform vertical traction on the top edge. The top rows
    and the corner block next to the clamp are solid and excluded from the
    design.
    """
    grid = build_grid(nx, ny, h)
    x, y = grid.coords.T
    tol = 1e-9 * h
    b = band * h
    fixed = {}
    for n in np.flatnonzero((y < tol) & (x < b + tol)):
        fixed[2 * n] = 0.0
        fixed[2 * n + 1] = 0.0
    for n in np.flatnonzero(x > grid.width - tol):
        fixed[2 * n] = 0.0
    bc = BoundaryConditions(fixed, [(grid.boundary_edges("top"), (0.0, traction))])
    passive = np.flatnonzero((y > grid.height - b - tol) | ((x < b + tol) & (y < b + tol)))
    return Fixture(grid, bc, passive, material or MaterialModel(), "ex1", ("right",))


def beam2d_fixture(nx=120, ny=40, h=1.0, band=2, traction=-10.0, material=None) -> Fixture:
    """Mid-plane half of a simply supported beam with a central load.

    Vertical support at the bottom-left corner, x-symmetry on the right edge
    and a traction patch of ``2 * band`` elements at the top of the symmetry
    plane. Solid blocks surround the support and the load patch.
    """
    grid = build_grid(nx, ny, h)
    x, y = grid.coords.T
    tol = 1e-9 * h
    b = band * h
    fixed = {}
    for n in np.flatnonzero((y < tol) & (x < tol)):
        fixed[2 * n + 1] = 0.0
    for n in np.flatnonzero(x > grid.width - tol):
        fixed[2 * n] = 0.0
    top = grid.boundary_edges("top")
    load_edges = top[grid.coords[top[:, 0], 0] >= grid.width - 2 * b - tol]
    bc = BoundaryConditions(fixed, [(load_edges, (0.0, traction))])
    near_support = (x < b + tol) & (y < b + tol)
    near_load = (x > grid.width - 2 * b - tol) & (y > grid.height - b - tol)
    passive = np.flatnonzero(near_support | near_load)
    return Fixture(grid, bc, passive, material or MaterialModel(), "beam2d", ("right",))
