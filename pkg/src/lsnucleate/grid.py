"""Structured quadrilateral grid and bilinear reference-element data.

Nodes are numbered row by row, ``n = j * (nx + 1) + i`` with ``i`` along x.
Elements follow the same ordering, ``e = ey * nx + ex``, and list their
corner nodes counter-clockwise starting at the lower-left corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridError(ValueError):
    pass


_GP = 1.0 / math.sqrt(3.0)
# 2x2 Gauss points in local coordinates (xi, eta) in [-1, 1]^2, CCW order
GAUSS_POINTS = np.array([[-_GP, -_GP], [_GP, -_GP], [_GP, _GP], [-_GP, _GP]])
_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def shape_functions(xi: float, eta: float) -> np.ndarray:
    """Bilinear shape functions at local coordinates in [-1, 1]^2."""
    return 0.25 * (1 + _CORNERS[:, 0] * xi) * (1 + _CORNERS[:, 1] * eta)


GAUSS_N = np.array([shape_functions(*gp) for gp in GAUSS_POINTS])


def shape_gradients(xi: float, eta: float, h: float) -> np.ndarray:
    """Physical gradients (2 x 4) of the shape functions on a square element of side h."""
    dxi = 0.25 * _CORNERS[:, 0] * (1 + _CORNERS[:, 1] * eta)
    deta = 0.25 * _CORNERS[:, 1] * (1 + _CORNERS[:, 0] * xi)
    return np.vstack([dxi, deta]) * (2.0 / h)


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    h: float
    origin: tuple[float, float] = (0.0, 0.0)

    @property
    def node_count(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def element_count(self) -> int:
        return self.nx * self.ny

    @property
    def width(self) -> float:
        return self.nx * self.h

    @property
    def height(self) -> float:
        return self.ny * self.h

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def boundary_length(self) -> float:
        return 2.0 * (self.width + self.height)

    def node_index(self, i, j):
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape (N_s, 2)."""
        j, i = np.divmod(np.arange(self.node_count), self.nx + 1)
        return np.column_stack([self.origin[0] + self.h * i, self.origin[1] + self.h * j])

    @cached_property
    def elements(self) -> np.ndarray:
        """Element connectivity, shape (n_el, 4), counter-clockwise."""
        ey, ex = np.divmod(np.arange(self.element_count), self.nx)
        n0 = self.node_index(ex, ey)
        return np.column_stack([n0, n0 + 1, n0 + self.nx + 2, n0 + self.nx + 1])

    @cached_property
    def element_dofs(self) -> np.ndarray:
        """Displacement DOFs per element, shape (n_el, 8), ordered (u0x, u0y, u1x, ...)."""
        e = self.elements
        return np.stack([2 * e, 2 * e + 1], axis=2).reshape(-1, 8)

    @cached_property
    def element_centers(self) -> np.ndarray:
        return self.coords[self.elements].mean(axis=1)

    @cached_property
    def gauss_N(self) -> np.ndarray:
        """Shape function values at the 4 Gauss points, shape (4, 4) [gauss, node]."""
        return GAUSS_N

    @cached_property
    def gauss_dN(self) -> np.ndarray:
        """Physical shape gradients at the Gauss points, shape (4, 2, 4)."""
        return np.array([shape_gradients(*gp, self.h) for gp in GAUSS_POINTS])

    @property
    def gauss_weight(self) -> float:
        # every Gauss point carries a quarter of the element area
        return 0.25 * self.h * self.h

    @cached_property
    def nodal_area(self) -> np.ndarray:
        """Integral of each shape function over the grid (lumped mass with unit density)."""
        a = np.zeros(self.node_count)
        np.add.at(a, self.elements, 0.25 * self.h * self.h)
        return a

    def neighbors_within(self, node: int, radius: float) -> list[tuple[int, float]]:
        """Nodes strictly closer than ``radius`` to ``node`` (the node itself included)."""
        if not 0 <= node < self.node_count:
            raise GridError(f"node index {node} out of range [0, {self.node_count})")
        if radius <= 0:
            raise GridError("radius must be positive")
        j0, i0 = divmod(int(node), self.nx + 1)
        reach = int(math.ceil(radius / self.h))
        out = []
        for j in range(max(0, j0 - reach), min(self.ny, j0 + reach) + 1):
            for i in range(max(0, i0 - reach), min(self.nx, i0 + reach) + 1):
                d = self.h * math.hypot(i - i0, j - j0)
                if d < radius:
                    out.append((j * (self.nx + 1) + i, d))
        return out

    def locate(self, x: float, y: float) -> tuple[int, float, float]:
        """Containing element and local coordinates (in [-1, 1]) of a point."""
        lx = (x - self.origin[0]) / self.h
        ly = (y - self.origin[1]) / self.h
        tol = 1e-12
        if not (-tol <= lx <= self.nx + tol and -tol <= ly <= self.ny + tol):
            raise GridError(f"point ({x}, {y}) outside grid")
        ex = min(max(int(math.floor(lx)), 0), self.nx - 1)
        ey = min(max(int(math.floor(ly)), 0), self.ny - 1)
        return ey * self.nx + ex, 2.0 * (lx - ex) - 1.0, 2.0 * (ly - ey) - 1.0

    def nodes_where(self, mask_fn) -> np.ndarray:
        """Indices of nodes whose coordinates satisfy ``mask_fn(x, y)``."""
        x, y = self.coords.T
        return np.flatnonzero(mask_fn(x, y))

    def boundary_edges(self, side: str) -> np.ndarray:
        """Node pairs of the element edges on one side: 'left', 'right', 'bottom' or 'top'."""
        if side == "bottom":
            n = self.node_index(np.arange(self.nx + 1), 0)
        elif side == "top":
            n = self.node_index(np.arange(self.nx + 1), self.ny)
        elif side == "left":
            n = self.node_index(0, np.arange(self.ny + 1))
        elif side == "right":
            n = self.node_index(self.nx, np.arange(self.ny + 1))
        else:
            raise GridError(f"unknown side {side!r}")
        return np.column_stack([n[:-1], n[1:]])


def build_grid(nx: int, ny: int, h: float, origin=(0.0, 0.0)) -> Grid:
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise GridError(f"element counts must be positive integers, got ({nx}, {ny})")
    if not h > 0:
        raise GridError(f"element size must be positive, got {h}")
    return Grid(int(nx), int(ny), float(h), (float(origin[0]), float(origin[1])))
