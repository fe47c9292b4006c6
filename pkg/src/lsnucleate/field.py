"""Nodal design fields: linear filter, bilinear evaluation, smoothed Heaviside
and zero-isocontour extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import Grid, GridError, shape_functions


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class DesignVector:
    values: np.ndarray
    lower: float
    upper: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < self.lower) or np.any(v > self.upper):
            raise FieldError(f"design values outside [{self.lower}, {self.upper}]")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class FilterOperator:
    W: sp.csr_matrix
    radius: float

    def __matmul__(self, s):
        return self.W @ s


def build_filter(grid: Grid, r_f: float) -> FilterOperator:
    """Cone-weighted, row-normalized linear filter over nodes within ``r_f``."""
    if not r_f > 0:
        raise FieldError(f"filter radius must be positive, got {r_f}")
    reach = int(math.ceil(r_f / grid.h))
    j, i = np.divmod(np.arange(grid.node_count), grid.nx + 1)
    rows, cols, vals = [], [], []
    for dj in range(-reach, reach + 1):
        for di in range(-reach, reach + 1):
            d = grid.h * math.hypot(di, dj)
            if d >= r_f:
                continue
            ok = (i + di >= 0) & (i + di <= grid.nx) & (j + dj >= 0) & (j + dj <= grid.ny)
            src = np.flatnonzero(ok)
            rows.append(src)
            cols.append(src + dj * (grid.nx + 1) + di)
            vals.append(np.full(src.size, r_f - d))
    W = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.node_count, grid.node_count),
    )
    W = sp.diags(1.0 / np.asarray(W.sum(axis=1)).ravel()) @ W
    return FilterOperator(W.tocsr(), float(r_f))


def apply_filter(op: FilterOperator, s) -> np.ndarray:
    values = s.values if isinstance(s, DesignVector) else np.asarray(s, dtype=float)
    if values.shape != (op.W.shape[1],):
        raise FieldError(f"design vector of length {values.size}, filter expects {op.W.shape[1]}")
    return op.W @ values


def eval_field(grid: Grid, values: np.ndarray, x: float, y: float) -> float:
    """Bilinear interpolation of nodal ``values`` at the point (x, y)."""
    try:
        e, xi, eta = grid.locate(x, y)
    except GridError as exc:
        raise FieldError(str(exc)) from None
    return float(shape_functions(xi, eta) @ np.asarray(values)[grid.elements[e]])


def smoothed_heaviside(phi, eps: float):
    """C1 polynomial step: 0 below -eps, 1 above +eps."""
    x = np.clip(np.asarray(phi, dtype=float) / eps, -1.0, 1.0)
    out = 0.5 + x * (15.0 / 16.0 - x * x * (10.0 / 16.0 - x * x * 3.0 / 16.0))
    out = np.where(x <= -1.0, 0.0, np.where(x >= 1.0, 1.0, out))  # exact saturation
    return out if out.ndim else float(out)


def smoothed_delta(phi, eps: float):
    """Derivative of :func:`smoothed_heaviside` with respect to phi."""
    x = np.asarray(phi, dtype=float) / eps
    out = np.where(np.abs(x) < 1.0, (15.0 / 16.0) * (1.0 - x * x) ** 2 / eps, 0.0)
    return out if out.ndim else float(out)


def smoothed_delta_prime(phi, eps: float):
    x = np.asarray(phi, dtype=float) / eps
    return np.where(np.abs(x) < 1.0, -(15.0 / 4.0) * x * (1.0 - x * x) / (eps * eps), 0.0)


# element edge k runs from local corner k to corner k+1 (mod 4)
_EDGE_A = np.array([0, 1, 2, 3])
_EDGE_B = np.array([1, 2, 3, 0])


@dataclass
class InterfacePolyline:
    """Zero-isocontour segments, one or two per cut element.

    ``edges`` holds, per segment end, the global node pair (a, b) of the
    element edge it lies on; the end point is the linear root of phi there.
    """

    segments: np.ndarray  # (k, 2, 2)
    edges: np.ndarray  # (k, 2, 2) node indices
    elements: np.ndarray  # (k,) owning element

    @property
    def total_length(self) -> float:
        if len(self.segments) == 0:
            return 0.0
        return float(np.linalg.norm(self.segments[:, 1] - self.segments[:, 0], axis=1).sum())

    def __len__(self):
        return len(self.segments)


def extract_interface(grid: Grid, phi: np.ndarray) -> InterfacePolyline:
    """Marching-squares extraction of {phi = 0}; material is phi > 0.

    Saddle elements (alternating corner signs) are split according to the
    sign of the bilinear value at the element center.
    """
    phi = np.asarray(phi, dtype=float)
    el = grid.elements
    v = phi[el]
    inside = v > 0
    cross = inside[:, _EDGE_A] != inside[:, _EDGE_B]
    ncross = cross.sum(axis=1)

    seg_edges = []  # (element, local edge p, local edge q)
    two = np.flatnonzero(ncross == 2)
    if two.size:
        loc = np.nonzero(cross[two])[1].reshape(-1, 2)
        seg_edges.append(np.column_stack([two, loc]))
    four = np.flatnonzero(ncross == 4)
    if four.size:
        center_in = v[four].mean(axis=1) > 0
        extra = []
        for e, cin in zip(four, center_in):
            for k in range(4):
                # cut off the corners whose phase differs from the center
                if inside[e, k] != cin:
                    extra.append((e, (k - 1) % 4, k))
        seg_edges.append(np.array(extra, dtype=int))
    if not seg_edges:
        empty = np.zeros((0, 2, 2))
        return InterfacePolyline(empty, np.zeros((0, 2, 2), dtype=int), np.zeros(0, dtype=int))
    se = np.concatenate(seg_edges)
    order = np.lexsort((se[:, 1], se[:, 0]))
    se = se[order]
    elems = se[:, 0]
    na = el[elems[:, None], _EDGE_A[se[:, 1:]]]
    nb = el[elems[:, None], _EDGE_B[se[:, 1:]]]
    edges = np.stack([na, nb], axis=2)
    pa, pb = phi[na], phi[nb]
    t = pa / (pa - pb)
    X = grid.coords
    pts = X[na] + t[..., None] * (X[nb] - X[na])
    return InterfacePolyline(pts, edges, elems)


def interface_length_gradient(grid: Grid, phi: np.ndarray, poly: InterfacePolyline | None = None):
    """Derivative of the marching-squares interface length w.r.t. nodal phi."""
    phi = np.asarray(phi, dtype=float)
    if poly is None:
        poly = extract_interface(grid, phi)
    grad = np.zeros(grid.node_count)
    if len(poly) == 0:
        return grad
    d = poly.segments[:, 1] - poly.segments[:, 0]
    L = np.linalg.norm(d, axis=1)
    unit = np.divide(d, L[:, None], out=np.zeros_like(d), where=L[:, None] > 0)
    X = grid.coords
    for end, sign in ((0, -1.0), (1, 1.0)):
        a, b = poly.edges[:, end, 0], poly.edges[:, end, 1]
        pa, pb = phi[a], phi[b]
        denom = (pa - pb) ** 2
        dLdt = sign * np.einsum("ij,ij->i", unit, X[b] - X[a])
        np.add.at(grad, a, dLdt * (-pb / denom))
        np.add.at(grad, b, dLdt * (pa / denom))
    return grad
