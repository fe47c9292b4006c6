"""Plane-stress elasticity on the fixed grid with an ersatz material interface.

The level set enters through a smoothed Heaviside evaluated at the Gauss
points, so every state operator is differentiable in the nodal fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .couple import MaterialModel
from .field import smoothed_delta, smoothed_heaviside
from .grid import GAUSS_N, Grid


class SolverError(RuntimeError):
    pass


@dataclass
class BoundaryConditions:
    """Strong Dirichlet DOFs plus edge tractions.

    ``fixed`` maps a global DOF (2 * node + axis) to its prescribed value.
    ``tractions`` is a list of (edges, (tx, ty)) with edges an (k, 2) array
    of node pairs and the traction given as force per unit length.
    """

    fixed: dict[int, float]
    tractions: list = field(default_factory=list)

    @property
    def fixed_dofs(self) -> np.ndarray:
        return np.array(sorted(self.fixed), dtype=int)

    @property
    def fixed_nodes(self) -> np.ndarray:
        return np.unique(self.fixed_dofs // 2)

    def load_vector(self, grid: Grid) -> np.ndarray:
        f = np.zeros(2 * grid.node_count)
        for edges, traction in self.tractions:
            edges = np.asarray(edges)
            L = np.linalg.norm(grid.coords[edges[:, 1]] - grid.coords[edges[:, 0]], axis=1)
            for axis in (0, 1):
                np.add.at(f, 2 * edges.ravel() + axis, np.repeat(0.5 * L * traction[axis], 2))
        return f


@dataclass
class ElasticSolution:
    u: np.ndarray
    strain_energy: float
    residual_norm: float
    moduli: np.ndarray  # (n_el, 4) Gauss-point Young's moduli
    heaviside: np.ndarray  # (n_el, 4) smoothed material indicator at Gauss points
    component_labels: np.ndarray
    floating: set
    spring_nodes: np.ndarray
    K: sp.csr_matrix = field(repr=False)
    f: np.ndarray = field(repr=False)
    free: np.ndarray = field(repr=False)
    factor: object = field(repr=False, default=None)

    def solve_adjoint(self, rhs: np.ndarray) -> np.ndarray:
        """Solve K lam = rhs with homogeneous conditions on the fixed DOFs."""
        lam = np.zeros_like(rhs)
        if self.factor is not None:
            lam[self.free] = self.factor.solve(rhs[self.free])
        else:
            Kff = self.K[self.free][:, self.free]
            lam[self.free] = _cg(Kff, rhs[self.free])
        return lam


def plane_stress_matrix(nu: float) -> np.ndarray:
    return np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]]) / (1.0 - nu * nu)


@lru_cache(maxsize=16)
def gauss_operators(grid: Grid, nu: float):
    """Strain-displacement matrices B (4, 3, 8) and unit-modulus Gauss stiffness (4, 8, 8)."""
    B = np.zeros((4, 3, 8))
    for g in range(4):
        dN = grid.gauss_dN[g]
        B[g, 0, 0::2] = dN[0]
        B[g, 1, 1::2] = dN[1]
        B[g, 2, 0::2] = dN[1]
        B[g, 2, 1::2] = dN[0]
    D = plane_stress_matrix(nu)
    Kg = grid.gauss_weight * np.einsum("gai,ab,gbj->gij", B, D, B)
    return B, D, Kg


def gauss_interp(grid: Grid, nodal: np.ndarray) -> np.ndarray:
    return np.asarray(nodal, dtype=float)[grid.elements] @ grid.gauss_N.T


def gauss_moduli(phi_g, rho_g, mat: MaterialModel, eps: float):
    """Young's modulus at Gauss points from interpolated phi and rho_tilde.

    The material phase follows a modified power law floored at E_void, so a
    zero density inside material never produces a singular stiffness. With
    ``heaviside_power`` q > 1 the indicator enters as H**q, which makes a
    smeared interface cost stiffness the way SIMP penalizes grey density;
    the mass keeps H linear.
    """
    H = smoothed_heaviside(phi_g, eps)
    q = mat.heaviside_power
    Hq = H if q == 1.0 else H**q
    return mat.E_void + Hq * (mat.E0 - mat.E_void) * rho_g**mat.beta, H


def element_stiffness_scale(phi_nodes, rho_tilde_nodes, mat: MaterialModel, eps: float, N=None):
    """Gauss-point moduli of one element (or of all elements when given (n_el, 4) arrays)."""
    N = GAUSS_N if N is None else N
    phi_g = np.asarray(phi_nodes, dtype=float) @ N.T
    rho_g = np.asarray(rho_tilde_nodes, dtype=float) @ N.T
    return gauss_moduli(phi_g, rho_g, mat, eps)[0]


def modulus_partials(phi_g, rho_g, mat: MaterialModel, eps: float):
    """dE/dphi and dE/drho_tilde at Gauss points."""
    scale = mat.E0 - mat.E_void
    H = smoothed_heaviside(phi_g, eps)
    q = mat.heaviside_power
    Hq, dHq = (H, 1.0) if q == 1.0 else (H**q, q * H ** (q - 1.0))
    dE_dphi = dHq * smoothed_delta(phi_g, eps) * scale * rho_g**mat.beta
    dE_drho = Hq * scale * mat.beta * rho_g ** (mat.beta - 1.0)
    return dE_dphi, dE_drho


def connected_components(grid: Grid, phi, fixed_nodes=()):
    """Edge-adjacent labeling of material elements (center value > 0).

    Returns (labels, floating) where labels is 0 for void elements and
    1..n for material components, and floating holds the labels of the
    components that touch no node carrying a fixed DOF.
    """
    center = np.asarray(phi, dtype=float)[grid.elements].mean(axis=1)
    solid = (center > 0).reshape(grid.ny, grid.nx)
    labels, n = ndimage.label(solid)
    labels = labels.ravel()
    supported = set()
    if len(fixed_nodes):
        is_fixed = np.zeros(grid.node_count, dtype=bool)
        is_fixed[np.asarray(fixed_nodes)] = True
        touch = is_fixed[grid.elements].any(axis=1) & (labels > 0)
        supported = set(np.unique(labels[touch]).tolist())
    floating = set(range(1, n + 1)) - supported
    return labels, floating


def void_components(grid: Grid, phi, interior_only=True, mirror_sides=()) -> int:
    """Number of void regions (center value <= 0).

    With ``interior_only`` a region counts only if it stays off the outer
    boundary. Sides listed in ``mirror_sides`` are symmetry planes of a half
    model; touching them does not open a void to the outside.
    """
    center = np.asarray(phi, dtype=float)[grid.elements].mean(axis=1)
    void = (center <= 0).reshape(grid.ny, grid.nx)
    labels, n = ndimage.label(void)
    if not interior_only:
        return int(n)
    rims = {"bottom": labels[0], "top": labels[-1], "left": labels[:, 0], "right": labels[:, -1]}
    for side in mirror_sides:
        if side not in rims:
            raise ValueError(f"unknown side {side!r}")
    edge = np.unique(np.concatenate([v for k, v in rims.items() if k not in mirror_sides]))
    return int(n - np.count_nonzero(edge))


def assemble_stiffness(grid: Grid, moduli: np.ndarray, nu: float, spring_nodes=(), k_spring=0.0):
    _, _, Kg = gauss_operators(grid, nu)
    vals = moduli @ Kg.reshape(4, 64)
    dofs = grid.element_dofs
    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()
    n = 2 * grid.node_count
    K = sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    if len(spring_nodes) and k_spring > 0:
        d = np.zeros(n)
        sn = np.asarray(spring_nodes)
        d[2 * sn] = k_spring
        d[2 * sn + 1] = k_spring
        K = K + sp.diags(d)
    return K.tocsr()


def _cg(A, b, tol=1e-12):
    Minv = sp.diags(1.0 / A.diagonal())
    x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=20 * A.shape[0], M=Minv)
    if info != 0:
        r = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
        raise SolverError(f"conjugate gradient did not converge (relative residual {r:.3e})")
    return x


def assemble_and_solve(grid: Grid, phi, rho_tilde, mat: MaterialModel, bc: BoundaryConditions,
                       eps: float | None = None, springs: bool = True, gamma_s: float = 1e-6,
                       method: str = "direct", tol: float = 1e-9,
                       spring_nodes=None) -> ElasticSolution:
    """Solve K u = f with strong Dirichlet conditions.

    Free-floating material components get a weak spring to ground on every
    node. ``spring_nodes`` overrides the detected set, which keeps the
    operator fixed during finite-difference checks.
    """
    eps = grid.h if eps is None else eps
    phi = np.asarray(phi, dtype=float)
    phi_g = gauss_interp(grid, phi)
    rho_g = gauss_interp(grid, rho_tilde)
    moduli, H = gauss_moduli(phi_g, rho_g, mat, eps)

    labels, floating = connected_components(grid, phi, bc.fixed_nodes)
    if spring_nodes is None:
        spring_nodes = np.zeros(0, dtype=int)
        if springs and floating:
            flagged = np.isin(labels, list(floating))
            spring_nodes = np.unique(grid.elements[flagged])
    K = assemble_stiffness(grid, moduli, mat.nu, spring_nodes, gamma_s * mat.E0 / grid.h**2)

    f = bc.load_vector(grid)
    n = f.size
    fixed = bc.fixed_dofs
    free = np.setdiff1d(np.arange(n), fixed)
    u = np.zeros(n)
    if fixed.size:
        u[fixed] = [bc.fixed[d] for d in fixed]
    rhs = f[free] - K[free][:, fixed] @ u[fixed]
    Kff = K[free][:, free]

    factor = None
    if np.any(rhs):
        if method == "direct":
            try:
                factor = spla.splu(Kff.tocsc())
            except RuntimeError as exc:
                raise SolverError(f"stiffness factorization failed ({exc}); {fixed.size} fixed DOFs, "
                                  f"{len(floating)} floating components") from exc
            u[free] = factor.solve(rhs)
            r = Kff @ u[free] - rhs
            if np.linalg.norm(r) > tol * np.linalg.norm(rhs):
                u[free] -= factor.solve(r)  # one step of iterative refinement
        elif method == "cg":
            u[free] = _cg(Kff, rhs, tol=0.1 * tol)
        else:
            raise ValueError(f"unknown solver method {method!r}")
    elif method == "direct":
        factor = spla.splu(Kff.tocsc())

    res = K @ u - f
    res[fixed] = 0.0
    fnorm = np.linalg.norm(f)
    residual = float(np.linalg.norm(res) / fnorm) if fnorm > 0 else float(np.linalg.norm(res))
    if residual > tol:
        raise SolverError(f"linear solve residual {residual:.3e} exceeds tolerance {tol:.1e}")
    if not np.all(np.isfinite(u)):
        raise SolverError("non-finite displacements")
    psi = 0.5 * float(u @ (K @ u))
    return ElasticSolution(u, psi, residual, moduli, H, labels, floating, spring_nodes,
                           K, f, free, factor)


def mass(grid: Grid, phi, rho_tilde, mat: MaterialModel, eps: float | None = None,
         return_grad=False):
    """Material mass: Gauss integral of theta0 * rho_tilde * H(phi)."""
    eps = grid.h if eps is None else eps
    phi_g = gauss_interp(grid, phi)
    rho_g = gauss_interp(grid, rho_tilde)
    H = smoothed_heaviside(phi_g, eps)
    w = grid.gauss_weight * mat.theta0
    value = float(w * np.sum(rho_g * H))
    if not return_grad:
        return value
    d_phi = np.zeros(grid.node_count)
    d_rho = np.zeros(grid.node_count)
    np.add.at(d_phi, grid.elements, (w * rho_g * smoothed_delta(phi_g, eps)) @ grid.gauss_N)
    np.add.at(d_rho, grid.elements, (w * H) @ grid.gauss_N)
    return value, d_phi, d_rho


def gauss_stresses(grid: Grid, sol: ElasticSolution, nu: float) -> np.ndarray:
    """Cauchy stress (s11, s22, s12) at the Gauss points, shape (n_el, 4, 3)."""
    B, D, _ = gauss_operators(grid, nu)
    ue = sol.u[grid.element_dofs]
    strain = np.einsum("gai,ei->ega", B, ue)
    return sol.moduli[..., None] * (strain @ D.T)


def von_mises(stress) -> np.ndarray:
    s = np.asarray(stress, dtype=float)
    s11, s22, s12 = s[..., 0], s[..., 1], s[..., 2]
    return np.sqrt(np.maximum(s11 * s11 - s11 * s22 + s22 * s22 + 3.0 * s12 * s12, 0.0))


PROJECTION_FLOOR = 1e-9


def project_to_nodes(grid: Grid, gauss_values: np.ndarray, weights: np.ndarray):
    """Weighted lumped L2 projection of Gauss-point values onto nodes.

    Returns (nodal values, numerator, denominator) so callers can
    differentiate through the projection.
    """
    w = grid.gauss_weight * weights
    num = np.zeros(grid.node_count)
    den = PROJECTION_FLOOR * grid.nodal_area
    np.add.at(num, grid.elements, (w * gauss_values) @ grid.gauss_N)
    np.add.at(den, grid.elements, w @ grid.gauss_N)
    return num / den, num, den


def von_mises_and_smooth(sol: ElasticSolution, grid: Grid, nu: float):
    """Gauss-point von Mises stress and its material-weighted nodal projection."""
    vm = von_mises(gauss_stresses(grid, sol, nu))
    tau, _, _ = project_to_nodes(grid, vm, sol.heaviside)
    return vm, tau
