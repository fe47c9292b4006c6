"""Design-to-response pipeline and its adjoint.

A design vector is filtered, mapped to the level-set and density fields by
the chosen coupling, shifted, analyzed, and reduced to the weighted
objective and the constraint values. :meth:`Problem.gradients` runs the same
chain backwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..couple import (ContinuationSchedule, MaterialModel, SfcConfig, TfcConfig,
                      coupling_penalty_integral, schedule_value, sfc_phi, shift_density)
from ..field import (build_filter, extract_interface, interface_length_gradient,
                     smoothed_delta, smoothed_delta_prime, smoothed_heaviside)
from ..grid import Grid
from ..regularize import RegConfig, build_target_field, reg_penalty
from ..solve import (BoundaryConditions, ElasticSolution, assemble_and_solve, gauss_interp,
                     gauss_operators, gauss_stresses, mass, modulus_partials,
                     project_to_nodes, void_components, von_mises)


@dataclass
class Fixture:
    """Geometry, supports, loads and the solid non-design nodes of a benchmark."""

    grid: Grid
    bc: BoundaryConditions
    passive: np.ndarray
    material: MaterialModel
    name: str = ""
    mirror_sides: tuple = ()  # symmetry planes of a half model


@dataclass
class ProblemSpec:
    mode: str  # "sfc" or "tfc"
    sfc: SfcConfig
    tfc: TfcConfig
    reg: RegConfig
    rho_sh: ContinuationSchedule
    rho_th: ContinuationSchedule
    phi_low: float
    phi_up: float
    r_f: float
    rho0: float = 0.4
    phi0: float | None = None
    objective: str = "compliance"  # or "mass"
    w_F: float = 0.93
    w_per: float = 0.01
    w_reg: float = 0.05
    w_coupling: float = 0.01
    w_psi: float = 0.0
    per_schedule: ContinuationSchedule | None = None
    w_per_post: float | None = None
    gamma_m: float = 0.4
    sigma_max: float | None = None
    xi_tau: float = 0.1
    w_stress: float = 1.0
    gamma_s: float = 1e-6
    tol: float = 1e-3
    D_max: int = 500
    slack: float = 1e-6

    def __post_init__(self):
        if self.mode not in ("sfc", "tfc"):
            raise ValueError(f"mode must be 'sfc' or 'tfc', got {self.mode!r}")
        if self.objective not in ("compliance", "mass"):
            raise ValueError(f"objective must be 'compliance' or 'mass', got {self.objective!r}")
        for name in ("w_F", "w_per", "w_reg", "w_coupling", "w_psi", "w_stress"):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be non-negative")
        if not 0.0 < self.gamma_m <= 1.0:
            raise ValueError(f"gamma_m must lie in (0, 1], got {self.gamma_m}")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")

    @property
    def span(self) -> int:
        return self.rho_sh.span

    @property
    def has_stress(self) -> bool:
        return self.sigma_max is not None


@dataclass(frozen=True)
class IterationParams:
    it: int
    rho_sh: float
    rho_th: float
    w_per: float


@dataclass
class Frozen:
    """Iteration data held constant while finite-differencing a design."""

    params: IterationParams
    target: np.ndarray
    spring_nodes: np.ndarray
    coupling_mask: np.ndarray | None
    psi0: float


@dataclass
class ObjectiveBreakdown:
    it: int
    z: float
    F: float
    P_Per: float
    P_Reg: float
    P_coupling: float
    psi_ratio: float
    g: list
    rho_sh: float
    rho_th: float
    w: dict
    P_Per_smeared: float = 0.0
    P_tau: float = 0.0
    strain_energy: float = 0.0
    mass_fraction: float = 0.0
    interface_length: float = 0.0
    void_components: int = 0
    floating_components: int = 0

    @property
    def g_mass(self) -> float:
        return self.g[0]

    @property
    def g_stress(self) -> float | None:
        return self.g[1] if len(self.g) > 1 else None


@dataclass
class Fields:
    s: np.ndarray
    S_hat: np.ndarray
    phi: np.ndarray
    rho: np.ndarray
    rho_tilde: np.ndarray
    active: np.ndarray  # nodes whose density is defined and differentiable


@dataclass
class Evaluation:
    breakdown: ObjectiveBreakdown
    fields: Fields
    solution: ElasticSolution
    target: np.ndarray
    frozen: Frozen
    poly: object = None
    vm: np.ndarray | None = None
    tau: np.ndarray | None = None
    extras: dict = field(default_factory=dict)


@dataclass
class SensitivityBundle:
    dz: np.ndarray
    dg: list
    density_norm: float  # norm of dz restricted to the density path
    levelset_norm: float


def smeared_perimeter(grid: Grid, phi, eps: float, return_grad=False):
    """Integral of delta_eps(phi)|grad phi| over the domain boundary length."""
    ev = np.asarray(phi, dtype=float)[grid.elements]
    pg = ev @ grid.gauss_N.T
    dpg = np.einsum("gdi,ei->egd", grid.gauss_dN, ev)
    mag = np.linalg.norm(dpg, axis=2)
    c = grid.gauss_weight / grid.boundary_length
    value = float(c * np.sum(smoothed_delta(pg, eps) * mag))
    if not return_grad:
        return value
    unit = np.divide(dpg, mag[..., None], out=np.zeros_like(dpg), where=mag[..., None] > 0)
    ge = (c * smoothed_delta_prime(pg, eps) * mag) @ grid.gauss_N
    ge += c * np.einsum("eg,egd,gdi->ei", smoothed_delta(pg, eps), unit, grid.gauss_dN)
    grad = np.zeros(grid.node_count)
    np.add.at(grad, grid.elements, ge)
    return value, grad


def stress_penalty_point(tau, sigma_max: float, xi: float):
    d = np.asarray(tau, dtype=float) - sigma_max
    out = np.where(d > 0, np.sqrt(d * d + xi * xi) - xi, 0.0)
    return out if out.ndim else float(out)


def stress_penalty_dtau(tau, sigma_max: float, xi: float):
    d = np.asarray(tau, dtype=float) - sigma_max
    return np.where(d > 0, d / np.sqrt(d * d + xi * xi), 0.0)


def stress_penalty(tau, grid: Grid, heaviside: np.ndarray, sigma_max: float, xi: float) -> float:
    """Material-weighted volume integral of the smoothed stress excess."""
    tg = gauss_interp(grid, tau)
    return float(grid.gauss_weight * np.sum(heaviside * stress_penalty_point(tg, sigma_max, xi)))


class Problem:
    def __init__(self, fixture: Fixture, spec: ProblemSpec):
        self.fx = fixture
        self.spec = spec
        self.grid = fixture.grid
        self.filter = build_filter(self.grid, spec.r_f)
        self.eps = self.grid.h
        N = self.grid.node_count
        self.passive = np.asarray(fixture.passive, dtype=int)
        self._passive_mask = np.zeros(N, dtype=bool)
        self._passive_mask[self.passive] = True
        if spec.mode == "sfc":
            self.lower, self.upper = np.zeros(N), np.ones(N)
        else:
            self.lower = np.concatenate([np.full(N, spec.phi_low), np.zeros(N)])
            self.upper = np.concatenate([np.full(N, spec.phi_up), np.ones(N)])

    @property
    def n_vars(self) -> int:
        return self.lower.size

    def initial_design(self) -> np.ndarray:
        sp_ = self.spec
        N = self.grid.node_count
        if sp_.mode == "sfc":
            return np.full(N, sp_.sfc.phi_sh + sp_.rho0 * (1.0 - sp_.sfc.phi_sh))
        phi0 = 0.5 * sp_.phi_up if sp_.phi0 is None else sp_.phi0
        return np.concatenate([np.full(N, phi0), np.full(N, sp_.rho0)])

    def params(self, it: int) -> IterationParams:
        sp_ = self.spec
        if sp_.per_schedule is not None:
            w_per = schedule_value(sp_.per_schedule, it)
        else:
            w_per = sp_.w_per
        if it > sp_.span and sp_.w_per_post is not None:
            w_per = sp_.w_per_post
        rho_th = schedule_value(sp_.rho_th, it) if sp_.mode == "tfc" else 0.0
        return IterationParams(it, schedule_value(sp_.rho_sh, it), rho_th, w_per)

    # -- forward ------------------------------------------------------------

    def fields(self, s, rho_sh: float) -> Fields:
        s = np.asarray(s, dtype=float)
        N = self.grid.node_count
        W = self.filter.W
        pm = self._passive_mask
        if self.spec.mode == "sfc":
            cfg = self.spec.sfc
            S_hat = W @ s
            S_hat[pm] = 1.0
            phi = sfc_phi(S_hat, cfg)
            active = (phi >= 0) & ~pm
            rho = np.where(phi >= 0, np.clip((S_hat - cfg.phi_sh) / (1.0 - cfg.phi_sh), 0.0, 1.0), 0.0)
        else:
            phi = W @ s[:N]
            rho = W @ s[N:]
            phi[pm] = self.spec.phi_up
            rho[pm] = 1.0
            S_hat = np.concatenate([phi, rho])
            active = ~pm
        return Fields(s, S_hat, phi, rho, shift_density(rho, rho_sh), active)

    def freeze(self, s, it: int, psi0: float | None = None) -> Frozen:
        p = self.params(it)
        f = self.fields(s, p.rho_sh)
        poly = extract_interface(self.grid, f.phi)
        target = build_target_field(f.phi, self.grid, self.spec.reg, poly=poly)
        sol = assemble_and_solve(self.grid, f.phi, f.rho_tilde, self.fx.material, self.fx.bc,
                                 eps=self.eps, gamma_s=self.spec.gamma_s)
        mask = (f.rho < p.rho_th) if self.spec.mode == "tfc" else None
        return Frozen(p, target, sol.spring_nodes, mask, sol.strain_energy if psi0 is None else psi0)

    def evaluate(self, s, it: int, psi0: float | None = None, frozen: Frozen | None = None) -> Evaluation:
        """Evaluate all responses at design ``s``.

        With ``frozen`` given, the schedules, regularization target, spring
        set and coupling activity are taken from it instead of being rebuilt.
        """
        sp_ = self.spec
        grid = self.grid
        mat = self.fx.material
        p = frozen.params if frozen else self.params(it)
        f = self.fields(s, p.rho_sh)
        poly = extract_interface(grid, f.phi)
        if frozen is not None:
            target = frozen.target
        else:
            target = build_target_field(f.phi, grid, sp_.reg, poly=poly)
        sol = assemble_and_solve(grid, f.phi, f.rho_tilde, mat, self.fx.bc, eps=self.eps,
                                 gamma_s=sp_.gamma_s,
                                 spring_nodes=None if frozen is None else frozen.spring_nodes)
        if frozen is not None:
            psi0 = frozen.psi0
        elif psi0 is None:
            psi0 = sol.strain_energy
        psi_ratio = sol.strain_energy / psi0 if psi0 > 0 else 0.0
        M = mass(grid, f.phi, f.rho_tilde, mat, self.eps)
        mfrac = M / grid.area

        F = psi_ratio if sp_.objective == "compliance" else mfrac
        length = poly.total_length
        P_per = length / grid.boundary_length
        P_reg = reg_penalty(f.phi, target, sp_.reg, grid)
        if sp_.mode == "tfc":
            rho_for_p = f.rho
            if frozen is not None and frozen.coupling_mask is not None:
                rho_for_p = np.where(frozen.coupling_mask, -1.0, 1.0 + p.rho_th)
            P_cpl = coupling_penalty_integral(f.phi, rho_for_p, p.rho_th, sp_.tfc, grid)
        else:
            P_cpl = 0.0
        w = {"F": sp_.w_F, "per": p.w_per, "reg": sp_.w_reg,
             "coupling": sp_.w_coupling if sp_.mode == "tfc" else 0.0, "psi": sp_.w_psi}
        z = w["F"] * F + w["per"] * P_per + w["reg"] * P_reg + w["coupling"] * P_cpl
        if w["psi"]:
            z += w["psi"] * psi_ratio

        g = [mfrac - sp_.gamma_m]
        vm = tau = None
        P_tau = 0.0
        if sp_.has_stress:
            vm = von_mises(gauss_stresses(grid, sol, mat.nu))
            tau, _, _ = project_to_nodes(grid, vm, sol.heaviside)
            P_tau = stress_penalty(tau, grid, sol.heaviside, sp_.sigma_max, sp_.xi_tau)
            g.append(sp_.w_stress * P_tau)

        bd = ObjectiveBreakdown(
            it=it, z=float(z), F=float(F), P_Per=float(P_per), P_Reg=float(P_reg),
            P_coupling=float(P_cpl), psi_ratio=float(psi_ratio), g=[float(x) for x in g],
            rho_sh=p.rho_sh, rho_th=p.rho_th, w=w,
            P_Per_smeared=smeared_perimeter(grid, f.phi, self.eps), P_tau=float(P_tau),
            strain_energy=sol.strain_energy, mass_fraction=float(mfrac), interface_length=length,
            void_components=void_components(grid, f.phi, mirror_sides=self.fx.mirror_sides),
            floating_components=len(sol.floating),
        )
        fr = frozen
        if fr is None:
            mask = (f.rho < p.rho_th) if sp_.mode == "tfc" else None
            fr = Frozen(p, target, sol.spring_nodes, mask, psi0)
        return Evaluation(bd, f, sol, target, fr, poly, vm, tau)

    # -- adjoint ------------------------------------------------------------

    def _nodal(self, ge: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.node_count)
        np.add.at(out, self.grid.elements, ge @ self.grid.gauss_N)
        return out

    def _compliance_partials(self, ev: Evaluation):
        """d(strain energy)/d(phi) and d/d(rho_tilde) at nodes (self-adjoint)."""
        grid, mat = self.grid, self.fx.material
        _, _, Kg = gauss_operators(grid, mat.nu)
        ue = ev.solution.u[grid.element_dofs]
        dpsi_dE = -0.5 * np.einsum("ei,gij,ej->eg", ue, Kg, ue)
        phi_g = gauss_interp(grid, ev.fields.phi)
        rho_g = gauss_interp(grid, ev.fields.rho_tilde)
        dE_dphi, dE_drho = modulus_partials(phi_g, rho_g, mat, self.eps)
        return self._nodal(dpsi_dE * dE_dphi), self._nodal(dpsi_dE * dE_drho)

    def _stress_partials(self, ev: Evaluation):
        """Adjoint sensitivities of the stress penalty integral (one extra solve)."""
        grid, mat, sp_ = self.grid, self.fx.material, self.spec
        sol = ev.solution
        w = grid.gauss_weight
        N = grid.gauss_N
        el = grid.elements
        H = sol.heaviside
        B, D, Kg = gauss_operators(grid, mat.nu)
        stress = gauss_stresses(grid, sol, mat.nu)
        vm = von_mises(stress)
        tau, num, den = project_to_nodes(grid, vm, H)
        tg = gauss_interp(grid, tau)

        # P = sum w H taû(tau_g); tau = num / den
        a = self._nodal(w * H * stress_penalty_dtau(tg, sp_.sigma_max, sp_.xi_tau))  # dP/dtau
        a_num = a / den
        a_den = -a * tau / den
        c = w * H * (a_num[el] @ N.T)  # dP/dvm at Gauss points
        dP_dH = w * stress_penalty_point(tg, sp_.sigma_max, sp_.xi_tau)
        dP_dH += w * vm * (a_num[el] @ N.T) + w * (a_den[el] @ N.T)

        s11, s22, s12 = stress[..., 0], stress[..., 1], stress[..., 2]
        safe = np.where(vm > 0, vm, 1.0)
        dvm = np.stack([2 * s11 - s22, 2 * s22 - s11, 6 * s12], axis=-1) / (2 * safe[..., None])
        dvm[vm == 0] = 0.0
        # vm is homogeneous of degree one in the modulus
        dP_dE = c * np.where(sol.moduli > 0, vm / sol.moduli, 0.0)

        # dP/du = sum c E (D B)^T dvm
        DB = np.einsum("ab,gbi->gai", D, B)
        rhs_e = np.einsum("eg,ega,gai->ei", c * sol.moduli, dvm, DB)
        rhs = np.zeros(2 * grid.node_count)
        np.add.at(rhs, grid.element_dofs, rhs_e)
        lam = sol.solve_adjoint(rhs)
        ue = sol.u[grid.element_dofs]
        le = lam[grid.element_dofs]
        dP_dE = dP_dE - np.einsum("ei,gij,ej->eg", le, Kg, ue)

        phi_g = gauss_interp(grid, ev.fields.phi)
        rho_g = gauss_interp(grid, ev.fields.rho_tilde)
        dE_dphi, dE_drho = modulus_partials(phi_g, rho_g, mat, self.eps)
        dH_dphi = smoothed_delta(phi_g, self.eps)
        d_phi = self._nodal(dP_dE * dE_dphi + dP_dH * dH_dphi)
        d_rho = self._nodal(dP_dE * dE_drho)
        return d_phi, d_rho

    def _to_design(self, ev: Evaluation, d_phi, d_rhot, d_rho=None):
        """Chain nodal field sensitivities back to the design variables."""
        f = ev.fields
        rho_sh = ev.frozen.params.rho_sh
        d_rho_total = (1.0 - rho_sh) * d_rhot
        if d_rho is not None:
            d_rho_total = d_rho_total + d_rho
        pm = self._passive_mask
        Wt = self.filter.W.T
        if self.spec.mode == "sfc":
            cfg = self.spec.sfc
            # density branch is clamped to [0, 1] and only defined where phi >= 0
            live = f.active & (f.S_hat > cfg.phi_sh)
            dS_phi = np.where(pm, 0.0, cfg.phi_rt * d_phi)
            dS_rho = np.where(live, d_rho_total / (1.0 - cfg.phi_sh), 0.0)
            return Wt @ (dS_phi + dS_rho), Wt @ dS_phi, Wt @ dS_rho
        dphi = Wt @ np.where(pm, 0.0, d_phi)
        drho = Wt @ np.where(pm, 0.0, d_rho_total)
        full = np.concatenate([dphi, drho])
        N = self.grid.node_count
        zero = np.zeros(N)
        return full, np.concatenate([dphi, zero]), np.concatenate([zero, drho])

    def gradients(self, ev: Evaluation) -> SensitivityBundle:
        sp_ = self.spec
        grid, mat = self.grid, self.fx.material
        f = ev.fields
        bd = ev.breakdown
        w = bd.w
        psi0 = ev.frozen.psi0
        zero = np.zeros(grid.node_count)

        _, dM_dphi, dM_drho = mass(grid, f.phi, f.rho_tilde, mat, self.eps, return_grad=True)
        dpsi_dphi, dpsi_drho = (zero, zero)
        need_psi = sp_.objective == "compliance" or w["psi"]
        if need_psi and psi0 > 0:
            dpsi_dphi, dpsi_drho = self._compliance_partials(ev)
            dpsi_dphi, dpsi_drho = dpsi_dphi / psi0, dpsi_drho / psi0

        if sp_.objective == "compliance":
            dF_dphi, dF_drho = dpsi_dphi, dpsi_drho
        else:
            dF_dphi, dF_drho = dM_dphi / grid.area, dM_drho / grid.area

        dz_phi = w["F"] * dF_dphi
        dz_rho = w["F"] * dF_drho
        if w["psi"]:
            dz_phi = dz_phi + w["psi"] * dpsi_dphi
            dz_rho = dz_rho + w["psi"] * dpsi_drho
        if w["per"]:
            dz_phi = dz_phi + w["per"] * interface_length_gradient(grid, f.phi, ev.poly) / grid.boundary_length
        if w["reg"]:
            dz_phi = dz_phi + w["reg"] * reg_penalty(f.phi, ev.target, sp_.reg, grid, return_grad=True)[1]
        if w["coupling"]:
            rho_for_p = f.rho
            if ev.frozen.coupling_mask is not None:
                rho_for_p = np.where(ev.frozen.coupling_mask, -1.0, 1.0 + bd.rho_th)
            _, dP = coupling_penalty_integral(f.phi, rho_for_p, bd.rho_th, sp_.tfc, grid, return_grad=True)
            dz_phi = dz_phi + w["coupling"] * dP
            # the coupling penalty has no density gradient by construction

        dz, dz_ls, dz_den = self._to_design(ev, dz_phi, dz_rho)
        dg = [self._to_design(ev, dM_dphi / grid.area, dM_drho / grid.area)[0]]
        if sp_.has_stress:
            d_phi, d_rho = self._stress_partials(ev)
            dg.append(sp_.w_stress * self._to_design(ev, d_phi, d_rho)[0])
        return SensitivityBundle(dz, dg, float(np.linalg.norm(dz_den)), float(np.linalg.norm(dz_ls)))


def with_overrides(spec: ProblemSpec, **kw) -> ProblemSpec:
    return replace(spec, **kw)


def relative_error(adjoint: np.ndarray, fd: np.ndarray, floor: float) -> np.ndarray:
    """Per-entry relative error with a denominator floored at ``floor``."""
    return np.abs(adjoint - fd) / np.maximum(np.maximum(np.abs(adjoint), np.abs(fd)), floor)


def finite_difference_check(problem: Problem, s, it: int, psi0: float | None = None,
                            n_vars: int = 20, rel_step: float = 1e-5, seed: int = 0,
                            floor_frac: float = 1e-3):
    """Central-difference check of dz and every dg on random variables.

    Returns a dict mapping response name to the max relative error.
    """
    rng = np.random.default_rng(seed)
    frozen = problem.freeze(s, it, psi0)
    ev = problem.evaluate(s, it, frozen=frozen)
    grads = problem.gradients(ev)
    names = ["z", "g1", "g3"][: 1 + len(grads.dg)]  # g3: stress constraint
    adj = [grads.dz] + grads.dg
    idx = rng.choice(problem.n_vars, size=min(n_vars, problem.n_vars), replace=False)
    fd = np.zeros((len(names), idx.size))
    for k, i in enumerate(idx):
        step = rel_step * (problem.upper[i] - problem.lower[i])
        vals = []
        for sign in (1.0, -1.0):
            sp_ = np.array(s, dtype=float)
            sp_[i] += sign * step
            b = problem.evaluate(sp_, it, frozen=frozen).breakdown
            vals.append([b.z] + b.g)
        fd[:, k] = (np.array(vals[0]) - np.array(vals[1])) / (2 * step)
    out = {}
    for r, name in enumerate(names):
        floor = floor_frac * max(np.max(np.abs(adj[r])), 1e-300)
        out[name] = float(np.max(relative_error(adj[r][idx], fd[r], floor)))
    return out
