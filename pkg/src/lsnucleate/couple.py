"""Level-set / density couplings, continuation schedules and SIMP interpolation.

Two couplings are provided. The single-field coupling (SFC) derives both the
level-set function and the density from one filtered variable field. The
two-field coupling (TFC) keeps independent fields and penalizes a positive
level set wherever the density has dropped below a threshold, which is what
nucleates holes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SfcConfig:
    phi_sh: float = 0.5
    phi_rt: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.phi_sh < 1.0:
            raise ConfigError(f"phi_sh must lie in (0, 1), got {self.phi_sh}")
        if not self.phi_rt > 0:
            raise ConfigError(f"phi_rt must be positive, got {self.phi_rt}")


@dataclass(frozen=True)
class TfcConfig:
    phi_th: float
    phi_up: float
    xi: float = 0.5
    phi_low: float | None = None

    def __post_init__(self):
        if not self.phi_th < 0:
            raise ConfigError(f"phi_th must be negative, got {self.phi_th}")
        if not self.xi > 0:
            raise ConfigError(f"xi must be positive, got {self.xi}")
        if not self.phi_up > self.phi_th:
            raise ConfigError("phi_up must exceed phi_th")
        if self.phi_low is not None and not self.phi_th > self.phi_low:
            raise ConfigError(f"phi_th ({self.phi_th}) must exceed phi_low ({self.phi_low})")


@dataclass(frozen=True)
class MaterialModel:
    E0: float = 2.0e3
    E_void: float = 1.0e-8
    nu: float = 0.4
    theta0: float = 1.0
    beta: float = 2.0
    heaviside_power: float = 1.0  # exponent on H_eps in the stiffness only

    def __post_init__(self):
        if not self.E0 > self.E_void > 0:
            raise ConfigError("require E0 > E_void > 0")
        if not 0.0 < self.nu < 0.5:
            raise ConfigError(f"nu must lie in (0, 0.5), got {self.nu}")
        if not self.beta >= 1.0:
            raise ConfigError(f"beta must be >= 1, got {self.beta}")
        if not self.heaviside_power >= 1.0:
            raise ConfigError(f"heaviside_power must be >= 1, got {self.heaviside_power}")


# --- single-field coupling -------------------------------------------------

def sfc_phi(S_hat, cfg: SfcConfig):
    """Level set from the filtered abstract field; positive where S_hat > phi_sh."""
    return cfg.phi_rt * (np.asarray(S_hat, dtype=float) - cfg.phi_sh)


def sfc_rho(S_hat, cfg: SfcConfig, phi=None):
    """Density on the material side, and the active mask.

    Nodes with phi < 0 carry no density; they are stored as 0 and flagged
    inactive.
    """
    S_hat = np.asarray(S_hat, dtype=float)
    if phi is None:
        phi = sfc_phi(S_hat, cfg)
    active = np.asarray(phi) >= 0
    rho = np.where(active, (S_hat - cfg.phi_sh) / (1.0 - cfg.phi_sh), 0.0)
    return np.clip(rho, 0.0, 1.0), active


# --- two-field coupling ----------------------------------------------------

def _tfc_t(phi, cfg: TfcConfig):
    return np.maximum(0.0, (np.asarray(phi, dtype=float) - cfg.phi_th) / (cfg.phi_up - cfg.phi_th))


def tfc_penalty_point(phi, rho, rho_th: float, cfg: TfcConfig):
    """Smoothed coupling penalty in [0, 1]; zero wherever rho >= rho_th."""
    t = _tfc_t(phi, cfg)
    xi = cfg.xi
    p = (np.sqrt(t * t + xi * xi) - xi) / (math.sqrt(1.0 + xi * xi) - xi)
    out = np.where(np.asarray(rho) < rho_th, p, 0.0)
    return out if out.ndim else float(out)


def tfc_penalty_dphi(phi, rho, rho_th: float, cfg: TfcConfig):
    """d(penalty)/d(phi). The derivative with respect to rho is identically zero."""
    t = _tfc_t(phi, cfg)
    xi = cfg.xi
    dp_dt = t / np.sqrt(t * t + xi * xi) / (math.sqrt(1.0 + xi * xi) - xi)
    out = np.where(np.asarray(rho) < rho_th, dp_dt / (cfg.phi_up - cfg.phi_th), 0.0)
    return out if out.ndim else float(out)


def tfc_penalty_raw(phi, rho, rho_th: float, cfg: TfcConfig):
    """Non-smooth reference form of the coupling penalty."""
    out = np.where(np.asarray(rho) < rho_th, np.minimum(_tfc_t(phi, cfg), 1.0), 0.0)
    return out if out.ndim else float(out)


def coupling_penalty_integral(phi, rho, rho_th: float, cfg: TfcConfig, grid, return_grad=False):
    """Domain integral of the bilinear penalty interpolant over the boundary length.

    The integral of a bilinear interpolant under 2x2 Gauss quadrature equals
    the nodal values weighted by the integrals of the shape functions.
    """
    p = tfc_penalty_point(phi, rho, rho_th, cfg)
    value = float(grid.nodal_area @ p) / grid.boundary_length
    if not return_grad:
        return value
    dphi = grid.nodal_area * tfc_penalty_dphi(phi, rho, rho_th, cfg) / grid.boundary_length
    return value, dphi


# --- continuation ----------------------------------------------------------

@dataclass(frozen=True)
class ContinuationSchedule:
    """Staircase power-law schedule from ``initial`` to ``terminal``.

    The value changes only at multiples of ``step`` and holds ``terminal``
    once the iteration index exceeds ``span``.
    """

    initial: float
    terminal: float
    eta: float = 2.0
    step: int = 50
    span: int = 400

    def __post_init__(self):
        if not 0 < self.step <= self.span:
            raise ConfigError(f"continuation requires 0 < step <= span, got {self.step}, {self.span}")
        if not self.eta >= 1.0:
            raise ConfigError(f"continuation exponent must be >= 1, got {self.eta}")

    @property
    def decreasing(self) -> bool:
        return self.terminal < self.initial

    @classmethod
    def decreasing_to_zero(cls, initial, eta=2.0, step=50, span=400):
        return cls(initial, 0.0, eta, step, span)

    @classmethod
    def constant(cls, value, step=1, span=1):
        return cls(value, value, 1.0, step, span)


def schedule_value(sched: ContinuationSchedule, it: int) -> float:
    if it < 0:
        raise ConfigError("iteration index must be non-negative")
    if it > sched.span:
        return float(sched.terminal)
    frac = (it // sched.step) * sched.step / sched.span
    if frac >= 1.0:
        return float(sched.terminal)
    if sched.terminal == 0.0:
        return sched.initial * (1.0 - frac**sched.eta)
    return sched.initial + (sched.terminal - sched.initial) * frac**sched.eta


# --- density shift and SIMP -------------------------------------------------

def shift_density(rho, rho_sh: float):
    if not 0.0 <= rho_sh <= 1.0:
        raise ConfigError(f"density shift must lie in [0, 1], got {rho_sh}")
    return rho_sh + (1.0 - rho_sh) * np.asarray(rho, dtype=float)


def simp_properties(rho_tilde, mat: MaterialModel):
    """Power-law modulus and linear material density (no void floor)."""
    r = np.asarray(rho_tilde, dtype=float)
    E, theta = mat.E0 * r**mat.beta, mat.theta0 * r
    if E.ndim == 0:
        return float(E), float(theta)
    return E, theta
