import numpy as np
import pytest

from lsnucleate.couple import ContinuationSchedule, MaterialModel, SfcConfig, TfcConfig
from lsnucleate.fixtures import ex1_fixture
from lsnucleate.grid import build_grid
from lsnucleate.opt.problem import Problem, ProblemSpec
from lsnucleate.regularize import RegConfig


def circle_sdf(grid, center=(30.0, 20.0), radius=10.0):
    """Signed distance, positive inside the circle."""
    x, y = grid.coords.T
    return radius - np.hypot(x - center[0], y - center[1])


def small_spec(mode, h, objective="compliance", sigma_max=None, **kw):
    pu = 2.5 * h
    if mode == "tfc":
        phi_low, phi_up = -pu, pu
    else:
        phi_low, phi_up = -2.0 * h, 2.0 * h
    return ProblemSpec(
        mode=mode, sfc=SfcConfig(0.5, 4.0 * h), tfc=TfcConfig(0.25 * -pu, pu, 0.5, -pu),
        reg=RegConfig(target_low=phi_low, target_up=phi_up),
        rho_sh=ContinuationSchedule(0.0, 1.0, 2.0, 50, 400),
        rho_th=ContinuationSchedule(0.28, 0.0, 2.0, 50, 400),
        phi_low=phi_low, phi_up=phi_up, r_f=1.6 * h, objective=objective,
        sigma_max=sigma_max, **kw)


@pytest.fixture(scope="session")
def circle_grid():
    return build_grid(120, 80, 0.5)


@pytest.fixture
def material():
    return MaterialModel()


@pytest.fixture(scope="session")
def small_problems():
    """A 20x14 Example-1 fixture in both couplings."""
    fx = ex1_fixture(20, 14, 3.0, material=MaterialModel(heaviside_power=3.0))
    return {mode: Problem(fx, small_spec(mode, 3.0)) for mode in ("sfc", "tfc")}


def perturbed(problem, seed=1, amount=0.6):
    rng = np.random.default_rng(seed)
    s0 = problem.initial_design()
    span = problem.upper - problem.lower
    return np.clip(s0 + (rng.random(problem.n_vars) - 0.5) * amount * span,
                   problem.lower, problem.upper)
