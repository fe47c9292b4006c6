"""Outer optimization loop with continuation and relative-change termination."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .mma import MmaState, mma_update
from .problem import Evaluation, ObjectiveBreakdown, Problem

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    """A stage failed; ``history`` holds every completed iteration."""

    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


@dataclass
class IterationRecord:
    breakdown: ObjectiveBreakdown
    density_grad_norm: float = 0.0
    levelset_grad_norm: float = 0.0
    in_bounds: bool = True
    material_shift_exact: bool = True  # every node with phi > 0 has rho_tilde == 1


@dataclass
class OptimizationResult:
    history: list[IterationRecord]
    design: np.ndarray
    final: Evaluation
    converged: bool
    psi0: float
    snapshots: dict = field(default_factory=dict)

    @property
    def breakdowns(self) -> list[ObjectiveBreakdown]:
        return [r.breakdown for r in self.history]


def _relative_change(z, z_prev):
    return abs(z - z_prev) / abs(z_prev) if z_prev != 0 else abs(z - z_prev)


def run_optimization(problem: Problem, D_max: int | None = None, s0=None, move: float = 0.1,
                     callback=None, on_failure=None) -> OptimizationResult:
    """Evaluate, differentiate and update until converged or ``D_max`` is reached.

    Termination requires the continuation to be over (iteration > span), a
    relative objective change within the tolerance and a feasible design.
    ``callback(it, evaluation, record)`` is called after every evaluation;
    ``on_failure(history)`` is called before an error propagates.
    """
    spec = problem.spec
    D_max = spec.D_max if D_max is None else int(D_max)
    s = problem.initial_design() if s0 is None else np.array(s0, dtype=float)
    state = MmaState.new(problem.lower, problem.upper, move)
    history: list[IterationRecord] = []
    psi0 = None
    converged = False
    z_prev = None
    ev = None
    it = 0
    try:
        while True:
            try:
                ev = problem.evaluate(s, it, psi0=psi0)
            except Exception as exc:
                raise OptimizationError(f"evaluation failed at iteration {it}: {exc}", history) from exc
            if psi0 is None:
                psi0 = ev.frozen.psi0
            bd = ev.breakdown
            f = ev.fields
            rec = IterationRecord(
                bd,
                in_bounds=bool(np.all(s >= problem.lower) and np.all(s <= problem.upper)),
                material_shift_exact=bool(np.all(f.rho_tilde[f.phi > 0] == 1.0)),
            )
            history.append(rec)

            feasible = all(g <= 1e-3 for g in bd.g)
            if z_prev is not None and it > spec.span and feasible \
                    and _relative_change(bd.z, z_prev) <= spec.tol:
                converged = True
            if converged or it >= D_max:
                if callback:
                    callback(it, ev, rec)
                break

            try:
                sens = problem.gradients(ev)
            except Exception as exc:
                raise OptimizationError(f"sensitivity analysis failed at iteration {it}: {exc}",
                                        history) from exc
            rec.density_grad_norm = sens.density_norm
            rec.levelset_grad_norm = sens.levelset_norm
            if callback:
                callback(it, ev, rec)
            log.debug("it %d z %.6g g %s", it, bd.z, bd.g)

            s = mma_update(state, s, bd.z, sens.dz, bd.g, sens.dg, slack=spec.slack)
            z_prev = bd.z
            it += 1
    except OptimizationError:
        if on_failure:
            on_failure(history)
        raise
    return OptimizationResult(history, s, ev, converged, psi0)


def gradient_check_run(problem: Problem, iterations=(0, 3, 6), n_vars: int = 20,
                       rel_step: float = 1e-5, seed: int = 0) -> dict:
    """Finite-difference check at several iterates of a short optimization run.

    Returns ``{iteration: {response: max relative error}}``.
    """
    from .problem import finite_difference_check

    iterations = sorted(set(int(i) for i in iterations))
    designs = {}
    s = problem.initial_design()
    psi0 = None
    state = MmaState.new(problem.lower, problem.upper)
    for it in range(iterations[-1] + 1):
        if it in iterations:
            designs[it] = s.copy()
        if it == iterations[-1]:
            break
        ev = problem.evaluate(s, it, psi0=psi0)
        psi0 = ev.frozen.psi0 if psi0 is None else psi0
        sens = problem.gradients(ev)
        s = mma_update(state, s, ev.breakdown.z, sens.dz, ev.breakdown.g, sens.dg,
                       slack=problem.spec.slack)
    if psi0 is None:
        psi0 = problem.evaluate(designs[iterations[0]], 0).frozen.psi0
    return {it: finite_difference_check(problem, designs[it], it, psi0, n_vars=n_vars,
                                        rel_step=rel_step, seed=seed + it)
            for it in iterations}
