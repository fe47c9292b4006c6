"""Method of moving asymptotes (outer iteration only).

Each update builds Svanberg's separable convex approximation around the
current point and solves it through its dual. One constraint is handled by
bisection on the multiplier; several constraints by cyclic coordinate
bisection, which converges because the dual is concave and differentiable.

Constraints are elastic: each carries an artificial slack y_i >= 0 costed at
c*y_i + d*y_i**2/2, so a subproblem that cannot be made feasible inside the
move limits still has a finite multiplier and the objective keeps acting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MmaError(RuntimeError):
    pass


ASYINIT = 0.5
ASYINCR = 1.2
ASYDECR = 0.7
ALBEFA = 0.1
RAA0 = 1e-5


@dataclass
class MmaState:
    lower: np.ndarray
    upper: np.ndarray
    move: float = 0.1
    low: np.ndarray | None = None
    upp: np.ndarray | None = None
    x1: np.ndarray | None = None
    x2: np.ndarray | None = None
    k: int = 0
    c: float = 1000.0  # linear cost of the elastic constraint slack
    d: float = 1.0  # quadratic cost of the elastic constraint slack

    @classmethod
    def new(cls, lower, upper, move=0.1, c=1000.0, d=1.0):
        return cls(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float), move, c=c, d=d)


def _asymptotes(state: MmaState, x: np.ndarray):
    span = state.upper - state.lower
    if state.k < 2:
        low = x - ASYINIT * span
        upp = x + ASYINIT * span
    else:
        trend = (x - state.x1) * (state.x1 - state.x2)
        factor = np.where(trend < 0, ASYDECR, np.where(trend > 0, ASYINCR, 1.0))
        low = x - factor * (state.x1 - state.low)
        upp = x + factor * (state.upp - state.x1)
        low = np.clip(low, x - 10.0 * span, x - 1e-4 * span)
        upp = np.clip(upp, x + 1e-4 * span, x + 10.0 * span)
    return low, upp


def _approx(df, x, low, upp, span):
    pos = np.maximum(df, 0.0)
    neg = np.maximum(-df, 0.0)
    reg = RAA0 / span
    p = (upp - x) ** 2 * (1.001 * pos + 0.001 * neg + reg)
    q = (x - low) ** 2 * (0.001 * pos + 1.001 * neg + reg)
    return p, q


def _bisect(fn, hi0=1.0, rtol=1e-13, max_iter=400):
    """Root of a nonincreasing function on [0, inf); returns 0 if fn(0) <= 0."""
    if fn(0.0) <= 0:
        return 0.0
    lo, hi = 0.0, hi0
    while fn(hi) > 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e30:
            raise MmaError(f"dual multiplier unbounded: fn({hi:g}) = {fn(hi):g}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * max(hi, 1e-300):
            return hi
    raise MmaError(f"dual bisection did not converge on [{lo}, {hi}]")


def mma_update(state: MmaState, x, f0: float, df0, g=(), dg=(), slack: float = 0.0) -> np.ndarray:
    """One MMA step; returns the new design and advances ``state``."""
    x = np.asarray(x, dtype=float)
    df0 = np.asarray(df0, dtype=float)
    g = np.asarray(g, dtype=float).reshape(-1) - slack
    dg = np.asarray(dg, dtype=float).reshape(len(g), -1) if len(g) else np.zeros((0, x.size))
    if df0.shape != x.shape or dg.shape[1] != x.size:
        raise MmaError("gradient dimensions do not match the design vector")
    span = state.upper - state.lower
    low, upp = _asymptotes(state, x)
    alpha = np.maximum.reduce([state.lower, low + ALBEFA * (x - low), x - state.move * span])
    beta = np.minimum.reduce([state.upper, upp - ALBEFA * (upp - x), x + state.move * span])

    p0, q0 = _approx(df0, x, low, upp, span)
    m = len(g)
    pq = [_approx(dg[i], x, low, upp, span) for i in range(m)]
    r = np.array([g[i] - np.sum(pq[i][0] / (upp - x) + pq[i][1] / (x - low)) for i in range(m)])

    def primal(lam):
        P, Q = p0.copy(), q0.copy()
        for i in range(m):
            P += lam[i] * pq[i][0]
            Q += lam[i] * pq[i][1]
        sP, sQ = np.sqrt(P), np.sqrt(Q)
        return np.clip((sP * low + sQ * upp) / (sP + sQ), alpha, beta)

    def gtilde(i, xs):
        return np.sum(pq[i][0] / (upp - xs) + pq[i][1] / (xs - low)) + r[i]

    def slack_y(v):
        return max(0.0, (v - state.c) / state.d)

    lam = np.zeros(m)
    if m == 1:
        lam[0] = _bisect(lambda v: gtilde(0, primal(np.array([v]))) - slack_y(v))
    elif m > 1:
        for _sweep in range(500):
            prev = lam.copy()
            for i in range(m):
                def fi(v, i=i):
                    trial = lam.copy()
                    trial[i] = v
                    return gtilde(i, primal(trial)) - slack_y(v)
                lam[i] = _bisect(fi)
            if np.all(np.abs(lam - prev) <= 1e-10 * (1.0 + np.abs(lam))):
                break
        else:
            raise MmaError(f"dual coordinate ascent did not converge: lambda={lam}, g={g}")

    x_new = primal(lam)
    state.x2 = state.x1
    state.x1 = x.copy()
    state.low, state.upp = low, upp
    state.k += 1
    return np.clip(x_new, state.lower, state.upper)
