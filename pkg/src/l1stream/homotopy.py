"""Warm-started homotopy for the weighted l1 program

    minimize  ||W x||_1 + 1/2 ||A x - y||_2^2.

The solver starts from an arbitrary vector ``x_hat`` and solves the family

    minimize  ||W x||_1 + 1/2 ||A x - y||_2^2 + (1 - eps) u^T x

while ``eps`` moves from 0 to 1.  With ``u = -W z_hat - A^T (A x_hat - y)``
the warm start is optimal at ``eps = 0``, and the solution path is piecewise
linear in ``eps`` with one support change at each critical value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg_updates import CHOLESKY, GramFactor, SingularGram
from .operators import SystemMatrix, as_system

__all__ = [
    "WeightedL1Problem",
    "WarmStart",
    "SolverState",
    "SolveResult",
    "HomotopyOptions",
    "StepChoice",
    "MaxStepsExceeded",
    "SingularGram",
    "compute_u",
    "homotopy_solve",
    "compute_direction",
    "compute_step",
    "verify_kkt",
    "objective",
]

Z_ZERO = "zero"
Z_CLAMP = "clamp"


class MaxStepsExceeded(RuntimeError):
    pass


@dataclass
class WeightedL1Problem:
    A: SystemMatrix
    y: np.ndarray
    w: np.ndarray
    nonneg: bool = False

    def __post_init__(self):
        self.A = as_system(self.A)
        M, N = self.A.shape
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.y.shape != (M,):
            raise ValueError(f"y has length {self.y.size}, expected {M}")
        self.w = np.broadcast_to(np.asarray(self.w, dtype=float), (N,)).copy()
        if not np.all(self.w > 0):
            raise ValueError("weights must be strictly positive")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class WarmStart:
    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    matvecs: float = 1.0


@dataclass
class HomotopyOptions:
    max_steps: int | None = None        # default 50 N + 1000
    factor_mode: str = CHOLESKY
    singular_tol: float = 1e-12
    degenerate_tol: float = 1e-14
    max_degenerate: int | None = None   # default 5 N
    check_path: bool = False
    path_tol: float = 1e-8
    kkt_tol: float = 1e-6


@dataclass
class SolverState:
    x: np.ndarray
    active: np.ndarray          # boolean mask of the support
    z: np.ndarray               # signs, zero off the support
    p: np.ndarray               # a_i^T (A x - y) + (1 - eps) u_i
    eps: float
    factor: GramFactor
    step_count: int = 0
    matvec_count: float = 0.0
    blocked: int | None = None  # just-removed index, barred from its old boundary
    blocked_sign: float = 0.0   # its sign before removal
    last_added: int | None = None

    @property
    def support(self):
        return list(self.factor.column_index_map)


@dataclass
class StepChoice:
    delta: float
    kind: str | None            # "add", "remove" or None (no change)
    index: int | None
    sign: float
    d: np.ndarray


@dataclass
class SolveResult:
    x: np.ndarray
    support: list
    step_count: int
    matvec_count: float
    kkt_residual: float
    eps_path: list = field(default_factory=list)
    changes: list = field(default_factory=list)
    max_path_residual: float = 0.0


def objective(problem, x):
    r = problem.A.array @ x - problem.y
    return float(np.sum(problem.w * np.abs(x)) + 0.5 * (r @ r))


def compute_u(problem, x_hat, z_policy=Z_ZERO):
    """Build the warm start and the offset vector ``u`` for ``x_hat``.

    Off the support, ``z_policy="zero"`` sets ``z_hat = 0``; ``"clamp"`` sets
    ``z_hat_i = clip(a_i^T (y - A x_hat) / w_i, +-(1 - 1e-6))`` which makes
    ``u`` vanish there unless the clip is active.
    """
    A, w = problem.A, problem.w
    x_hat = np.asarray(x_hat, dtype=float).copy()
    if x_hat.shape != (A.shape[1],):
        raise ValueError("warm start has the wrong length")
    if not np.all(np.isfinite(x_hat)):
        raise ValueError("warm start must be finite")
    if problem.nonneg and np.any(x_hat < 0):
        raise ValueError("non-negative problems need a non-negative warm start")
    c = A.rmatvec(A.matvec(x_hat) - problem.y)
    z = np.sign(x_hat)
    off = x_hat == 0
    if z_policy == Z_CLAMP:
        lim = 1.0 - 1e-6
        z[off] = np.clip(-c[off] / w[off], -lim, lim)
    elif z_policy != Z_ZERO:
        raise ValueError(f"unknown z policy {z_policy!r}")
    u = -w * z - c
    return WarmStart(x=x_hat, z=z, u=u, matvecs=1.0)


def verify_kkt(problem, x, eps=1.0, u=None):
    """Largest violation of the optimality conditions at homotopy parameter ``eps``.

    Returns ``inf`` when an active coordinate has the wrong sign.
    """
    A, w = problem.A.array, problem.w
    x = np.asarray(x, dtype=float)
    p = A.T @ (A @ x - problem.y)
    if u is not None and eps != 1.0:
        p = p + (1.0 - eps) * np.asarray(u)
    on = x != 0
    if problem.nonneg:
        if np.any(x < 0):
            return math.inf
        r_on = np.abs(p[on] + w[on])
        r_off = -w[~on] - p[~on]
    else:
        s = np.sign(x[on])
        if np.any(p[on] * s > 0):
            return math.inf
        r_on = np.abs(np.abs(p[on]) - w[on])
        r_off = np.abs(p[~on]) - w[~on]
    worst = 0.0
    if r_on.size:
        worst = max(worst, float(r_on.max()))
    if r_off.size:
        worst = max(worst, float(r_off.max()))
    return worst


def _initial_state(problem, warm, opts, factor):
    x = warm.x.copy()
    active = x != 0
    idx = np.flatnonzero(active)
    if factor is None:
        factor = GramFactor.from_columns(problem.A, idx, opts.factor_mode, opts.singular_tol)
    elif sorted(factor.column_index_map) != idx.tolist():
        raise ValueError("supplied factor does not match the warm-start support")
    # optimality at eps = 0 holds by construction of u
    p = -problem.w * warm.z
    return SolverState(
        x=x, active=active, z=np.where(active, np.sign(x), 0.0), p=p,
        eps=0.0, factor=factor,
    )


def compute_direction(state, warm):
    """Update direction: ``(A_G^T A_G)^{-1} u_G`` on the support, zero elsewhere."""
    dx = np.zeros_like(state.x)
    if state.factor.size:
        idx = state.factor.column_index_map
        dx[idx] = state.factor.solve(warm.u[idx])
    return dx


def compute_step(state, problem, warm, dx):
    """Smallest positive step that changes the support.

    Ties prefer removal, then the lowest index.  Zero denominators are
    excluded.  ``delta = inf`` means the path reaches ``eps = 1`` unchanged.
    """
    A, w = problem.A, problem.w
    if state.factor.size:
        d = A.rmatvec(A.matvec(dx)) - warm.u
    else:
        d = -warm.u.copy()
    inactive = ~state.active
    p = np.clip(state.p, -w, w)
    inf = math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        # a constraint can only be hit while moving toward it
        to_lower = np.where(inactive & (d < 0), (-w - p) / d, inf)   # hits -w, sign +1
        to_lower[~(to_lower >= 0)] = inf
        if problem.nonneg:
            to_upper = np.full_like(to_lower, inf)
        else:
            to_upper = np.where(inactive & (d > 0), (w - p) / d, inf)  # hits +w, sign -1
            to_upper[~(to_upper >= 0)] = inf
        j = state.blocked
        if j is not None:
            # the boundary it just left sits at p_j = -w_j z_old
            if state.blocked_sign > 0:
                to_lower[j] = inf
            else:
                to_upper[j] = inf
        okr = state.active & (dx != 0) & (state.x != 0)
        shrink = np.where(okr, -state.x / dx, inf)
        shrink[~(shrink > 0)] = inf
    plus = np.minimum(to_upper, to_lower)
    i_plus = int(np.argmin(plus))
    d_plus = float(plus[i_plus])
    i_minus = int(np.argmin(shrink))
    d_minus = float(shrink[i_minus])
    if d_minus == inf and d_plus == inf:
        return StepChoice(inf, None, None, 0.0, d)
    if d_minus <= d_plus:
        return StepChoice(d_minus, "remove", i_minus, 0.0, d)
    sign = -1.0 if to_upper[i_plus] <= to_lower[i_plus] else 1.0
    return StepChoice(d_plus, "add", i_plus, sign, d)


def homotopy_solve(problem, warm, opts=None, factor=None):
    """Trace the warm-start homotopy path from ``eps = 0`` to ``eps = 1``.

    Parameters
    ----------
    problem : WeightedL1Problem
    warm : WarmStart
        Output of :func:`compute_u`.
    opts : HomotopyOptions, optional
    factor : GramFactor, optional
        Prebuilt factor for the warm-start support.  Built here otherwise.

    Returns
    -------
    SolveResult
        ``matvec_count`` counts one ``A^T A`` unit per homotopy step; the
        warm-start construction is reported separately in ``warm.matvecs``.
    """
    opts = opts or HomotopyOptions()
    N = problem.A.shape[1]
    max_steps = opts.max_steps if opts.max_steps is not None else 50 * N + 1000
    max_degenerate = opts.max_degenerate if opts.max_degenerate is not None else 5 * N
    state = _initial_state(problem, warm, opts, factor)
    w = problem.w
    eps_path = [0.0]
    changes = []
    comp = 0.0  # Kahan compensation for eps
    degenerate = 0
    max_path_res = 0.0

    while True:
        dx = compute_direction(state, warm)
        j = state.last_added
        if j is not None:
            state.last_added = None
            if np.sign(dx[j]) != state.z[j]:
                state.factor.shrink(j)
                state.active[j] = False
                state.blocked, state.blocked_sign = j, state.z[j]
                state.z[j] = 0.0
                state.x[j] = 0.0
                changes.append(("drop", j, state.eps))
                dx = compute_direction(state, warm)

        step = compute_step(state, problem, warm, dx)
        delta = step.delta
        if state.eps + delta >= 1.0 or step.kind is None:
            delta = 1.0 - state.eps
            state.x += delta * dx
            state.x[~state.active] = 0.0
            state.eps = 1.0
            eps_path.append(1.0)
            break

        state.x += delta * dx
        state.p += delta * step.d
        yk = delta - comp
        tk = state.eps + yk
        comp = (tk - state.eps) - yk
        state.eps = tk

        i = step.index
        if step.kind == "remove":
            state.factor.shrink(i)
            state.active[i] = False
            state.x[i] = 0.0
            state.p[i] = -w[i] * state.z[i]
            state.blocked, state.blocked_sign = i, state.z[i]
            state.z[i] = 0.0
        else:
            try:
                state.factor.grow(problem.A, i)
            except SingularGram as exc:
                exc.step_count = state.step_count
                raise
            state.active[i] = True
            state.z[i] = step.sign
            state.x[i] = 0.0
            state.last_added = i
            state.blocked = None
        idx = state.factor.column_index_map
        state.p[idx] = -w[idx] * state.z[idx]
        state.step_count += 1
        eps_path.append(state.eps)
        changes.append((step.kind, i, state.eps))

        if delta < opts.degenerate_tol:
            degenerate += 1
            if degenerate > max_degenerate:
                exc = MaxStepsExceeded(f"{degenerate} consecutive degenerate steps")
                exc.step_count = state.step_count
                raise exc
        else:
            degenerate = 0
        if state.step_count > max_steps:
            exc = MaxStepsExceeded(f"path did not terminate in {max_steps} steps")
            exc.step_count = state.step_count
            raise exc
        if opts.check_path:
            res = verify_kkt(problem, state.x, state.eps, warm.u)
            max_path_res = max(max_path_res, res)
            if res > opts.path_tol:
                raise AssertionError(f"path left the optimal set at eps={state.eps}: {res:.3e}")

    state.matvec_count = float(state.step_count)
    return SolveResult(
        x=state.x,
        support=state.factor.column_index_map,
        step_count=state.step_count,
        matvec_count=state.matvec_count,
        kkt_residual=verify_kkt(problem, state.x, 1.0),
        eps_path=eps_path,
        changes=changes,
        max_path_residual=max_path_res,
    )


def solve_weighted_l1(A, y, w, x0=None, z_policy=Z_ZERO, opts=None, nonneg=False):
    """Convenience wrapper: build the problem and warm start, then solve."""
    problem = WeightedL1Problem(A, y, w, nonneg=nonneg)
    if x0 is None:
        x0 = np.zeros(problem.A.shape[1])
    warm = compute_u(problem, x0, z_policy)
    return homotopy_solve(problem, warm, opts)
