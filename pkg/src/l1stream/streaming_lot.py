"""Sliding-window recovery of a streaming signal with a lapped representation.

The active interval holds ``P`` measurement blocks of ``N`` samples.  Each
iteration solves a weighted l1 problem over the coefficients of every
interval that meets the window, commits the oldest block to the output,
subtracts the committed coefficients' contribution from the remaining
measurements, and slides by one block.  A block-DCT representation runs
through the same machinery as a non-overlapping baseline.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .linalg_updates import GramFactor, SingularGram
from .homotopy import HomotopyOptions, MaxStepsExceeded, WeightedL1Problem, compute_u, homotopy_solve, objective
from .lapped import LotPartition, active_synthesis_matrix
from .operators import SystemMatrix
from .oracle import prox_gradient_solve
from .signals import ser_db
from .wavelets import dct_matrix

__all__ = [
    "NotSolved",
    "DegenerateBeta",
    "StreamBasis",
    "StreamingWindow",
    "LotStreamConfig",
    "IterationRecord",
    "StreamResult",
    "compute_tau",
    "compute_beta",
    "update_weights",
    "build_window",
    "advance_window",
    "predict_warm_start",
    "solve_window",
    "commit_output",
    "LotStreamer",
]


class NotSolved(RuntimeError):
    pass


class DegenerateBeta(ValueError):
    pass


class StreamBasis:
    """Synthesis matrices of a uniform block representation over ``P`` blocks.

    Attributes
    ----------
    breve : (P N, nb) array
        Columns of the interval hanging over the left edge of the window.
    tilde : (P N, P N) array
        Columns of the ``P`` unknown coefficient blocks.
    block_basis : (rows, N) array
        One coefficient block's atoms over their full support.
    block_offset : int
        Support start relative to the first sample of the block.
    """

    def __init__(self, kind="lot", N=256, P=5, eta=None):
        self.kind, self.N, self.P = kind, int(N), int(P)
        if kind == "lot":
            eta = N // 2 if eta is None else eta
            if not 0 <= eta <= N // 2:
                raise ValueError("eta must lie in [0, N/2]")
            self.eta = eta
            # split points at mid-block: interval p spans blocks p and p+1
            part = LotPartition.uniform(N, P + 1, eta=eta, offset=-N + N // 2)
            act = active_synthesis_matrix(part, 0, P * N)
            self.breve, self.tilde = act.breve, act.tilde
            self.block_basis = part.basis(1)
            self.block_offset = part.support(1)[0]
            self.partition_offset = N // 2
        elif kind == "dct":
            self.eta = 0
            D = dct_matrix(N)
            self.breve = np.zeros((P * N, 0))
            self.tilde = np.kron(np.eye(P), D.T)
            self.block_basis = np.array(D.T)
            self.block_offset = 0
        else:
            raise ValueError(f"unknown representation {kind!r}")
        self.nb = self.breve.shape[1]
        self._bands = []
        for j in range(P):
            nz = np.flatnonzero(np.any(self.tilde[j * N:(j + 1) * N] != 0, axis=0))
            self._bands.append((int(nz.min()), int(nz.max()) + 1))

    @property
    def n_coeffs(self):
        return self.tilde.shape[1]

    def system_matrix(self, Phi_blocks):
        """``Phi_bar @ tilde`` exploiting the banded structure."""
        N, P = self.N, self.P
        M = Phi_blocks[0].shape[0]
        A = np.zeros((P * M, self.n_coeffs))
        for j in range(P):
            c0, c1 = self._bands[j]
            A[j * M:(j + 1) * M, c0:c1] = Phi_blocks[j] @ self.tilde[j * N:(j + 1) * N, c0:c1]
        return A


@dataclass
class StreamingWindow:
    basis: StreamBasis
    Phi_blocks: list
    y_blocks: np.ndarray          # (P, M)
    committed: np.ndarray         # coefficients of the breve interval
    y_tilde: np.ndarray
    A: SystemMatrix
    alpha_hat: np.ndarray
    weights: np.ndarray | None = None
    t: int = 0
    alpha: np.ndarray | None = None

    @property
    def M(self):
        return self.Phi_blocks[0].shape[0]

    @property
    def y_bar(self):
        return self.y_blocks.reshape(-1)


def _phi_breve(basis, Phi_blocks, committed):
    """``Phi_bar @ breve @ committed`` (only the first block rows can be non-zero)."""
    N = basis.N
    M = Phi_blocks[0].shape[0]
    out = np.zeros(basis.P * M)
    if basis.nb == 0 or not np.any(committed):
        return out
    x = basis.breve @ committed
    for j in range(basis.P):
        seg = x[j * N:(j + 1) * N]
        if np.any(seg):
            out[j * M:(j + 1) * M] = Phi_blocks[j] @ seg
    return out


def build_window(basis, Phi_blocks, y_blocks, committed=None, t=0, alpha_hat=None):
    Phi_blocks = [np.asarray(P_, dtype=float) for P_ in Phi_blocks]
    if len(Phi_blocks) != basis.P:
        raise ValueError(f"need {basis.P} measurement blocks")
    y_blocks = np.asarray(y_blocks, dtype=float).reshape(basis.P, -1)
    committed = np.zeros(basis.nb) if committed is None else np.asarray(committed, dtype=float)
    y_tilde = y_blocks.reshape(-1) - _phi_breve(basis, Phi_blocks, committed)
    A = SystemMatrix(basis.system_matrix(Phi_blocks))
    if alpha_hat is None:
        alpha_hat = np.zeros(basis.n_coeffs)
    return StreamingWindow(basis, Phi_blocks, y_blocks, committed, y_tilde, A,
                           np.asarray(alpha_hat, dtype=float), t=t)


def advance_window(window, new_measurements):
    """Drop the oldest block, append ``(y_new, Phi_new)``, commit the outgoing coefficients.

    The outgoing coefficient block becomes the committed tail and its
    expected contribution is removed from the measurements.  The warm start
    is shifted; its new block is zero until :func:`predict_warm_start`.
    """
    if window.alpha is None:
        raise NotSolved("solve the window before advancing it")
    y_new, Phi_new = new_measurements
    b = window.basis
    N = b.N
    committed = window.alpha[:N].copy() if b.nb else np.zeros(0)
    Phi_blocks = window.Phi_blocks[1:] + [np.asarray(Phi_new, dtype=float)]
    y_blocks = np.vstack([window.y_blocks[1:], np.asarray(y_new, dtype=float)[None, :]])
    alpha_hat = np.concatenate([window.alpha[N:], np.zeros(N)])
    return build_window(b, Phi_blocks, y_blocks, committed, window.t + 1, alpha_hat)


def compute_tau(A, y, sigma, n_coeffs):
    """``max(1e-2 ||A^T y||_inf, sigma sqrt(log n))``."""
    aty = float(np.max(np.abs(A.array.T @ y))) if y.size else 0.0
    tau = max(1e-2 * aty, sigma * math.sqrt(math.log(n_coeffs)))
    if tau <= 0:
        tau = np.finfo(float).eps
    return tau


def compute_beta(alpha_hat, M):
    peak = float(np.max(np.abs(alpha_hat))) if alpha_hat.size else 0.0
    if peak == 0.0:
        raise DegenerateBeta("beta is undefined for a zero estimate")
    a = alpha_hat / peak   # beta is scale-free; normalize against underflow
    l1 = float(np.sum(np.abs(a)))
    return M * float(a @ a) / (l1 * l1)


def update_weights(alpha_hat, tau, M, beta=None):
    """``w_i = tau / (beta |alpha_hat_i| + 1)``; uniform ``tau`` when ``alpha_hat = 0``."""
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    if beta is None:
        try:
            beta = compute_beta(alpha_hat, M)
        except DegenerateBeta:
            return np.full(alpha_hat.shape, float(tau))
    return tau / (beta * np.abs(alpha_hat) + 1.0)


def symmetric_extend(x, extra):
    """Append ``extra`` samples mirrored about the end of ``x``."""
    idx = x.shape[0] - 1 - (np.arange(extra) % (2 * x.shape[0]))
    idx = np.where(idx < 0, -idx - 1, idx)
    return np.concatenate([x, x[idx]])


def predict_warm_start(window, x_prev, threshold, rcond=0.1):
    """Fill the new coefficient block of ``window.alpha_hat``.

    ``x_prev`` holds the previous estimate over the previous active interval
    (one block earlier than ``window``).  The estimate is extended
    symmetrically, analysed to pick a candidate support (entries above
    ``threshold``, at most ``M``), the supported coefficients are fitted by
    least squares to the newest measurement block, and small values are
    truncated.
    """
    b = window.basis
    N, P, M = b.N, b.P, window.M
    x_prev = np.asarray(x_prev, dtype=float)
    rows = b.block_basis.shape[0]
    # new block r starts at sample P*N - N of the window = P*N of x_prev
    lo = (P - 1) * N + b.block_offset + N   # relative to x_prev start
    need = lo + rows - x_prev.shape[0]
    ext = symmetric_extend(x_prev, max(need, 0))
    guess = b.block_basis.T @ ext[lo:lo + rows]

    alpha_hat = window.alpha_hat.copy()
    new = slice((P - 1) * N, P * N)
    alpha_hat[new] = 0.0
    cand = np.flatnonzero(np.abs(guess) > threshold)
    if cand.size > M:
        order = np.argsort(-np.abs(guess[cand]), kind="stable")
        cand = np.sort(cand[order[:M]])
    if cand.size:
        Psi_last = b.tilde[(P - 1) * N:]
        Phi = window.Phi_blocks[-1]
        known = Psi_last[:, :(P - 1) * N] @ alpha_hat[:(P - 1) * N]
        resid = window.y_blocks[-1] - Phi @ known
        if b.nb and P == 1:
            resid -= Phi @ (b.breve[(P - 1) * N:] @ window.committed)
        B = Phi @ Psi_last[:, (P - 1) * N + cand]
        # the new interval is seen only through its rising taper, where its
        # atoms span half the dimensions: truncate small singular values
        coef, *_ = np.linalg.lstsq(B, resid, rcond=rcond)
        coef[np.abs(coef) < threshold] = 0.0
        alpha_hat[(P - 1) * N + cand] = coef
    window.alpha_hat = alpha_hat
    return alpha_hat


@dataclass
class SolveMetrics:
    steps: int = 0
    matvecs: float = 0.0
    solves: int = 0
    kkt_residual: float = 0.0
    cold_steps: int | None = None
    fallbacks: int = 0


WARM_SINGULAR_TOL = 1e-6


def independent_support(A, x, singular_tol=WARM_SINGULAR_TOL):
    """Zero the entries of ``x`` whose columns are dependent on larger entries.

    Columns are admitted in order of decreasing ``|x_i|``; a column whose
    Schur complement falls below ``singular_tol`` is dropped.
    """
    x = np.array(x, dtype=float)
    nz = np.flatnonzero(x)
    if nz.size == 0:
        return x
    order = nz[np.argsort(-np.abs(x[nz]), kind="stable")]
    f = GramFactor(singular_tol=singular_tol, capacity=max(16, order.size))
    for j in order:
        try:
            f.grow(A, int(j))
        except SingularGram:
            x[j] = 0.0
    return x


def _solve_once(problem, x0, solver, hopts, prox_tol, z_policy, metrics):
    if solver == "homotopy":
        x0 = independent_support(problem.A, x0)
        warm = compute_u(problem, x0, z_policy)
        try:
            res = homotopy_solve(problem, warm, hopts)
        except (SingularGram, MaxStepsExceeded) as exc:
            # warm path ran into a near-dependent support; restart from zero
            if not np.any(x0):
                raise
            metrics.fallbacks += 1
            wasted = getattr(exc, "step_count", 0)
            metrics.steps += wasted
            spent = warm.matvecs + wasted
            warm = compute_u(problem, np.zeros_like(x0), z_policy)
            res = homotopy_solve(problem, warm, hopts)
            warm.matvecs += spent
        metrics.steps += res.step_count
        metrics.matvecs += warm.matvecs + res.matvec_count
    elif solver == "prox-oracle":
        res = prox_gradient_solve(problem, x0=x0, tol=prox_tol)
        metrics.matvecs += res.matvec_count
    else:
        raise ValueError(f"unknown solver {solver!r}")
    metrics.solves += 1
    metrics.kkt_residual = res.kkt_residual
    return res.x


def solve_weighted(A, y, weights, x0, *, solver="homotopy", hopts=None, prox_tol=1e-9,
                   z_policy="zero", reweight=0, tau=None, M=None):
    """Solve once from ``x0``; optionally follow with ``reweight`` reweighted solves."""
    metrics = SolveMetrics()
    problem = WeightedL1Problem(A, y, weights)
    x = _solve_once(problem, x0, solver, hopts, prox_tol, z_policy, metrics)
    for _ in range(reweight):
        w = update_weights(x, tau, M)
        problem = WeightedL1Problem(A, y, w)
        x = _solve_once(problem, x, solver, hopts, prox_tol, z_policy, metrics)
    return x, problem.w, metrics


def solve_window(window, sigma, *, first=False, solver="homotopy", hopts=None,
                 reweight_iters=5, prox_tol=1e-9, z_policy="zero", M_beta=None,
                 compare_cold=False):
    """Weights from the warm start, then a warm-started weighted l1 solve.

    On the first iteration the warm start is zero and the problem is solved
    as a reweighted l1 sequence starting from uniform weights ``tau``.
    """
    A, y = window.A, window.y_tilde
    n = window.basis.n_coeffs
    M_beta = A.shape[0] if M_beta is None else M_beta
    tau = compute_tau(A, y, sigma, n)
    if first:
        w0 = np.full(n, tau)
        x0 = np.zeros(n)
        alpha, w, metrics = solve_weighted(A, y, w0, x0, solver=solver, hopts=hopts,
                                           prox_tol=prox_tol, z_policy=z_policy,
                                           reweight=reweight_iters, tau=tau, M=M_beta)
    else:
        w = update_weights(window.alpha_hat, tau, M_beta)
        alpha, w, metrics = solve_weighted(A, y, w, window.alpha_hat, solver=solver,
                                           hopts=hopts, prox_tol=prox_tol, z_policy=z_policy)
        if compare_cold and solver == "homotopy":
            problem = WeightedL1Problem(A, y, w)
            cold = homotopy_solve(problem, compute_u(problem, np.zeros(n)), hopts)
            metrics.cold_steps = cold.step_count
    window.weights = w
    window.alpha = alpha
    return alpha, metrics


def commit_output(window, all_blocks=False):
    """Samples of the oldest block (or of every block) from the solved window.

    Returns ``(samples, coefficients)`` where ``coefficients`` are the ones
    leaving the active interval.
    """
    if window.alpha is None:
        raise NotSolved("solve the window before committing")
    b = window.basis
    N = b.N
    if all_blocks:
        x = b.tilde @ window.alpha
        if b.nb:
            x += b.breve @ window.committed
        return x, window.alpha.copy()
    c0, c1 = b._bands[0]
    x = b.tilde[:N, c0:c1] @ window.alpha[c0:c1]
    if b.nb:
        x += b.breve[:N] @ window.committed
    return x, window.alpha[:N].copy()


def window_estimate(window):
    """Current signal estimate over the whole active interval."""
    b = window.basis
    x = b.tilde @ window.alpha
    if b.nb:
        x += b.breve @ window.committed
    return x


@dataclass
class LotStreamConfig:
    N: int = 256
    P: int = 5
    representation: str = "lot"     # "lot" | "dct"
    eta: int | None = None
    solver: str = "homotopy"         # "homotopy" | "prox-oracle"
    reweight_iters: int = 5
    z_policy: str = "zero"
    prox_tol: float = 1e-9
    factor_mode: str = "cholesky"
    M_beta: int | None = None        # M in the beta formula; default rows of A
    compare_cold: bool = False
    predictor: str = "extension-ls"  # "extension-ls" | "zero"
    ls_rcond: float = 0.1


@dataclass
class IterationRecord:
    t: int
    committed_range: tuple
    committed_coefficients: list
    ser_so_far: float | None
    steps: int
    matvecs: float
    wall_ms: float
    cold_steps: int | None = None
    kkt_residual: float = 0.0
    tag: str = ""

    def to_json(self):
        d = {
            "t": self.t,
            "committed_range": list(self.committed_range),
            "committed_coefficients": self.committed_coefficients,
            "ser_so_far": self.ser_so_far,
            "steps": self.steps,
            "matvecs": self.matvecs,
            "kkt_residual": self.kkt_residual,
        }
        if self.cold_steps is not None:
            d["cold_steps"] = self.cold_steps
        if self.tag:
            d["baseline"] = self.tag
        return json.dumps(d)


@dataclass
class StreamResult:
    x_est: np.ndarray
    records: list = field(default_factory=list)
    coefficients: np.ndarray | None = None

    @property
    def steps(self):
        return sum(r.steps for r in self.records)

    @property
    def matvecs(self):
        return sum(r.matvecs for r in self.records)

    @property
    def wall_ms(self):
        return sum(r.wall_ms for r in self.records)

    def ser(self, x_true):
        return ser_db(x_true, self.x_est)


class LotStreamer:
    """Run the sliding-window recovery over a whole measurement stream."""

    def __init__(self, config=None):
        self.config = config or LotStreamConfig()
        c = self.config
        self.basis = StreamBasis(c.representation, c.N, c.P, c.eta)
        self.hopts = HomotopyOptions(factor_mode=c.factor_mode)

    def run(self, meas, x_true=None, on_record=None):
        c, b = self.config, self.basis
        N, P, T = c.N, c.P, meas.T
        if T < P:
            raise ValueError("stream is shorter than the active interval")
        x_est = np.zeros(T * N)
        coeffs = np.zeros(T * N)
        result = StreamResult(x_est=x_est, coefficients=coeffs)
        window = build_window(b, list(meas.Phi[:P]), meas.y[:P])
        x_prev = None
        t = 0
        while True:
            tic = time.perf_counter()
            if t > 0:
                tau = compute_tau(window.A, window.y_tilde, meas.sigma, b.n_coeffs)
                if c.predictor == "extension-ls":
                    predict_warm_start(window, x_prev, tau / math.sqrt(math.log(b.n_coeffs)),
                                       rcond=c.ls_rcond)
                elif c.predictor != "zero":
                    raise ValueError(f"unknown predictor {c.predictor!r}")
            _, m = solve_window(window, meas.sigma, first=(t == 0), solver=c.solver,
                                hopts=self.hopts, reweight_iters=c.reweight_iters,
                                prox_tol=c.prox_tol, z_policy=c.z_policy,
                                M_beta=c.M_beta, compare_cold=c.compare_cold)
            last = t + P == T
            samples, alpha_out = commit_output(window, all_blocks=last)
            lo = t * N
            x_est[lo:lo + samples.size] = samples
            coeffs[lo:lo + alpha_out.size] = alpha_out
            wall = 1e3 * (time.perf_counter() - tic)
            hi = lo + samples.size
            ser = None
            if x_true is not None and np.any(x_true[:hi]):
                ser = ser_db(x_true[:hi], x_est[:hi])
            rec = IterationRecord(
                t=t, committed_range=(lo, hi),
                committed_coefficients=[float(v) for v in alpha_out[:N]],
                ser_so_far=ser, steps=m.steps, matvecs=m.matvecs, wall_ms=wall,
                cold_steps=m.cold_steps, kkt_residual=m.kkt_residual,
            )
            result.records.append(rec)
            if on_record is not None:
                on_record(rec)
            if last:
                break
            x_prev = window_estimate(window)
            window = advance_window(window, (meas.y[t + P], meas.Phi[t + P]))
            t += 1
        return result
