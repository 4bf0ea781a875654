"""Sliding-window recovery of a time-varying signal under a linear dynamic model.

Each block ``x_t`` (length ``N``) is measured as ``y_t = Phi_t x_t + e_t`` and
evolves as ``x_{t+1} = F x_t + f_t``.  Over ``P`` consecutive blocks the
measurement equations are stacked with the prediction equations

    q_bar = F_bar x_bar + f_bar,    F_bar = [[-I, 0, 0], [F, -I, 0], [0, F, -I]],
    q_bar = [-F x_hat_{l-1}; 0; 0],

and the block wavelet coefficients are estimated from

    minimize ||W a||_1 + 1/2 ||Phi_bar Psi a - y||^2 + lam/2 ||F_bar Psi a - q||^2

by running the homotopy solver on ``[Phi_bar Psi; sqrt(lam) F_bar Psi]``.
An l2-regularized (Kalman smoothing) estimator over the same window is
provided as a sparsity-oblivious baseline.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .homotopy import HomotopyOptions, WeightedL1Problem, compute_u, homotopy_solve
from .linalg_updates import DimensionMismatch
from .operators import SystemMatrix
from .signals import ser_db
from .streaming_lot import (
    IterationRecord,
    NotSolved,
    StreamResult,
    compute_tau,
    solve_weighted,
    update_weights,
)
from .wavelets import WaveletSpec, dwt_matrix

__all__ = [
    "SingularCovariance",
    "DynamicsModel",
    "DynamicWindow",
    "DynamicStreamConfig",
    "shift_matrix",
    "build_dynamic_system",
    "predict_dynamic_warm_start",
    "solve_dynamic_window",
    "ls_kalman_smooth",
    "KalmanState",
    "DynamicStreamer",
    "KalmanStreamer",
]


class SingularCovariance(np.linalg.LinAlgError):
    pass


def shift_matrix(N, shift=1):
    """``(F x)[n] = x[(n + shift) mod N]``: left circular shift."""
    return np.roll(np.eye(N), shift, axis=1)


@dataclass
class DynamicsModel:
    N: int = 256
    lam: float = 0.5
    shift: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")

    @property
    def F(self):
        return shift_matrix(self.N, self.shift)

    def apply(self, x):
        return np.roll(np.asarray(x, dtype=float), -self.shift)

    def F_bar(self, P):
        """``P N x P N`` banded prediction matrix."""
        N = self.N
        Fb = -np.eye(P * N)
        F = self.F
        for j in range(1, P):
            Fb[j * N:(j + 1) * N, (j - 1) * N:j * N] = F
        return Fb

    def q_bar(self, x_prev, P):
        q = np.zeros(P * self.N)
        q[:self.N] = -self.apply(x_prev)
        return q


@dataclass
class DynamicWindow:
    Phi_blocks: list
    y_blocks: np.ndarray        # (P, M)
    x_prev: np.ndarray          # committed estimate of the block before the window
    model: DynamicsModel
    Psi: np.ndarray             # block synthesis (N x N)
    A: SystemMatrix             # stacked system
    y: np.ndarray               # stacked measurements
    alpha_hat: np.ndarray
    t: int = 0
    weights: np.ndarray | None = None
    alpha: np.ndarray | None = None

    @property
    def P(self):
        return len(self.Phi_blocks)

    @property
    def N(self):
        return self.Psi.shape[0]

    @property
    def M(self):
        return self.Phi_blocks[0].shape[0]

    def estimate(self):
        """Signal blocks ``(P, N)`` from the current solution."""
        if self.alpha is None:
            raise NotSolved("window has not been solved")
        return (self.Psi @ self.alpha.reshape(self.P, self.N).T).T


def build_dynamic_system(Phi_blocks, y_blocks, x_prev, model, Psi, t=0, alpha_hat=None):
    """Stack ``[Phi_bar Psi; sqrt(lam) F_bar Psi]`` and ``[y; sqrt(lam) q]``.

    With ``lam = 0`` the prediction rows are dropped and the problem is the
    plain weighted l1 program on the measurements.
    """
    Phi_blocks = [np.asarray(B, dtype=float) for B in Phi_blocks]
    P = len(Phi_blocks)
    N = Psi.shape[0]
    M = Phi_blocks[0].shape[0]
    y_blocks = np.asarray(y_blocks, dtype=float)
    if y_blocks.shape != (P, M) or any(B.shape != (M, N) for B in Phi_blocks):
        raise DimensionMismatch("measurement blocks do not agree")
    x_prev = np.asarray(x_prev, dtype=float)
    if x_prev.shape != (N,) or model.N != N:
        raise DimensionMismatch("committed block has the wrong length")
    top = np.zeros((P * M, P * N))
    for j, B in enumerate(Phi_blocks):
        top[j * M:(j + 1) * M, j * N:(j + 1) * N] = B @ Psi
    rows, rhs = [top], [y_blocks.reshape(-1)]
    if model.lam > 0:
        s = math.sqrt(model.lam)
        FPsi = model.F_bar(P) @ np.kron(np.eye(P), Psi)
        rows.append(s * FPsi)
        rhs.append(s * model.q_bar(x_prev, P))
    A = SystemMatrix(np.vstack(rows))
    if alpha_hat is None:
        alpha_hat = np.zeros(P * N)
    return DynamicWindow(Phi_blocks, y_blocks, x_prev, model, Psi, A,
                         np.concatenate(rhs), np.asarray(alpha_hat, dtype=float), t=t)


def predict_dynamic_warm_start(window, x_last, threshold):
    """Shifted previous solution plus ``Psi^T F x_last`` for the new block.

    ``window.alpha_hat`` must already hold the carried-over coefficients;
    its last block is overwritten with the predicted one and every entry
    smaller than ``threshold`` in magnitude is set to zero.
    """
    N = window.N
    a = window.alpha_hat.copy()
    a[-N:] = window.Psi.T @ window.model.apply(x_last)
    a[np.abs(a) < threshold] = 0.0
    window.alpha_hat = a
    return a


def solve_dynamic_window(window, sigma, *, first=False, solver="homotopy", hopts=None,
                         reweight_iters=5, prox_tol=1e-9, z_policy="zero", M_beta=None,
                         compare_cold=False):
    """Weighted l1 solve of the stacked system, warm-started from ``alpha_hat``."""
    A, y = window.A, window.y
    n = A.shape[1]
    M_beta = A.shape[0] if M_beta is None else M_beta
    tau = compute_tau(A, y, sigma, n)
    if first:
        alpha, w, metrics = solve_weighted(A, y, np.full(n, tau), np.zeros(n), solver=solver,
                                           hopts=hopts, prox_tol=prox_tol, z_policy=z_policy,
                                           reweight=reweight_iters, tau=tau, M=M_beta)
    else:
        w = update_weights(window.alpha_hat, tau, M_beta)
        alpha, w, metrics = solve_weighted(A, y, w, window.alpha_hat, solver=solver,
                                           hopts=hopts, prox_tol=prox_tol, z_policy=z_policy)
        if compare_cold and solver == "homotopy":
            problem = WeightedL1Problem(A, y, w)
            metrics.cold_steps = homotopy_solve(problem, compute_u(problem, np.zeros(n)),
                                                hopts).step_count
    window.weights = w
    window.alpha = alpha
    return alpha, metrics


# -- l2 baseline -----------------------------------------------------------

@dataclass
class KalmanState:
    """Prior ``x_{p|p-1}`` and its covariance for the oldest in-window block."""
    mean: np.ndarray
    cov: np.ndarray


def _spd_inverse(C, jitter=1e-10):
    C = 0.5 * (C + C.T)
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        try:
            L = np.linalg.cholesky(C + jitter * np.eye(C.shape[0]))
        except np.linalg.LinAlgError:
            raise SingularCovariance("covariance is not positive definite") from None
    Li = np.linalg.inv(L)
    return Li.T @ Li


def ls_kalman_smooth(Phi_blocks, y_blocks, prior, model):
    """Minimize the l2 objective over a window of ``P`` blocks.

    ``(x_p - m)^T C^{-1} (x_p - m) + lam ||F_tilde x||^2 + ||Phi_bar x - y_bar||^2``
    where ``(m, C)`` is ``prior`` and ``F_tilde`` is the prediction matrix
    without its first block row.  Returns the ``(P, N)`` estimate and the
    Hessian of the objective (up to a factor of two).
    """
    P = len(Phi_blocks)
    N = model.N
    y_blocks = np.asarray(y_blocks, dtype=float)
    H = np.zeros((P * N, P * N))
    b = np.zeros(P * N)
    if prior is not None:
        Ci = _spd_inverse(prior.cov)
        H[:N, :N] += Ci
        b[:N] += Ci @ prior.mean
    for j, B in enumerate(Phi_blocks):
        B = np.asarray(B, dtype=float)
        s = slice(j * N, (j + 1) * N)
        H[s, s] += B.T @ B
        b[s] += B.T @ y_blocks[j]
    if P > 1 and model.lam > 0:
        Ft = model.F_bar(P)[N:]
        H += model.lam * (Ft.T @ Ft)
    H = 0.5 * (H + H.T)
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky(H + 1e-10 * np.trace(H) / H.shape[0] * np.eye(H.shape[0]))
    x = np.linalg.solve(L.T, np.linalg.solve(L, b))
    return x.reshape(P, N), H


def kalman_predict(post_mean, post_cov, model):
    """``(F m, F C F^T + I / lam)``."""
    F = model.F
    q = (1.0 / model.lam) if model.lam > 0 else 1e6
    return KalmanState(model.apply(post_mean), F @ post_cov @ F.T + q * np.eye(model.N))


def kalman_update(prior, Phi, y):
    """Information-form update with unit measurement precision."""
    info = _spd_inverse(prior.cov) + Phi.T @ Phi
    cov = _spd_inverse(info)
    mean = cov @ (_spd_inverse(prior.cov) @ prior.mean + Phi.T @ y)
    return KalmanState(mean, cov)


# -- pipelines ---------------------------------------------------------------

@dataclass
class DynamicStreamConfig:
    N: int = 256
    P: int = 3
    lam: float = 0.5
    vanishing_moments: int = 8
    levels: int = 5
    solver: str = "homotopy"
    reweight_iters: int = 5
    z_policy: str = "zero"
    prox_tol: float = 1e-9
    factor_mode: str = "cholesky"
    M_beta: int | None = None
    compare_cold: bool = False
    prior_var: float = 1e3


class DynamicStreamer:
    """l1 + dynamics (``lam > 0``) or wavelet-only (``lam = 0``) streaming recovery."""

    def __init__(self, config=None):
        self.config = config or DynamicStreamConfig()
        c = self.config
        self.model = DynamicsModel(c.N, c.lam)
        self.Psi = np.array(dwt_matrix(WaveletSpec(c.vanishing_moments, c.levels, c.N)).T)
        self.hopts = HomotopyOptions(factor_mode=c.factor_mode)

    @property
    def tag(self):
        return "l1-dynamic" if self.config.lam > 0 else "dwt-only"

    def run(self, meas, x0, x_true=None, on_record=None):
        """Recover ``meas.T`` blocks; ``x0`` is the seed block preceding the stream."""
        c = self.config
        N, P, T = c.N, c.P, meas.T
        if T < P:
            raise ValueError("stream is shorter than the active interval")
        x_est = np.zeros((T, N))
        result = StreamResult(x_est=x_est.reshape(-1))
        x_prev = np.asarray(x0, dtype=float)
        alpha_hat = None
        x_last = None
        t = 0
        while True:
            tic = time.perf_counter()
            window = build_dynamic_system(list(meas.Phi[t:t + P]), meas.y[t:t + P], x_prev,
                                          self.model, self.Psi, t, alpha_hat)
            n = window.A.shape[1]
            if t > 0:
                tau = compute_tau(window.A, window.y, meas.sigma, n)
                predict_dynamic_warm_start(window, x_last, tau / math.sqrt(math.log(n)))
            _, m = solve_dynamic_window(window, meas.sigma, first=(t == 0), solver=c.solver,
                                        hopts=self.hopts, reweight_iters=c.reweight_iters,
                                        prox_tol=c.prox_tol, z_policy=c.z_policy,
                                        M_beta=c.M_beta, compare_cold=c.compare_cold)
            blocks = window.estimate()
            last = t + P == T
            done = blocks if last else blocks[:1]
            x_est[t:t + done.shape[0]] = done
            wall = 1e3 * (time.perf_counter() - tic)
            rec = _record(t, N, done, window.alpha, x_true, x_est, m, wall, self.tag)
            result.records.append(rec)
            if on_record is not None:
                on_record(rec)
            if last:
                break
            x_prev = blocks[0]
            x_last = blocks[-1]
            alpha_hat = np.concatenate([window.alpha[N:], np.zeros(N)])
            t += 1
        result.x_est = x_est.reshape(-1)
        return result


def _record(t, N, done, alpha, x_true, x_est, m, wall, tag):
    lo, hi = t * N, (t + done.shape[0]) * N
    ser = None
    flat = x_est.reshape(-1)
    if x_true is not None:
        ref = np.asarray(x_true, dtype=float).reshape(-1)[:hi]
        if np.any(ref):
            ser = ser_db(ref, flat[:hi])
    coeffs = [] if alpha is None else [float(v) for v in alpha[:N]]
    return IterationRecord(
        t=t, committed_range=(lo, hi), committed_coefficients=coeffs, ser_so_far=ser,
        steps=getattr(m, "steps", 0), matvecs=getattr(m, "matvecs", 0.0), wall_ms=wall,
        cold_steps=getattr(m, "cold_steps", None), kkt_residual=getattr(m, "kkt_residual", 0.0),
        tag=tag,
    )


class KalmanStreamer:
    """Sliding-window l2 estimate with a Kalman-propagated prior for the oldest block."""

    def __init__(self, config=None):
        self.config = config or DynamicStreamConfig()
        self.model = DynamicsModel(self.config.N, self.config.lam)

    def run(self, meas, x0=None, x_true=None, on_record=None):
        c = self.config
        N, P, T = c.N, c.P, meas.T
        x_est = np.zeros((T, N))
        result = StreamResult(x_est=x_est.reshape(-1))
        # diffuse prior for the first block; x0 only sets its mean
        mean0 = np.zeros(N) if x0 is None else self.model.apply(x0)
        prior = KalmanState(mean0, c.prior_var * np.eye(N))
        t = 0
        while True:
            tic = time.perf_counter()
            blocks, _ = ls_kalman_smooth(list(meas.Phi[t:t + P]), meas.y[t:t + P], prior,
                                         self.model)
            last = t + P == T
            done = blocks if last else blocks[:1]
            x_est[t:t + done.shape[0]] = done
            wall = 1e3 * (time.perf_counter() - tic)
            rec = _record(t, N, done, None, x_true, x_est, None, wall, "ls-kalman")
            result.records.append(rec)
            if on_record is not None:
                on_record(rec)
            if last:
                break
            post = kalman_update(prior, meas.Phi[t], meas.y[t])
            prior = kalman_predict(blocks[0], post.cov, self.model)
            t += 1
        result.x_est = x_est.reshape(-1)
        return result
