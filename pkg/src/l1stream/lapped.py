"""Lapped orthogonal transform on a partition into overlapping intervals.

Interval ``p`` has split points ``a_p < a_{p+1}`` (half integers) and
transition half-widths ``eta_p``, ``eta_{p+1}``; its support is the open
range ``(a_p - eta_p, a_{p+1} + eta_{p+1})``.  Atoms are windowed cosine-IV
functions

    psi_{p,k}[n] = g_p[n] sqrt(2 / l_p) cos(pi (k + 1/2) (n - a_p) / l_p),

with a sine taper ``g_p`` whose squares sum to one across each overlap.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

__all__ = [
    "AlignmentError",
    "CoverageError",
    "LotPartition",
    "LotCoefficients",
    "ActiveSynthesis",
    "taper",
    "lot_basis_vector",
    "lot_analysis",
    "lot_synthesis",
    "active_synthesis_matrix",
]


class AlignmentError(ValueError):
    pass


class CoverageError(ValueError):
    pass


def taper(t):
    """Rising profile: 0 for t <= -1, 1 for t >= 1, ``taper(t)^2 + taper(-t)^2 = 1``."""
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    return np.sin(0.25 * np.pi * (1.0 + t))


@dataclass(frozen=True)
class LotPartition:
    a: tuple
    eta: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        eta = tuple(float(v) for v in self.eta)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "eta", eta)
        if len(a) < 2 or len(eta) != len(a):
            raise ValueError("need at least two split points and one eta per split point")
        for v in a:
            if (v + 0.5) != math.floor(v + 0.5):
                raise ValueError(f"split point {v} is not a half integer")
        if any(e < 0 for e in eta):
            raise ValueError("transition widths must be non-negative")
        for p in range(len(a) - 1):
            if a[p + 1] - a[p] < eta[p] + eta[p + 1]:
                raise ValueError(f"interval {p} is too short for its transitions")

    @classmethod
    def uniform(cls, block, count, eta=None, offset=0, open_ends=True):
        """``count`` intervals of length ``block`` with ``a_p = offset + p*block - 1/2``.

        ``open_ends=False`` makes the outer transitions rectangular so the
        atoms form an orthonormal basis of exactly ``[a_0, a_count]``.
        """
        eta = block / 2 if eta is None else eta
        a = [offset + p * block - 0.5 for p in range(count + 1)]
        etas = [float(eta)] * (count + 1)
        if not open_ends:
            etas[0] = etas[-1] = 0.0
        return cls(tuple(a), tuple(etas))

    @property
    def count(self):
        return len(self.a) - 1

    @property
    def lengths(self):
        return [int(round(self.a[p + 1] - self.a[p])) for p in range(self.count)]

    @property
    def offsets(self):
        """Start of each interval's block inside the flat coefficient vector."""
        return np.concatenate([[0], np.cumsum(self.lengths)]).astype(int)

    @property
    def size(self):
        return int(sum(self.lengths))

    def support(self, p):
        """Integer sample range ``[lo, hi)`` where atoms of interval ``p`` live."""
        lo = math.floor(self.a[p] - self.eta[p]) + 1
        hi = math.ceil(self.a[p + 1] + self.eta[p + 1])
        return lo, hi

    @property
    def domain(self):
        return self.support(0)[0], self.support(self.count - 1)[1]

    def window(self, p):
        lo, hi = self.support(p)
        n = np.arange(lo, hi, dtype=float)
        return _window(n - self.a[p], self.a[p + 1] - self.a[p], self.eta[p], self.eta[p + 1])

    def basis(self, p):
        """Synthesis block ``Psi_p``: rows are samples ``support(p)``, columns ``k``."""
        lo, hi = self.support(p)
        frac = (lo - self.a[p])
        return _basis(frac, hi - lo, self.lengths[p], self.eta[p], self.eta[p + 1])


def _window(rel, length, eta_l, eta_r):
    g = np.ones_like(rel)
    if eta_l > 0:
        g *= taper(rel / eta_l)
    else:
        g *= rel > 0
    if eta_r > 0:
        g *= taper((length - rel) / eta_r)
    else:
        g *= rel < length
    return g


@lru_cache(maxsize=64)
def _basis(frac, rows, length, eta_l, eta_r):
    rel = frac + np.arange(rows, dtype=float)
    g = _window(rel, length, eta_l, eta_r)
    k = np.arange(length, dtype=float)
    B = g[:, None] * math.sqrt(2.0 / length) * np.cos(np.pi * np.outer(rel, k + 0.5) / length)
    B.setflags(write=False)
    return B


@dataclass
class LotCoefficients:
    partition: LotPartition
    flat: np.ndarray

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=float)
        if self.flat.shape != (self.partition.size,):
            raise ValueError("coefficient vector does not match the partition")

    def block(self, p):
        o = self.partition.offsets
        return self.flat[o[p]:o[p + 1]]

    @property
    def blocks(self):
        return [self.block(p) for p in range(self.partition.count)]


def lot_basis_vector(partition, p, k):
    """Atom ``psi_{p,k}`` sampled over ``partition.domain``."""
    if not 0 <= p < partition.count:
        raise IndexError(f"interval {p} out of range")
    if not 0 <= k < partition.lengths[p]:
        raise IndexError(f"frequency {k} out of range for interval {p}")
    lo0, hi0 = partition.domain
    v = np.zeros(hi0 - lo0)
    lo, hi = partition.support(p)
    v[lo - lo0:hi - lo0] = partition.basis(p)[:, k]
    return v


def _extend(x, origin, lo, hi, extension):
    n0, n1 = origin, origin + x.shape[0]
    if lo >= n0 and hi <= n1:
        return x[lo - origin:hi - origin]
    if extension is None:
        raise CoverageError(
            f"samples [{lo}, {hi}) needed but signal covers [{n0}, {n1})")
    if extension == "zero":
        out = np.zeros(hi - lo)
        a, b = max(lo, n0), min(hi, n1)
        if a < b:
            out[a - lo:b - lo] = x[a - origin:b - origin]
        return out
    if extension == "symmetric":
        idx = np.arange(lo, hi) - origin
        L = x.shape[0]
        period = 2 * L
        idx = np.mod(idx, period)
        idx = np.where(idx >= L, period - 1 - idx, idx)
        return x[idx]
    raise ValueError(f"unknown extension {extension!r}")


def lot_analysis(x, partition, origin=0, extension=None):
    """Coefficients ``<x, psi_{p,k}>`` for every interval of the partition.

    ``x[i]`` is the sample at time ``origin + i``.  Intervals reaching past
    the samples need ``extension`` in {"zero", "symmetric"}.
    """
    x = np.asarray(x, dtype=float)
    flat = np.empty(partition.size)
    o = partition.offsets
    for p in range(partition.count):
        lo, hi = partition.support(p)
        seg = _extend(x, origin, lo, hi, extension)
        flat[o[p]:o[p + 1]] = partition.basis(p).T @ seg
    return LotCoefficients(partition, flat)


def lot_synthesis(coeffs, partition=None, origin=None, length=None):
    """Overlap-add of the per-interval reconstructions ``Psi_p alpha_p``.

    Returns samples ``[origin, origin + length)``; defaults to the domain.
    """
    if isinstance(coeffs, LotCoefficients):
        partition = coeffs.partition
        flat = coeffs.flat
    else:
        flat = np.asarray(coeffs, dtype=float)
    lo0, hi0 = partition.domain
    if origin is None:
        origin = lo0
    if length is None:
        length = hi0 - origin
    out = np.zeros(length)
    o = partition.offsets
    for p in range(partition.count):
        lo, hi = partition.support(p)
        a, b = max(lo, origin), min(hi, origin + length)
        if a >= b:
            continue
        seg = partition.basis(p) @ flat[o[p]:o[p + 1]]
        out[a - origin:b - origin] += seg[a - lo:b - lo]
    return out


@dataclass
class ActiveSynthesis:
    """Synthesis columns restricted to an active interval.

    ``breve`` holds the columns of the one interval hanging over the left
    edge (its coefficients are committed); ``tilde`` holds every other
    interval that meets the active interval.
    """

    start: int
    length: int
    breve: np.ndarray
    tilde: np.ndarray
    breve_interval: int | None
    tilde_intervals: list
    columns: list          # (p, k) for each column of tilde

    @property
    def full(self):
        return np.hstack([self.breve, self.tilde])


def active_synthesis_matrix(partition, start, length):
    """Split the active synthesis matrix into committed and unknown parts."""
    stop = start + length
    lo0, hi0 = partition.domain
    if start < lo0 or stop > hi0:
        raise AlignmentError(f"active interval [{start}, {stop}) leaves the partition domain")
    touching = [p for p in range(partition.count)
                if partition.support(p)[0] < stop and partition.support(p)[1] > start]
    left = [p for p in touching if partition.support(p)[0] < start]
    right = [p for p in touching if partition.support(p)[1] > stop]
    if len(left) > 1:
        raise AlignmentError("more than one interval crosses the left edge")
    if len(right) > 1:
        raise AlignmentError("more than one interval crosses the right edge")
    if left and right and left == right:
        raise AlignmentError("a single interval spans the whole active interval")
    breve_p = left[0] if left else None
    inner = [p for p in touching if p != breve_p]

    def block(p):
        lo, hi = partition.support(p)
        B = np.zeros((length, partition.lengths[p]))
        a, b = max(lo, start), min(hi, stop)
        B[a - start:b - start] = partition.basis(p)[a - lo:b - lo]
        return B

    breve = block(breve_p) if breve_p is not None else np.zeros((length, 0))
    tilde = np.hstack([block(p) for p in inner]) if inner else np.zeros((length, 0))
    columns = [(p, k) for p in inner for k in range(partition.lengths[p])]
    return ActiveSynthesis(start, length, breve, tilde, breve_p, inner, columns)
