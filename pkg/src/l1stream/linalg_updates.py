"""Incremental factorizations of the active-set Gram matrix ``A_G^T A_G``.

A :class:`GramFactor` tracks either the Cholesky factor or the explicit
inverse of the Gram matrix while single columns enter and leave the active
set.  Both modes keep a private copy of the active columns so that the
cross products needed on insertion cost one ``M x S`` product.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "SingularGram",
    "IndexNotActive",
    "DimensionMismatch",
    "GramFactor",
    "grow_factor",
    "shrink_factor",
    "solve_gram",
]

CHOLESKY = "cholesky"
INVERSE = "inverse"


class SingularGram(np.linalg.LinAlgError):
    """Incoming column is numerically dependent on the active set."""


class IndexNotActive(KeyError):
    pass


class DimensionMismatch(ValueError):
    pass


def _column(A, j):
    if hasattr(A, "column"):
        return np.asarray(A.column(j), dtype=float)
    return np.asarray(A[:, j], dtype=float)


class GramFactor:
    """Factorization of ``A_G^T A_G`` supporting column add/remove.

    Parameters
    ----------
    mode : {"cholesky", "inverse"}
        ``cholesky`` stores a lower-triangular ``L`` with ``L L^T = G``;
        ``inverse`` stores ``G^{-1}`` and updates it with the matrix
        inversion lemma.
    singular_tol : float
        Relative guard on the Schur complement of an incoming column,
        ``s <= singular_tol * ||a||^2`` raises :class:`SingularGram`.
    """

    def __init__(self, mode=CHOLESKY, singular_tol=1e-12, capacity=16):
        if mode not in (CHOLESKY, INVERSE):
            raise ValueError(f"unknown factor mode {mode!r}")
        self.mode = mode
        self.singular_tol = float(singular_tol)
        self._cap = max(int(capacity), 1)
        self._buf = np.zeros((self._cap, self._cap), order="F")
        self._cols = None  # M x cap, F-ordered copy of active columns
        self._index = []
        self._pos = {}

    # -- bookkeeping -----------------------------------------------------
    @property
    def size(self):
        return len(self._index)

    def __len__(self):
        return len(self._index)

    @property
    def column_index_map(self):
        return list(self._index)

    @property
    def data(self):
        """Copy of the stored ``S x S`` matrix (``L`` or ``G^{-1}``)."""
        S = self.size
        return np.array(self._buf[:S, :S])

    def position(self, j):
        try:
            return self._pos[j]
        except KeyError:
            raise IndexNotActive(j) from None

    def __contains__(self, j):
        return j in self._pos

    def copy(self):
        new = GramFactor(self.mode, self.singular_tol, self._cap)
        new._buf = self._buf.copy(order="F")
        new._cols = None if self._cols is None else self._cols.copy(order="F")
        new._index = list(self._index)
        new._pos = dict(self._pos)
        return new

    def _reserve(self, m, need):
        if self._cols is None:
            self._cols = np.zeros((m, self._cap), order="F")
        if need <= self._cap:
            return
        cap = max(need, 2 * self._cap)
        buf = np.zeros((cap, cap), order="F")
        S = self.size
        buf[:S, :S] = self._buf[:S, :S]
        cols = np.zeros((self._cols.shape[0], cap), order="F")
        cols[:, :S] = self._cols[:, :S]
        self._buf, self._cols, self._cap = buf, cols, cap

    @classmethod
    def from_columns(cls, A, indices, mode=CHOLESKY, singular_tol=1e-12):
        """Build a factor for the given columns of ``A`` from scratch."""
        indices = [int(j) for j in indices]
        f = cls(mode, singular_tol, capacity=max(16, 2 * len(indices)))
        if not indices:
            return f
        if len(set(indices)) != len(indices):
            raise ValueError("duplicate column indices")
        cols = np.column_stack([_column(A, j) for j in indices])
        S = len(indices)
        f._reserve(cols.shape[0], S)
        G = cols.T @ cols
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            raise SingularGram("warm-start Gram matrix is not positive definite") from None
        d = np.diag(L) ** 2
        if np.any(d <= singular_tol * np.maximum(np.diag(G), np.finfo(float).tiny)):
            raise SingularGram("warm-start Gram matrix is numerically singular")
        if mode == CHOLESKY:
            f._buf[:S, :S] = L
        else:
            Linv = solve_triangular(L, np.eye(S), lower=True)
            f._buf[:S, :S] = Linv.T @ Linv
        f._cols[:, :S] = cols
        f._index = indices
        f._pos = {j: k for k, j in enumerate(indices)}
        return f

    # -- updates ---------------------------------------------------------
    def grow(self, A, j):
        """Append column ``j`` of ``A`` to the active set (in place)."""
        j = int(j)
        if j in self._pos:
            raise ValueError(f"column {j} already active")
        a = _column(A, j)
        S = self.size
        self._reserve(a.shape[0], S + 1)
        aa = float(a @ a)
        if S == 0:
            if aa <= 0.0:
                raise SingularGram(f"column {j} is zero")
            if self.mode == CHOLESKY:
                self._buf[0, 0] = math.sqrt(aa)
            else:
                self._buf[0, 0] = 1.0 / aa
        else:
            v = self._cols[:, :S].T @ a
            if self.mode == CHOLESKY:
                L = self._buf[:S, :S]
                c = solve_triangular(L, v, lower=True, check_finite=False)
                schur = aa - float(c @ c)
                if schur <= self.singular_tol * aa:
                    raise SingularGram(f"column {j}: Schur complement {schur:.3e}")
                self._buf[S, :S] = c
                self._buf[:S, S] = 0.0
                self._buf[S, S] = math.sqrt(schur)
            else:
                Ginv = self._buf[:S, :S]
                b = Ginv @ v
                schur = aa - float(v @ b)
                if schur <= self.singular_tol * aa:
                    raise SingularGram(f"column {j}: Schur complement {schur:.3e}")
                Ginv += np.outer(b, b) / schur
                self._buf[S, :S] = -b / schur
                self._buf[:S, S] = -b / schur
                self._buf[S, S] = 1.0 / schur
        self._cols[:, S] = a
        self._index.append(j)
        self._pos[j] = S
        return self

    def shrink(self, j):
        """Remove column ``j`` from the active set (in place)."""
        k = self.position(int(j))
        S = self.size
        if self.mode == CHOLESKY:
            buf = self._buf
            if k < S - 1:
                x = np.array(buf[k + 1:S, k])
                # rows below k move up one; trailing block absorbs x x^T
                buf[k:S - 1, :k] = buf[k + 1:S, :k]
                buf[k:S - 1, k:S - 1] = buf[k + 1:S, k + 1:S]
                _chol_rank1_update(buf, k, S - 1, x)
            buf[S - 1, :S] = 0.0
            buf[:S, S - 1] = 0.0
        else:
            Ginv = self._buf[:S, :S]
            keep = np.r_[0:k, k + 1:S]
            b = Ginv[keep, k]
            c = Ginv[k, k]
            reduced = Ginv[np.ix_(keep, keep)] - np.outer(b, b) / c
            self._buf[:S, :S] = 0.0
            self._buf[:S - 1, :S - 1] = reduced
        self._cols[:, k:S - 1] = self._cols[:, k + 1:S]
        del self._index[k]
        del self._pos[j]
        for i in range(k, S - 1):
            self._pos[self._index[i]] = i
        return self

    # -- queries ---------------------------------------------------------
    def solve(self, rhs):
        """Return ``d`` with ``(A_G^T A_G) d = rhs``."""
        rhs = np.asarray(rhs, dtype=float)
        S = self.size
        if rhs.shape != (S,):
            raise DimensionMismatch(f"rhs has shape {rhs.shape}, factor size is {S}")
        if S == 0:
            return np.zeros(0)
        if self.mode == CHOLESKY:
            L = self._buf[:S, :S]
            w = solve_triangular(L, rhs, lower=True, check_finite=False)
            return solve_triangular(L, w, lower=True, trans="T", check_finite=False)
        return self._buf[:S, :S] @ rhs

    def gram(self):
        S = self.size
        C = self._cols[:, :S] if S else np.zeros((0, 0))
        return C.T @ C

    def gram_inverse(self):
        """Dense ``(A_G^T A_G)^{-1}`` implied by the stored factor."""
        S = self.size
        if self.mode == INVERSE:
            return self.data
        if S == 0:
            return np.zeros((0, 0))
        Linv = solve_triangular(self._buf[:S, :S], np.eye(S), lower=True)
        return Linv.T @ Linv


def _chol_rank1_update(buf, start, stop, x):
    """In place ``L L^T + x x^T`` for the block ``buf[start:stop, start:stop]``."""
    n = stop - start
    for i in range(n):
        k = start + i
        lkk = buf[k, k]
        r = math.hypot(lkk, x[i])
        c = r / lkk
        s = x[i] / lkk
        buf[k, k] = r
        if i + 1 < n:
            col = buf[k + 1:stop, k]
            col += s * x[i + 1:]
            col /= c
            x[i + 1:] = c * x[i + 1:] - s * col


def grow_factor(factor, A, new_index):
    """Add ``new_index`` to ``factor``; the factor is updated in place and returned."""
    return factor.grow(A, new_index)


def shrink_factor(factor, removed_index):
    """Remove ``removed_index`` from ``factor`` in place and return it."""
    return factor.shrink(removed_index)


def solve_gram(factor, rhs):
    return factor.solve(rhs)
