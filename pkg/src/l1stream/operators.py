"""Dense system matrix with matrix-vector instrumentation."""
from __future__ import annotations

import numpy as np

__all__ = ["SystemMatrix", "as_system"]


class SystemMatrix:
    """Wrap a dense ``M x N`` array and count products with it.

    ``applies`` and ``adjoints`` count calls of :meth:`matvec` and
    :meth:`rmatvec`.  Cost reports use ``ata_units``: one application of
    ``A`` paired with one of ``A^T`` is one ``A^T A`` unit.
    """

    def __init__(self, array):
        self.array = np.ascontiguousarray(array, dtype=float)
        if self.array.ndim != 2:
            raise ValueError("system matrix must be two-dimensional")
        self.applies = 0
        self.adjoints = 0
        self._colnorms = None

    @property
    def shape(self):
        return self.array.shape

    def matvec(self, x):
        self.applies += 1
        return self.array @ x

    def rmatvec(self, r):
        self.adjoints += 1
        return self.array.T @ r

    def column(self, j):
        return self.array[:, j]

    def columns(self, idx):
        return self.array[:, idx]

    @property
    def ata_units(self):
        return 0.5 * (self.applies + self.adjoints)

    def reset_counts(self):
        self.applies = 0
        self.adjoints = 0

    def __array__(self, dtype=None, copy=None):
        return self.array if dtype is None else self.array.astype(dtype)


def as_system(A):
    return A if isinstance(A, SystemMatrix) else SystemMatrix(A)
