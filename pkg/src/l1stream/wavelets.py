"""Block orthogonal transforms: periodized Daubechies DWT and orthonormal DCT-II."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

__all__ = [
    "LengthMismatch",
    "WaveletSpec",
    "DAUBECHIES",
    "dwt_block",
    "idwt_block",
    "dwt_matrix",
    "dct_block",
    "idct_block",
    "dct_matrix",
]


class LengthMismatch(ValueError):
    pass


# Minimum-phase Daubechies low-pass filters, obtained by spectral
# factorization of the Daubechies polynomial and normalized to sum sqrt(2).
# Keyed by number of vanishing moments (taps = 2 * key).
DAUBECHIES = {
    4: np.array([
        0.23037781330889645,
        0.7148465705529156,
        0.6308807679298589,
        -0.027983769416859483,
        -0.187034811719093,
        0.030841381835560646,
        0.03288301166688516,
        -0.010597401785069016,
    ]),
    8: np.array([
        0.054415842243103967,
        0.3128715909142998,
        0.6756307362972892,
        0.5853546836542062,
        -0.015829105256348078,
        -0.2840155429615466,
        0.00047248457391295336,
        0.12874742662047875,
        -0.017369301001807808,
        -0.044088253930794616,
        0.013981027917398263,
        0.008746094047405745,
        -0.00487035299345156,
        -0.00039174037337694824,
        0.0006754494064505685,
        -0.00011747678412476935,
    ]),
}


@dataclass(frozen=True)
class WaveletSpec:
    """Periodized orthogonal wavelet transform on blocks of ``block_length``.

    ``vanishing_moments=8`` selects the 16-tap Daubechies filter; 4 selects
    the 8-tap one.  Coefficients are ordered coarse to fine:
    ``[approx_J, detail_J, ..., detail_1]``.
    """

    vanishing_moments: int = 8
    levels: int = 5
    block_length: int = 256

    def __post_init__(self):
        if self.vanishing_moments not in DAUBECHIES:
            raise ValueError(f"no Daubechies filter with {self.vanishing_moments} vanishing moments")
        if self.block_length % (1 << self.levels):
            raise ValueError("block_length must be divisible by 2**levels")

    @property
    def lowpass(self):
        return DAUBECHIES[self.vanishing_moments]

    @property
    def highpass(self):
        h = self.lowpass
        return ((-1.0) ** np.arange(h.size)) * h[::-1]


def _analysis_level(h, g, n):
    """``n x n`` orthogonal matrix: first half low-pass, second half high-pass."""
    T = np.zeros((n, n))
    half = n // 2
    rows = np.arange(half)[:, None]
    cols = (2 * rows + np.arange(h.size)[None, :]) % n
    for k in range(h.size):
        np.add.at(T, (rows[:, 0], cols[:, k]), h[k])
        np.add.at(T, (rows[:, 0] + half, cols[:, k]), g[k])
    return T


@lru_cache(maxsize=16)
def _dwt_matrix_cached(spec):
    N = spec.block_length
    h, g = spec.lowpass, spec.highpass
    W = np.eye(N)
    n = N
    for _ in range(spec.levels):
        step = np.eye(N)
        step[:n, :n] = _analysis_level(h, g, n)
        W = step @ W
        n //= 2
    W.setflags(write=False)
    return W


def dwt_matrix(spec=WaveletSpec()):
    """Dense analysis matrix; the synthesis matrix is its transpose."""
    return _dwt_matrix_cached(spec)


def _check(x, N):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != N:
        raise LengthMismatch(f"expected length {N}, got {x.shape[0]}")
    return x


def dwt_block(x, spec=WaveletSpec()):
    x = _check(x, spec.block_length)
    return dwt_matrix(spec) @ x


def idwt_block(coeffs, spec=WaveletSpec()):
    c = _check(coeffs, spec.block_length)
    return dwt_matrix(spec).T @ c


def dct_block(x, N=None):
    x = np.asarray(x, dtype=float)
    if N is not None:
        _check(x, N)
    return scipy.fft.dct(x, type=2, norm="ortho", axis=0)


def idct_block(coeffs, N=None):
    c = np.asarray(coeffs, dtype=float)
    if N is not None:
        _check(c, N)
    return scipy.fft.idct(c, type=2, norm="ortho", axis=0)


@lru_cache(maxsize=16)
def _dct_matrix(N):
    D = scipy.fft.dct(np.eye(N), type=2, norm="ortho", axis=0)
    D.setflags(write=False)
    return D


def dct_matrix(N):
    """Analysis matrix ``D`` with ``dct_block(x) == D @ x``."""
    return _dct_matrix(int(N))
