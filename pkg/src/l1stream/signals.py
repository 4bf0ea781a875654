"""Test signals, random streaming measurements, noise, and the SER metric.

Randomness comes from numpy's counter-based ``Philox`` bit generator.  An
integer seed is expanded with ``SeedSequence(seed).spawn(3)`` into three
independent streams, used in this order:

0. signal stream (shifts of the dynamic sequence)
1. measurement-matrix stream
2. noise stream
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "SIGNAL_KINDS",
    "SignalSpec",
    "MeasurementSpec",
    "MeasurementStream",
    "ZeroReference",
    "make_signal",
    "gen_signal",
    "gen_dynamic_sequence",
    "gen_measurements",
    "ser_db",
    "rng_streams",
    "write_stream",
    "read_stream",
    "write_stream_csv",
    "SER_CAP_DB",
]

SIGNAL_KINDS = ("LinChirp", "MishMash", "HeaviSine", "PieceRegular")
SER_CAP_DB = 300.0
MAGIC = b"L1STRM01"


class ZeroReference(ValueError):
    pass


def rng_streams(seed):
    """Three independent Philox generators (signal, matrix, noise) for ``seed``."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.Generator(np.random.Philox(c)) for c in children)


def _bumps(t):
    pos = np.array([.1, .13, .15, .23, .25, .40, .44, .65, .76, .78, .81])
    hgt = np.array([4, 5, 3, 4, 5, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2])
    wth = np.array([.005, .005, .006, .01, .01, .03, .01, .01, .005, .008, .005])
    return np.sum(hgt / (1 + np.abs((t[:, None] - pos) / wth)) ** 4, axis=1)


def _piece_regular(n):
    t = np.arange(1, n + 1) / n
    sig = np.zeros(n)
    n3, n5, n7, n12, n20 = n // 3, n // 5, n // 7, n // 12, n // 20
    s = (np.arange(1, n3 + 1) / max(n3, 1))
    bump = -70.0 * np.exp(-((s - 0.5) ** 2) / (2 * (6 / 40) ** 2))
    sig[:n7] = bump[:n7]
    sig[n7:n5] = 0.5 * bump[n7:n5]
    sig[n5:n3] = bump[n5:n3]
    sig[n3:n // 2] = -15.0 * _bumps(t)[n3:n // 2]
    ramp = -np.exp(4 * np.arange(1, n12 + 1) / max(n12, 1))
    h = n // 2
    sig[h:h + n12] = ramp
    sig[h + n12:h + 2 * n12] = ramp[::-1]
    k0 = h + 2 * n12 + n20
    k1 = h + 2 * n12 + 3 * n20
    sig[k0:k1] = -25.0
    tail = np.exp(4 * np.arange(1, n7 + 1) / max(n7, 1)) - np.exp(4)
    sig[k1:k1 + n7] = tail[:max(0, min(n7, n - k1))]
    sig = sig.mean() - sig
    return sig / 10.0


def make_signal(kind, n):
    """Signal of ``n`` samples in the Wavelab-style closed forms."""
    k = np.arange(n, dtype=float)
    if kind == "LinChirp":
        # instantaneous frequency k / (2 n) cycles per sample
        return np.sin(np.pi * k * k / (2.0 * n))
    if kind == "MishMash":
        lin = np.sin(np.pi * k * k / (2.0 * n))
        quad = np.sin((np.pi / 3.0) * k ** 3 / float(n) ** 2)
        return lin + quad + np.sin(0.6902 * np.pi * k)
    if kind == "HeaviSine":
        t = k / n
        return 4.0 * np.sin(4 * np.pi * t) - np.sign(t - 0.3) - np.sign(0.72 - t)
    if kind == "PieceRegular":
        return _piece_regular(n)
    raise ValueError(f"unknown signal kind {kind!r}")


@dataclass(frozen=True)
class SignalSpec:
    kind: str = "LinChirp"
    length: int = 2 ** 15
    block_length: int = 256
    prefix: bool = True

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if self.length % self.block_length:
            raise ValueError("length must be a multiple of block_length")

    @property
    def total_length(self):
        return self.length + (self.block_length if self.prefix else 0)


def gen_signal(spec, seed=None):
    """Stream of ``spec.total_length`` samples; the first block is zero if ``spec.prefix``.

    The closed forms are deterministic, so ``seed`` is accepted for API
    symmetry only.
    """
    body = make_signal(spec.kind, spec.length)
    if spec.prefix:
        return np.concatenate([np.zeros(spec.block_length), body])
    return body


def circular_shift(x, shift):
    """``out[n] = x[(n + shift) mod N]`` with linear interpolation."""
    N = x.shape[0]
    base = int(np.floor(shift))
    frac = shift - base
    a = np.roll(x, -base)
    if frac == 0.0:
        return a
    return (1.0 - frac) * a + frac * np.roll(x, -(base + 1))


def gen_dynamic_sequence(x0, T=128, seed=0, shifts=None, low=0.5, high=1.5):
    """Blocks ``x_1 .. x_T`` from left-circular shifts ``eps_t ~ U(low, high)``.

    Returns ``(blocks, shifts)`` with ``blocks`` of shape ``(T, N)``.
    """
    x0 = np.asarray(x0, dtype=float)
    if shifts is None:
        rng = rng_streams(seed)[0]
        shifts = rng.uniform(low, high, size=T)
    shifts = np.broadcast_to(np.asarray(shifts, dtype=float), (T,))
    blocks = np.empty((T, x0.shape[0]))
    cur = x0
    for t in range(T):
        cur = circular_shift(cur, shifts[t])
        blocks[t] = cur
    return blocks, np.array(shifts)


@dataclass(frozen=True)
class MeasurementSpec:
    R: int = 4
    block_length: int = 256
    snr_db: float = 35.0

    def __post_init__(self):
        if self.R < 1 or self.block_length % self.R:
            raise ValueError("R must divide the block length")

    @property
    def M(self):
        return self.block_length // self.R


@dataclass
class MeasurementStream:
    Phi: np.ndarray     # (T, M, N)
    y: np.ndarray       # (T, M)
    clean: np.ndarray   # (T, M)
    sigma: float

    @property
    def T(self):
        return self.Phi.shape[0]

    @property
    def M(self):
        return self.Phi.shape[1]

    @property
    def N(self):
        return self.Phi.shape[2]

    def realized_snr_db(self):
        e = self.y - self.clean
        return 10.0 * np.log10(np.sum(self.clean ** 2) / np.sum(e ** 2))


def gen_measurements(x_blocks, mspec, seed=0):
    """``y_t = Phi_t x_t + e_t`` with Rademacher ``Phi_t`` scaled by ``1/sqrt(M)``.

    ``sigma`` is chosen so the mean clean measurement energy per entry over
    the whole stream sits ``snr_db`` above the noise variance.
    """
    x_blocks = np.asarray(x_blocks, dtype=float)
    T, N = x_blocks.shape
    if N != mspec.block_length:
        raise ValueError("block length does not match the measurement spec")
    M = mspec.M
    _, mat_rng, noise_rng = rng_streams(seed)
    signs = mat_rng.integers(0, 2, size=(T, M, N), dtype=np.int8)
    Phi = (2.0 * signs - 1.0) / np.sqrt(M)
    clean = np.einsum("tmn,tn->tm", Phi, x_blocks)
    if np.isinf(mspec.snr_db):
        sigma = 0.0
    else:
        power = float(np.mean(clean ** 2))
        sigma = float(np.sqrt(power / 10.0 ** (mspec.snr_db / 10.0)))
    noise = noise_rng.standard_normal((T, M))
    y = clean + sigma * noise
    return MeasurementStream(Phi=Phi, y=y, clean=clean, sigma=sigma)


def ser_db(x_true, x_est):
    """Signal-to-error ratio in dB, capped at ``SER_CAP_DB`` for exact recovery."""
    x_true = np.asarray(x_true, dtype=float).ravel()
    x_est = np.asarray(x_est, dtype=float).ravel()
    if x_true.shape != x_est.shape:
        raise ValueError("signals differ in length")
    ref = float(x_true @ x_true)
    if ref == 0.0:
        raise ZeroReference("reference signal is zero")
    err = float(np.sum((x_true - x_est) ** 2))
    if err == 0.0:
        return SER_CAP_DB
    return min(SER_CAP_DB, -10.0 * np.log10(err / ref))


# -- file export -----------------------------------------------------------
#
# Binary layout, all little-endian:
#   8 bytes  magic b"L1STRM01"
#   3 x u64  N, M, T
#   f64      sigma
#   f64[T*N] signal blocks, row-major
#   f64[T*M*N] measurement matrices, row-major (t, m, n)
#   f64[T*M] measurements

def write_stream(path, x_blocks, meas):
    x_blocks = np.asarray(x_blocks, dtype="<f8")
    T, N = x_blocks.shape
    M = meas.M
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQQ", N, M, T))
        fh.write(struct.pack("<d", meas.sigma))
        fh.write(x_blocks.tobytes())
        fh.write(np.asarray(meas.Phi, dtype="<f8").tobytes())
        fh.write(np.asarray(meas.y, dtype="<f8").tobytes())


def read_stream(path):
    """Inverse of :func:`write_stream`: ``(x_blocks, MeasurementStream)``.

    ``clean`` is recomputed from the stored blocks and matrices.
    """
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError("not a stream file")
    N, M, T = struct.unpack_from("<QQQ", raw, 8)
    (sigma,) = struct.unpack_from("<d", raw, 32)
    off = 40
    x = np.frombuffer(raw, "<f8", T * N, off).reshape(T, N).copy()
    off += 8 * T * N
    Phi = np.frombuffer(raw, "<f8", T * M * N, off).reshape(T, M, N).copy()
    off += 8 * T * M * N
    y = np.frombuffer(raw, "<f8", T * M, off).reshape(T, M).copy()
    clean = np.einsum("tmn,tn->tm", Phi, x)
    return x, MeasurementStream(Phi=Phi, y=y, clean=clean, sigma=sigma)


def write_stream_csv(directory, x_blocks, meas):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "signal.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "x"])
        for n, v in enumerate(np.ravel(x_blocks)):
            wr.writerow([n, repr(float(v))])
    with open(directory / "measurements.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "m", "y", "clean"])
        for t in range(meas.T):
            for m in range(meas.M):
                wr.writerow([t, m, repr(float(meas.y[t, m])), repr(float(meas.clean[t, m]))])
