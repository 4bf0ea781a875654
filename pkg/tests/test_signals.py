import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l1stream.signals import (
    SER_CAP_DB,
    SIGNAL_KINDS,
    MeasurementSpec,
    SignalSpec,
    ZeroReference,
    circular_shift,
    gen_dynamic_sequence,
    gen_measurements,
    gen_signal,
    make_signal,
    read_stream,
    ser_db,
    write_stream,
    write_stream_csv,
)


@pytest.mark.parametrize("kind", SIGNAL_KINDS)
def test_prefix_is_zero_and_deterministic(kind):
    spec = SignalSpec(kind, 2 ** 12, 256)
    x = gen_signal(spec, 0)
    assert x.size == spec.total_length == 2 ** 12 + 256
    assert not np.any(x[:256])
    assert np.any(x[256:])
    assert np.array_equal(x, gen_signal(spec, 1))


def test_linchirp_instantaneous_frequency():
    L = 2 ** 13
    x = make_signal("LinChirp", L)
    win = 256
    for c in range(win, L - win, 1024):
        seg = x[c - win // 2:c + win // 2]
        crossings = np.count_nonzero(np.diff(np.signbit(seg)))
        # two zero crossings per cycle, f(n) = n / (2L)
        expect = 2 * (c / (2 * L)) * win
        assert abs(crossings - expect) <= 2


def test_heavisine_two_jumps():
    x = make_signal("HeaviSine", 256)
    jumps = np.abs(np.diff(x))
    smooth = 4 * np.pi * 4 / 256          # bound on the sinusoid's sample-to-sample change
    big = np.flatnonzero(jumps > 2 * smooth)
    assert big.size == 2
    assert np.allclose(big / 256, [0.3, 0.72], atol=2 / 256)


@pytest.mark.parametrize("kind", SIGNAL_KINDS)
def test_signals_finite(kind):
    x = make_signal(kind, 1024)
    assert np.all(np.isfinite(x)) and np.std(x) > 0


def test_signal_spec_validation():
    with pytest.raises(ValueError):
        SignalSpec("Bumps")
    with pytest.raises(ValueError):
        SignalSpec("LinChirp", 1000, 256)


def test_integer_shift_exact():
    x0 = make_signal("HeaviSine", 256)
    blocks, _ = gen_dynamic_sequence(x0, T=5, shifts=1.0)
    assert np.array_equal(blocks[0], np.roll(x0, -1))
    assert np.array_equal(blocks[4], np.roll(x0, -5))
    assert blocks.sum(axis=1) == pytest.approx(np.full(5, x0.sum()))


def test_dynamic_energy_non_increasing():
    x0 = make_signal("HeaviSine", 256)
    blocks, shifts = gen_dynamic_sequence(x0, T=128, seed=3)
    assert blocks.shape == (128, 256)
    assert np.all((shifts >= 0.5) & (shifts <= 1.5))
    e = np.linalg.norm(np.vstack([x0, blocks]), axis=1)
    assert np.all(np.diff(e) <= 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 20), st.integers(0, 2 ** 31))
def test_circular_shift_interpolates(shift, seed):
    x = np.random.default_rng(seed).standard_normal(32)
    s = circular_shift(x, shift)
    assert s.sum() == pytest.approx(x.sum(), abs=1e-9)
    assert np.linalg.norm(s) <= np.linalg.norm(x) + 1e-12
    assert np.allclose(circular_shift(x, float(int(shift))), np.roll(x, -int(shift)))


def test_measurement_entries_and_columns():
    blocks = np.random.default_rng(0).standard_normal((3, 256))
    meas = gen_measurements(blocks, MeasurementSpec(R=4), seed=1)
    assert meas.Phi.shape == (3, 64, 256) and meas.M == 64
    assert set(np.unique(meas.Phi)) == {-0.125, 0.125}
    assert np.allclose(np.linalg.norm(meas.Phi, axis=1), 1.0, atol=1e-15)


def test_noiseless_measurements():
    blocks = np.random.default_rng(0).standard_normal((2, 256))
    meas = gen_measurements(blocks, MeasurementSpec(R=2, snr_db=np.inf))
    assert meas.sigma == 0.0
    assert np.array_equal(meas.y, meas.clean)


def test_realized_snr_near_target():
    x = gen_signal(SignalSpec("LinChirp", 2 ** 13), 0)
    meas = gen_measurements(x.reshape(-1, 256), MeasurementSpec(R=4, snr_db=35), seed=5)
    assert abs(meas.realized_snr_db() - 35.0) <= 0.5


def test_measurements_reproducible():
    blocks = np.ones((4, 256))
    a = gen_measurements(blocks, MeasurementSpec(R=4), seed=9)
    b = gen_measurements(blocks, MeasurementSpec(R=4), seed=9)
    c = gen_measurements(blocks, MeasurementSpec(R=4), seed=10)
    assert np.array_equal(a.Phi, b.Phi) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.Phi, c.Phi)


def test_measurement_spec_validation():
    with pytest.raises(ValueError):
        MeasurementSpec(R=3)


def test_ser_values():
    x = np.array([3.0, 4.0])
    assert ser_db(x, x) == SER_CAP_DB == 300.0
    assert ser_db(x, np.zeros(2)) == pytest.approx(0.0)
    assert ser_db(x, x * 1.1) == pytest.approx(20.0)
    with pytest.raises(ZeroReference):
        ser_db(np.zeros(2), x)
    with pytest.raises(ValueError):
        ser_db(x, np.ones(3))


def test_stream_file_round_trip(tmp_path):
    blocks = np.random.default_rng(2).standard_normal((3, 16))
    meas = gen_measurements(blocks, MeasurementSpec(R=4, block_length=16), seed=2)
    path = tmp_path / "s.bin"
    write_stream(path, blocks, meas)
    raw = path.read_bytes()
    assert raw[:8] == b"L1STRM01"
    assert len(raw) == 40 + 8 * (3 * 16 + 3 * 4 * 16 + 3 * 4)
    xb, m2 = read_stream(path)
    assert np.array_equal(xb, blocks)
    assert np.array_equal(m2.Phi, meas.Phi) and np.array_equal(m2.y, meas.y)
    assert m2.sigma == meas.sigma
    write_stream_csv(tmp_path / "csv", blocks, meas)
    rows = (tmp_path / "csv" / "measurements.csv").read_text().splitlines()
    assert rows[0] == "t,m,y,clean" and len(rows) == 1 + 3 * 4
