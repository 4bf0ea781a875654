import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l1stream.linalg_updates import (
    DimensionMismatch,
    GramFactor,
    IndexNotActive,
    SingularGram,
    grow_factor,
    shrink_factor,
    solve_gram,
)

MODES = ("cholesky", "inverse")


def scratch_inverse(A, idx):
    G = A[:, idx].T @ A[:, idx]
    return np.linalg.inv(G)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.parametrize("mode", MODES)
def test_first_unit_column(mode):
    a = np.array([[0.6], [0.8]])
    f = grow_factor(GramFactor(mode), a, 0)
    assert f.data.shape == (1, 1)
    assert f.data[0, 0] == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("mode", MODES)
def test_identity_columns(mode):
    f = GramFactor(mode)
    grow_factor(f, np.eye(3), 0)
    grow_factor(f, np.eye(3), 2)
    assert np.allclose(f.data, np.eye(2), atol=1e-15)
    assert f.column_index_map == [0, 2]
    shrink_factor(f, 0)
    assert f.column_index_map == [2]
    assert f.data[0, 0] == pytest.approx(1.0)


@pytest.mark.parametrize("mode", MODES)
def test_grow_matches_dense_inverse(mode):
    rng = np.random.default_rng(0)
    A = rng.standard_normal((20, 8))
    f = GramFactor(mode)
    for j in range(8):
        f.grow(A, j)
        assert rel(f.gram_inverse(), scratch_inverse(A, list(range(j + 1)))) <= 1e-8


@pytest.mark.parametrize("mode", MODES)
def test_cholesky_and_inverse_invariants(mode):
    rng = np.random.default_rng(1)
    A = rng.standard_normal((20, 8))
    f = GramFactor.from_columns(A, [3, 1, 5, 0], mode)
    G = A[:, [3, 1, 5, 0]].T @ A[:, [3, 1, 5, 0]]
    if mode == "cholesky":
        L = f.data
        assert np.allclose(L, np.tril(L))
        assert np.all(np.diag(L) > 0)
        assert rel(L @ L.T, G) <= 1e-8
    else:
        assert rel(f.data @ G, np.eye(4)) <= 1e-8


@pytest.mark.parametrize("mode", MODES)
def test_grow_then_shrink_is_identity(mode):
    rng = np.random.default_rng(2)
    A = rng.standard_normal((20, 8))
    f = GramFactor.from_columns(A, [0, 1, 2, 3], mode)
    before = f.data
    f.grow(A, 6)
    f.shrink(6)
    assert f.column_index_map == [0, 1, 2, 3]
    assert np.max(np.abs(f.data - before)) <= 1e-10


@pytest.mark.parametrize("mode", MODES)
def test_random_sequence_of_50(mode):
    rng = np.random.default_rng(3)
    A = rng.standard_normal((20, 8))
    f = GramFactor(mode)
    active = []
    for _ in range(50):
        free = [j for j in range(8) if j not in active]
        if active and (not free or rng.random() < 0.45):
            j = active.pop(int(rng.integers(len(active))))
            f.shrink(j)
        else:
            j = int(rng.choice(free))
            f.grow(A, j)
            active.append(j)
        assert f.column_index_map == active
        if active:
            assert rel(f.gram_inverse(), scratch_inverse(A, active)) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), ops=st.lists(st.booleans(), min_size=1, max_size=60),
       mode=st.sampled_from(MODES))
def test_factor_tracks_scratch(seed, ops, mode):
    rng = np.random.default_rng(seed)
    M, N = 30, 10
    A = rng.standard_normal((M, N))
    f = GramFactor(mode)
    active = []
    for grow in ops:
        free = [j for j in range(N) if j not in active]
        if grow and free:
            j = int(rng.choice(free))
            f.grow(A, j)
            active.append(j)
        elif active:
            j = active.pop(int(rng.integers(len(active))))
            f.shrink(j)
        if active:
            ref = scratch_inverse(A, active)
            assert np.linalg.cond(np.linalg.inv(ref)) < 1e6
            assert rel(f.gram_inverse(), ref) <= 1e-6


def test_solve_orthonormal_and_scalar():
    Q, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((10, 4)))
    f = GramFactor.from_columns(Q, range(4))
    r = np.arange(1.0, 5.0)
    assert np.allclose(solve_gram(f, r), r, atol=1e-12)
    g = GramFactor().grow(np.array([[2.0]]), 0)
    assert solve_gram(g, np.array([3.0]))[0] == pytest.approx(3.0 / 4.0)


@pytest.mark.parametrize("mode", MODES)
def test_solve_matches_dense(mode):
    rng = np.random.default_rng(5)
    A = rng.standard_normal((20, 6))
    f = GramFactor.from_columns(A, range(6), mode)
    rhs = rng.standard_normal(6)
    d = f.solve(rhs)
    G = A.T @ A
    assert np.linalg.norm(G @ d - rhs) / np.linalg.norm(rhs) <= 1e-8
    assert rel(d, np.linalg.solve(G, rhs)) <= 1e-8


def test_errors():
    A = np.array([[1.0, 2.0, 1.0], [0.0, 0.0, 1.0]])
    f = GramFactor().grow(A, 0)
    with pytest.raises(SingularGram):
        f.grow(A, 1)      # parallel to column 0
    with pytest.raises(IndexNotActive):
        f.shrink(2)
    with pytest.raises(DimensionMismatch):
        f.solve(np.ones(2))
    with pytest.raises(SingularGram):
        GramFactor.from_columns(A, [0, 1])


def test_copy_is_independent():
    A = np.random.default_rng(6).standard_normal((10, 5))
    f = GramFactor.from_columns(A, [0, 1])
    g = f.copy()
    g.grow(A, 2)
    assert f.column_index_map == [0, 1]
    assert g.column_index_map == [0, 1, 2]
