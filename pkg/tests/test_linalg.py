import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bcl.errors import NonFinite, NonPositiveGain, NonPositiveMu, NonSymmetric
from bcl.linalg import (
    build_A0,
    build_Ag,
    build_Dmu,
    is_negative_semidefinite,
    jacobi_eigh,
    quadratic_form,
    symmetric_eigenvalues,
)


@pytest.mark.parametrize(
    "M, expected",
    [
        (np.diag([-2.0, -3.0, -4.0]), [-4.0, -3.0, -2.0]),
        ([[0.0, 1.0], [1.0, 0.0]], [-1.0, 1.0]),
        ([[2.0, 1.0], [1.0, 2.0]], [1.0, 3.0]),
    ],
)
def test_eigenvalue_examples(M, expected):
    np.testing.assert_allclose(symmetric_eigenvalues(M), expected, atol=1e-12)


def test_eigen_rejects_bad_input():
    with pytest.raises(NonSymmetric):
        symmetric_eigenvalues([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(NonFinite):
        symmetric_eigenvalues([[np.nan, 0.0], [0.0, 1.0]])


def _sym(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-5, 5, (n, n))
    return 0.5 * (A + A.T)


@given(st.integers(1, 6), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_trace_and_reconstruction(n, seed):
    M = _sym(n, seed)
    w, Q = jacobi_eigh(M)
    assert abs(w.sum() - np.trace(M)) <= 1e-8
    assert np.max(np.abs(M - Q @ np.diag(w) @ Q.T)) <= 1e-8
    assert np.all(np.diff(w) >= 0)


def test_jacobi_agrees_with_lapack(rng):
    for n in range(1, 9):
        A = rng.uniform(-5, 5, (n, n))
        M = 0.5 * (A + A.T)
        np.testing.assert_allclose(symmetric_eigenvalues(M), np.linalg.eigvalsh(M), atol=1e-9)


@pytest.mark.parametrize(
    "M, ok",
    [(np.diag([0.0, -1.0]), True), (np.diag([1e-3, -1.0]), False), (np.zeros((3, 3)), True)],
)
def test_nsd_examples(M, ok):
    assert is_negative_semidefinite(M, tol=1e-9) is ok


@given(st.integers(2, 5), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_nsd_is_rotation_invariant(n, seed):
    rng = np.random.default_rng(seed)
    M = _sym(n, seed) - rng.uniform(0, 12) * np.eye(n)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    R = Q @ M @ Q.T
    R = 0.5 * (R + R.T)
    lam = np.max(np.linalg.eigvalsh(M))
    if abs(lam) > 1e-6:  # away from the tolerance boundary
        assert is_negative_semidefinite(M) == is_negative_semidefinite(R)


def test_quadratic_form_examples():
    assert quadratic_form(np.eye(3), [1, 2, 2]) == 9
    assert quadratic_form(np.diag([2.0, 3.0]), [1, 1]) == 5
    S = np.array([[0.0, 2.0], [-2.0, 0.0]])
    assert abs(quadratic_form(S, [0.3, -1.7])) <= 1e-12


@given(arrays(float, 4, elements=st.floats(-10, 10)), arrays(float, 5, elements=st.floats(-10, 10)))
def test_skew_quadratic_form_vanishes(g, v):
    assert abs(quadratic_form(build_Ag(g, 5), v)) <= 1e-12


def test_builders():
    np.testing.assert_array_equal(build_A0([2, 3, 4]), np.diag([-2.0, -3.0, -4.0]))
    np.testing.assert_array_equal(build_A0([1, 1, 1]), -np.eye(3))
    np.testing.assert_array_equal(build_A0([1]), [[-1.0]])
    with pytest.raises(NonPositiveGain):
        build_A0([1, 0, 2])
    np.testing.assert_array_equal(build_Ag([1, 1], 3), [[0, 1, 0], [-1, 0, 1], [0, -1, 0]])
    np.testing.assert_array_equal(build_Ag([], 1), [[0.0]])
    np.testing.assert_array_equal(build_Dmu(3, 2.0, 1.0), np.diag([2.0, 1.0, 1.0]))
    np.testing.assert_array_equal(build_Dmu(4, 7.3, 0.0), np.eye(4))
    np.testing.assert_allclose(build_Dmu(2, 4.0, 0.5), np.diag([2.0, 1.0]))
    with pytest.raises(NonPositiveMu):
        build_Dmu(3, 0.0, 1.0)
    with pytest.raises(NonFinite):
        build_Ag([np.inf, 1.0], 3)
