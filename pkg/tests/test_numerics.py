import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dqnsim.errors import ContractViolation, NotPositiveDefinite
from dqnsim.numerics import (
    check_symmetric,
    cholesky,
    jacobi_eigh,
    solve_spd,
    spectral_norm,
    sym_eigs,
)


def random_sym(rng, d, scale=1.0):
    B = rng.standard_normal((d, d)) * scale
    return 0.5 * (B + B.T)


def charpoly_faddeev(A):
    # Faddeev-LeVerrier: coefficients of det(lambda I - A), highest power first
    d = A.shape[0]
    coeffs = [1.0]
    M = np.zeros_like(A)
    I = np.eye(d)
    for k in range(1, d + 1):
        M = A @ M + coeffs[-1] * I
        coeffs.append(-np.trace(A @ M) / k)
    return np.array(coeffs)


def gauss_jordan_inverse(A):
    d = A.shape[0]
    aug = np.hstack([A.astype(float), np.eye(d)])
    for c in range(d):
        p = c + np.argmax(np.abs(aug[c:, c]))
        aug[[c, p]] = aug[[p, c]]
        aug[c] /= aug[c, c]
        for r in range(d):
            if r != c:
                aug[r] -= aug[r, c] * aug[c]
    return aug[:, d:]


def test_eigenvalues_match_characteristic_polynomial():
    rng = np.random.default_rng(7)
    A = random_sym(rng, 5)
    roots = np.sort(np.roots(charpoly_faddeev(A)).real)
    w, V = jacobi_eigh(A)
    np.testing.assert_allclose(w, roots, atol=1e-9)
    np.testing.assert_allclose(A @ V, V * w, atol=1e-12)


def test_known_spectrum():
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 6)))
    lam = np.array([-3.0, 0.5, 1.0, 1.0, 2.0, 10.0])
    A = (Q * lam) @ Q.T
    A = 0.5 * (A + A.T)
    lo, hi, w = sym_eigs(A)
    np.testing.assert_allclose(w, lam, atol=1e-12)
    assert lo == pytest.approx(-3.0) and hi == pytest.approx(10.0)


def test_batched_equals_single():
    rng = np.random.default_rng(1)
    stack = np.stack([random_sym(rng, 7) for _ in range(4)]).reshape(2, 2, 7, 7)
    w, V = jacobi_eigh(stack)
    assert w.shape == (2, 2, 7) and V.shape == (2, 2, 7, 7)
    for i in range(2):
        for j in range(2):
            np.testing.assert_allclose(w[i, j], jacobi_eigh(stack[i, j])[0], atol=1e-13)


def test_input_not_modified_and_trivial_sizes():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    before = A.copy()
    w, _ = jacobi_eigh(A)
    np.testing.assert_array_equal(A, before)
    np.testing.assert_allclose(w, [1.0, 3.0])
    w1, V1 = jacobi_eigh(np.array([[4.0]]))
    assert w1[0] == 4.0 and V1[0, 0] == 1.0
    np.testing.assert_array_equal(jacobi_eigh(np.diag([3.0, -1.0, 2.0]), vectors=False), [-1.0, 2.0, 3.0])


def test_rejects_asymmetric_and_non_square():
    with pytest.raises(ContractViolation):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ContractViolation):
        check_symmetric(np.ones((2, 3)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_decomposition_property(B):
    A = 0.5 * (B + B.T)
    w, V = jacobi_eigh(A)
    scale = max(1.0, np.abs(A).max())
    assert np.all(np.diff(w) >= 0)
    np.testing.assert_allclose(V.T @ V, np.eye(6), atol=1e-12)
    np.testing.assert_allclose((V * w) @ V.T, A, atol=1e-11 * scale)
    np.testing.assert_allclose(w.sum(), np.trace(A), atol=1e-11 * scale * 6)


def power_iteration_norm(A, iters=2000):
    x = np.ones(A.shape[1])
    G = A.T @ A
    for _ in range(iters):
        x = G @ x
        x /= np.linalg.norm(x)
    return np.sqrt(x @ G @ x)


def test_spectral_norm_power_iteration_oracle():
    rng = np.random.default_rng(5)
    for shape in [(4, 4), (7, 3), (3, 9)]:
        A = rng.standard_normal(shape)
        assert spectral_norm(A) == pytest.approx(power_iteration_norm(A), rel=1e-10)
    assert spectral_norm(np.zeros((3, 3))) == 0.0
    with pytest.raises(ContractViolation):
        spectral_norm(np.array([[np.nan]]))


def test_cholesky_and_solve_match_gauss_jordan():
    rng = np.random.default_rng(3)
    B = rng.standard_normal((6, 6))
    A = B @ B.T + 6 * np.eye(6)
    L = cholesky(A)
    np.testing.assert_allclose(L @ L.T, A, atol=1e-12)
    assert np.all(np.triu(L, 1) == 0)
    b = rng.standard_normal(6)
    np.testing.assert_allclose(solve_spd(A, b), gauss_jordan_inverse(A) @ b, rtol=1e-12, atol=1e-13)


def test_cholesky_reports_failing_pivot():
    A = np.array([[4.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(NotPositiveDefinite) as info:
        cholesky(A)
    assert info.value.pivot == 1
    with pytest.raises(NotPositiveDefinite):
        cholesky(-np.eye(2))
