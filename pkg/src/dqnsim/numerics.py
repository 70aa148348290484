"""Small dense linear algebra: symmetric eigenvalues, spectral norm, SPD solves.

Everything works on float64 numpy arrays. The eigensolver is a cyclic Jacobi
method using a round-robin ordering, so that all rotations of one round act on
disjoint index pairs and can be applied together with vector operations. It
also accepts a stack of matrices ``(..., d, d)`` which the eigenvalue audit
uses to decompose every node's matrix in one call.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, NotPositiveDefinite

SYM_RTOL = 1e-12
_MAX_SWEEPS = 60


def check_symmetric(A: np.ndarray, rtol: float = SYM_RTOL) -> None:
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ContractViolation(f"expected square matrix, got shape {A.shape}")
    scale = np.max(np.abs(A), initial=0.0)
    asym = np.max(np.abs(A - np.swapaxes(A, -1, -2)), initial=0.0)
    if asym > rtol * scale:
        raise ContractViolation(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")


def _round_robin(d: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament schedule: d-1 rounds (d even) covering every pair once."""
    players = list(range(d + (d % 2)))
    k = len(players)
    rounds = []
    for _ in range(k - 1):
        p, q = [], []
        for a, b in zip(players[: k // 2], reversed(players[k // 2 :])):
            if a < d and b < d:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(A: np.ndarray, vectors: bool = True):
    """Eigen-decomposition of a symmetric matrix (or stack) by cyclic Jacobi.

    Parameters
    ----------
    A : ndarray, shape (..., d, d)
        Symmetric input. Not modified.
    vectors : bool
        Also accumulate eigenvectors.

    Returns
    -------
    w : ndarray, shape (..., d)
        Eigenvalues in ascending order.
    V : ndarray, shape (..., d, d), only if ``vectors``
        Orthonormal eigenvectors as columns, ``A @ V = V * w``.
    """
    A = np.array(A, dtype=np.float64)
    check_symmetric(A)
    batch_shape = A.shape[:-2]
    d = A.shape[-1]
    A = A.reshape((-1, d, d))
    # symmetrize exactly so rotations keep it symmetric
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    V = np.broadcast_to(np.eye(d), A.shape).copy() if vectors else None

    rounds = _round_robin(d)
    offmask = ~np.eye(d, dtype=bool)
    norm = np.sqrt(np.sum(A * A, axis=(1, 2)))
    tol = np.finfo(np.float64).eps * norm
    for _ in range(_MAX_SWEEPS):
        off = np.sqrt(np.sum(np.where(offmask, A, 0.0) ** 2, axis=(1, 2)))
        if np.all(off <= tol):
            break
        for P, Q in rounds:
            app = A[:, P, P]
            aqq = A[:, Q, Q]
            apq = A[:, P, Q]
            active = apq != 0.0
            safe = np.where(active, apq, 1.0)
            # theta may overflow to inf for a negligible apq; t -> 0 is then right
            with np.errstate(over="ignore"):
                theta = (aqq - app) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            cc, ss = c[:, None, :], s[:, None, :]
            AP, AQ = A[:, :, P], A[:, :, Q]
            A[:, :, P] = cc * AP - ss * AQ
            A[:, :, Q] = ss * AP + cc * AQ
            cr, sr = c[:, :, None], s[:, :, None]
            AP, AQ = A[:, P, :], A[:, Q, :]
            A[:, P, :] = cr * AP - sr * AQ
            A[:, Q, :] = sr * AP + cr * AQ
            A[:, P, Q] = 0.0
            A[:, Q, P] = 0.0
            if vectors:
                VP, VQ = V[:, :, P], V[:, :, Q]
                V[:, :, P] = cc * VP - ss * VQ
                V[:, :, Q] = ss * VP + cc * VQ

    w = np.diagonal(A, axis1=1, axis2=2).copy()
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1).reshape(batch_shape + (d,))
    if not vectors:
        return w
    V = np.take_along_axis(V, order[:, None, :], axis=2).reshape(batch_shape + (d, d))
    return w, V


def sym_eigs(A: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Return ``(lambda_min, lambda_max, all_eigenvalues_ascending)``.

    For a stack of matrices the extremes are arrays over the leading axes.
    """
    w = jacobi_eigh(A, vectors=False)
    if w.ndim == 1:
        return float(w[0]), float(w[-1]), w
    return w[..., 0], w[..., -1], w


def spectral_norm(A: np.ndarray) -> float:
    """Largest singular value, via the eigenvalues of ``A^T A``."""
    A = np.asarray(A, dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise ContractViolation("spectral_norm of a non-finite matrix")
    if A.size == 0:
        return 0.0
    G = A.T @ A if A.shape[0] >= A.shape[1] else A @ A.T
    lam = jacobi_eigh(G, vectors=False)[-1]
    return float(np.sqrt(max(lam, 0.0)))


def cholesky(A: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with ``A = L L^T``; raises on a bad pivot."""
    A = np.asarray(A, dtype=np.float64)
    check_symmetric(A)
    d = A.shape[0]
    L = np.zeros_like(A)
    for j in range(d):
        piv = A[j, j] - L[j, :j] @ L[j, :j]
        if not piv > 0.0:
            raise NotPositiveDefinite(j, float(piv))
        L[j, j] = np.sqrt(piv)
        L[j + 1 :, j] = (A[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A`` by Cholesky."""
    L = cholesky(A)
    b = np.asarray(b, dtype=np.float64)
    d = L.shape[0]
    z = np.empty_like(b)
    for i in range(d):
        z[i] = (b[i] - L[i, :i] @ z[:i]) / L[i, i]
    x = np.empty_like(b)
    for i in reversed(range(d)):
        x[i] = (z[i] - L[i + 1 :, i] @ x[i + 1 :]) / L[i, i]
    # one step of iterative refinement keeps the residual at rounding level
    r = b - A @ x
    if np.any(r):
        dz = np.empty_like(b)
        for i in range(d):
            dz[i] = (r[i] - L[i, :i] @ dz[:i]) / L[i, i]
        dx = np.empty_like(b)
        for i in reversed(range(d)):
            dx[i] = (dz[i] - L[i + 1 :, i] @ dx[i + 1 :]) / L[i, i]
        x = x + dx
    return x
