"""Damped limited-memory BFGS.

Directions come from the matrix-free two-loop recursion (``O(Md)`` per call).
:func:`bfgs_explicit` forms the same matrix densely; it is only used by tests
and by the eigenvalue audit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curvature import (
    TINY,
    group_by_length,
    CurvatureMemory,
    CurvaturePair,
    damped_y,
    damping_theta,
    omega,
    step_too_small,
)
from .errors import ContractViolation, InvariantViolation


@dataclass(frozen=True)
class BfgsParams:
    epsilon: float = 3.0
    beta: float = 0.04
    bcal: float = 1e4
    ltilde: float = 10.0
    M: int = 20

    def __post_init__(self):
        vals = (self.epsilon, self.beta, self.bcal, self.ltilde)
        if not all(math.isfinite(v) for v in vals):
            raise ContractViolation(f"non-finite BFGS parameter in {self}")
        if self.epsilon < 0 or self.beta <= 0 or self.ltilde <= 0:
            raise ContractViolation(f"BFGS parameters out of range: {self}")
        if self.bcal < self.beta:
            raise ContractViolation(f"need bcal >= beta, got bcal={self.bcal}, beta={self.beta}")
        if int(self.M) != self.M or self.M < 1:
            raise ContractViolation(f"memory size must be a positive integer, got {self.M}")


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ b)


def bfgs_initial_scalar(s: np.ndarray, y: np.ndarray, params: BfgsParams) -> float:
    """``min(max(s^T y / y^T y, beta), bcal)``; degenerate pairs give ``beta``."""
    yy = float(y @ y)
    sy = float(s @ y)
    if yy <= TINY or sy <= 0.0:
        return params.beta
    return min(max(sy / yy, params.beta), params.bcal)


def bfgs_make_pair(x_new, x_old, g_new, g_old, params: BfgsParams) -> CurvaturePair | None:
    s = x_new - x_old
    y = g_new - g_old
    if step_too_small(s, x_old):
        return None
    h0 = bfgs_initial_scalar(s, y, params)
    theta = damping_theta(s, y, h0, params.epsilon, params.ltilde)
    y_hat = damped_y(s, y, h0, params.epsilon, theta)
    return CurvaturePair(s, y, s, y_hat, theta, h0)


def _check_curvature(sy: float) -> None:
    if not sy > 0.0:
        raise InvariantViolation(f"stored pair has non-positive curvature s^T y_hat = {sy!r}")


def bfgs_two_loop(memory: CurvatureMemory, h0: float, g: np.ndarray) -> np.ndarray:
    """``H g`` for the limited-memory BFGS matrix, without forming ``H``."""
    pairs = list(memory)
    q = np.array(g, dtype=np.float64)
    alphas = [0.0] * len(pairs)
    for p in reversed(range(len(pairs))):
        s, y = pairs[p].s, pairs[p].y_hat
        sy = _dot(s, y)
        _check_curvature(sy)
        alphas[p] = _dot(s, q) / sy
        q = q - alphas[p] * y
    r = h0 * q
    for p, pair in enumerate(pairs):
        s, y = pair.s, pair.y_hat
        sy = _dot(s, y)
        b = _dot(y, r) / sy
        r = r + s * (alphas[p] - b)
    return r


def bfgs_two_loop_batch(S: np.ndarray, Y: np.ndarray, h0: np.ndarray, G: np.ndarray) -> np.ndarray:
    """:func:`bfgs_two_loop` for ``k`` memories of equal length at once.

    ``S`` and ``Y`` have shape ``(k, L, d)`` (oldest pair first), ``h0`` is
    ``(k,)`` and ``G`` is ``(k, d)``. Each node still performs the same four
    inner products per stored pair.
    """
    k, L, _ = S.shape
    q = np.array(G, dtype=np.float64)
    alphas = np.zeros((k, L))
    for p in reversed(range(L)):
        s, y = S[:, p], Y[:, p]
        sy = np.einsum("ki,ki->k", s, y)
        if not np.all(np.isfinite(sy)):
            raise OverflowError("two-loop recursion overflowed")
        _check_curvature(float(sy.min()))
        alphas[:, p] = np.einsum("ki,ki->k", s, q) / sy
        q = q - alphas[:, p, None] * y
    r = h0[:, None] * q
    for p in range(L):
        s, y = S[:, p], Y[:, p]
        sy = np.einsum("ki,ki->k", s, y)
        b = np.einsum("ki,ki->k", y, r) / sy
        r = r + s * (alphas[:, p] - b)[:, None]
    return r


def bfgs_explicit(memory: CurvatureMemory, h0: float, d: int | None = None) -> np.ndarray:
    """Dense form of the matrix applied by :func:`bfgs_two_loop`."""
    if d is None:
        if len(memory) == 0:
            raise ContractViolation("dimension needed for an empty memory")
        d = memory[0].s.shape[0]
    H = h0 * np.eye(d)
    eye = np.eye(d)
    for pair in memory:
        s, y = pair.s, pair.y_hat
        sy = float(s @ y)
        _check_curvature(sy)
        left = eye - np.outer(s, y) / sy
        H = left @ H @ left.T + np.outer(s, s) / sy
    return H


def bfgs_bounds(params: BfgsParams) -> tuple[float, float]:
    """Eigenvalue bounds ``(M1, M2)``; ``M2`` is ``inf`` when it exceeds float range."""
    p = params
    w = omega(p.bcal, p.epsilon, p.beta, p.ltilde)
    m1 = 1.0 / (1.0 / p.beta + p.M * w * w / (4.0 * (p.bcal + p.epsilon)))
    log_m2 = 2 * p.M * math.log1p(w) + math.log(p.bcal + 1.0 / (p.ltilde * (w + 2.0)))
    m2 = math.exp(log_m2) if log_m2 < 709.0 else math.inf
    return m1, m2


class BfgsMethod:
    name = "bfgs"

    def __init__(self, params: BfgsParams):
        self.params = params
        self.M = params.M
        self.floor = 0.0
        self.epsilon = params.epsilon

    def make_pair(self, x_new, x_old, g_new, g_old):
        return bfgs_make_pair(x_new, x_old, g_new, g_old, self.params)

    def _h0(self, memory: CurvatureMemory) -> float:
        newest = memory.newest
        return bfgs_initial_scalar(newest.s, newest.y, self.params)

    def direction(self, memory: CurvatureMemory, g: np.ndarray) -> np.ndarray:
        if len(memory) == 0:
            return g.copy()
        return bfgs_two_loop(memory, self._h0(memory), g)

    def directions(self, memories, G: np.ndarray) -> np.ndarray:
        """Two-loop directions for every node, batching equal-length memories."""
        D = G.copy()
        for L, nodes in group_by_length(memories).items():
            mems = [memories[i] for i in nodes]
            h0 = np.array([self._h0(m) for m in mems])
            S = np.stack([np.stack([p.s for p in m]) for m in mems])
            Y = np.stack([np.stack([p.y_hat for p in m]) for m in mems])
            D[nodes] = bfgs_two_loop_batch(S, Y, h0, G[nodes])
        return D

    def matrix(self, memory: CurvatureMemory, d: int | None = None) -> np.ndarray | None:
        if len(memory) == 0:
            return None
        return bfgs_explicit(memory, self._h0(memory), d)

    def bounds(self) -> tuple[float, float]:
        return bfgs_bounds(self.params)
