"""Damped regularized limited-memory DFP.

Each node keeps a window of the ``M`` most recent damped pairs and rebuilds an
explicit inverse-Hessian approximation from a scalar start every iteration:

    H <- H + s_hat s_hat^T / (s_hat^T y_hat) - H y_hat y_hat^T H / (y_hat^T H y_hat) + rho I

with ``s_hat = s - rho y`` and ``y_hat`` damped so that
``s_hat^T y_hat >= 0.25 ||s_hat||^2 / (h0 + eps)``.
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
class DfpParams:
    rho: float = 1e-5
    epsilon: float = 3.0
    beta: float = 0.04
    bcal: float = 1e4
    ltilde: float = 10.0
    M: int = 20

    def __post_init__(self):
        vals = (self.rho, self.epsilon, self.beta, self.bcal, self.ltilde)
        if not all(math.isfinite(v) for v in vals):
            raise ContractViolation(f"non-finite DFP parameter in {self}")
        if self.rho < 0 or self.epsilon < 0 or self.beta <= 0 or self.ltilde <= 0:
            raise ContractViolation(f"DFP parameters out of range: {self}")
        if self.bcal < self.beta:
            raise ContractViolation(f"need bcal >= beta, got bcal={self.bcal}, beta={self.beta}")
        if int(self.M) != self.M or self.M < 1:
            raise ContractViolation(f"memory size must be a positive integer, got {self.M}")


def dfp_initial_scalar(s: np.ndarray, y: np.ndarray, params: DfpParams) -> float:
    """``min(max(s^T s / s^T y + rho, beta), bcal)``; a non-positive ``s^T y`` gives ``beta``."""
    sy = float(s @ y)
    if sy <= TINY:
        return params.beta
    return min(max(float(s @ s) / sy + params.rho, params.beta), params.bcal)


def dfp_theta(s_hat: np.ndarray, y: np.ndarray, h0: float, params: DfpParams) -> float:
    if not np.any(s_hat):
        raise ContractViolation("damping weight undefined for a zero modified step")
    return damping_theta(s_hat, y, h0, params.epsilon, params.ltilde)


def dfp_make_pair(x_new, x_old, g_new, g_old, params: DfpParams) -> CurvaturePair | None:
    """Build the damped pair for one step, or ``None`` if the step is degenerate."""
    s = x_new - x_old
    y = g_new - g_old
    if step_too_small(s, x_old):
        return None
    s_hat = s - params.rho * y
    if float(np.linalg.norm(s_hat)) <= TINY:
        return None
    h0 = dfp_initial_scalar(s, y, params)
    theta = dfp_theta(s_hat, y, h0, params)
    y_hat = damped_y(s_hat, y, h0, params.epsilon, theta)
    return CurvaturePair(s, y, s_hat, y_hat, theta, h0)


def dfp_update(H: np.ndarray, s_hat: np.ndarray, y_hat: np.ndarray, rho: float) -> np.ndarray:
    """One regularized DFP step on an explicit matrix."""
    sy = float(s_hat @ y_hat)
    Hy = H @ y_hat
    yHy = float(y_hat @ Hy)
    if not (sy > 0.0 and yHy > 0.0):
        raise InvariantViolation(f"DFP denominators must be positive (s^T y = {sy!r}, y^T H y = {yHy!r})")
    # outer-then-divide keeps H exactly symmetric
    H = H + (s_hat[:, None] * s_hat) / sy - (Hy[:, None] * Hy) / yHy
    H.flat[:: H.shape[0] + 1] += rho
    return H


def dfp_build(memory: CurvatureMemory, s_k: np.ndarray, y_k: np.ndarray, params: DfpParams) -> np.ndarray:
    """Rebuild ``H`` from the scalar start and every stored pair, oldest first."""
    if len(memory) == 0:
        raise ContractViolation("DFP build needs at least one stored pair")
    h0 = np.array([dfp_initial_scalar(s_k, y_k, params)])
    S = np.stack([p.s_hat for p in memory])[None]
    Y = np.stack([p.y_hat for p in memory])[None]
    return dfp_build_batch(S, Y, h0, params.rho)[0]


def dfp_build_batch(S: np.ndarray, Y: np.ndarray, h0: np.ndarray, rho: float) -> np.ndarray:
    """Same construction for ``k`` independent memories at once.

    ``S`` and ``Y`` hold damped pairs with shape ``(k, L, d)``, oldest first;
    ``h0`` has shape ``(k,)``. Returns ``(k, d, d)``.
    """
    k, L, d = S.shape
    H = h0[:, None, None] * np.eye(d)
    diag = np.arange(d)
    for p in range(L):
        s, y = S[:, p], Y[:, p]
        sy = np.einsum("ki,ki->k", s, y)
        Hy = np.einsum("kij,kj->ki", H, y)
        yHy = np.einsum("ki,ki->k", y, Hy)
        if not (np.all(np.isfinite(sy)) and np.all(np.isfinite(yHy))):
            raise OverflowError("DFP build overflowed")
        if not (np.all(sy > 0.0) and np.all(yHy > 0.0)):
            raise InvariantViolation(
                f"DFP denominators must be positive (min s^T y = {sy.min()!r}, min y^T H y = {yHy.min()!r})")
        # outer-then-divide keeps H exactly symmetric
        H = H + (s[:, :, None] * s[:, None, :]) / sy[:, None, None] - (Hy[:, :, None] * Hy[:, None, :]) / yHy[:, None, None]
        H[:, diag, diag] += rho
    return H


def dfp_bounds(params: DfpParams) -> tuple[float, float]:
    """Eigenvalue bounds ``(M1, M2)`` valid for every matrix :func:`dfp_build` returns."""
    p = params
    w = omega(p.bcal, p.epsilon, p.beta, p.ltilde)
    # (1 + w)^(-2M) underflows long before it matters; do it in logs
    decay = math.exp(-2 * p.M * math.log1p(w))
    m1 = p.rho + decay / (1.0 / p.beta + 1.0 / (4.0 * (p.bcal + p.epsilon)))
    m2 = p.bcal + p.M * (4.0 * p.bcal + 4.0 * p.epsilon + p.rho)
    return m1, m2


def dfp_apply(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    return H @ g


class DfpMethod:
    """Direction oracle plugging the DFP construction into the outer loop."""

    name = "dfp"

    def __init__(self, params: DfpParams):
        self.params = params
        self.M = params.M
        self.floor = params.rho
        self.epsilon = params.epsilon

    def make_pair(self, x_new, x_old, g_new, g_old):
        return dfp_make_pair(x_new, x_old, g_new, g_old, self.params)

    def matrix(self, memory: CurvatureMemory, d: int | None = None) -> np.ndarray | None:
        newest = memory.newest
        if newest is None:
            return None
        return dfp_build(memory, newest.s, newest.y, self.params)

    def direction(self, memory: CurvatureMemory, g: np.ndarray) -> np.ndarray:
        H = self.matrix(memory)
        return g.copy() if H is None else dfp_apply(H, g)

    def directions(self, memories, G: np.ndarray) -> np.ndarray:
        """``H_i g_i`` for every node, batching nodes whose memories have equal length."""
        D = G.copy()
        for L, nodes in group_by_length(memories).items():
            mems = [memories[i] for i in nodes]
            h0 = np.array([dfp_initial_scalar(m.newest.s, m.newest.y, self.params) for m in mems])
            S = np.stack([np.stack([p.s_hat for p in m]) for m in mems])
            Y = np.stack([np.stack([p.y_hat for p in m]) for m in mems])
            H = dfp_build_batch(S, Y, h0, self.params.rho)
            D[nodes] = np.einsum("kij,kj->ki", H, G[nodes])
        return D

    def bounds(self) -> tuple[float, float]:
        return dfp_bounds(self.params)
