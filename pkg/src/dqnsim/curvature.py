"""Curvature pairs, the bounded pair window, and the damping rule shared by DFP and BFGS."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

TINY = 1e-300
# a step this small relative to the iterate carries no usable curvature
STEP_RTOL = 1e-12


@dataclass(frozen=True)
class CurvaturePair:
    """One admitted pair.

    ``s_hat`` equals ``s`` for BFGS. ``h0`` is the scalar initial inverse
    Hessian of the iteration that created the pair; damping used it and the
    curvature inequality is checked against it.
    """

    s: np.ndarray
    y: np.ndarray
    s_hat: np.ndarray
    y_hat: np.ndarray
    theta: float
    h0: float

    @property
    def curvature(self) -> float:
        return float(self.s_hat @ self.y_hat)


class CurvatureMemory:
    """FIFO window of at most ``M`` pairs, oldest first."""

    def __init__(self, M: int):
        if M < 1:
            raise ValueError(f"memory size must be >= 1, got {M}")
        self.M = M
        self._pairs: deque[CurvaturePair] = deque(maxlen=M)

    def push(self, pair: CurvaturePair) -> None:
        self._pairs.append(pair)

    def __len__(self) -> int:
        return len(self._pairs)

    def __iter__(self):
        return iter(self._pairs)

    def __getitem__(self, k):
        return self._pairs[k]

    @property
    def newest(self) -> CurvaturePair | None:
        return self._pairs[-1] if self._pairs else None


def group_by_length(memories) -> dict[int, list[int]]:
    """Indices of non-empty memories keyed by their length."""
    groups: dict[int, list[int]] = {}
    for i, m in enumerate(memories):
        if len(m):
            groups.setdefault(len(m), []).append(i)
    return groups


def damping_theta(u: np.ndarray, y: np.ndarray, h0: float, epsilon: float, ltilde: float) -> float:
    """Adaptive damping weight for the pair ``(u, y)``; ``u`` is ``s_hat`` (DFP) or ``s`` (BFGS).

    With ``a = u^T u / (h0 + eps)`` and ``c = u^T y`` the raw weight is
    ``0.75 a / (a - c)`` when ``c <= 0.25 a`` and 1 otherwise; it is then capped
    at ``ltilde ||u|| / ||y||`` so that ``||y_hat||`` stays proportional to ``||u||``.
    """
    a = float(u @ u) / (h0 + epsilon)
    c = float(u @ y)
    # min() only absorbs rounding; the ratio is <= 1 whenever c <= 0.25 a
    theta = min(0.75 * a / (a - c), 1.0) if c <= 0.25 * a else 1.0
    ny = float(np.linalg.norm(y))
    if ny > TINY:
        theta = min(theta, ltilde * float(np.linalg.norm(u)) / ny)
    return theta


def damped_y(u: np.ndarray, y: np.ndarray, h0: float, epsilon: float, theta: float) -> np.ndarray:
    return theta * y + (1.0 - theta) / (h0 + epsilon) * u


def step_too_small(s: np.ndarray, x_old: np.ndarray) -> bool:
    return float(np.linalg.norm(s)) <= STEP_RTOL * max(1.0, float(np.linalg.norm(x_old)))


def omega(bcal: float, epsilon: float, beta: float, ltilde: float) -> float:
    """Common constant of both eigenvalue bounds, ``4 (B + eps) (L + 1 / (beta + eps))``."""
    return 4.0 * (bcal + epsilon) * (ltilde + 1.0 / (beta + epsilon))


def lemma_slack(pair: CurvaturePair, epsilon: float) -> float:
    """``s_hat^T y_hat - 0.25 ||s_hat||^2 / (h0 + eps)``; non-negative in exact arithmetic."""
    return pair.curvature - 0.25 * float(pair.s_hat @ pair.s_hat) / (pair.h0 + epsilon)


def lemma_rounding_bound(pair: CurvaturePair, epsilon: float) -> float:
    """Worst-case rounding in :func:`lemma_slack`.

    When damping is active the slack is exactly zero in exact arithmetic, so
    the float value lands an ulp or so either side of zero. The bound is the
    usual ``gamma_n * sum |a_j b_j|`` forward error of the dot products, with
    a few extra roundings for forming ``y_hat`` and the right-hand side.
    """
    u = np.finfo(np.float64).eps / 2
    gamma = (2 * pair.s_hat.shape[0] + 8) * u
    # magnitude of y_hat's terms before cancellation
    terms = pair.theta * np.abs(pair.y) + (1.0 - pair.theta) / (pair.h0 + epsilon) * np.abs(pair.s_hat)
    mag = float(np.abs(pair.s_hat) @ terms)
    rhs = 0.25 * float(pair.s_hat @ pair.s_hat) / (pair.h0 + epsilon)
    return gamma * (mag + rhs)
