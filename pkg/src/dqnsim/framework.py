"""Decentralized outer loop: mixing, variance-reduced gradients, gradient tracking.

One iteration at node ``i`` (all neighbour values read from iteration ``k``)::

    d_i   = H_i g_i                    (H_i from the pairs stored so far; g_i if none)
    x_i'  = sum_j w_ij x_j - alpha d_i
    tau_i'= x_i' every T iterations, else tau_i
    v_i'  = mean_{l in S} (grad f_il(x_i') - grad f_il(tau_i')) + grad f_i(tau_i')
    g_i'  = sum_j w_ij g_j + v_i' - v_i
    then the curvature pair (x_i' - x_i, g_i' - g_i) is offered to the memory.

Runs are reproducible from ``RunConfig.seed``: every node samples batches from
its own generator, so the thread count does not change the result.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .curvature import CurvatureMemory, CurvaturePair, lemma_rounding_bound, lemma_slack
from .errors import ContractViolation, Diverged
from .numerics import jacobi_eigh
from .problems import GlobalProblem

TRACKING_RTOL = 1e-11


class IdentityMethod:
    """``H = I``: plain gradient tracking with SVRG-style gradients (first-order baseline)."""

    name = "identity"
    M = 1
    floor = 0.0
    epsilon = 0.0

    def make_pair(self, x_new, x_old, g_new, g_old):
        return None

    def direction(self, memory, g):
        return g.copy()

    def directions(self, memories, G):
        return G.copy()

    def matrix(self, memory, d):
        return np.eye(d)

    def bounds(self):
        return 1.0, 1.0


@dataclass
class NodeState:
    x: np.ndarray
    g: np.ndarray
    v: np.ndarray
    tau: np.ndarray
    grad_at_tau: np.ndarray
    memory: CurvatureMemory
    rng: np.random.Generator
    grad_evals: int = 0


@dataclass
class RunConfig:
    alpha: float
    T: int
    batch: int | list[int]
    method: object = field(default_factory=IdentityMethod)
    iterations: int = 1000
    seed: int = 0
    audit_every: int = 10
    target_error: float | None = None
    max_epochs: float | None = None
    exact_gradients: bool = False
    threads: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ContractViolation(f"step size must be positive and finite, got {self.alpha}")
        if int(self.T) != self.T or self.T < 1:
            raise ContractViolation(f"checkpoint period must be a positive integer, got {self.T}")
        if self.iterations < 0:
            raise ContractViolation("iterations must be >= 0")
        if self.audit_every < 0:
            raise ContractViolation("audit_every must be >= 0 (0 disables the audit)")

    def batch_sizes(self, gp: GlobalProblem) -> list[int]:
        b = self.batch if isinstance(self.batch, (list, tuple)) else [self.batch] * gp.n
        if len(b) != gp.n:
            raise ContractViolation(f"need one batch size per node, got {len(b)} for {gp.n} nodes")
        for i, (bi, p) in enumerate(zip(b, gp.locals)):
            if not 1 <= bi <= p.m:
                raise ContractViolation(f"node {i}: batch size {bi} outside [1, {p.m}]")
        return [int(v) for v in b]


@dataclass(frozen=True)
class Violation:
    kind: str  # "lemma", "theta", "lower", "upper", "floor", "tracking"
    node: int
    iteration: int
    value: float
    bound: float

    def describe(self) -> str:
        return (f"{self.kind} violation at node {self.node}, iteration {self.iteration}: "
                f"value {self.value!r} vs bound {self.bound!r}")


@dataclass
class TraceRecord:
    iteration: int
    epochs: float
    relative_error: float
    min_eig: float | None = None
    max_eig: float | None = None
    bound_m1: float | None = None
    bound_m2: float | None = None


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)
    sigma: float = float("nan")
    violations: list[Violation] = field(default_factory=list)
    pairs_admitted: int = 0
    pairs_rejected: int = 0
    max_tracking_gap: float = 0.0
    diverged: bool = False

    @property
    def passed(self) -> bool:
        return not self.violations

    def epochs_to(self, target: float) -> float | None:
        for r in self.records:
            if r.relative_error <= target:
                return r.epochs
        return None


def init_states(gp: GlobalProblem, x0=None, config: RunConfig | None = None) -> list[NodeState]:
    """Every node starts at ``x0`` (default 0) with ``g = v = grad f_i(x0)`` and empty memory."""
    x0 = np.zeros(gp.d) if x0 is None else np.asarray(x0, dtype=np.float64)
    if x0.shape != (gp.d,):
        raise ContractViolation(f"x0 must have shape ({gp.d},), got {x0.shape}")
    seed = 0 if config is None else config.seed
    M = 1 if config is None else config.method.M
    streams = np.random.SeedSequence(seed).spawn(gp.n)
    states = []
    for p, ss in zip(gp.locals, streams):
        g0 = p.full_grad(x0)
        states.append(NodeState(
            x=x0.copy(), g=g0, v=g0.copy(), tau=x0.copy(), grad_at_tau=g0.copy(),
            memory=CurvatureMemory(M), rng=np.random.default_rng(ss), grad_evals=p.m,
        ))
    return states


@dataclass
class StepInfo:
    pairs: list[CurvaturePair | None]
    tracking_gap: float
    tracking_scale: float


def step(states: list[NodeState], W: np.ndarray, gp: GlobalProblem, config: RunConfig, k: int,
         batch_sizes: list[int] | None = None, pool: ThreadPoolExecutor | None = None):
    """Advance every node from iteration ``k`` to ``k + 1``.

    Returns ``(new_states, info)``. The curvature memory objects are shared
    with the input states and receive the new pair in place.
    """
    method = config.method
    b = batch_sizes or config.batch_sizes(gp)
    X = np.stack([s.x for s in states])
    G = np.stack([s.g for s in states])
    WX = W @ X
    WG = W @ G
    refresh = (k + 1) % config.T == 0
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            D = method.directions([s.memory for s in states], G)
    except OverflowError:
        raise Diverged(None, k + 1, "search direction") from None

    def update(i: int):
        st, p = states[i], gp.locals[i]
        x = WX[i] - config.alpha * D[i]
        evals = st.grad_evals
        if refresh:
            tau, grad_tau = x, p.full_grad(x)
            evals += p.m
        else:
            tau, grad_tau = st.tau, st.grad_at_tau
        if config.exact_gradients:
            v = p.full_grad(x)
        else:
            S = st.rng.choice(p.m, size=b[i], replace=False)
            v = (p.batch_grad(S, x) - p.batch_grad(S, tau)) + grad_tau
            evals += 2 * b[i]
        g = WG[i] + v - st.v
        for what, vec in (("x", x), ("v", v), ("g", g)):
            if not np.all(np.isfinite(vec)):
                raise Diverged(i, k + 1, what)
        pair = method.make_pair(x, st.x, g, st.g)
        if pair is not None and not _pair_finite(pair):
            raise Diverged(i, k + 1, "curvature pair")
        if pair is not None:
            st.memory.push(pair)
        new = dataclasses.replace(st, x=x, g=g, v=v, tau=tau, grad_at_tau=grad_tau, grad_evals=evals)
        return new, pair

    with np.errstate(over="ignore", invalid="ignore"):
        results = list(pool.map(update, range(len(states)))) if pool else [update(i) for i in range(len(states))]
    new_states = [r[0] for r in results]
    g_mean = np.mean([s.g for s in new_states], axis=0)
    v_mean = np.mean([s.v for s in new_states], axis=0)
    scale = max(max(float(np.linalg.norm(s.g)), float(np.linalg.norm(s.v))) for s in new_states)
    return new_states, StepInfo([r[1] for r in results], float(np.linalg.norm(g_mean - v_mean)), scale)


def _pair_finite(pair: CurvaturePair) -> bool:
    vals = (pair.curvature, float(pair.s_hat @ pair.s_hat), float(pair.y_hat @ pair.y_hat), float(pair.y @ pair.y))
    return all(np.isfinite(v) for v in vals)


def relative_error(states: list[NodeState], x_star: np.ndarray, x0: np.ndarray) -> float:
    """``sum_i ||x_i - x*||^2 / (n ||x0 - x*||^2)``."""
    den = len(states) * float(np.sum((x0 - x_star) ** 2))
    if den == 0.0:
        raise ContractViolation("relative error undefined: x0 equals x_star")
    with np.errstate(over="ignore"):
        return sum(float(np.sum((s.x - x_star) ** 2)) for s in states) / den


def epochs(states: list[NodeState], gp: GlobalProblem) -> float:
    return math.fsum(s.grad_evals / p.m for s, p in zip(states, gp.locals)) / len(states)


def audit_matrices(states, method, d, k, hook=None):
    """Explicit ``H_i^k`` for nodes that have one (identity: always)."""
    mats = {}
    for i, st in enumerate(states):
        H = method.matrix(st.memory, d)
        if hook is not None:
            H = hook(i, k, H)
        if H is not None:
            mats[i] = H
    return mats


def _check_pair(pair: CurvaturePair, method, node: int, k: int) -> list[Violation]:
    out = []
    if not 0.0 < pair.theta <= 1.0:
        out.append(Violation("theta", node, k, pair.theta, 1.0))
    bound = 0.25 * float(pair.s_hat @ pair.s_hat) / (pair.h0 + method.epsilon)
    if lemma_slack(pair, method.epsilon) < -lemma_rounding_bound(pair, method.epsilon):
        out.append(Violation("lemma", node, k, pair.curvature, bound))
    return out


def run(gp: GlobalProblem, W: np.ndarray, config: RunConfig, x0=None, sigma: float = float("nan"),
        h_hook: Callable | None = None, on_record: Callable | None = None) -> Trace:
    """Iterate :func:`step` and collect a :class:`Trace`.

    ``h_hook(node, iteration, H) -> H`` may replace audited matrices (used to
    test that the audit catches bad ones). A :class:`Diverged` error carries
    the partial trace in ``.trace``.
    """
    if gp.x_star is None:
        raise ContractViolation("run needs gp.x_star; call centralized_newton first")
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (gp.n, gp.n):
        raise ContractViolation(f"mixing matrix shape {W.shape} does not match {gp.n} nodes")
    x0 = np.zeros(gp.d) if x0 is None else np.asarray(x0, dtype=np.float64)
    method = config.method
    b = config.batch_sizes(gp)
    states = init_states(gp, x0, config)
    m1, m2 = method.bounds()
    trace = Trace(sigma=sigma)
    peak = max(max(float(np.linalg.norm(s.g)), float(np.linalg.norm(s.v))) for s in states)
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None

    def record(k: int):
        rec = TraceRecord(k, epochs(states, gp), relative_error(states, gp.x_star, x0))
        if config.audit_every and k % config.audit_every == 0:
            mats = audit_matrices(states, method, gp.d, k, h_hook)
            if mats:
                nodes = list(mats)
                w = jacobi_eigh(np.stack([mats[i] for i in nodes]), vectors=False)
                lo, hi = w[:, 0], w[:, -1]
                for j, i in enumerate(nodes):
                    if not lo[j] > method.floor:
                        trace.violations.append(Violation("floor", i, k, float(lo[j]), method.floor))
                    if lo[j] < m1:
                        trace.violations.append(Violation("lower", i, k, float(lo[j]), m1))
                    if hi[j] > m2:
                        trace.violations.append(Violation("upper", i, k, float(hi[j]), m2))
                rec.min_eig, rec.max_eig = float(lo.min()), float(hi.max())
                rec.bound_m1, rec.bound_m2 = m1, m2
        trace.records.append(rec)
        if on_record is not None:
            on_record(rec)
        return rec

    try:
        rec = record(0)
        for k in range(config.iterations):
            if config.target_error is not None and rec.relative_error <= config.target_error:
                break
            if config.max_epochs is not None and rec.epochs >= config.max_epochs:
                break
            try:
                states, info = step(states, W, gp, config, k, b, pool)
            except Diverged as exc:
                trace.diverged = True
                exc.trace = trace
                raise
            for i, pair in enumerate(info.pairs):
                if pair is None:
                    if not isinstance(method, IdentityMethod):
                        trace.pairs_rejected += 1
                    continue
                trace.pairs_admitted += 1
                trace.violations.extend(_check_pair(pair, method, i, k + 1))
            peak = max(peak, info.tracking_scale)
            gap = info.tracking_gap / peak if peak > 0 else info.tracking_gap
            trace.max_tracking_gap = max(trace.max_tracking_gap, gap)
            if gap > TRACKING_RTOL:
                trace.violations.append(Violation("tracking", -1, k + 1, gap, TRACKING_RTOL))
            rec = record(k + 1)
    finally:
        if pool is not None:
            pool.shutdown()
    return trace
