"""Finite-sum objectives held by the nodes, data loading and reference solutions.

The global objective is ``F(x) = (1/n) sum_i f_i(x)`` with
``f_i(x) = (1/m_i) sum_l f_il(x)``. Two losses are supported:

* least squares, ``f_i(x) = 1/2 ||A_i x - b_i||^2``, so the sample cost is
  ``f_il(x) = m_i/2 (a_l^T x - b_l)^2``;
* logistic regression, ``f_il(x) = ln(1 + exp(-p_l o_l^T x)) + iota/2 ||x||^2``.

Sample indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation, ConvergenceError
from .numerics import solve_spd

DEFAULT_IOTA = 0.001


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LocalProblem:
    """Data and gradient oracles of one node."""

    kind: str
    node_id: int

    @property
    def m(self) -> int:
        raise NotImplementedError

    @property
    def d(self) -> int:
        raise NotImplementedError

    def _check_index(self, l: int) -> None:
        if not 0 <= l < self.m:
            raise IndexError(f"sample index {l} out of range [0, {self.m}) on node {self.node_id}")

    def loss(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def full_grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def batch_grad(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Mean of the sample gradients over ``idx``."""
        raise NotImplementedError

    def sample_grad(self, l: int, x: np.ndarray) -> np.ndarray:
        self._check_index(l)
        return self.batch_grad(np.array([l]), x)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass
class LeastSquaresProblem(LocalProblem):
    A: np.ndarray
    b: np.ndarray
    node_id: int = 0
    kind: str = field(default="least_squares", init=False)

    def __post_init__(self):
        if self.A.ndim != 2 or self.A.shape[0] < 1 or self.b.shape != (self.A.shape[0],):
            raise ContractViolation(f"bad least-squares block shapes {self.A.shape}, {self.b.shape}")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    def loss(self, x):
        r = self.A @ x - self.b
        return 0.5 * float(r @ r)

    def full_grad(self, x):
        return self.A.T @ (self.A @ x - self.b)

    def batch_grad(self, idx, x):
        As = self.A[idx]
        return (self.m / len(idx)) * (As.T @ (As @ x - self.b[idx]))

    def hessian(self, x):
        return self.A.T @ self.A


@dataclass
class LogisticProblem(LocalProblem):
    """Features ``O`` (m x d), labels ``p`` in {-1, +1}, ridge weight ``iota``."""

    O: np.ndarray
    p: np.ndarray
    iota: float = DEFAULT_IOTA
    node_id: int = 0
    kind: str = field(default="logistic", init=False)

    def __post_init__(self):
        if self.O.ndim != 2 or self.O.shape[0] < 1 or self.p.shape != (self.O.shape[0],):
            raise ContractViolation(f"bad logistic block shapes {self.O.shape}, {self.p.shape}")
        if not np.all(np.abs(self.p) == 1.0):
            raise ContractViolation("logistic labels must be -1 or +1")

    @property
    def m(self) -> int:
        return self.O.shape[0]

    @property
    def d(self) -> int:
        return self.O.shape[1]

    def loss(self, x):
        z = self.p * (self.O @ x)
        return float(np.mean(np.logaddexp(0.0, -z))) + 0.5 * self.iota * float(x @ x)

    def _grad(self, O, p, x):
        # d/dx ln(1 + exp(-p o^T x)) = -p o sigmoid(-p o^T x)
        w = -p * _sigmoid(-p * (O @ x))
        return O.T @ w / len(p) + self.iota * x

    def full_grad(self, x):
        return self._grad(self.O, self.p, x)

    def batch_grad(self, idx, x):
        return self._grad(self.O[idx], self.p[idx], x)

    def hessian(self, x):
        s = _sigmoid(self.O @ x)
        return (self.O.T * (s * (1.0 - s))) @ self.O / self.m + self.iota * np.eye(self.d)


@dataclass
class GlobalProblem:
    locals: list[LocalProblem]
    x_star: np.ndarray | None = None
    x_true: np.ndarray | None = None

    def __post_init__(self):
        if not self.locals:
            raise ContractViolation("a global problem needs at least one node")
        kinds = {p.kind for p in self.locals}
        dims = {p.d for p in self.locals}
        if len(kinds) != 1 or len(dims) != 1:
            raise ContractViolation(f"nodes disagree on loss kind {kinds} or dimension {dims}")

    @property
    def n(self) -> int:
        return len(self.locals)

    @property
    def d(self) -> int:
        return self.locals[0].d

    @property
    def kind(self) -> str:
        return self.locals[0].kind

    def loss(self, x) -> float:
        return sum(p.loss(x) for p in self.locals) / self.n

    def grad(self, x) -> np.ndarray:
        return sum(p.full_grad(x) for p in self.locals) / self.n

    def hessian(self, x) -> np.ndarray:
        return sum(p.hessian(x) for p in self.locals) / self.n


def full_grad(p: LocalProblem, x) -> np.ndarray:
    return p.full_grad(np.asarray(x, dtype=np.float64))


def sample_grad(p: LocalProblem, l: int, x) -> np.ndarray:
    return p.sample_grad(l, np.asarray(x, dtype=np.float64))


def full_hessian_global(gp: GlobalProblem, x) -> np.ndarray:
    return gp.hessian(np.asarray(x, dtype=np.float64))


# -- synthetic data ---------------------------------------------------------


@dataclass(frozen=True)
class SpectrumSpec:
    """Target spectrum of ``A^T A``: both extremes plus ``d-2`` uniform draws."""

    d: int
    lambda_min: float
    lambda_max: float
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or not 0.0 < self.lambda_min <= self.lambda_max:
            raise ContractViolation(f"invalid spectrum spec {self}")

    def eigenvalues(self) -> np.ndarray:
        if self.d == 1:
            return np.array([self.lambda_min])
        rng = np.random.default_rng([self.seed, 1])
        inner = rng.uniform(self.lambda_min, self.lambda_max, size=self.d - 2)
        return np.sort(np.concatenate([[self.lambda_min, self.lambda_max], inner]))


def synth_least_squares(n: int, m: int, spec: SpectrumSpec, noise: float = 1e-2) -> GlobalProblem:
    """Least squares whose stacked design has ``A^T A`` with the given spectrum.

    ``A = U diag(sqrt(lambda)) V^T`` with ``U`` (nm x d) having orthonormal
    columns and ``V`` orthogonal, both from QR of seeded Gaussian matrices.
    Rows are split into ``n`` consecutive blocks of ``m``;
    ``b = A x_true + noise * N(0, 1)``.
    """
    d = spec.d
    if n < 1 or m < 1 or n * m < d:
        raise ContractViolation(f"need n*m >= d, got n={n}, m={m}, d={d}")
    rng = np.random.default_rng(spec.seed)
    U, _ = np.linalg.qr(rng.standard_normal((n * m, d)))
    V, _ = np.linalg.qr(rng.standard_normal((d, d)))
    A = (U * np.sqrt(spec.eigenvalues())) @ V.T
    x_true = rng.standard_normal(d)
    b = A @ x_true + noise * rng.standard_normal(n * m)
    blocks = [
        LeastSquaresProblem(A[i * m : (i + 1) * m].copy(), b[i * m : (i + 1) * m].copy(), node_id=i)
        for i in range(n)
    ]
    return GlobalProblem(blocks, x_true=x_true)


@dataclass
class Dataset:
    """Labelled samples, one row per sample."""

    features: np.ndarray
    labels: np.ndarray

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]


def synth_classification(num_samples: int, d: int, seed: int = 0, spread: float = 10.0) -> Dataset:
    """Gaussian features with a decaying per-axis scale and labels from a logistic model.

    Stands in for LIBSVM data when the real files are not available; ``spread``
    is the ratio between the largest and smallest feature scale.
    """
    rng = np.random.default_rng(seed)
    scales = spread ** (-np.linspace(0.0, 1.0, d))
    X = rng.standard_normal((num_samples, d)) * scales
    X[:, -1] = 1.0 * scales[0]  # bias feature
    w = rng.standard_normal(d) * 3.0
    prob = _sigmoid(X @ w / np.linalg.norm(X, axis=1).mean())
    y = np.where(rng.uniform(size=num_samples) < prob, 1.0, -1.0)
    return Dataset(X, y)


# -- LIBSVM -----------------------------------------------------------------


def _parse_label(tok: str, positive_label: float | None, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ContractViolation(f"line {lineno}: cannot parse label {tok!r}") from None
    if positive_label is not None:
        return 1.0 if v == positive_label else -1.0
    if v not in (1.0, -1.0):
        raise ContractViolation(f"line {lineno}: unknown label {tok!r} (expected -1 or +1)")
    return v


def parse_libsvm(lines, num_features: int | None = None, positive_label: float | None = None) -> Dataset:
    """Parse LIBSVM sparse lines ``label idx:val ...`` with 1-based indices.

    Indices larger than ``num_features`` widen the feature dimension. With
    ``positive_label`` set, that label maps to +1 and every other label to -1;
    otherwise labels must already be -1/+1.
    """
    labels, rows = [], []
    width = num_features or 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        labels.append(_parse_label(toks[0], positive_label, lineno))
        entries = {}
        for tok in toks[1:]:
            idx, sep, val = tok.partition(":")
            try:
                j = int(idx)
                v = float(val)
            except ValueError:
                raise ContractViolation(f"line {lineno}: malformed feature {tok!r}") from None
            if not sep or j < 1:
                raise ContractViolation(f"line {lineno}: malformed feature {tok!r}")
            entries[j - 1] = v
            width = max(width, j)
        rows.append(entries)
    if not rows:
        raise ContractViolation("no samples found")
    X = np.zeros((len(rows), width))
    for r, entries in enumerate(rows):
        for j, v in entries.items():
            X[r, j] = v
    return Dataset(X, np.array(labels))


def load_libsvm(path, num_features: int | None = None, positive_label: float | None = None) -> Dataset:
    with open(Path(path)) as fh:
        return parse_libsvm(fh, num_features=num_features, positive_label=positive_label)


def normalize_samples(ds: Dataset) -> Dataset:
    """Scale every sample to unit Euclidean norm."""
    norms = np.linalg.norm(ds.features, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ContractViolation(f"sample {int(zero[0])} has zero norm and cannot be normalized")
    return Dataset(ds.features / norms[:, None], ds.labels.copy())


def partition(ds: Dataset, n: int, seed: int = 0, iota: float = DEFAULT_IOTA) -> GlobalProblem:
    """Shuffle samples and deal them to ``n`` nodes; sizes differ by at most one."""
    if not 1 <= n <= ds.num_samples:
        raise ContractViolation(f"cannot split {ds.num_samples} samples over {n} nodes")
    perm = np.random.default_rng(seed).permutation(ds.num_samples)
    parts = np.array_split(perm, n)
    return GlobalProblem(
        [LogisticProblem(ds.features[idx], ds.labels[idx], iota=iota, node_id=i) for i, idx in enumerate(parts)]
    )


# -- reference solution ----------------------------------------------------


def centralized_newton(gp: GlobalProblem, tol: float = 1e-12, max_iter: int = 100, x0=None) -> np.ndarray:
    """Minimize ``F`` with damped Newton steps; stores the result in ``gp.x_star``.

    Stops once ``||grad F(x)|| <= tol``. A step that does not decrease ``F`` is
    halved (up to 30 times) while the gradient is still large, which only
    matters far from the optimum for the logistic loss; least squares
    converges in one step.
    """
    x = np.zeros(gp.d) if x0 is None else np.array(x0, dtype=np.float64)
    for _ in range(max_iter + 1):
        g = gp.grad(x)
        if np.linalg.norm(g) <= tol:
            gp.x_star = x
            return x
        step = solve_spd(gp.hessian(x), g)
        if gp.kind == "least_squares":
            x = x - step
            continue
        f0 = gp.loss(x)
        t = 1.0
        x_new = x - step
        # near the optimum loss differences drown in rounding; take full steps there
        if np.linalg.norm(g) > 1e-8:
            for _ in range(30):
                if gp.loss(x_new) <= f0:
                    break
                t *= 0.5
                x_new = x - t * step
        x = x_new
    raise ConvergenceError(f"Newton did not reach ||grad|| <= {tol:g} in {max_iter} iterations "
                           f"(last ||grad|| = {np.linalg.norm(gp.grad(x)):.3e})")
