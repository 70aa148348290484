"""Named experiment presets.

Every preset fixes the problem, the graph and per-method settings for
``identity``, ``dfp`` and ``bfgs``. The real-data presets need a LIBSVM file
(``--data``); the ijcnn1 presets fall back to a seeded synthetic surrogate
with the same feature count when no file is given.
"""

from __future__ import annotations

import copy

from .config import ExperimentConfig, MethodSpec, ProblemSpec, RunSpec, TopologySpec
from .errors import ConfigError

_RUN_KEYS = {"alpha", "batch", "batch_ratio", "period"}

# (samples, features) of the public datasets
DATASET_SHAPES = {
    "covtype": (40000, 54),
    "cod-rna": (52000, 8),
    "a6a": (11220, 123),
    "a9a": (32560, 123),
    "ijcnn1": (91700, 22),
}

# surrogate size: 20 nodes x 250 samples
SURROGATE_SAMPLES_PER_NODE = 250


def _ls(lambda_min, lambda_max):
    return dict(kind="synthetic-ls", nodes=20, samples_per_node=500, dim=8,
                lambda_min=lambda_min, lambda_max=lambda_max)


def _libsvm(name, positive_label=None):
    return dict(kind="libsvm", nodes=20, num_features=DATASET_SHAPES[name][1],
                positive_label=positive_label, iota=0.001)


def _surrogate():
    return dict(kind="synthetic-logistic", nodes=20, samples_per_node=SURROGATE_SAMPLES_PER_NODE,
                dim=DATASET_SHAPES["ijcnn1"][1], iota=0.001)


def _dfp(alpha, rho, epsilon, beta, ltilde, M, **run):
    return dict(alpha=alpha, rho=rho, epsilon=epsilon, beta=beta, ltilde=ltilde, memory=M, **run)


def _bfgs(alpha, epsilon, beta, ltilde, M, **run):
    return dict(alpha=alpha, rho=0.0, epsilon=epsilon, beta=beta, ltilde=ltilde, memory=M, **run)


RANDOM_05 = dict(kind="random", varrho=0.5)

PRESETS: dict[str, dict] = {
    "ls-kappa10": dict(
        problem=_ls(0.1, 1.0), topology=RANDOM_05, iterations=2000,
        methods=dict(
            dfp=_dfp(0.6, 1e-5, 3.0, 0.04, 10.0, 20, batch=10),
            bfgs=_bfgs(0.6, 3.0, 0.04, 10.0, 20, batch=10),
            identity=dict(alpha=0.9, batch=1),
        )),
    "ls-kappa2000": dict(
        problem=_ls(0.001, 2.0), topology=RANDOM_05, iterations=3000,
        methods=dict(
            dfp=_dfp(0.6, 1e-5, 5.0, 0.01, 10.0, 20, batch=15),
            bfgs=_bfgs(0.6, 37.0, 0.01, 10.0, 50, batch=15),
            identity=dict(alpha=0.9, batch=1),
        )),
    "covtype": dict(
        problem=_libsvm("covtype", positive_label=1.0), topology=RANDOM_05, iterations=2000,
        methods=dict(
            dfp=_dfp(0.32, 0.01, 0.02, 0.002, 50.0, 3, batch_ratio=0.10),
            bfgs=_bfgs(0.37, 0.001, 0.002, 50.0, 3, batch_ratio=0.10),
            identity=dict(alpha=0.002, batch=5),
        )),
    "cod-rna": dict(
        problem=_libsvm("cod-rna"), topology=RANDOM_05, iterations=2000,
        methods=dict(
            dfp=_dfp(0.3, 0.0002, 0.03, 0.002, 50.0, 20, batch_ratio=0.08),
            bfgs=_bfgs(0.35, 100.0, 0.002, 50.0, 40, batch_ratio=0.10),
            identity=dict(alpha=0.01, batch=2),
        )),
    "a6a": dict(
        problem=_libsvm("a6a"), topology=RANDOM_05, iterations=2000,
        methods=dict(
            dfp=_dfp(0.38, 0.01, 0.005, 0.015, 20.0, 40, batch_ratio=0.10),
            bfgs=_bfgs(0.38, 30.0, 1.2, 20.0, 50, batch_ratio=0.10),
            identity=dict(alpha=0.009, batch=1),
        )),
    "a9a": dict(
        problem=_libsvm("a9a"), topology=RANDOM_05, iterations=2000,
        methods=dict(
            dfp=_dfp(0.38, 0.001, 0.1, 0.5, 50.0, 50, batch_ratio=0.06),
            bfgs=_bfgs(0.35, 30.0, 0.5, 20.0, 50, batch_ratio=0.10),
            identity=dict(alpha=0.004, batch=2),
        )),
    "ijcnn1-batch": dict(
        problem=_surrogate(), topology=RANDOM_05, iterations=2000,
        sweep=("batch", ["0.02", "0.04", "0.06", "0.08", "0.10"]),
        methods=dict(
            dfp=_dfp(0.32, 0.005, 0.005, 0.1, 50.0, 50, batch_ratio=0.06),
            bfgs=_bfgs(0.31, 0.005, 0.1, 50.0, 50, batch_ratio=0.06),
        )),
    "ijcnn1-memory": dict(
        problem=_surrogate(), topology=RANDOM_05, iterations=2000,
        sweep=("memory", ["5", "10", "20", "30", "40", "50"]),
        methods=dict(
            dfp=_dfp(0.32, 0.004, 0.005, 0.001, 50.0, 50, batch_ratio=0.06),
            bfgs=_bfgs(0.31, 0.002, 0.1, 50.0, 50, batch_ratio=0.06),
        )),
}

TOPOLOGY_SWEEP = ["cycle", "star", "0.2", "0.3", "0.5"]
_TOPO_DFP = {
    "cycle": (0.035, 0.003), "star": (0.02, 0.001), "0.2": (0.2, 0.001),
    "0.3": (0.25, 0.001), "0.5": (0.32, 0.005),
}
_TOPO_BFGS = {
    "cycle": (0.06, 0.005, 0.11), "star": (0.07, 0.005, 0.10), "0.2": (0.2, 0.002, 0.06),
    "0.3": (0.3, 0.002, 0.06), "0.5": (0.31, 0.002, 0.06),
}
for _v in TOPOLOGY_SWEEP:
    _a, _r = _TOPO_DFP[_v]
    _ab, _eb, _rb = _TOPO_BFGS[_v]
    PRESETS[f"ijcnn1-topology-{_v}"] = dict(
        problem=_surrogate(),
        topology=dict(kind=_v) if _v in ("cycle", "star") else dict(kind="random", varrho=float(_v)),
        iterations=2000,
        sweep=("topology", TOPOLOGY_SWEEP),
        methods=dict(
            dfp=_dfp(_a, _r, 0.005, 0.1, 50.0, 50, batch_ratio=0.06),
            bfgs=_bfgs(_ab, _eb, 0.1, 50.0, 50, batch_ratio=_rb),
        ))
PRESETS["ijcnn1-topology"] = PRESETS["ijcnn1-topology-0.5"]


def preset_names() -> list[str]:
    return sorted(PRESETS)


def preset(name: str, method: str = "dfp") -> ExperimentConfig:
    """Build the :class:`ExperimentConfig` for ``name`` and ``method``.

    Presets without published first-order settings give the identity method
    the DFP step size and batch.
    """
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}")
    p = PRESETS[name]
    methods = p["methods"]
    if method not in ("identity", "dfp", "bfgs"):
        raise ConfigError(f"unknown method {method!r}")
    if method == "identity" and "identity" not in methods:
        settings = {k: v for k, v in methods["dfp"].items() if k in _RUN_KEYS}
    else:
        settings = dict(methods[method])
    cfg = ExperimentConfig(
        problem=ProblemSpec(**copy.deepcopy(p["problem"])),
        topology=TopologySpec(**p["topology"]),
        method=MethodSpec(name=method, **{k: v for k, v in settings.items() if k not in _RUN_KEYS}),
        run=RunSpec(iterations=p["iterations"], **{k: v for k, v in settings.items() if k in _RUN_KEYS}),
    )
    return cfg


def sweep_default(name: str):
    """``(axis, values)`` published for a sweep preset, or ``None``."""
    return PRESETS.get(name, {}).get("sweep")
