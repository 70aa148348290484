"""Experiment configuration: a flat TOML file with four sections.

Example::

    seed = 1
    out = "trace.csv"

    [problem]
    kind = "synthetic-ls"
    nodes = 20
    samples_per_node = 500
    dim = 8
    lambda_min = 0.1
    lambda_max = 1.0

    [topology]
    kind = "random"
    varrho = 0.5

    [method]
    name = "dfp"
    rho = 1e-05
    ...

    [run]
    alpha = 0.6
    batch = 10
    iterations = 2000

Unknown sections or keys are rejected. :func:`dumps` writes keys in a fixed
order and skips unset ones, so ``dumps(loads(dumps(c))) == dumps(c)``.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

PROBLEM_KINDS = ("synthetic-ls", "synthetic-logistic", "libsvm")
TOPOLOGY_KINDS = ("random", "cycle", "star")
METHOD_NAMES = ("identity", "dfp", "bfgs")


@dataclass
class ProblemSpec:
    kind: str = "synthetic-ls"
    nodes: int = 20
    # synthetic problems: samples per node and dimension
    samples_per_node: int = 500
    dim: int = 8
    lambda_min: float = 0.1
    lambda_max: float = 1.0
    noise: float = 0.01
    # libsvm data
    path: str | None = None
    num_features: int | None = None
    positive_label: float | None = None
    iota: float = 0.001


@dataclass
class TopologySpec:
    kind: str = "random"
    varrho: float = 0.5


@dataclass
class MethodSpec:
    name: str = "dfp"
    rho: float = 1e-5
    epsilon: float = 3.0
    beta: float = 0.04
    bcal: float = 1e4
    ltilde: float = 10.0
    memory: int = 20


@dataclass
class RunSpec:
    alpha: float | None = None
    batch: int | None = None
    batch_ratio: float | None = None
    period: int | None = None
    iterations: int = 1000
    audit_every: int = 10
    target_error: float | None = None
    threads: int = 1


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str | None = None
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    topology: TopologySpec = field(default_factory=TopologySpec)
    method: MethodSpec = field(default_factory=MethodSpec)
    run: RunSpec = field(default_factory=RunSpec)

    def validate(self) -> "ExperimentConfig":
        p, t, m, r = self.problem, self.topology, self.method, self.run
        _check(p.kind in PROBLEM_KINDS, f"problem.kind must be one of {PROBLEM_KINDS}, got {p.kind!r}")
        _check(p.nodes >= 1, "problem.nodes must be >= 1")
        if p.kind == "libsvm":
            _check(bool(p.path), "problem.path is required for libsvm data (use --data PATH)")
        else:
            _check(p.samples_per_node >= 1, "problem.samples_per_node must be >= 1")
            _check(p.dim >= 1, "problem.dim must be >= 1")
        if p.kind == "synthetic-ls":
            _check(0 < p.lambda_min <= p.lambda_max, "need 0 < problem.lambda_min <= problem.lambda_max")
            _check(p.dim >= 2 or p.lambda_min == p.lambda_max, "a spectrum with two end points needs dim >= 2")
        _check(p.noise >= 0, "problem.noise must be >= 0")
        _check(p.iota >= 0, "problem.iota must be >= 0")
        _check(t.kind in TOPOLOGY_KINDS, f"topology.kind must be one of {TOPOLOGY_KINDS}, got {t.kind!r}")
        if t.kind == "random":
            _check(0 < t.varrho <= 1, f"topology.varrho must be in (0, 1], got {t.varrho}")
        _check(m.name in METHOD_NAMES, f"method.name must be one of {METHOD_NAMES}, got {m.name!r}")
        _check(m.memory >= 1, "method.memory must be >= 1")
        _check(m.rho >= 0 and m.epsilon >= 0, "method.rho and method.epsilon must be >= 0")
        _check(m.beta > 0 and m.ltilde > 0, "method.beta and method.ltilde must be > 0")
        _check(m.bcal >= m.beta, "method.bcal must be >= method.beta")
        _check(r.alpha is not None, "run.alpha is required (set it in the config or pass --alpha)")
        _check(r.alpha > 0 and math.isfinite(r.alpha), "run.alpha must be positive and finite")
        _check((r.batch is None) != (r.batch_ratio is None), "set exactly one of run.batch and run.batch_ratio")
        if r.batch is not None:
            _check(r.batch >= 1, "run.batch must be >= 1")
        else:
            _check(0 < r.batch_ratio <= 1, "run.batch_ratio must be in (0, 1]")
        _check(r.period is None or r.period >= 1, "run.period must be >= 1")
        _check(r.iterations >= 0, "run.iterations must be >= 0")
        _check(r.audit_every >= 0, "run.audit_every must be >= 0")
        _check(r.threads >= 1, "run.threads must be >= 1")
        _check(r.target_error is None or r.target_error > 0, "run.target_error must be > 0")
        return self


def _check(ok: bool, msg: str) -> None:
    if not ok:
        raise ConfigError(msg)


_SECTIONS = {"problem": ProblemSpec, "topology": TopologySpec, "method": MethodSpec, "run": RunSpec}
_TOP_KEYS = ("seed", "out")


def _field_types(cls) -> dict[str, str]:
    return {f.name: f.type for f in dataclasses.fields(cls)}


def _coerce(where: str, typ: str, value):
    """Check a parsed TOML value against the annotation string of its field."""
    base = typ.replace(" | None", "")
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if base == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    raise AssertionError(typ)


def from_dict(data: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    top = _field_types(ExperimentConfig)
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table")
            section = getattr(cfg, key)
            types = _field_types(_SECTIONS[key])
            for k, v in value.items():
                if k not in types:
                    raise ConfigError(f"unknown key {k!r} in [{key}]")
                setattr(section, k, _coerce(f"{key}.{k}", types[k], v))
        elif key in _TOP_KEYS:
            setattr(cfg, key, _coerce(key, top[key], value))
        else:
            raise ConfigError(f"unknown key or section {key!r}")
    return cfg


def loads(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return from_dict(data)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def _fmt(value) -> str:
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def to_dict(cfg: ExperimentConfig) -> dict:
    out = {k: getattr(cfg, k) for k in _TOP_KEYS if getattr(cfg, k) is not None}
    for name in _SECTIONS:
        out[name] = {k: v for k, v in dataclasses.asdict(getattr(cfg, name)).items() if v is not None}
    return out


def dumps(cfg: ExperimentConfig) -> str:
    lines = []
    d = to_dict(cfg)
    for k in _TOP_KEYS:
        if k in d:
            lines.append(f"{k} = {_fmt(d[k])}")
    for name in _SECTIONS:
        lines.append("")
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in d[name].items())
    return "\n".join(lines) + "\n"


def save(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
