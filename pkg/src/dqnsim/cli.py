"""Command line front-end: ``dqn-sim run|sweep|verify``.

Trace CSV columns::

    iteration,epochs,relative_error,min_eig,max_eig,bound_m1,bound_m2

``min_eig``/``max_eig`` are the extreme eigenvalues of the ``H_i`` over all
nodes on audit iterations and ``bound_m1``/``bound_m2`` the guaranteed
bounds; these four cells are empty on other rows. Lines starting with ``#``
carry the run metadata (a timestamp unless ``--deterministic``, sigma and the
resolved config).

Exit codes: 0 success, 2 bad configuration or usage, 3 divergence,
4 audit failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bfgs import BfgsMethod, BfgsParams
from .config import ExperimentConfig
from .dfp import DfpMethod, DfpParams
from .errors import ConfigError, ContractViolation, ConvergenceError, Diverged
from .framework import IdentityMethod, RunConfig, Trace, TraceRecord, run
from .network import build_topology, metropolis_weights
from .presets import PRESETS, TOPOLOGY_SWEEP, preset, preset_names, sweep_default
from .problems import (
    GlobalProblem,
    SpectrumSpec,
    centralized_newton,
    load_libsvm,
    normalize_samples,
    partition,
    synth_classification,
    synth_least_squares,
)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_AUDIT = 0, 2, 3, 4
CSV_COLUMNS = ["iteration", "epochs", "relative_error", "min_eig", "max_eig", "bound_m1", "bound_m2"]


# ---------------------------------------------------------------- building


def build_problem(cfg: ExperimentConfig) -> GlobalProblem:
    p = cfg.problem
    if p.kind == "synthetic-ls":
        gp = synth_least_squares(p.nodes, p.samples_per_node,
                                 SpectrumSpec(p.dim, p.lambda_min, p.lambda_max, seed=cfg.seed), noise=p.noise)
    else:
        if p.kind == "synthetic-logistic":
            ds = synth_classification(p.nodes * p.samples_per_node, p.dim, seed=cfg.seed)
        else:
            try:
                ds = load_libsvm(p.path, p.num_features, p.positive_label)
            except OSError as exc:
                raise ConfigError(f"cannot read dataset {p.path}: {exc}") from exc
        gp = partition(normalize_samples(ds), p.nodes, seed=cfg.seed, iota=p.iota)
    centralized_newton(gp)
    return gp


def build_method(cfg: ExperimentConfig):
    m = cfg.method
    if m.name == "identity":
        return IdentityMethod()
    if m.name == "dfp":
        return DfpMethod(DfpParams(rho=m.rho, epsilon=m.epsilon, beta=m.beta, bcal=m.bcal,
                                   ltilde=m.ltilde, M=m.memory))
    return BfgsMethod(BfgsParams(epsilon=m.epsilon, beta=m.beta, bcal=m.bcal, ltilde=m.ltilde, M=m.memory))


def batch_sizes(cfg: ExperimentConfig, gp: GlobalProblem) -> list[int]:
    r = cfg.run
    if r.batch is not None:
        return [min(r.batch, p.m) for p in gp.locals]
    return [min(p.m, max(1, round(r.batch_ratio * p.m))) for p in gp.locals]


def default_period(gp: GlobalProblem, b: list[int]) -> int:
    """Checkpoint period when none is configured: about one pass over the local data."""
    return max(1, round(np.mean([p.m for p in gp.locals]) / np.mean(b)))


def run_config(cfg: ExperimentConfig, gp: GlobalProblem, audit_every: int | None = None) -> RunConfig:
    r = cfg.run
    b = batch_sizes(cfg, gp)
    return RunConfig(
        alpha=r.alpha, T=r.period or default_period(gp, b), batch=b, method=build_method(cfg),
        iterations=r.iterations, seed=cfg.seed,
        audit_every=r.audit_every if audit_every is None else audit_every,
        target_error=r.target_error, threads=r.threads,
    )


@dataclass
class Outcome:
    trace: Trace
    sigma: float
    status: str  # "ok", "diverged", "audit-failed"
    message: str = ""

    @property
    def exit_code(self) -> int:
        return {"ok": EXIT_OK, "diverged": EXIT_DIVERGED, "audit-failed": EXIT_AUDIT}[self.status]


def _cell(v) -> str:
    return "" if v is None else repr(float(v))


def _row(rec: TraceRecord) -> list[str]:
    return [str(rec.iteration), _cell(rec.epochs), _cell(rec.relative_error), _cell(rec.min_eig),
            _cell(rec.max_eig), _cell(rec.bound_m1), _cell(rec.bound_m2)]


def _header(cfg: ExperimentConfig, sigma: float, deterministic: bool) -> list[str]:
    lines = ["# dqn-sim trace"]
    if not deterministic:
        lines.append(f"# created {datetime.datetime.now().isoformat(timespec='seconds')}")
    lines.append(f"# sigma = {sigma!r}")
    shown = copy.deepcopy(cfg)
    shown.out = None
    # the thread count never changes the numbers, so it stays out of the file
    lines.extend(("# " + ln).rstrip() for ln in cfgmod.dumps(shown).splitlines() if not ln.startswith("threads ="))
    return lines


def execute(cfg: ExperimentConfig, out: str | None = None, deterministic: bool = False,
            audit_every: int | None = None, h_hook=None) -> Outcome:
    """Build everything from ``cfg``, run it and stream the trace to ``out``."""
    cfg.validate()
    try:
        gp = build_problem(cfg)
        topo = build_topology(cfg.topology.kind, cfg.problem.nodes, cfg.topology.varrho, seed=cfg.seed)
        mix = metropolis_weights(topo)
        rc = run_config(cfg, gp, audit_every)
    except (ContractViolation, ConvergenceError) as exc:
        raise ConfigError(str(exc)) from exc
    sigma = mix.sigma
    fh = None
    try:
        writer = None
        if out:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            fh = open(out, "w", newline="")
            for line in _header(cfg, sigma, deterministic):
                fh.write(line + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
        on_record = (lambda rec: writer.writerow(_row(rec))) if writer else None
        try:
            trace = run(gp, mix.W, rc, sigma=sigma, h_hook=h_hook, on_record=on_record)
        except Diverged as exc:
            return Outcome(exc.trace or Trace(sigma=sigma), sigma, "diverged", str(exc))
    finally:
        if fh is not None:
            fh.close()
    if trace.violations:
        return Outcome(trace, sigma, "audit-failed", trace.violations[0].describe())
    return Outcome(trace, sigma, "ok")


def summary_line(outcome: Outcome) -> str:
    recs = outcome.trace.records
    last = recs[-1] if recs else None
    err = repr(last.relative_error) if last else "nan"
    ep = f"{last.epochs:.4f}" if last else "nan"
    it = last.iteration if last else 0
    audit = "pass" if not outcome.trace.violations else f"fail ({len(outcome.trace.violations)} violations)"
    return (f"iterations={it} relative_error={err} epochs={ep} sigma={outcome.sigma:.6f} "
            f"audit={audit} status={outcome.status}")


# ---------------------------------------------------------------- arguments


def _common(p: argparse.ArgumentParser, source_required: bool = True) -> None:
    src = p.add_mutually_exclusive_group(required=source_required)
    src.add_argument("--config", metavar="PATH", help="experiment config file")
    src.add_argument("--preset", metavar="NAME", help="named preset: " + ", ".join(preset_names()))
    p.add_argument("--method", choices=["identity", "dfp", "bfgs"])
    p.add_argument("--nodes", type=int, metavar="N")
    p.add_argument("--connectivity", type=float, metavar="R", help="edge ratio of a random graph")
    p.add_argument("--topology", choices=["random", "cycle", "star"])
    for name in ("alpha", "rho", "epsilon", "beta", "bcal", "ltilde"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--memory", type=int, metavar="M")
    batch = p.add_mutually_exclusive_group()
    batch.add_argument("--batch", type=int, metavar="B")
    batch.add_argument("--batch-ratio", type=_ratio, metavar="P", help="batch size as a fraction (0.06 or 6%%)")
    p.add_argument("--period", type=int, metavar="T", help="checkpoint refresh period")
    p.add_argument("--iters", type=int, metavar="K")
    p.add_argument("--seed", type=int, metavar="S")
    p.add_argument("--audit-every", type=int, metavar="A", help="0 disables the eigenvalue audit")
    p.add_argument("--target-error", type=float, metavar="E", help="stop once the relative error is below E")
    p.add_argument("--data", metavar="PATH", help="LIBSVM dataset file")
    p.add_argument("--deterministic", action="store_true", help="omit the timestamp header line")
    p.add_argument("--threads", type=int, metavar="N")
    # test hook: make the audited H of NODE at ITER indefinite
    p.add_argument("--corrupt-h", metavar="NODE:ITER", help=argparse.SUPPRESS)


def _ratio(text: str) -> float:
    try:
        return float(text[:-1]) / 100.0 if text.endswith("%") else float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a ratio: {text!r}") from None


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dqn-sim", description="Decentralized stochastic quasi-Newton simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment")
    _common(p_run)
    p_run.add_argument("--out", metavar="PATH", help="trace CSV path")
    p_sweep = sub.add_parser("sweep", help="run one experiment per value of an axis")
    _common(p_sweep)
    p_sweep.add_argument("--axis", choices=["batch", "memory", "topology"])
    p_sweep.add_argument("--values", metavar="V1,V2,...",
                         help="batch ratios, memory sizes, or cycle/star/<varrho>")
    p_sweep.add_argument("--out", metavar="DIR", required=True, help="output directory")
    p_verify = sub.add_parser("verify", help="re-run with the audit on every iteration")
    _common(p_verify)
    p_verify.add_argument("--out", metavar="PATH", help="trace CSV path")
    return parser


def base_config(args) -> ExperimentConfig:
    if args.preset:
        return preset(args.preset, args.method or "dfp")
    cfg = cfgmod.load(args.config)
    if args.method:
        cfg.method.name = args.method
    return cfg


def apply_overrides(cfg: ExperimentConfig, args, skip: str | None = None) -> ExperimentConfig:
    """Copy every flag that was given onto ``cfg``; ``skip`` names a swept axis."""
    p, t, m, r = cfg.problem, cfg.topology, cfg.method, cfg.run
    if args.nodes is not None:
        p.nodes = args.nodes
    if args.data is not None:
        p.kind, p.path = "libsvm", args.data
    if skip != "topology":
        if args.topology is not None:
            t.kind = args.topology
        if args.connectivity is not None:
            t.varrho = args.connectivity
    for name in ("rho", "epsilon", "beta", "bcal", "ltilde"):
        if getattr(args, name) is not None:
            setattr(m, name, getattr(args, name))
    if args.memory is not None and skip != "memory":
        m.memory = args.memory
    if args.alpha is not None:
        r.alpha = args.alpha
    if skip != "batch":
        if args.batch is not None:
            r.batch, r.batch_ratio = args.batch, None
        if args.batch_ratio is not None:
            r.batch, r.batch_ratio = None, args.batch_ratio
    if args.period is not None:
        r.period = args.period
    if args.iters is not None:
        r.iterations = args.iters
    if args.seed is not None:
        cfg.seed = args.seed
    if args.audit_every is not None:
        r.audit_every = args.audit_every
    if args.target_error is not None:
        r.target_error = args.target_error
    if args.threads is not None:
        r.threads = args.threads
    if getattr(args, "out", None) is not None and args.command != "sweep":
        cfg.out = args.out
    return cfg


def corrupt_hook(spec: str | None):
    if not spec:
        return None
    try:
        node, it = (int(v) for v in spec.split(":"))
    except ValueError:
        raise ConfigError(f"--corrupt-h expects NODE:ITER, got {spec!r}") from None

    def hook(i, k, H):
        if i == node and k == it:
            d = H.shape[0] if H is not None else 1
            H = (np.eye(d) if H is None else H.copy())
            H[0, 0] = -abs(H[0, 0]) - 1.0
        return H

    return hook


# ---------------------------------------------------------------- commands


def cli_run(args, audit_every: int | None = None) -> int:
    cfg = apply_overrides(base_config(args), args)
    outcome = execute(cfg, cfg.out, args.deterministic, audit_every, corrupt_hook(args.corrupt_h))
    print(summary_line(outcome))
    if outcome.message:
        print(outcome.message, file=sys.stderr)
    return outcome.exit_code


def cli_verify(args) -> int:
    return cli_run(args, audit_every=1)


def _sweep_value(axis: str, text: str):
    if axis == "batch":
        return _ratio(text)
    if axis == "memory":
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"memory sizes must be integers, got {text!r}") from None
    if text in ("cycle", "star"):
        return text
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"topology values are cycle, star or a connectivity ratio, got {text!r}") from None


def _topology_variant(name: str | None, value: str) -> str | None:
    """Per-topology preset for a sweep value, if the preset family has one."""
    if not name:
        return None
    base = name
    for v in TOPOLOGY_SWEEP:
        if name.endswith("-" + v):
            base = name[: -len(v) - 1]
    cand = f"{base}-{value}"
    return cand if cand in PRESETS else None


def sweep_configs(args) -> list[tuple[str, ExperimentConfig]]:
    axis, values = args.axis, args.values.split(",") if args.values else None
    default = sweep_default(args.preset) if args.preset else None
    if axis is None:
        if default is None:
            raise ConfigError("--axis is required for this config")
        axis = default[0]
    if values is None:
        if default is None or default[0] != axis:
            raise ConfigError("--values is required for this config")
        values = list(default[1])
    out = []
    for text in values:
        text = text.strip()
        v = _sweep_value(axis, text)
        variant = _topology_variant(args.preset, text) if axis == "topology" else None
        cfg = preset(variant, args.method or "dfp") if variant else base_config(args)
        if axis == "batch":
            cfg.run.batch, cfg.run.batch_ratio = None, v
        elif axis == "memory":
            cfg.method.memory = v
        elif v in ("cycle", "star"):
            cfg.topology.kind = v
        else:
            cfg.topology.kind, cfg.topology.varrho = "random", v
        out.append((text, apply_overrides(cfg, args, skip=axis)))
    return out


def cli_sweep(args) -> int:
    runs = sweep_configs(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    axis = args.axis or sweep_default(args.preset)[0]
    rows, worst = [], EXIT_OK
    for text, cfg in runs:
        path = outdir / f"{axis}-{text.replace('%', 'pct')}.csv"
        outcome = execute(cfg, str(path), args.deterministic, None, corrupt_hook(args.corrupt_h))
        print(f"{axis}={text} " + summary_line(outcome))
        last = outcome.trace.records[-1] if outcome.trace.records else None
        target = cfg.run.target_error
        reached = outcome.trace.epochs_to(target) if target else None
        rows.append([text, path.name, repr(outcome.sigma), str(last.iteration if last else 0),
                     _cell(last.epochs if last else None), _cell(last.relative_error if last else None),
                     _cell(reached), outcome.status])
        worst = max(worst, outcome.exit_code)
    with open(outdir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "trace", "sigma", "iterations", "epochs", "relative_error",
                    "epochs_to_target", "status"])
        w.writerows(rows)
    return worst


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cli_run(args)
        if args.command == "verify":
            return cli_verify(args)
        return cli_sweep(args)
    except ConfigError as exc:
        print(f"dqn-sim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
