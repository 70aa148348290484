import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dqnsim import config as cfgmod
from dqnsim.cli import CSV_COLUMNS, main
from dqnsim.config import ExperimentConfig
from dqnsim.errors import ConfigError
from dqnsim.presets import PRESETS, preset, preset_names


def read_trace(path):
    lines = path.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.reader(ln for ln in lines if not ln.startswith("#")))
    return comments, rows[0], rows[1:]


# -- config -----------------------------------------------------------------


def test_round_trip_preset_configs():
    for name in preset_names():
        for method in ("identity", "dfp", "bfgs"):
            cfg = preset(name, method)
            text = cfgmod.dumps(cfg)
            assert cfgmod.dumps(cfgmod.loads(text)) == text
            assert cfgmod.loads(text) == cfg


finite = st.floats(1e-6, 1e6, allow_nan=False)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=finite, rho=st.floats(0, 1), ratio=st.none() | st.floats(0.001, 1.0),
       kind=st.sampled_from(["random", "cycle", "star"]), out=st.none() | st.text("abc/._-", min_size=1),
       path=st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc")), max_size=20))
def test_round_trip_property(seed, alpha, rho, ratio, kind, out, path):
    cfg = ExperimentConfig(seed=seed, out=out)
    cfg.run.alpha = alpha
    cfg.method.rho = rho
    cfg.topology.kind = kind
    cfg.problem.path = path
    if ratio is None:
        cfg.run.batch = 3
    else:
        cfg.run.batch_ratio = ratio
    once = cfgmod.dumps(cfgmod.loads(cfgmod.dumps(cfg)))
    assert cfgmod.loads(once) == cfg
    assert cfgmod.dumps(cfgmod.loads(once)) == once


def test_rejects_unknown_and_mistyped_keys():
    with pytest.raises(ConfigError, match="unknown key 'alhpa'"):
        cfgmod.loads("[run]\nalhpa = 0.1\n")
    with pytest.raises(ConfigError, match="unknown key or section"):
        cfgmod.loads("[solver]\nx = 1\n")
    with pytest.raises(ConfigError, match="integer"):
        cfgmod.loads("[run]\niterations = 2.5\n")
    with pytest.raises(ConfigError, match="integer"):
        cfgmod.loads("seed = true\n")
    with pytest.raises(ConfigError, match="malformed"):
        cfgmod.loads("[run\n")
    assert cfgmod.loads("[run]\nalpha = 1\n").run.alpha == 1.0


def test_validation_messages():
    cfg = ExperimentConfig()
    with pytest.raises(ConfigError, match="alpha"):
        cfg.validate()
    cfg.run.alpha = 0.1
    with pytest.raises(ConfigError, match="exactly one"):
        cfg.validate()
    cfg.run.batch = 5
    cfg.validate()
    cfg.topology.varrho = 1.5
    with pytest.raises(ConfigError, match="varrho"):
        cfg.validate()


def test_nan_inf_survive_round_trip():
    cfg = preset("ls-kappa10")
    cfg.run.target_error = math.inf
    back = cfgmod.loads(cfgmod.dumps(cfg))
    assert back.run.target_error == math.inf


# -- presets ----------------------------------------------------------------


def test_ls_presets_hold_published_settings():
    d = preset("ls-kappa10", "dfp")
    assert (d.run.alpha, d.method.rho, d.method.epsilon, d.method.beta, d.method.ltilde, d.method.memory,
            d.run.batch) == (0.6, 1e-5, 3.0, 0.04, 10.0, 20, 10)
    assert (d.problem.nodes, d.problem.samples_per_node, d.problem.dim, d.topology.varrho) == (20, 500, 8, 0.5)
    assert d.method.bcal == 1e4
    b = preset("ls-kappa2000", "bfgs")
    assert (b.run.alpha, b.method.epsilon, b.method.beta, b.method.ltilde, b.method.memory, b.run.batch) == (
        0.6, 37.0, 0.01, 10.0, 50, 15)
    assert (b.problem.lambda_min, b.problem.lambda_max) == (0.001, 2.0)


def test_real_data_presets():
    c = preset("covtype", "dfp")
    assert (c.run.alpha, c.method.rho, c.method.epsilon, c.method.beta, c.method.ltilde, c.method.memory,
            c.run.batch_ratio) == (0.32, 0.01, 0.02, 0.002, 50.0, 3, 0.10)
    a9 = preset("a9a", "bfgs")
    assert (a9.run.alpha, a9.method.epsilon, a9.method.beta, a9.method.ltilde, a9.method.memory) == (
        0.35, 30.0, 0.5, 20.0, 50)
    assert preset("a6a").problem.num_features == 123
    assert preset("ijcnn1-topology-star", "bfgs").run.batch_ratio == 0.10
    assert preset("ijcnn1-topology-cycle", "dfp").run.alpha == 0.035
    assert preset("ijcnn1-topology-0.3").topology.varrho == 0.3
    # no published first-order settings: identity borrows the DFP step
    assert preset("ijcnn1-memory", "identity").run.alpha == 0.32
    with pytest.raises(ConfigError):
        preset("nope")
    assert set(PRESETS) >= {"ls-kappa10", "ls-kappa2000", "covtype", "cod-rna", "a6a", "a9a"}


# -- cli --------------------------------------------------------------------


def test_missing_source_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--method", "dfp"])
    assert info.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_run_writes_trace(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code = main(["run", "--preset", "ls-kappa10", "--iters", "30", "--audit-every", "10", "--out", str(out)])
    assert code == 0
    summary = capsys.readouterr().out
    assert "relative_error=" in summary and "audit=pass" in summary and "sigma=" in summary
    comments, header, rows = read_trace(out)
    assert header == CSV_COLUMNS
    assert any(c.startswith("# created") for c in comments)
    assert [int(r[0]) for r in rows] == list(range(31))
    # iteration 0 has no stored pairs yet, so nothing to audit
    assert rows[0][3:] == ["", "", "", ""]
    for r in rows[1:]:
        audited = int(r[0]) % 10 == 0
        assert all((cell != "") == audited for cell in r[3:])
    assert float(rows[0][2]) == pytest.approx(1.0)


def test_deterministic_output_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["run", "--preset", "ls-kappa2000", "--method", "bfgs", "--iters", "25", "--deterministic"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b), "--threads", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert "# created" not in a.read_text()


def test_flags_override_config_file(tmp_path):
    cfg = preset("ls-kappa10", "dfp")
    cfg.run.iterations = 5
    path = tmp_path / "c.toml"
    cfgmod.save(cfg, path)
    out = tmp_path / "o.csv"
    assert main(["run", "--config", str(path), "--alpha", "0.25", "--memory", "3", "--batch-ratio", "4%",
                 "--topology", "cycle", "--out", str(out), "--deterministic"]) == 0
    comments, _, rows = read_trace(out)
    text = "\n".join(comments)
    assert "alpha = 0.25" in text and "memory = 3" in text and "batch_ratio = 0.04" in text
    assert 'kind = "cycle"' in text
    assert len(rows) == 6


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["run", "--preset", "covtype", "--iters", "1"]) == 2
    assert "--data" in capsys.readouterr().err
    assert main(["run", "--preset", "ls-kappa10", "--connectivity", "0.01", "--iters", "1"]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[run]\nbogus = 1\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["run", "--preset", "ls-kappa10", "--iters", "1", "--data", str(tmp_path / "none.txt")]) == 2


def test_divergence_exit_3(capsys):
    assert main(["run", "--preset", "ls-kappa10", "--alpha", "1e8", "--iters", "200", "--audit-every", "0"]) == 3
    assert "status=diverged" in capsys.readouterr().out


def test_verify_passes_and_catches_corruption(tmp_path, capsys):
    assert main(["verify", "--preset", "ls-kappa10", "--method", "bfgs", "--iters", "40"]) == 0
    code = main(["verify", "--preset", "ls-kappa10", "--iters", "20", "--corrupt-h", "3:7"])
    assert code == 4
    err = capsys.readouterr().err
    assert "node 3" in err and "iteration 7" in err


def test_verify_identity_bounds_are_one(tmp_path):
    out = tmp_path / "i.csv"
    assert main(["verify", "--preset", "ls-kappa10", "--method", "identity", "--iters", "5", "--out", str(out)]) == 0
    _, _, rows = read_trace(out)
    assert all(r[3:] == ["1.0", "1.0", "1.0", "1.0"] for r in rows)


def test_libsvm_run(tmp_path):
    rng = np.random.default_rng(0)
    data = tmp_path / "toy.svm"
    lines = []
    for _ in range(200):
        x = rng.standard_normal(3)
        label = 1 if x[0] + 0.3 * rng.standard_normal() > 0 else 2
        lines.append(f"{label} " + " ".join(f"{j + 1}:{v:.6f}" for j, v in enumerate(x)))
    data.write_text("\n".join(lines) + "\n")
    out = tmp_path / "cov.csv"
    args = ["run", "--preset", "covtype", "--data", str(data), "--nodes", "4", "--iters", "30",
            "--deterministic", "--out", str(out)]
    assert main(args) == 0
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first


def test_sweep_memory(tmp_path, capsys):
    code = main(["sweep", "--preset", "ijcnn1-memory", "--values", "5,10", "--iters", "10", "--out", str(tmp_path),
                 "--deterministic"])
    assert code == 0
    assert (tmp_path / "memory-5.csv").exists() and (tmp_path / "memory-10.csv").exists()
    rows = list(csv.reader((tmp_path / "summary.csv").open()))
    assert rows[0][:3] == ["value", "trace", "sigma"]
    assert [r[0] for r in rows[1:]] == ["5", "10"]
    assert "memory = 5" in (tmp_path / "memory-5.csv").read_text()


def test_sweep_topology_uses_per_graph_settings(tmp_path):
    code = main(["sweep", "--preset", "ijcnn1-topology", "--method", "bfgs", "--iters", "3", "--out", str(tmp_path),
                 "--deterministic"])
    assert code == 0
    rows = list(csv.reader((tmp_path / "summary.csv").open()))
    assert [r[0] for r in rows[1:]] == ["cycle", "star", "0.2", "0.3", "0.5"]
    sig = [float(r[2]) for r in rows[1:]]
    assert sig[0] == pytest.approx(0.967, abs=5e-4) and sig[1] == pytest.approx(0.95)
    assert "alpha = 0.06" in (tmp_path / "topology-cycle.csv").read_text()
    assert "alpha = 0.31" in (tmp_path / "topology-0.5.csv").read_text()


def test_sweep_batch_and_errors(tmp_path):
    assert main(["sweep", "--preset", "ls-kappa10", "--axis", "batch", "--values", "2%,0.1", "--iters", "3",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "batch-2pct.csv").exists() and (tmp_path / "batch-0.1.csv").exists()
    assert main(["sweep", "--preset", "ls-kappa10", "--axis", "memory", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--preset", "ls-kappa10", "--axis", "topology", "--values", "torus",
                 "--out", str(tmp_path)]) == 2
