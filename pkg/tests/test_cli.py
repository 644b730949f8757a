import json

import pytest

from riemopt import io
from riemopt.cli import (BUILTIN_MATRICES, ConfigError, ExperimentConfig, main, make_config,
                         parse_config, read_component_trace, run_experiment, run_matrix)

TREE = "builtin:tree15"


@pytest.fixture
def edges(tmp_path):
    p = tmp_path / "edges.tsv"
    p.write_text("b\ta\nc\ta\nd\tb\ne\tb\n")
    return p


def test_parse_ca1_example(tmp_path, edges):
    argv = ["run", "embed", "--data", str(edges), "--opt", "ramsgrad", "--alpha", "0.3",
            "--beta1", "0.9", "--beta2", "0.999", "--eps", "1e-8", "--epochs", "50", "--seed", "7"]
    command, cfg = parse_config(argv, env={})
    assert command == "embed"
    assert (cfg.optimizer, cfg.alpha, cfg.beta1, cfg.beta2, cfg.eps, cfg.epochs, cfg.seed) == \
        ("ramsgrad", 0.3, 0.9, 0.999, 1e-8, 50, 7)
    assert cfg.schedule == "constant" and cfg.out == "riemopt-out"


def test_validation_errors(tmp_path, capsys):
    assert main(["toy", "--alpha", "-1", "--out", str(tmp_path)]) == 2
    assert "alpha" in capsys.readouterr().err
    assert main(["toy", "--no-such-flag"]) == 2
    assert main([]) == 2
    assert main(["embed", "--out", str(tmp_path)]) == 2  # missing --data
    assert main(["toy", "--epochs", "3"]) == 2  # flag of another task


def test_flag_overrides_file(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"alpha": 0.2, "iterations": 7, "seed": 3}))
    _, cfg = parse_config(["toy", "--config", str(cfg_file), "--alpha", "0.05"], env={})
    assert (cfg.alpha, cfg.iterations, cfg.seed) == (0.05, 7, 3)


@pytest.mark.parametrize("payload, message", [
    ({"alpha": 0.1, "bogus": 1}, "unknown key"),
    ({"iterations": "ten"}, "expects int"),
    ({"epochs": 3}, "unknown key"),
    ({"task": "pca"}, "does not match"),
])
def test_config_file_rejections(tmp_path, payload, message):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps(payload))
    with pytest.raises(ConfigError, match=message):
        parse_config(["toy", "--config", str(cfg_file)], env={})


def test_schedule_violation_strict_and_permissive():
    with pytest.raises(ConfigError, match="hypotheses"):
        make_config("toy", {"beta1": 0.5, "beta1_kind": "geometric", "schedule": "diminishing"}, env={})
    cfg = make_config("toy", {"beta1": 0.5, "beta1_kind": "geometric", "schedule": "diminishing",
                              "allow_schedule_violation": True}, env={})
    assert isinstance(cfg, ExperimentConfig)


def test_env_default_output(tmp_path):
    _, cfg = parse_config(["toy"], env={"RIEMOPT_OUT": str(tmp_path / "env")})
    assert cfg.out == str(tmp_path / "env")
    _, cfg = parse_config(["toy", "--out", "x"], env={"RIEMOPT_OUT": "y"})
    assert cfg.out == "x"


def test_embed_zero_epochs(tmp_path):
    cfg = make_config("embed", {"data": TREE, "epochs": 0, "out": str(tmp_path)}, env={})
    run_experiment(cfg)
    schema, _, cols, rows = io.read_table(tmp_path / "metrics.csv")
    assert schema == "embed-metrics" and len(rows) == 1
    assert rows[0]["epoch"] == 0 and rows[0]["mean_loss"] is None and 0 < rows[0]["map"] <= 1


def test_embed_reruns_byte_identical(tmp_path):
    texts = []
    for name in ("a", "b"):
        cfg = make_config("embed", {"data": TREE, "epochs": 3, "seed": 5, "dim": 3,
                                    "out": str(tmp_path / name)}, env={})
        res = run_experiment(cfg)
        assert {p.rsplit("/", 1)[1] for p in res.files} == \
            {"metrics.csv", "timing.csv", "embedding.tsv", "bounds.csv"}
        texts.append([(tmp_path / name / f).read_bytes() for f in ("metrics.csv", "embedding.tsv", "bounds.csv")])
    assert texts[0] == texts[1]


def test_embed_edge_file_and_eval(tmp_path, edges, capsys):
    out = tmp_path / "run"
    assert main(["embed", "--data", str(edges), "--closure", "--epochs", "2", "--out", str(out)]) == 0
    _, _, _, rows = io.read_table(out / "metrics.csv")
    assert main(["eval", "--embedding", str(out / "embedding.tsv"), "--data", str(edges),
                 "--closure", "--out", str(out)]) == 0
    _, _, _, ev = io.read_table(out / "eval.csv")
    assert ev[0]["map"] == pytest.approx(rows[-1]["map"], abs=1e-15)
    assert ev[0]["n_pairs"] == 6


def test_toy_measured_below_bound(tmp_path):
    cfg = make_config("toy", {"schedule": "diminishing", "alpha": 0.05, "beta1": 0.01,
                              "iterations": 300, "log_every": 10, "out": str(tmp_path)}, env={})
    run_experiment(cfg)
    _, meta, _, rows = io.read_table(tmp_path / "bounds.csv")
    assert meta["bound"] == "theorem1" and meta["empirical"] == 0
    assert rows and all(r["measured"] <= r["total"] for r in rows)
    assert rows[-1]["n"] == 300


def test_pca_run(tmp_path):
    cfg = make_config("pca", {"iterations": 400, "log_every": 50, "d": 8, "n": 200, "k": 2,
                              "out": str(tmp_path)}, env={})
    res = run_experiment(cfg)
    _, _, _, rows = io.read_table(tmp_path / "metrics.csv")
    assert [r["iter"] for r in rows] == list(range(0, 401, 50))
    assert rows[-1]["best_gap"] <= rows[0]["gap"]
    assert all(a["best_gap"] >= b["best_gap"] for a, b in zip(rows, rows[1:]))
    assert "pca ramsgrad" in res.summary
    U = io.read_matrix(tmp_path / "U.csv")
    assert U.shape == (8, 2)


def test_pca_from_matrix_file(tmp_path, rng):
    io.write_matrix(tmp_path / "a.csv", rng.standard_normal((40, 5)))
    assert main(["pca", "--data", str(tmp_path / "a.csv"), "--k", "2", "--iterations", "20",
                 "--out", str(tmp_path / "o")]) == 0
    assert main(["pca", "--data", str(tmp_path / "a.csv"), "--k", "9",
                 "--out", str(tmp_path / "o2")]) == 2


def test_builtin_matrices_expand():
    assert [n for n, _ in BUILTIN_MATRICES["constant-paper"]] == \
        ["CS1", "CS2", "CG1", "CG2", "CD1", "CD2", "CA1", "CA2", "CA3", "CA4"]
    assert [n for n, _ in BUILTIN_MATRICES["diminishing-paper"]] == \
        ["DS1", "DS2", "DG1", "DG2", "DD1", "DD2", "DA1", "DA2", "DA3", "DA4"]
    ca2 = dict(BUILTIN_MATRICES["constant-paper"])["CA2"]
    assert (ca2["optimizer"], ca2["alpha"], ca2["beta1"]) == ("ramsgrad", 0.3, 0.001)
    da1 = dict(BUILTIN_MATRICES["diminishing-paper"])["DA1"]
    assert (da1["beta1_kind"], da1["beta1"], da1["schedule"]) == ("geometric", 0.5, "diminishing")


def test_single_variant_matrix_equals_run(tmp_path):
    template = make_config("toy", {"iterations": 50, "out": str(tmp_path / "m")}, env={})
    status, comparison, failed = run_matrix(template, [("only", {"alpha": 0.05})])
    assert status == 0 and failed == 0
    direct = make_config("toy", {"iterations": 50, "alpha": 0.05, "out": str(tmp_path / "d")}, env={})
    run_experiment(direct)
    assert (tmp_path / "m" / "only" / "metrics.csv").read_bytes() == \
        (tmp_path / "d" / "metrics.csv").read_bytes()
    _, _, cols, rows = io.read_table(comparison)
    assert cols == ["iter", "only:avg_subopt"] and len(rows) == 50


def test_matrix_builtin_runs_and_records_failures(tmp_path, capsys):
    assert main(["matrix", "--task", "toy", "--matrix", "constant-paper", "--iterations", "20",
                 "--out", str(tmp_path)]) == 0
    _, _, cols, rows = io.read_table(tmp_path / "comparison.csv")
    assert len(cols) == 11 and len(rows) == 20
    variants = tmp_path / "v.json"
    variants.write_text(json.dumps([{"name": "good", "alpha": 0.1}, {"name": "bad", "alpha": -1.0}]))
    assert main(["matrix", "--task", "toy", "--variants", str(variants), "--iterations", "5",
                 "--out", str(tmp_path / "v")]) == 3
    _, _, _, status = io.read_table(tmp_path / "v" / "status.csv")
    assert [(s["variant"], s["status"]) for s in status] == [("good", "ok"), ("bad", "failed")]


def test_bounds_command(tmp_path, capsys):
    assert main(["bounds", "--theorem", "1", "--N", "4", "--G", "2", "--D", "3", "--n", "1,10,100"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "n,term1,term2,term3,total,measured" and len(lines) == 4
    assert main(["toy", "--iterations", "30", "--beta1", "0.9", "--trace-components",
                 "--out", str(tmp_path)]) == 0
    trace = read_component_trace(tmp_path / "trace.csv")
    assert len(trace.beta1) == 30 and len(trace.grad_norm[0]) == 4
    out = tmp_path / "t2.csv"
    assert main(["bounds", "--theorem", "2", "--D", "3", "--trace", str(tmp_path / "trace.csv"),
                 "--beta1", "0.9", "--T", "10,30", "--output", str(out)]) == 0
    _, meta, _, rows = io.read_table(out)
    assert meta["bound"] == "theorem2" and [r["n"] for r in rows] == [10, 30]
    assert main(["bounds", "--theorem", "1", "--D", "3"]) == 2


def test_io_error_and_cleanup(tmp_path, capsys):
    assert main(["embed", "--data", str(tmp_path / "missing.tsv"), "--out", str(tmp_path / "o")]) == 4
    assert not (tmp_path / "o").exists()
    bad = tmp_path / "bad.tsv"
    bad.write_text("a\tb\nbroken line\n")
    assert main(["embed", "--data", str(bad), "--out", str(tmp_path / "o")]) == 4
    assert "line 2" in capsys.readouterr().err


def test_partial_outputs_removed(tmp_path, monkeypatch):
    import riemopt.cli as cli

    def boom(*a, **k):
        raise FloatingPointError("diverged")

    monkeypatch.setattr(cli, "_write_bounds", boom)
    out = tmp_path / "o"
    cfg = make_config("toy", {"iterations": 5, "out": str(out)}, env={})
    with pytest.raises(FloatingPointError):
        run_experiment(cfg)
    assert not out.exists()
    existing = tmp_path / "keep"
    existing.mkdir()
    (existing / "note.txt").write_text("x")
    assert main(["toy", "--iterations", "5", "--out", str(existing)]) == 3
    assert sorted(p.name for p in existing.iterdir()) == ["note.txt"]
