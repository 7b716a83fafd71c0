"""Command-line entry points, option precedence, and error reporting."""

import json

import pytest

from activerank.cli import main

FAST_LOOP = [
    "--r", "20", "--s", "10", "--K", "2", "--T", "5",
    "--epochs", "10", "--batch-size", "16", "--lr", "1e-2",
    "--hidden", "8", "--patience", "5",
]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def manifest(workdir):
    path = workdir / "data.jsonl"
    code = main([
        "synth", "--out", str(path), "--n", "200", "--dim", "3",
        "--noise", "0.3", "--seed", "0",
    ])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def sim_run(workdir, manifest):
    """One completed loop-sim run shared by the eval and report tests."""
    out = workdir / "run_a"
    code = main([
        "loop-sim", "--manifest", str(manifest), "--out", str(out), *FAST_LOOP,
    ])
    assert code == 0
    return out


# -- synth ----------------------------------------------------------------------


def test_synth_writes_header_plus_samples(workdir, capsys):
    out = workdir / "synth_small.jsonl"
    assert main(["synth", "--out", str(out), "--n", "40", "--dim", "2"]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 41
    header = json.loads(lines[0])
    assert header["num_levels"] == 4
    assert "wrote 40 samples" in capsys.readouterr().out


def test_synth_is_byte_deterministic(workdir):
    a, b = workdir / "det_a.jsonl", workdir / "det_b.jsonl"
    for path in (a, b):
        assert main(["synth", "--out", str(path), "--n", "30", "--seed", "9"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_synth_rejects_malformed_priors(workdir, capsys):
    out = workdir / "never.jsonl"
    code = main(["synth", "--out", str(out), "--priors", "0.5,abc"])
    assert code == 2
    assert capsys.readouterr().err.startswith("error:usage:")
    assert not out.exists()


def test_synth_rejects_unnormalized_priors(workdir, capsys):
    code = main(["synth", "--out", str(workdir / "never2.jsonl"), "--priors", "0.9,0.9"])
    assert code == 2
    assert capsys.readouterr().err.startswith("error:data:")


# -- option precedence ------------------------------------------------------------


def test_config_file_overrides_defaults(workdir):
    cfg = workdir / "synth.cfg"
    cfg.write_text("# sample config\nn = 25\nseed = 4\n")
    out = workdir / "from_cfg.jsonl"
    assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 26


def test_flag_overrides_config_file(workdir):
    cfg = workdir / "synth2.cfg"
    cfg.write_text("n = 25\n")
    out = workdir / "from_flag.jsonl"
    assert main(["synth", "--config", str(cfg), "--out", str(out), "--n", "12"]) == 0
    assert len(out.read_text().splitlines()) == 13


def test_unknown_config_key_is_an_error(workdir, capsys):
    cfg = workdir / "bad.cfg"
    cfg.write_text("frobnicate = 9\n")
    code = main(["synth", "--config", str(cfg), "--out", str(workdir / "x.jsonl")])
    assert code == 2
    assert "error:usage:" in capsys.readouterr().err


def test_usage_errors_from_argparse(capsys):
    assert main(["synth", "--no-such-flag"]) == 2
    assert capsys.readouterr().err.startswith("error:usage:")
    assert main([]) == 2  # bare invocation prints help


# -- loop-sim ----------------------------------------------------------------------


def test_loop_sim_budget_arithmetic(sim_run):
    # 200 samples in 20 groups; a 5-fold 60/20/20 split trains on 120 ids
    state = json.loads((sim_run / "fold_0" / "round_02" / "state.json").read_text())
    assert state["labeled_count"] == 24 + 2 * 12  # floor(20%) + 2 * floor(10%)
    assert state["nominal_ratio"] == 40.0
    rounds = sorted(p.name for p in (sim_run / "fold_0").glob("round_*"))
    assert rounds == ["round_00", "round_01", "round_02"]


def test_loop_sim_reports_and_manifest(sim_run):
    fold_dir = sim_run / "fold_0"
    for name in ("eval.json", "headline_accuracy.csv", "accuracy_curve.csv", "score_distributions.csv",
                 "selection_mix.csv", "uncertainty_by_class.csv", "sequence_traces.csv"):
        assert (fold_dir / name).exists(), name
    summary = json.loads((sim_run / "summary.json").read_text())
    assert "fold_0" in summary and "mean_overall_accuracy" in summary
    produced = json.loads((sim_run / "produced_files.json").read_text())["files"]
    assert "summary.json" in produced
    for rel in produced:
        assert (sim_run / rel).is_file(), rel
    curve = json.loads((fold_dir / "eval.json").read_text())["accuracy_curve"]
    assert [ratio for ratio, _ in curve] == [20.0, 30.0, 40.0]


def test_loop_sim_repeat_run_is_byte_identical(workdir, manifest, sim_run):
    out = workdir / "run_b"
    assert main(["loop-sim", "--manifest", str(manifest), "--out", str(out), *FAST_LOOP]) == 0
    for rel in ("fold_0/eval.json", "fold_0/headline_accuracy.csv", "fold_0/accuracy_curve.csv",
                "summary.json"):
        assert (out / rel).read_bytes() == (sim_run / rel).read_bytes(), rel


def test_all_data_strategy_labels_everything(workdir, manifest):
    out = workdir / "run_all"
    code = main([
        "loop-sim", "--manifest", str(manifest), "--out", str(out),
        "--strategy", "all-data", "--T", "5", "--epochs", "5",
        "--batch-size", "32", "--lr", "1e-2", "--hidden", "8",
    ])
    assert code == 0
    rounds = sorted(p.name for p in (out / "fold_0").glob("round_*"))
    assert rounds == ["round_00"]
    state = json.loads((out / "fold_0" / "round_00" / "state.json").read_text())
    assert state["labeled_count"] == 120
    assert state["nominal_ratio"] == 100.0


# -- eval ----------------------------------------------------------------------------


def test_eval_missing_run_dir(workdir, manifest, capsys):
    code = main([
        "eval", "--run", str(workdir / "nope"), "--manifest", str(manifest),
        "--out", str(workdir / "eval_out"),
    ])
    assert code == 2
    assert capsys.readouterr().err.startswith("error:state:")


def test_eval_reproduces_the_sim_report(workdir, manifest, sim_run):
    out = workdir / "eval_out"
    code = main([
        "eval", "--run", str(sim_run / "fold_0"), "--manifest", str(manifest),
        "--out", str(out), "--T", "5", "--seed", "0",
    ])
    assert code == 0
    assert (out / "eval.json").read_bytes() == (sim_run / "fold_0" / "eval.json").read_bytes()
    produced = json.loads((out / "produced_files.json").read_text())["files"]
    assert "eval.json" in produced and "headline_accuracy.csv" in produced


# -- report ---------------------------------------------------------------------------


def test_report_compares_runs_and_tests_significance(workdir, manifest, sim_run, capsys):
    out = workdir / "report_out"
    code = main([
        "report",
        "--run", f"alpha={sim_run / 'fold_0'}",
        "--run", f"beta={sim_run / 'fold_0'}",
        "--manifest", str(manifest),
        "--out", str(out), "--T", "5", "--seed", "0",
        "--mcnemar", "alpha,beta",
    ])
    assert code == 0
    doc = json.loads((out / "report.json").read_text())
    assert set(doc["runs"]) == {"alpha", "beta"}
    # identical runs cannot disagree: no discordant pairs, p = 1
    assert doc["mcnemar"]["statistic"] == 0.0
    assert doc["mcnemar"]["p_value"] == 1.0
    assert (out / "alpha.json").exists()
    assert (out / "beta" / "headline_accuracy.csv").exists()
    assert "p 1" in capsys.readouterr().out


def test_report_rejects_bad_mcnemar_names(workdir, manifest, sim_run, capsys):
    code = main([
        "report", "--run", f"alpha={sim_run / 'fold_0'}",
        "--manifest", str(manifest), "--out", str(workdir / "r2"),
        "--T", "5", "--mcnemar", "alpha,ghost",
    ])
    assert code == 2
    assert capsys.readouterr().err.startswith("error:usage:")


def test_report_rejects_unnamed_run(workdir, manifest, capsys):
    code = main([
        "report", "--run", "just-a-path", "--manifest", str(manifest),
        "--out", str(workdir / "r3"),
    ])
    assert code == 2
    assert "NAME=DIR" in capsys.readouterr().err
