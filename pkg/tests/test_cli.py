"""End-to-end tests for the command line interface.

Every test drives main() in process with explicit --out / dataset= paths, so
nothing escapes the pytest tmp directories and no subprocesses are spawned.
"""

import json
from types import SimpleNamespace

import numpy as np
import pytest

import vunlearn as vu
from vunlearn.cli import main, parse_config_text
from vunlearn.errors import ConfigurationError

# Small enough that the whole generate/train/evaluate pipeline runs in
# a couple of seconds; same shape as the reference recipe otherwise.
SMALL = dict(
    task_classes=2,
    sensitive_classes=2,
    nuisance_kind="uniform",
    nuisance_dim=4,
    embed_dim_per_factor=2,
    mixing="orthogonal",
    mixing_seed=3,
    n=600,
    hidden=(8, 8),
    split_index=1,
    epochs=8,
    batch_size=64,
    attacker_steps=300,
    seed=5,
)


def write_config(path, **keys):
    lines = []
    for key, value in keys.items():
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    path.write_text("\n".join(lines) + "\n")
    return path


def fake_report(path, gamma, efficacy, utility=0.95):
    report = vu.EvaluationReport(
        efficacy=efficacy,
        baseline_efficacy=0.97,
        utility=utility,
        baseline_utility=0.99,
        chance_level=0.5,
        params_main=100,
        params_with_auxiliary=150,
        macs_per_sample=90,
        train_seconds_per_epoch=0.01,
        inference_seconds_per_epoch=1e-4,
        config={"gamma": [gamma], "eval_attribute": 0},
        seed=1,
    )
    report.save(path)
    return report


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One dataset plus baseline and unlearned runs built by the real commands."""
    root = tmp_path_factory.mktemp("cli_pipeline")
    cfg = write_config(root / "run.cfg", dataset=root / "ds", **SMALL)
    run = root / "run"
    assert main(["generate", "--config", str(cfg)]) == 0
    assert main(["train", "--baseline", "--config", str(cfg), "--out", str(run)]) == 0
    assert main(["train", "--unlearn", "--config", str(cfg), "--out", str(run)]) == 0
    return SimpleNamespace(root=root, cfg=cfg, run=run)


class TestConfigFile:
    def test_comments_and_lists(self):
        text = "epochs=5  # trailing comment\nhidden=8,8\n\n# full-line comment\nbeta=0.5\n"
        assert parse_config_text(text) == {"epochs": 5, "hidden": (8, 8), "beta": 0.5}

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown config key: widht"):
            parse_config_text("widht=8\n")

    def test_unparseable_value_cites_key(self):
        with pytest.raises(ConfigurationError, match="epochs"):
            parse_config_text("epochs=many\n")

    def test_line_without_assignment(self):
        with pytest.raises(ConfigurationError, match="key=value"):
            parse_config_text("epochs 5\n")


class TestGenerate:
    def test_same_seed_same_checksum(self, tmp_path, capsys):
        checksums = []
        for name in ("a", "b"):
            cfg = write_config(tmp_path / f"{name}.cfg", dataset=tmp_path / name, **SMALL)
            assert main(["generate", "--config", str(cfg)]) == 0
            out = capsys.readouterr().out
            checksums.append(out.split("checksum=")[1].split()[0])
        assert checksums[0] == checksums[1]
        a = vu.load_dataset(tmp_path / "a")
        b = vu.load_dataset(tmp_path / "b")
        assert vu.dataset_checksum(a) == vu.dataset_checksum(b)

    def test_refuses_overwrite_without_force(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "run.cfg", dataset=tmp_path / "ds", **SMALL)
        assert main(["generate", "--config", str(cfg)]) == 0
        assert main(["generate", "--config", str(cfg)]) == 2
        assert "--force" in capsys.readouterr().err
        assert main(["generate", "--config", str(cfg), "--force"]) == 0

    def test_missing_required_key(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "run.cfg", sensitive_classes=2, n=50, seed=1)
        assert main(["generate", "--config", str(cfg)]) == 2
        assert "task_classes" in capsys.readouterr().err

    def test_n_zero_rejected(self, tmp_path, capsys):
        keys = dict(SMALL, n=0, dataset=tmp_path / "ds")
        cfg = write_config(tmp_path / "run.cfg", **keys)
        assert main(["generate", "--config", str(cfg)]) == 2
        assert "n must be" in capsys.readouterr().err


class TestTrain:
    def test_baseline_rerun_identical_bytes(self, pipeline, tmp_path):
        rerun = tmp_path / "rerun"
        code = main(["train", "--baseline", "--config", str(pipeline.cfg), "--out", str(rerun)])
        assert code == 0
        first = (pipeline.run / "baseline.ckpt").read_bytes()
        assert (rerun / "baseline.ckpt").read_bytes() == first

    def test_beta_gamma_constraint(self, pipeline, tmp_path, capsys):
        keys = dict(SMALL, dataset=pipeline.root / "ds", beta=0.3, gamma=0.5)
        cfg = write_config(tmp_path / "bad.cfg", **keys)
        code = main(["train", "--unlearn", "--config", str(cfg), "--out", str(tmp_path / "r")])
        assert code == 2
        assert "beta >= gamma" in capsys.readouterr().err

    def test_unlearn_trace_satisfies_breakdown_identity(self, pipeline):
        trace = vu.TrainTrace.from_jsonl(pipeline.run / "unlearned_trace.jsonl")
        assert len(trace.records) == SMALL["epochs"]
        coeffs = vu.derive_coefficients(1.0, 1.0, (1.0,))
        for record in trace.records:
            logged = record.surrogate
            rebuilt = vu.surrogate_loss(coeffs, logged.info_x, logged.info_y, logged.info_z)
            assert rebuilt.surrogate_total == pytest.approx(logged.surrogate_total, abs=1e-9)
            assert rebuilt.term_x == pytest.approx(logged.term_x, abs=1e-9)
            assert rebuilt.term_y == pytest.approx(logged.term_y, abs=1e-9)
            assert rebuilt.term_z == pytest.approx(logged.term_z, abs=1e-9)

    def test_missing_dataset_is_runtime_error(self, tmp_path, capsys):
        keys = dict(SMALL, dataset=tmp_path / "nowhere")
        cfg = write_config(tmp_path / "run.cfg", **keys)
        code = main(["train", "--baseline", "--config", str(cfg), "--out", str(tmp_path / "r")])
        assert code == 1
        assert "dataset not found" in capsys.readouterr().err

    def test_divergence_preserves_partial_trace(self, pipeline, tmp_path, capsys):
        keys = dict(SMALL, dataset=pipeline.root / "ds", epochs=3,
                    beta=0.5, gamma=0.25, lr_aux=1e10)
        cfg = write_config(tmp_path / "hot.cfg", **keys)
        out = tmp_path / "r"
        with np.errstate(over="ignore", invalid="ignore"):
            code = main(["train", "--unlearn", "--config", str(cfg), "--out", str(out)])
        assert code == 1
        assert "non-finite" in capsys.readouterr().err
        trace = vu.TrainTrace.from_jsonl(out / "unlearned_trace.jsonl")
        assert len(trace.records) < 3


class TestEvaluate:
    def test_baseline_against_itself(self, pipeline, tmp_path, capsys):
        ckpt = str(pipeline.run / "baseline.ckpt")
        out = tmp_path / "self_eval"
        code = main(["evaluate", "--config", str(pipeline.cfg), "--out", str(out), ckpt, ckpt])
        assert code == 0
        report = vu.EvaluationReport.load(out / "report.json")
        assert report.efficacy == report.baseline_efficacy
        assert report.utility == report.baseline_utility
        table = capsys.readouterr().out
        assert "metric" in table and "efficacy" in table and "utility" in table

    def test_unlearned_report_fields(self, pipeline, tmp_path):
        out = tmp_path / "eval"
        code = main([
            "evaluate", "--config", str(pipeline.cfg), "--out", str(out),
            str(pipeline.run / "unlearned.ckpt"), str(pipeline.run / "baseline.ckpt"),
        ])
        assert code == 0
        report = vu.EvaluationReport.load(out / "report.json")
        for value in (report.efficacy, report.baseline_efficacy,
                      report.utility, report.baseline_utility):
            assert 0.0 <= value <= 1.0
        aux = vu.AuxiliaryHead.load(pipeline.run / "auxiliary.ckpt")
        assert report.params_with_auxiliary - report.params_main == aux.param_count
        assert report.config["gamma"] == [1.0]
        assert report.seed == SMALL["seed"]
        assert report.inference_seconds_per_epoch > 0

    def test_attacker_seed_decouples_from_training_seed(self, pipeline, tmp_path):
        ckpt = str(pipeline.run / "baseline.ckpt")
        keys = dict(SMALL, dataset=pipeline.root / "ds", attacker_seed=7)
        cfg = write_config(tmp_path / "eval.cfg", **keys)
        out = tmp_path / "eval"
        assert main(["evaluate", "--config", str(cfg), "--out", str(out), ckpt, ckpt]) == 0
        report = vu.EvaluationReport.load(out / "report.json")
        assert report.config["attacker_seed"] == 7
        assert report.efficacy == report.baseline_efficacy

    def test_missing_baseline_checkpoint(self, pipeline, tmp_path, capsys):
        out = tmp_path / "eval"
        code = main([
            "evaluate", "--config", str(pipeline.cfg), "--out", str(out),
            str(pipeline.run / "unlearned.ckpt"), str(pipeline.run / "nope.ckpt"),
        ])
        assert code == 1
        assert "checkpoint not found" in capsys.readouterr().err
        assert not (out / "report.json").exists()


class TestReport:
    def test_sweep_table_sorted_with_ok_flag(self, tmp_path, capsys):
        # written out of order on purpose; the table must sort by gamma
        fake_report(tmp_path / "high.json", gamma=1.0, efficacy=0.52)
        fake_report(tmp_path / "none.json", gamma=0.0, efficacy=0.93)
        fake_report(tmp_path / "mid.json", gamma=0.5, efficacy=0.61)
        code = main(["report", str(tmp_path / "high.json"),
                     str(tmp_path / "none.json"), str(tmp_path / "mid.json")])
        assert code == 0
        out = capsys.readouterr().out
        rows = [line for line in out.splitlines() if line.strip().endswith(".json")]
        gammas = [float(row.split()[0]) for row in rows]
        assert gammas == sorted(gammas) == [0.0, 0.5, 1.0]
        assert "efficacy non-increasing in gamma: ok" in out

    def test_monotonicity_violation_flagged(self, tmp_path, capsys):
        fake_report(tmp_path / "a.json", gamma=0.0, efficacy=0.50)
        fake_report(tmp_path / "b.json", gamma=1.0, efficacy=0.90)
        code = main(["report", str(tmp_path / "a.json"), str(tmp_path / "b.json")])
        assert code == 0
        out = capsys.readouterr().out
        assert "efficacy monotonicity violated" in out
        assert "gamma 0.000 -> 1.000" in out

    def test_single_report_row_echoes_fields(self, tmp_path, capsys):
        fake_report(tmp_path / "one.json", gamma=0.25, efficacy=0.6123, utility=0.9456)
        assert main(["report", str(tmp_path / "one.json")]) == 0
        out = capsys.readouterr().out
        assert "0.250" in out and "0.6123" in out and "0.9456" in out and "0.5000" in out

    def test_empty_argument_list_is_usage_error(self, capsys):
        assert main(["report"]) == 2
        capsys.readouterr()

    def test_version_mismatch_lists_offending_file(self, tmp_path, capsys):
        good = tmp_path / "good.json"
        stale = tmp_path / "stale.json"
        fake_report(good, gamma=0.0, efficacy=0.9)
        fake_report(stale, gamma=1.0, efficacy=0.5)
        payload = json.loads(stale.read_text())
        payload["format_version"] = 99
        stale.write_text(json.dumps(payload))
        code = main(["report", str(good), str(stale)])
        assert code == 1
        err = capsys.readouterr().err
        assert "stale.json" in err and "good.json" not in err

    def test_plot_file_written(self, tmp_path):
        pytest.importorskip("matplotlib")
        fake_report(tmp_path / "a.json", gamma=0.0, efficacy=0.9)
        fake_report(tmp_path / "b.json", gamma=1.0, efficacy=0.5)
        figure = tmp_path / "sweep.png"
        code = main(["report", str(tmp_path / "a.json"), str(tmp_path / "b.json"),
                     "--plot", str(figure)])
        assert code == 0
        assert figure.stat().st_size > 0


class TestSeedFlag:
    def test_flag_overrides_config_seed(self, tmp_path, capsys):
        checksums = []
        for seed in (5, 6):
            cfg = write_config(tmp_path / f"s{seed}.cfg",
                               dataset=tmp_path / f"ds{seed}", **SMALL)
            assert main(["generate", "--config", str(cfg), "--seed", str(seed)]) == 0
            checksums.append(capsys.readouterr().out.split("checksum=")[1].split()[0])
        assert checksums[0] != checksums[1]
