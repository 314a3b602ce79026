"""End-to-end tests of the ``bnnsim`` command line on a small synthetic IRIS file."""

import json
from pathlib import Path

import pytest

from apps.bnnsim.main import main
from common.enums import ExitCode

# ============================================================================
# TEST FIXTURES AND UTILITIES
# ============================================================================


def write_config(path: Path, iris_path: Path, **overrides: object) -> Path:
    payload = {
        "dataset": {"name": "iris", "iris_path": str(iris_path), "train_fraction": 0.75},
        "network": {"layer_sizes": [4, 6, 3], "epochs": 60, "learning_rate": 0.5},
        "trials": 2,
        **overrides,
    }
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


@pytest.fixture
def config_file(tmp_path, iris_csv) -> Path:
    return write_config(tmp_path / "experiment.json", iris_csv)


@pytest.fixture
def binarized(config_file) -> Path:
    """Run train and binarize; returns the config used."""
    assert main(["train", "--config", str(config_file), "--seed", "3", "--quiet"]) == ExitCode.OK
    assert main(["binarize", "--quiet"]) == ExitCode.OK
    return config_file


def read_report(path: str = "artifacts/eval_report.json") -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ============================================================================
# EXIT CODES
# ============================================================================


class TestExitCodes:
    def test_missing_subcommand(self):
        assert main([]) == ExitCode.USAGE

    def test_unknown_flag(self):
        assert main(["cost", "--bogus"]) == ExitCode.USAGE

    def test_train_requires_seed(self, config_file):
        assert main(["train", "--config", str(config_file)]) == ExitCode.USAGE

    def test_sweep_requires_seed(self):
        assert main(["sweep", "--param", "sigma_r", "--from", "0", "--to", "0.1", "--steps", "2"]) == ExitCode.USAGE

    def test_missing_config(self, tmp_path):
        assert main(["cost", "--config", str(tmp_path / "absent.json")]) == ExitCode.DATA

    def test_missing_model(self):
        assert main(["binarize"]) == ExitCode.DATA

    def test_missing_dataset(self, tmp_path):
        config = write_config(tmp_path / "c.json", tmp_path / "no-iris.csv")
        assert main(["train", "--config", str(config), "--seed", "1"]) == ExitCode.DATA

    def test_analog_on_trained_model(self, config_file):
        assert main(["train", "--config", str(config_file), "--seed", "3", "--quiet"]) == ExitCode.OK
        assert main(["eval", "--mode", "analog", "--model", "artifacts/model.json"]) == ExitCode.USAGE

    def test_constraint_violation(self, binarized, tmp_path, iris_csv):
        bad = write_config(tmp_path / "bad.json", iris_csv, constraints={"v_in_max": 0.7})
        assert main(["eval", "--mode", "analog", "--config", str(bad)]) == ExitCode.CONSTRAINT


# ============================================================================
# PIPELINE
# ============================================================================


class TestPipeline:
    def test_print_config(self, config_file, capsys):
        assert main(["train", "--config", str(config_file), "--seed", "9", "--print-config"]) == ExitCode.OK
        printed = json.loads(capsys.readouterr().out)
        assert printed["network"]["seed"] == 9
        assert printed["network"]["activation_per_layer"] == ["sigmoid", "sigmoid"]
        assert not Path("artifacts/model.json").exists()

    def test_train_summary(self, config_file, capsys):
        assert main(["train", "--config", str(config_file), "--seed", "3"]) == ExitCode.OK
        out = capsys.readouterr().out
        assert out.startswith("train: wrote artifacts/model.json (seed=3")
        document = json.loads(Path("artifacts/model.json").read_text(encoding="utf-8"))
        assert document["seed"] == 3
        assert len(document["training_loss_history"]) == 61

    def test_analog_equals_digital(self, binarized, capsys):
        assert main(["eval", "--mode", "digital"]) == ExitCode.OK
        digital = read_report()
        assert main(["eval", "--mode", "analog", "--state-out", "artifacts/state.json"]) == ExitCode.OK
        analog = read_report()
        assert analog["accuracy"] == digital["accuracy"]
        assert analog["n_samples"] == digital["n_samples"] == 15
        assert analog["seed"] == 3
        assert analog["split"].startswith("iris seeded 75/25 split (seed=3)")
        assert len(analog["column_current_ranges"]) == 2
        assert Path("artifacts/state.json").is_file()
        assert "eval: analog accuracy" in capsys.readouterr().out

    def test_eval_trained_model_digitally(self, config_file):
        assert main(["train", "--config", str(config_file), "--seed", "4", "--quiet"]) == ExitCode.OK
        assert main(["eval", "--model", "artifacts/model.json", "--out", "digital.json"]) == ExitCode.OK
        assert read_report("digital.json")["mode"] == "digital"

    def test_sweep_csv(self, binarized, capsys):
        args = ["sweep", "--param", "p_switch_fail", "--from", "0", "--to", "0.5", "--steps", "3", "--seed", "1"]
        assert main(args) == ExitCode.OK
        lines = Path("artifacts/sweep.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "seed,trial,p_switch_fail,sigma_r,p_stuck_on,p_stuck_off,accuracy"
        assert len(lines) == 3 * 2 + 1
        assert [line.split(",")[0] for line in lines[1:]] == ["1", "1", "1", "2", "2", "2"]
        assert "sweep: 6 rows over p_switch_fail" in capsys.readouterr().out

    def test_binarize_layer_scales(self, binarized, capsys):
        document = json.loads(Path("artifacts/binary_model.json").read_text(encoding="utf-8"))
        assert document["experiment"]["fit_level_scale"] is True
        assert all(layer["levels"]["w_high"] != 1.0 for layer in document["layers"])
        assert main(["binarize", "--fixed-levels", "--out", "fixed.json"]) == ExitCode.OK
        assert "layer_scales=[1,1]" in capsys.readouterr().out
        fixed = json.loads(Path("fixed.json").read_text(encoding="utf-8"))
        assert fixed["experiment"]["fit_level_scale"] is False
        assert all(layer["levels"]["w_high"] == 1.0 for layer in fixed["layers"])

    def test_output_dir(self, config_file, monkeypatch, tmp_path):
        monkeypatch.setenv("BNNSIM_OUTPUT_DIR", str(tmp_path / "runs"))
        assert main(["train", "--config", str(config_file), "--seed", "3", "--quiet"]) == ExitCode.OK
        assert (tmp_path / "runs" / "artifacts" / "model.json").is_file()


# ============================================================================
# COST, CURVES AND METRICS
# ============================================================================


class TestAuxiliaryCommands:
    def test_cost_reference(self, capsys):
        assert main(["cost", "--reference"]) == ExitCode.OK
        out = capsys.readouterr().out
        assert "1072.4 mW" in out
        document = json.loads(Path("artifacts/cost_report.json").read_text(encoding="utf-8"))
        assert document["latency_slots"] == 20

    def test_cost_activation(self):
        assert main(["cost", "--activation", "tanh", "--out", "tanh.json"]) == ExitCode.OK
        document = json.loads(Path("tanh.json").read_text(encoding="utf-8"))
        assert any(item["component"] == "voltage_shift" for item in document["itemized"])

    def test_cost_rejects_unknown_activation(self):
        assert main(["cost", "--activation", "relu"]) == ExitCode.USAGE

    def test_curves(self, tmp_path):
        assert main(["curves", "--points", "3", "--step-out", "step.csv"]) == ExitCode.OK
        assert len(Path("artifacts/curves.csv").read_text(encoding="utf-8").splitlines()) == 4
        assert len(Path("step.csv").read_text(encoding="utf-8").splitlines()) == 4

    def test_metrics_out(self):
        assert main(["cost", "--metrics-out", "metrics.prom"]) == ExitCode.OK
        assert "bnnsim_inference_samples_total" in Path("metrics.prom").read_text(encoding="utf-8")
