"""Tests for settings, experiment config files and the per-run context."""

import logging
from pathlib import Path

import pytest

from apps.bnnsim.dependencies import RunLoggerAdapter, get_run_context, get_service_manager
from common.enums import ActivationKind
from common.exceptions import ConfigurationError, ConstraintError, DataFormatError, DeviceError
from common.schemas import AnalogConstraints, DeviceModel, ExperimentConfig, NetworkConfig
from services.config.config_service import Settings, get_config_service, load_experiment_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


# ============================================================================
# SETTINGS
# ============================================================================


class TestSettings:
    def test_defaults(self):
        settings = Settings()
        assert settings.APP_NAME == "bnnsim"
        assert settings.BNNSIM_DATA_DIR is None
        assert settings.SWEEP_WORKERS == 1

    def test_environment_override(self, monkeypatch, tmp_path):
        monkeypatch.setenv("BNNSIM_DATA_DIR", str(tmp_path))
        monkeypatch.setenv("SWEEP_WORKERS", "4")
        settings = get_config_service().reload_settings()
        assert settings.BNNSIM_DATA_DIR == tmp_path
        assert settings.SWEEP_WORKERS == 4

    def test_dotenv_file(self, tmp_path):
        (tmp_path / ".env").write_text("LOG_LEVEL=DEBUG\n", encoding="utf-8")
        assert get_config_service().reload_settings().LOG_LEVEL == "DEBUG"

    def test_singleton(self):
        assert get_config_service() is get_config_service()
        assert get_config_service().validate_settings()

    def test_resolve_output(self, monkeypatch, tmp_path):
        service = get_config_service()
        assert service.resolve_output(Path("a/b.json")) == Path("a/b.json")
        monkeypatch.setenv("BNNSIM_OUTPUT_DIR", str(tmp_path))
        service.reload_settings()
        assert service.resolve_output(Path("a/b.json")) == tmp_path / "a" / "b.json"
        assert service.resolve_output(Path("/abs/c.csv")) == Path("/abs/c.csv")


# ============================================================================
# EXPERIMENT CONFIG FILES
# ============================================================================


class TestLoadExperimentConfig:
    def test_none_gives_defaults(self):
        config = load_experiment_config(None)
        assert config == ExperimentConfig()
        assert config.network.layer_sizes == [4, 10, 3]

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError, match="not found"):
            load_experiment_config(tmp_path / "absent.json")

    def test_bad_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "trials": 3,\n  oops\n}', encoding="utf-8")
        with pytest.raises(DataFormatError) as info:
            load_experiment_config(path)
        assert info.value.line == 3

    def test_schema_violation(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"device": {"p_stuck_on": 2.0}}', encoding="utf-8")
        with pytest.raises(ConfigurationError, match="device.p_stuck_on"):
            load_experiment_config(path)

    def test_unknown_activation(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"network": {"layer_sizes": [2, 2], "activation_per_layer": ["relu"]}}', encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_experiment_config(path)

    @pytest.mark.parametrize("name", ["iris.json", "iris_deep.json", "mnist.json", "mnist_deep.json"])
    def test_shipped_configs_validate(self, name):
        config = load_experiment_config(CONFIG_DIR / name)
        config.device.check()
        config.constraints.check()
        assert len(config.network.activation_per_layer) == config.network.n_transitions

    def test_with_seed(self):
        config = ExperimentConfig().with_seed(42)
        assert config.network.seed == 42
        assert ExperimentConfig().network.seed == 0

    def test_dump_round_trip(self):
        config = ExperimentConfig(trials=7)
        assert ExperimentConfig.model_validate_json(config.model_dump_json()) == config


# ============================================================================
# PHYSICAL CONSISTENCY
# ============================================================================


class TestPhysicalChecks:
    def test_default_device_and_constraints(self):
        DeviceModel().check()
        AnalogConstraints().check()

    def test_device_order(self):
        with pytest.raises(DeviceError, match="r_on < r_off"):
            DeviceModel(r_on=62000.0, r_off=3000.0).check()

    def test_linear_region(self):
        with pytest.raises(ConstraintError, match="linear region"):
            AnalogConstraints(v_in_max=0.7).check()

    def test_drain_above_gate_overdrive(self):
        with pytest.raises(ConstraintError, match="v_gate - v_t"):
            AnalogConstraints(v_drain_max=0.66).check()

    def test_probability_range(self):
        with pytest.raises(ValueError):
            DeviceModel(p_switch_fail=1.1)


class TestNetworkConfig:
    def test_empty_activations_default_to_sigmoid(self):
        assert NetworkConfig(layer_sizes=[4, 10, 3]).activation_per_layer == [ActivationKind.SIGMOID] * 2

    def test_single_activation_broadcast(self):
        config = NetworkConfig(layer_sizes=[4, 10, 10, 3], activation_per_layer=["tanh"])
        assert config.activation_per_layer == [ActivationKind.TANH] * 3

    def test_activation_count_mismatch(self):
        with pytest.raises(ValueError, match="Expected 2 activations"):
            NetworkConfig(layer_sizes=[4, 10, 3], activation_per_layer=["tanh", "tanh", "tanh"])

    def test_layer_sizes_positive(self):
        with pytest.raises(ValueError):
            NetworkConfig(layer_sizes=[4, 0, 3])

    def test_default_topologies(self):
        assert NetworkConfig.iris_default(deep=True).layer_sizes == [4, 10, 10, 10, 10, 3]
        assert NetworkConfig.mnist_default().layer_sizes == [784, 64, 10]


# ============================================================================
# RUN CONTEXT AND LOGGING
# ============================================================================


class TestRunContext:
    def test_quiet_raises_level(self):
        manager = get_service_manager(quiet=True)
        assert manager.logger.level == logging.WARNING
        assert get_service_manager().logger.level == logging.INFO

    def test_log_prefix(self, caplog):
        ctx = get_run_context("train", seed=9)
        with caplog.at_level(logging.INFO, logger="bnnsim"):
            ctx.logger.info("hello")
        assert f"[{ctx.run_id} train seed=9] hello" in caplog.messages

    def test_prefix_without_seed(self):
        adapter = RunLoggerAdapter(logging.getLogger("bnnsim"), {"run_id": "abc", "command": "cost", "seed": None})
        assert adapter.process("msg", {})[0] == "[abc cost] msg"

    def test_progress_flag(self, monkeypatch):
        assert not get_run_context("eval").progress_enabled
        monkeypatch.setenv("PROGRESS_BARS", "true")
        get_service_manager().reset()
        assert get_run_context("eval").progress_enabled
        assert not get_run_context("eval", quiet=True).progress_enabled

    def test_reset_defers_settings_load(self, monkeypatch, tmp_path):
        get_service_manager().reset()
        monkeypatch.setenv("BNNSIM_OUTPUT_DIR", str(tmp_path / "runs"))
        assert get_run_context("train").settings.BNNSIM_OUTPUT_DIR == tmp_path / "runs"
        assert get_config_service().resolve_output(Path("m.json")) == tmp_path / "runs" / "m.json"
