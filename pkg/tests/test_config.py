"""Tests for configuration management.

Covers environment-driven Settings, ModelConfig cross-field validation,
TrainConfig/SynthConfig constraints and YAML loading.
"""

from pathlib import Path

import pytest
from pydantic import ValidationError

from src.core.config import (
    ModelConfig,
    Settings,
    TrainConfig,
    load_yaml_config,
    make_model_config,
    make_train_config,
)
from src.core.errors import InvalidConfig


def test_settings_defaults(monkeypatch):
    """Settings fall back to all cores, INFO logging and deterministic kernels."""
    for key in ("EDCFLOW_THREADS", "EDCFLOW_LOG_LEVEL", "EDCFLOW_DETERMINISTIC"):
        monkeypatch.delenv(key, raising=False)

    settings = Settings(_env_file=None)

    assert settings.threads is None
    assert settings.log_level == "INFO"
    assert settings.deterministic is True


def test_settings_loads_from_environment(monkeypatch):
    """Environment variables with the EDCFLOW_ prefix override defaults."""
    monkeypatch.setenv("EDCFLOW_THREADS", "4")
    monkeypatch.setenv("EDCFLOW_LOG_LEVEL", "debug")
    monkeypatch.setenv("EDCFLOW_DETERMINISTIC", "false")

    settings = Settings(_env_file=None)

    assert settings.threads == 4
    assert settings.log_level == "DEBUG"
    assert settings.deterministic is False


@pytest.mark.parametrize("threads", ["0", "-2"])
def test_thread_cap_must_be_positive(monkeypatch, threads):
    monkeypatch.setenv("EDCFLOW_THREADS", threads)

    with pytest.raises(ValidationError) as exc_info:
        Settings(_env_file=None)

    assert any("threads" in str(error) for error in exc_info.value.errors())


def test_unknown_log_level_rejected(monkeypatch):
    monkeypatch.setenv("EDCFLOW_LOG_LEVEL", "VERBOSE")

    with pytest.raises(ValidationError):
        Settings(_env_file=None)


class TestModelConfig:
    """Defaults and cross-field validation of the architecture."""

    def test_defaults(self):
        config = ModelConfig()

        assert (config.bins, config.windows, config.iterations) == (3, 5, 6)
        assert config.scales == [1, 2, 5]
        assert config.flow_stride == 4
        assert config.motion_dim == config.feature_dim + config.corr_dim
        assert config.lookup_dim == 2 * 9 * 9
        assert config.upsample_factor == 2

    def test_motion_dim_follows_enabled_branches(self):
        assert make_model_config(use_correlation=False).motion_dim == 64
        assert make_model_config(use_difference=False).motion_dim == 64

    @pytest.mark.parametrize(
        "overrides",
        [
            {"scales": []},
            {"scales": [2, 1]},
            {"scales": [1, 6]},
            {"feature_dim": 30, "reduction": 4},
            {"use_former_conv": False, "reduction": 2},
            {"use_difference": False, "use_correlation": False},
            {"corr_dim": 62},
            {"flow_stride": 3},
            {"difference_style": "lstm"},
        ],
    )
    def test_invalid_architecture(self, overrides):
        with pytest.raises(InvalidConfig):
            make_model_config(**overrides)

    def test_unknown_field_rejected(self):
        with pytest.raises(InvalidConfig):
            make_model_config(feature_width=32)


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()

        assert config.max_lr == pytest.approx(2e-4)
        assert config.batch == 3
        assert config.betas == (0.9, 0.999)
        assert config.pct_start == pytest.approx(0.05)
        assert config.crop == 64

    @pytest.mark.parametrize("crop", [0, 60, -8])
    def test_crop_must_be_positive_multiple_of_eight(self, crop):
        with pytest.raises(InvalidConfig):
            make_train_config(crop=crop)

    def test_crop_can_be_disabled(self):
        assert make_train_config(crop=None).crop is None


class TestYamlLoading:
    def test_sections_are_optional(self, tmp_path: Path):
        path = tmp_path / "config.yml"
        path.write_text("model:\n  iterations: 4\n", encoding="utf-8")

        model, train, synth = load_yaml_config(path)

        assert model.iterations == 4
        assert train.total_steps == TrainConfig().total_steps
        assert synth.count == 512

    def test_all_sections(self, tmp_path: Path):
        path = tmp_path / "config.yml"
        path.write_text(
            "model:\n  feature_dim: 32\n"
            "train:\n  total_steps: 10\n  seed: 7\n"
            "synth:\n  height: 32\n  width: 48\n",
            encoding="utf-8",
        )

        model, train, synth = load_yaml_config(path)

        assert model.feature_dim == 32
        assert (train.total_steps, train.seed) == (10, 7)
        assert (synth.height, synth.width) == (32, 48)

    def test_invalid_section_raises_invalid_config(self, tmp_path: Path):
        path = tmp_path / "config.yml"
        path.write_text("train:\n  max_lr: -1\n", encoding="utf-8")

        with pytest.raises(InvalidConfig):
            load_yaml_config(path)

    def test_non_mapping_document(self, tmp_path: Path):
        path = tmp_path / "config.yml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")

        with pytest.raises(InvalidConfig):
            load_yaml_config(path)
