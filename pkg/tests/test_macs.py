"""Tests for the analytic MAC and parameter accountant."""

import pytest
import torch

from src.core.config import ModelConfig, make_model_config
from src.core.errors import ScalingError, ShapeError
from src.macs import accountant, count_model, dense_volume_macs, log_log_slope, verify_scaling
from src.macs.accountant import DENSE_MARGIN, encoder_cost
from src.model import EDCFlow
from src.model.encoders import FeatureEncoder


class PresentOutputs(torch.nn.Module):
    """Drop the missing coarse level so the encoder can be traced."""

    def __init__(self, encoder: FeatureEncoder) -> None:
        super().__init__()
        self.encoder = encoder

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, ...]:
        return tuple(out for out in self.encoder(x) if out is not None)


VARIANTS = [
    {},
    {"use_difference": False},
    {"use_correlation": False},
    {"use_channel_attention": False},
    {"use_scale_attention": False},
    {"use_former_conv": False},
    {"reduction": 2},
    {"difference_style": "add"},
    {"difference_style": "concat"},
    {"difference_style": "gru"},
    {"flow_stride": 8},
    {"flow_stride": 2},
    {"windows": 10, "scales": [1, 2, 5, 10]},
]


@pytest.mark.parametrize("overrides", VARIANTS)
def test_param_total_matches_model(small_config, overrides):
    config = make_model_config(**{**small_config.model_dump(), **overrides})

    breakdown = count_model(config, 32, 48)

    assert breakdown.total_params == EDCFlow(config).param_count()


def test_param_total_matches_default_model():
    config = ModelConfig()

    assert count_model(config, 64, 64).total_params == EDCFlow(config).param_count()


def test_cost_volume_formula():
    config = ModelConfig()

    breakdown = count_model(config, 480, 640)

    assert breakdown.cost_volume_macs == (60 * 80) ** 2 * 96
    assert breakdown.entries["cost_volume"].params == 0


def test_difference_layer_linear_in_windows():
    five = count_model(ModelConfig(windows=5), 256, 256).difference_macs
    ten = count_model(ModelConfig(windows=10), 256, 256).difference_macs

    assert 1.8 <= ten / five <= 2.2


def test_totals_are_sums_of_entries():
    breakdown = count_model(ModelConfig(), 64, 96)

    data = breakdown.to_dict()

    assert data["total_macs"] == sum(e["total_macs"] for e in data["entries"].values())
    assert data["total_params"] == sum(e["params"] for e in data["entries"].values())
    assert data["entries"]["update.gru"]["calls"] == 6
    assert data["entries"]["feature_encoder"]["calls"] == 6


def test_ablation_drops_entries():
    no_correlation = count_model(ModelConfig(use_correlation=False), 64, 64)
    no_difference = count_model(ModelConfig(use_difference=False), 64, 64)

    assert "cost_volume" not in no_correlation.entries
    assert no_correlation.cost_volume_macs == 0
    assert no_difference.difference_macs == 0


def test_deterministic():
    first, second = count_model(ModelConfig(), 64, 64), count_model(ModelConfig(), 64, 64)

    assert first.to_dict() == second.to_dict()


def test_rejects_size_not_divisible_by_eight():
    with pytest.raises(ShapeError):
        count_model(ModelConfig(), 60, 64)


def test_dense_volume_formula():
    config = ModelConfig()

    assert dense_volume_macs(config, 64, 64) == 5 * 256**2 * 96


def test_log_log_slope():
    assert log_log_slope([1, 2, 4], [3, 12, 48]) == pytest.approx(2.0)


class TestVerifyScaling:
    def test_default_sweep(self):
        report = verify_scaling(ModelConfig())

        assert report.pixels == [256, 1024, 4096]
        assert report.cost_volume_slope == pytest.approx(2.0)
        assert report.difference_slope == pytest.approx(1.0, abs=0.01)
        assert report.dense_ratio_slope == pytest.approx(1.0, abs=0.01)
        assert report.dense_ratios == sorted(report.dense_ratios)
        assert report.break_even_pixels > 0

    def test_dense_volume_margin_from_break_even(self):
        report = verify_scaling(ModelConfig())

        assert report.margin_sizes() == [512]
        assert report.dense_ratios[-1] >= DENSE_MARGIN
        assert report.dense_ratios[0] < DENSE_MARGIN
        assert report.pixels[1] < report.break_even_pixels <= report.pixels[2]

    def test_dense_volume_shortfall_raises(self, mocker):
        real = accountant.dense_volume_macs
        mocker.patch.object(
            accountant,
            "dense_volume_macs",
            side_effect=lambda config, h, w: real(config, h, w) // (1 if h == 128 else 10),
        )

        with pytest.raises(ScalingError, match="dense volume"):
            verify_scaling(ModelConfig())

    def test_window_sweep_is_linear(self):
        report = verify_scaling(ModelConfig(), windows=(3, 5, 10))

        first = report.dense_by_windows[0] / 3
        assert report.dense_by_windows == [pytest.approx(first * g) for g in (3, 5, 10)]
        counts = report.difference_by_windows
        steps = [b - a for a, b in zip(counts, counts[1:])]
        assert steps[1] / 5 == pytest.approx(steps[0] / 2)

    def test_report_dict(self):
        data = verify_scaling(ModelConfig(), sizes=(64, 128)).to_dict()

        assert set(data) >= {"cost_volume_slope", "difference_slope", "break_even_pixels"}

    def test_out_of_tolerance(self):
        with pytest.raises(ScalingError):
            verify_scaling(ModelConfig(), tolerance=-1.0)

    def test_needs_two_sizes(self):
        with pytest.raises(ScalingError):
            verify_scaling(ModelConfig(), sizes=(64,))


class TestAgainstFlopCounter:
    @pytest.mark.parametrize("stride,coarse", [(4, True), (2, False), (8, True)])
    def test_encoder_macs(self, stride, coarse):
        fvcore_nn = pytest.importorskip("fvcore.nn")
        encoder = FeatureEncoder(3, (8, 16, 24), fine_stride=stride, fine_dim=12, coarse=coarse)

        counted = fvcore_nn.FlopCountAnalysis(PresentOutputs(encoder), torch.zeros(1, 3, 32, 48))
        counted.unsupported_ops_warnings(False)

        macs, params = encoder_cost(3, (8, 16, 24), 32, 48, stride, 12, coarse)
        assert counted.total() == macs
        assert params == sum(p.numel() for p in encoder.parameters())
