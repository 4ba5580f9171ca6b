"""Tests for motion fusion, the update block, convex upsampling and the full network."""

import pytest
import torch

from src.core.config import make_model_config
from src.core.errors import InvalidConfig, ShapeError
from src.model import EDCFlow, MotionFusion, UpdateBlock, build_model, convex_upsample
from src.model.network import GRU_INIT_BOUND


def windows_for(config, batch=1, height=32, width=32):
    return torch.randn(batch, config.windows + 1, config.bins, height, width)


class TestConvexUpsample:
    @pytest.mark.parametrize("factor", [2, 4, 8])
    def test_constant_field_scaled_by_factor(self, seeded_torch, factor):
        flow = torch.empty(1, 2, 3, 4)
        flow[:, 0], flow[:, 1] = 1.5, -0.5
        mask = torch.randn(1, factor * factor * 9, 3, 4)

        up = convex_upsample(flow, mask, factor)

        assert tuple(up.shape) == (1, 2, 3 * factor, 4 * factor)
        torch.testing.assert_close(up[:, 0], torch.full_like(up[:, 0], 1.5 * factor))
        torch.testing.assert_close(up[:, 1], torch.full_like(up[:, 1], -0.5 * factor))

    def test_output_within_neighbourhood_range(self, seeded_torch):
        flow = torch.randn(2, 2, 4, 4)

        up = convex_upsample(flow, torch.randn(2, 36, 4, 4), 2)

        assert up.max() <= 2 * flow.max() + 1e-5
        assert up.min() >= 2 * flow.min() - 1e-5

    def test_mask_shape_checked(self):
        with pytest.raises(ShapeError):
            convex_upsample(torch.zeros(1, 2, 3, 3), torch.zeros(1, 9, 3, 3), 2)


class TestMotionFusion:
    def test_concatenates_enabled_branches(self, seeded_torch):
        fusion = MotionFusion(4, 4, use_attention=False)
        f_d, f_c = torch.randn(1, 4, 3, 3), torch.randn(1, 4, 3, 3)

        torch.testing.assert_close(fusion(f_d, f_c), torch.cat([f_d, f_c], dim=1))

    def test_single_branch(self, seeded_torch):
        fusion = MotionFusion(0, 8)

        assert tuple(fusion(None, torch.randn(1, 8, 3, 3)).shape) == (1, 8, 3, 3)

    def test_missing_branch(self):
        with pytest.raises(ShapeError):
            MotionFusion(4, 4)(None, torch.zeros(1, 4, 3, 3))

    def test_misaligned_branches(self):
        with pytest.raises(ShapeError):
            MotionFusion(4, 4)(torch.zeros(1, 4, 3, 3), torch.zeros(1, 4, 3, 4))

    def test_no_branch(self):
        with pytest.raises(InvalidConfig):
            MotionFusion(0, 0)


def test_update_block_shapes(seeded_torch):
    block = UpdateBlock(motion_dim=8, context_dim=4, hidden_dim=6, factor=4)
    hidden, context = torch.zeros(1, 6, 3, 3), torch.randn(1, 4, 3, 3)

    hidden, delta = block(hidden, context, torch.randn(1, 8, 3, 3), torch.zeros(1, 2, 3, 3))

    assert tuple(hidden.shape) == (1, 6, 3, 3)
    assert tuple(delta.shape) == (1, 2, 3, 3)
    assert tuple(block.upsample(delta, hidden).shape) == (1, 2, 12, 12)


class TestEDCFlow:
    def test_trace_lengths_and_shapes(self, small_config):
        model = build_model(small_config)

        trace = model.run_iterations(windows_for(small_config, batch=2))

        assert len(trace) == 3
        assert len(trace.deltas) == len(trace.upsampled) == 3
        assert all(tuple(f.shape) == (2, 2, 8, 8) for f in trace.flows)
        assert tuple(trace.final.shape) == (2, 2, 32, 32)

    def test_flow_is_sum_of_residuals(self, small_config):
        model = build_model(small_config, double=True)
        windows = windows_for(small_config).double()

        with torch.no_grad():
            trace = model(windows, iterations=4)

        torch.testing.assert_close(trace.flows[0], trace.deltas[0])
        for k in range(1, 4):
            torch.testing.assert_close(trace.flows[k], trace.flows[k - 1] + trace.deltas[k])

    def test_single_iteration_override(self, small_config):
        trace = build_model(small_config).run_iterations(windows_for(small_config), iterations=1)

        assert len(trace) == 1

    def test_invalid_iterations(self, small_config):
        with pytest.raises(InvalidConfig):
            build_model(small_config).run_iterations(windows_for(small_config), iterations=0)

    def test_wrong_window_count(self, small_config):
        with pytest.raises(ShapeError):
            build_model(small_config).run_iterations(torch.zeros(1, 4, 3, 32, 32))

    def test_size_not_divisible_by_eight(self, small_config):
        with pytest.raises(ShapeError):
            build_model(small_config).run_iterations(windows_for(small_config, height=36))

    @pytest.mark.parametrize(
        "overrides",
        [
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
            {"corr_levels": 1, "corr_radius": 1},
            {"windows": 10, "scales": [1, 2, 5, 10]},
            {"windows": 1, "scales": [1]},
        ],
    )
    def test_architecture_variants_run(self, small_config, overrides):
        config = small_config.model_copy(update=overrides)
        model = build_model(make_model_config(**config.model_dump()))

        trace = model.run_iterations(windows_for(config, height=16, width=24), iterations=2)

        assert tuple(trace.final.shape) == (1, 2, 16, 24)
        assert torch.isfinite(trace.final).all()

    def test_ablations_drop_branches(self, small_config):
        without_difference = EDCFlow(small_config.model_copy(update={"use_difference": False}))
        without_correlation = EDCFlow(small_config.model_copy(update={"use_correlation": False}))

        assert without_difference.difference is None
        assert without_correlation.correlation is None
        assert without_correlation.feature_encoder.coarse is False
        assert without_difference.param_count() < EDCFlow(small_config).param_count()

    def test_param_count_matches_parameters(self, small_config):
        model = EDCFlow(small_config)

        assert model.param_count() == sum(p.numel() for p in model.parameters())

    def test_seeded_construction_is_deterministic(self, small_config):
        first, second = build_model(small_config, seed=7), build_model(small_config, seed=7)

        for a, b in zip(first.parameters(), second.parameters()):
            assert torch.equal(a, b)

    def test_seeded_runs_give_identical_traces(self, small_config):
        traces = []
        for _ in range(2):
            model = build_model(small_config, seed=3, double=True)
            torch.manual_seed(11)
            windows = windows_for(small_config).double()
            with torch.no_grad():
                traces.append(model.run_iterations(windows))

        first, second = traces
        for a, b in zip(first.flows + first.upsampled, second.flows + second.upsampled):
            assert torch.equal(a, b)

    def test_gru_gate_initialization(self, small_config):
        gru = build_model(small_config).update_block.gru

        for conv in (gru.convz, gru.convr, gru.convq):
            assert conv.weight.abs().max() <= GRU_INIT_BOUND
            assert torch.all(conv.bias == 0)

    def test_gradients_stop_at_previous_flow(self, small_config):
        model = build_model(small_config)
        trace = model.run_iterations(windows_for(small_config), iterations=2)

        assert trace.flows[1].grad_fn is not None
        assert trace.flows[0].detach().grad_fn is None
        trace.final.abs().mean().backward()
        assert all(p.grad is not None for p in model.update_block.flow_head.parameters())
