"""EDCFlow network: encoders, cost volume, difference layer and GRU refinement."""

from dataclasses import dataclass, field
from typing import Optional

import torch
from loguru import logger
from torch import Tensor, nn

from src.autodiff.ops import init_weights_
from src.core.config import ModelConfig
from src.core.errors import InvalidConfig, ShapeError
from src.model.correlation import CorrelationEncoder, build_cost_volume
from src.model.diffmotion import DifferenceLayer
from src.model.encoders import (
    ContextEncoder,
    FeatureEncoder,
    encode_context,
    encode_features,
)
from src.model.updater import MotionFusion, UpdateBlock

GRU_INIT_BOUND = 0.05


@dataclass
class IterationTrace:
    """Per-iteration outputs of one refinement run.

    Attributes:
        flows: Fine-level flows f^1..f^K, each (N, 2, H/s, W/s)
        deltas: Residual flows delta_f^1..delta_f^K
        upsampled: Full-resolution flows for every iterate, (N, 2, H, W)
    """

    flows: list[Tensor] = field(default_factory=list)
    deltas: list[Tensor] = field(default_factory=list)
    upsampled: list[Tensor] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.flows)

    @property
    def final(self) -> Tensor:
        return self.upsampled[-1]


class EDCFlow(nn.Module):
    """Event-based optical flow with a 1/8 cost volume and fine-level differences."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        stage_dims = (max(config.feature_dim // 2, 1), config.feature_dim, config.corr_feature_dim)

        self.feature_encoder = FeatureEncoder(
            config.bins,
            stage_dims,
            fine_stride=config.flow_stride,
            fine_dim=config.feature_dim,
            coarse=config.use_correlation,
        )
        self.context_encoder = ContextEncoder(
            config.bins,
            stage_dims,
            hidden_dim=config.hidden_dim,
            context_dim=config.context_dim,
            fine_stride=config.flow_stride,
        )
        self.correlation: Optional[CorrelationEncoder] = (
            CorrelationEncoder(
                config.lookup_dim,
                corr_dim=config.corr_dim,
                radius=config.corr_radius,
                factor=config.upsample_factor,
            )
            if config.use_correlation
            else None
        )
        self.difference: Optional[DifferenceLayer] = (
            DifferenceLayer(
                config.feature_dim,
                config.windows,
                config.scales,
                reduction=config.reduction,
                style=config.difference_style,
                use_scale_attention=config.use_scale_attention,
                use_former_conv=config.use_former_conv,
            )
            if config.use_difference
            else None
        )
        self.fusion = MotionFusion(
            config.feature_dim if config.use_difference else 0,
            config.corr_dim if config.use_correlation else 0,
            use_attention=config.use_channel_attention,
            reduction=config.attention_reduction,
        )
        self.update_block = UpdateBlock(
            config.motion_dim, config.context_dim, config.hidden_dim, config.flow_stride
        )
        self.reset_parameters()

    def reset_parameters(self) -> None:
        """Fan-in uniform convolutions, small-uniform GRU gates, zero biases."""
        init_weights_(self)
        with torch.no_grad():
            gru = self.update_block.gru
            for conv in (gru.convz, gru.convr, gru.convq):
                nn.init.uniform_(conv.weight, -GRU_INIT_BOUND, GRU_INIT_BOUND)

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, windows: Tensor, iterations: Optional[int] = None) -> IterationTrace:
        return self.run_iterations(windows, iterations)

    def run_iterations(self, windows: Tensor, iterations: Optional[int] = None) -> IterationTrace:
        """Refine flow from zero for K iterations.

        Args:
            windows: (N, g+1, B, H, W) voxel grids
            iterations: K (default: config.iterations)

        Returns:
            IterationTrace with K fine flows, residuals and upsampled flows
        """
        iterations = self.config.iterations if iterations is None else iterations
        if iterations < 1:
            raise InvalidConfig(f"iterations must be >= 1, got {iterations}")
        if windows.ndim != 5 or windows.shape[1] != self.config.windows + 1:
            raise ShapeError(
                f"expected (N, {self.config.windows + 1}, B, H, W) windows, "
                f"got {tuple(windows.shape)}"
            )

        features = encode_features(self.feature_encoder, windows)
        state = encode_context(self.context_encoder, windows)
        volume = (
            build_cost_volume(
                features.coarse[:, 0], features.coarse[:, -1], levels=self.config.corr_levels
            )
            if self.correlation is not None
            else None
        )

        hidden, context = state.hidden_init, state.context
        fine = features.fine
        flow = fine.new_zeros(fine.shape[0], 2, *fine.shape[-2:])
        trace = IterationTrace()
        for _ in range(iterations):
            # Sampling coordinates never carry gradients across iterations.
            coords_flow = flow.detach()
            f_c = self.correlation(volume, coords_flow) if self.correlation is not None else None
            f_d = self.difference(fine, coords_flow) if self.difference is not None else None
            motion = self.fusion(f_d, f_c)
            hidden, delta = self.update_block(hidden, context, motion, coords_flow)
            flow = coords_flow + delta

            trace.flows.append(flow)
            trace.deltas.append(delta)
            trace.upsampled.append(self.update_block.upsample(flow, hidden))

        logger.debug(f"Ran {iterations} refinement iterations on {windows.shape[0]} samples")
        return trace


def build_model(config: ModelConfig, seed: int = 0, double: bool = False) -> EDCFlow:
    """Seeded model construction."""
    torch.manual_seed(seed)
    model = EDCFlow(config)
    if double:
        model = model.double()
    logger.info(f"Initialized EDCFlow with {model.param_count()} parameters")
    return model
