"""Parameter-holding wrappers around the functional operation set."""

from torch import Tensor, nn

from src.autodiff.ops import GRUWeights, channel_attention, dwsep_conv3d, gru_cell
from src.core.errors import InvalidConfig


class ConvGRU(nn.Module):
    """Convolutional GRU with 3x3 gate convolutions."""

    def __init__(self, input_dim: int, hidden_dim: int) -> None:
        super().__init__()
        self.hidden_dim = hidden_dim
        self.convz = nn.Conv2d(hidden_dim + input_dim, hidden_dim, 3, padding=1)
        self.convr = nn.Conv2d(hidden_dim + input_dim, hidden_dim, 3, padding=1)
        self.convq = nn.Conv2d(hidden_dim + input_dim, hidden_dim, 3, padding=1)

    def weights(self) -> GRUWeights:
        return GRUWeights(
            self.convz.weight,
            self.convz.bias,
            self.convr.weight,
            self.convr.bias,
            self.convq.weight,
            self.convq.bias,
        )

    def forward(self, hidden: Tensor, x: Tensor) -> Tensor:
        return gru_cell(hidden, x, self.weights())


class ChannelAttention(nn.Module):
    """Squeeze-excite gate: pool -> FC -> ReLU -> FC -> sigmoid -> rescale."""

    def __init__(self, channels: int, reduction: int = 4) -> None:
        super().__init__()
        if reduction < 1 or channels % reduction != 0:
            raise InvalidConfig(f"{channels} channels not divisible by reduction {reduction}")
        self.reduction = reduction
        self.fc1 = nn.Linear(channels, channels // reduction)
        self.fc2 = nn.Linear(channels // reduction, channels)

    def forward(self, x: Tensor) -> Tensor:
        return channel_attention(
            x, self.reduction, self.fc1.weight, self.fc1.bias, self.fc2.weight, self.fc2.bias
        )


class DWSepConv3d(nn.Module):
    """Bias-free depthwise 3D convolution followed by pointwise channel mixing."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: tuple[int, int, int],
        padding: tuple[int, int, int],
    ) -> None:
        super().__init__()
        self.padding = padding
        self.depthwise = nn.Conv3d(
            in_channels, in_channels, kernel_size, padding=padding, groups=in_channels, bias=False
        )
        self.pointwise = nn.Conv3d(in_channels, out_channels, 1, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        return dwsep_conv3d(x, self.depthwise.weight, self.pointwise.weight, padding=self.padding)
