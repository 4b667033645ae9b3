"""ResNet-34 encoder without its pooling layer and classifier."""
from typing import List

from crackSeg.network.layers import BatchNorm2d, Conv2d, Module
from crackSeg.tensor import ops
from crackSeg.tensor.tensor import Tensor


class Downsample(Module):
    """1x1 projection shortcut used when a block changes width or resolution."""

    def __init__(self, in_channels: int, out_channels: int, stride: int, dtype: str):
        super().__init__(dtype)
        self.conv = self.add_child("conv", Conv2d(in_channels, out_channels, 1, stride=stride, bias=False, dtype=dtype))
        self.bn = self.add_child("bn", BatchNorm2d(out_channels, dtype=dtype))

    def forward(self, x: Tensor, mode: str) -> Tensor:
        return self.bn(self.conv(x, mode), mode)


class BasicBlock(Module):
    """conv3x3 -> BN -> ReLU -> conv3x3 -> BN, plus shortcut, then ReLU."""

    def __init__(self, in_channels: int, out_channels: int, stride: int, dtype: str):
        super().__init__(dtype)
        self.conv1 = self.add_child(
            "conv1", Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False, dtype=dtype)
        )
        self.bn1 = self.add_child("bn1", BatchNorm2d(out_channels, dtype=dtype))
        self.conv2 = self.add_child(
            "conv2", Conv2d(out_channels, out_channels, 3, stride=1, padding=1, bias=False, dtype=dtype)
        )
        self.bn2 = self.add_child("bn2", BatchNorm2d(out_channels, dtype=dtype))
        self.downsample = None
        if stride != 1 or in_channels != out_channels:
            self.downsample = self.add_child("downsample", Downsample(in_channels, out_channels, stride, dtype))

    def forward(self, x: Tensor, mode: str) -> Tensor:
        out = ops.relu(self.bn1(self.conv1(x, mode), mode))
        out = self.bn2(self.conv2(out, mode), mode)
        shortcut = self.downsample(x, mode) if self.downsample is not None else x
        return ops.relu(ops.add(out, shortcut))


class Stage(Module):
    def __init__(self, in_channels: int, out_channels: int, blocks: int, stride: int, dtype: str):
        super().__init__(dtype)
        self.blocks: List[BasicBlock] = []
        for index in range(blocks):
            block = BasicBlock(in_channels if index == 0 else out_channels, out_channels, stride if index == 0 else 1, dtype)
            self.blocks.append(self.add_child(f"block{index}", block))

    def forward(self, x: Tensor, mode: str) -> Tensor:
        for block in self.blocks:
            x = block(x, mode)
        return x


class Stem(Module):
    """7x7 stride-2 conv -> BN -> ReLU (its output is the half-resolution skip)."""

    def __init__(self, in_channels: int, out_channels: int, dtype: str):
        super().__init__(dtype)
        self.conv = self.add_child("conv", Conv2d(in_channels, out_channels, 7, stride=2, padding=3, bias=False, dtype=dtype))
        self.bn = self.add_child("bn", BatchNorm2d(out_channels, dtype=dtype))

    def forward(self, x: Tensor, mode: str) -> Tensor:
        return ops.relu(self.bn(self.conv(x, mode), mode))


class ResNetEncoder(Module):
    """
    Stem, 3x3 stride-2 max-pool, then four residual stages of widths base x {1, 2, 4, 8}.

    `features` returns the activations the decoder consumes, finest first:
    stem (1/2), stage1 (1/4), stage2 (1/8), stage3 (1/16), stage4 (1/32, the bottleneck).
    """

    def __init__(self, in_channels: int, base_channels: int, blocks_per_stage: List[int], dtype: str):
        super().__init__(dtype)
        self.stem = self.add_child("stem", Stem(in_channels, base_channels, dtype))
        widths = [base_channels, base_channels * 2, base_channels * 4, base_channels * 8]
        self.stages: List[Stage] = []
        previous = base_channels
        for index, (width, blocks) in enumerate(zip(widths, blocks_per_stage)):
            stride = 1 if index == 0 else 2
            self.stages.append(self.add_child(f"stage{index + 1}", Stage(previous, width, blocks, stride, dtype)))
            previous = width
        self.widths = widths

    def features(self, x: Tensor, mode: str) -> List[Tensor]:
        stem = self.stem(x, mode)
        out = ops.max_pool2d(stem, kernel=3, stride=2, padding=1)
        activations = [stem]
        for stage in self.stages:
            out = stage(out, mode)
            activations.append(out)
        return activations

    def forward(self, x: Tensor, mode: str) -> Tensor:
        return self.features(x, mode)[-1]
