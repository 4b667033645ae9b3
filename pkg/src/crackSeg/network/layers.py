"""Parameter-owning building blocks. Each module maps (Tensor, mode) -> Tensor."""
from collections import OrderedDict
from typing import Iterator, Optional, Tuple

import numpy as np

from crackSeg.config import config
from crackSeg.tensor import ops
from crackSeg.tensor.tensor import Parameter, Tensor


class Module:
    """Tree of named parameters, buffers and child modules."""

    def __init__(self, dtype: str = "float32"):
        self.dtype = np.dtype(dtype)
        self._parameters: "OrderedDict[str, Parameter]" = OrderedDict()
        self._buffers: "OrderedDict[str, Tensor]" = OrderedDict()
        self._children: "OrderedDict[str, Module]" = OrderedDict()

    def add_parameter(self, name: str, shape: Tuple[int, ...]) -> Parameter:
        parameter = Parameter(name, np.zeros(shape), dtype=self.dtype)
        self._parameters[name] = parameter
        return parameter

    def add_buffer(self, name: str, shape: Tuple[int, ...], fill: float) -> Tensor:
        buffer = Tensor(np.full(shape, fill), dtype=self.dtype)
        self._buffers[name] = buffer
        return buffer

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, parameter in self._parameters.items():
            yield prefix + name, parameter
        for name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, buffer in self._buffers.items():
            yield prefix + name, buffer
        for name, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{name}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for child in self._children.values():
            yield from child.modules()

    def reset_parameters(self, rng: np.random.Generator) -> None:
        """Initialize this module's own tensors; children are handled by the caller's walk."""

    def __call__(self, x: Tensor, mode: str) -> Tensor:
        return self.forward(x, mode)

    def forward(self, x: Tensor, mode: str) -> Tensor:
        raise NotImplementedError


def _he_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, dtype: np.dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        padding: int = 0,
        bias: bool = True,
        dtype: str = "float32",
    ):
        super().__init__(dtype)
        self.stride = stride
        self.padding = padding
        self.weight = self.add_parameter("weight", (out_channels, in_channels, kernel, kernel))
        self.bias: Optional[Parameter] = self.add_parameter("bias", (out_channels,)) if bias else None

    def reset_parameters(self, rng: np.random.Generator) -> None:
        o, i, kh, kw = self.weight.shape
        self.weight.data[...] = _he_normal(rng, self.weight.shape, i * kh * kw, self.dtype)
        if self.bias is not None:
            self.bias.data[...] = 0

    def forward(self, x: Tensor, mode: str) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d(Module):
    """2x2 / stride-2 upsampling convolution; weight layout in x out x k x k."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 2, dtype: str = "float32"):
        super().__init__(dtype)
        self.stride = kernel
        self.weight = self.add_parameter("weight", (in_channels, out_channels, kernel, kernel))
        self.bias = self.add_parameter("bias", (out_channels,))

    def reset_parameters(self, rng: np.random.Generator) -> None:
        i, o, kh, kw = self.weight.shape
        self.weight.data[...] = _he_normal(rng, self.weight.shape, i * kh * kw, self.dtype)
        self.bias.data[...] = 0

    def forward(self, x: Tensor, mode: str) -> Tensor:
        return ops.conv_transpose2d(x, self.weight, self.bias, stride=self.stride)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, dtype: str = "float32"):
        super().__init__(dtype)
        self.weight = self.add_parameter("weight", (out_features, in_features))
        self.bias = self.add_parameter("bias", (out_features,))

    def reset_parameters(self, rng: np.random.Generator) -> None:
        self.weight.data[...] = _he_normal(rng, self.weight.shape, self.weight.shape[1], self.dtype)
        self.bias.data[...] = 0

    def forward(self, x: Tensor, mode: str) -> Tensor:
        return ops.fully_connected(x, self.weight, self.bias)


class BatchNorm2d(Module):
    """Batch norm whose running statistics stop moving while its affine parameters are frozen."""

    def __init__(self, channels: int, dtype: str = "float32"):
        super().__init__(dtype)
        self.weight = self.add_parameter("weight", (channels,))
        self.bias = self.add_parameter("bias", (channels,))
        self.running_mean = self.add_buffer("running_mean", (channels,), 0.0)
        self.running_var = self.add_buffer("running_var", (channels,), 1.0)

    def reset_parameters(self, rng: np.random.Generator) -> None:
        self.weight.data[...] = 1
        self.bias.data[...] = 0
        self.running_mean.data[...] = 0
        self.running_var.data[...] = 1

    def forward(self, x: Tensor, mode: str) -> Tensor:
        return ops.batch_norm(
            x,
            self.weight,
            self.bias,
            self.running_mean,
            self.running_var,
            mode=mode,
            momentum=config.BN_MOMENTUM,
            eps=config.BN_EPS,
            update_stats=self.weight.trainable,
        )


class SCSE(Module):
    """
    Concurrent spatial and channel squeeze & excitation.

    channel gate: avg-pool -> FC(C -> max(1, C // r)) -> ReLU -> FC(-> C) -> sigmoid
    spatial gate: 1x1 conv(C -> 1) -> sigmoid
    output: x * channel_gate + x * spatial_gate
    """

    def __init__(self, channels: int, reduction: int = 16, dtype: str = "float32"):
        super().__init__(dtype)
        squeezed = max(1, channels // reduction)
        self.channel_fc1 = self.add_child("channel_fc1", Linear(channels, squeezed, dtype=dtype))
        self.channel_fc2 = self.add_child("channel_fc2", Linear(squeezed, channels, dtype=dtype))
        self.spatial_conv = self.add_child("spatial_conv", Conv2d(channels, 1, kernel=1, dtype=dtype))

    def forward(self, x: Tensor, mode: str) -> Tensor:
        return scse_block(x, self)


def scse_block(input: Tensor, params: SCSE) -> Tensor:
    squeezed = ops.global_avg_pool(input)
    channel_gate = ops.sigmoid(params.channel_fc2(ops.relu(params.channel_fc1(squeezed, "train")), "train"))
    spatial_gate = ops.sigmoid(params.spatial_conv(input, "train"))
    return ops.add(ops.mul(input, channel_gate), ops.mul(input, spatial_gate))
