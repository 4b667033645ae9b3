"""
Differentiable NCHW operations used by the segmentation network.

Convolutions gather sliding windows with `numpy.lib.stride_tricks.sliding_window_view` and
contract them with `np.tensordot` (an im2col without an explicit column buffer); their
backward passes scatter window gradients back tap by tap.
"""
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from crackSeg.config import config
from crackSeg.errors import DimensionError
from crackSeg.tensor.tensor import OpKind, Tensor, record


def _require_rank(tensor: Tensor, rank: int, what: str) -> None:
    if tensor.ndim != rank:
        raise DimensionError(f"{what} must have rank {rank}, got shape {tensor.shape}.")


def _output_size(size: int, kernel: int, stride: int, padding: int, axis: str) -> int:
    if stride < 1:
        raise DimensionError(f"stride must be positive, got {stride}.")
    if padding < 0:
        raise DimensionError(f"padding must be non-negative, got {padding}.")
    if size + 2 * padding < kernel:
        raise DimensionError(
            f"{axis}: input {size} + 2*padding {padding} is smaller than kernel {kernel}."
        )
    out = (size + 2 * padding - kernel) // stride + 1
    if out < 1:
        raise DimensionError(f"{axis}: output size would be {out}.")
    return out


def _pad_spatial(data: np.ndarray, padding: int, value: float = 0.0) -> np.ndarray:
    if padding == 0:
        return data
    return np.pad(data, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=value)


def _windows(padded: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(N, C, H', W', kh, kw) read-only view of every kernel window."""
    return sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def conv2d(
    input: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0
) -> Tensor:
    """
    2-D cross-correlation with zero padding.

    Args:
        input (Tensor): N x I x H x W activations.
        weight (Tensor): O x I x Kh x Kw kernel.
        bias (Tensor, optional): O per-channel offsets.
        stride (int): Step of the sliding window.
        padding (int): Zero padding added on every spatial border.

    Returns:
        Tensor: N x O x H' x W' with H' = floor((H + 2p - Kh) / stride) + 1.
    """
    _require_rank(input, 4, "conv2d input")
    _require_rank(weight, 4, "conv2d weight")
    n, c, h, w = input.shape
    o, i, kh, kw = weight.shape
    if c != i:
        raise DimensionError(f"conv2d: input has {c} channels but weight expects {i}.")
    if bias is not None and bias.shape != (o,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} does not match {o} output channels.")
    out_h = _output_size(h, kh, stride, padding, "height")
    out_w = _output_size(w, kw, stride, padding, "width")

    padded = _pad_spatial(input.data, padding)
    windows = _windows(padded, kh, kw, stride)[:, :, :out_h, :out_w]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)

    def backward_fn(grad: np.ndarray):
        grad_input = grad_weight = grad_bias = None
        if weight.requires_grad:
            grad_weight = np.tensordot(grad, windows, axes=([0, 2, 3], [0, 2, 3]))
        if bias is not None and bias.requires_grad:
            grad_bias = grad.sum(axis=(0, 2, 3))
        if input.requires_grad:
            # (N, H', W', C, kh, kw) gradient of every window, scattered back tap by tap
            grad_windows = np.tensordot(grad, weight.data, axes=([1], [0]))
            grad_padded = np.zeros(padded.shape, dtype=grad.dtype)
            row_end = (out_h - 1) * stride + 1
            col_end = (out_w - 1) * stride + 1
            for ki in range(kh):
                for kj in range(kw):
                    grad_padded[:, :, ki : ki + row_end : stride, kj : kj + col_end : stride] += grad_windows[
                        :, :, :, :, ki, kj
                    ].transpose(0, 3, 1, 2)
            grad_input = grad_padded[:, :, padding : padding + h, padding : padding + w]
        return grad_input, grad_weight, grad_bias

    inputs = (input, weight) if bias is None else (input, weight, bias)
    return record(OpKind.CONV2D, out, inputs, backward_fn)


def conv_transpose2d(input: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 2) -> Tensor:
    """
    Transposed convolution whose kernel equals its stride (non-overlapping upsampling).

    With the U-Net's 2x2 kernel and stride 2 the output is exactly twice the input size and
    the op is the adjoint of `conv2d(., weight, stride=2, padding=0)`.

    Args:
        input (Tensor): N x I x H x W activations.
        weight (Tensor): I x O x k x k kernel, k == stride.
        bias (Tensor, optional): O per-channel offsets.
        stride (int): Upsampling factor.

    Returns:
        Tensor: N x O x (stride*H) x (stride*W).
    """
    _require_rank(input, 4, "conv_transpose2d input")
    _require_rank(weight, 4, "conv_transpose2d weight")
    n, c, h, w = input.shape
    i, o, kh, kw = weight.shape
    if c != i:
        raise DimensionError(f"conv_transpose2d: input has {c} channels but weight expects {i}.")
    if kh != stride or kw != stride:
        raise DimensionError(f"conv_transpose2d: kernel {kh}x{kw} must equal stride {stride}.")
    if bias is not None and bias.shape != (o,):
        raise DimensionError(f"conv_transpose2d: bias shape {bias.shape} does not match {o} output channels.")

    # (N, H, W, O, kh, kw) -> (N, O, H, kh, W, kw) -> (N, O, H*kh, W*kw)
    out = (
        np.tensordot(input.data, weight.data, axes=([1], [0]))
        .transpose(0, 3, 1, 4, 2, 5)
        .reshape(n, o, h * kh, w * kw)
    )
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)

    def backward_fn(grad: np.ndarray):
        grad_blocks = grad.reshape(n, o, h, kh, w, kw)
        grad_input = grad_weight = grad_bias = None
        if input.requires_grad:
            grad_input = np.tensordot(grad_blocks, weight.data, axes=([1, 3, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        if weight.requires_grad:
            grad_weight = np.tensordot(input.data, grad_blocks, axes=([0, 2, 3], [0, 2, 4]))
        if bias is not None and bias.requires_grad:
            grad_bias = grad.sum(axis=(0, 2, 3))
        return grad_input, grad_weight, grad_bias

    inputs = (input, weight) if bias is None else (input, weight, bias)
    return record(OpKind.CONV_TRANSPOSE2D, out, inputs, backward_fn)


def batch_norm(
    input: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    mode: str = "train",
    momentum: float = config.BN_MOMENTUM,
    eps: float = config.BN_EPS,
    update_stats: bool = True,
) -> Tensor:
    """
    Per-channel batch normalization followed by the affine transform gamma * x_hat + beta.

    In train mode the batch statistics normalize the input and, when `update_stats` is set,
    the running buffers move towards them by `momentum` (the variance buffer tracks the
    unbiased estimate). Eval mode normalizes with the running buffers.

    Args:
        input (Tensor): N x C x H x W activations.
        gamma (Tensor): C scales.
        beta (Tensor): C offsets.
        running_mean (Tensor): C buffer, updated in place in train mode.
        running_var (Tensor): C buffer, updated in place in train mode.
        mode (str): "train" or "eval".
        momentum (float): Weight of the new batch statistic in the running average.
        eps (float): Variance floor.
        update_stats (bool): Set False to keep the buffers untouched (frozen layers).

    Returns:
        Tensor: Normalized activations with the input's shape.
    """
    _require_rank(input, 4, "batch_norm input")
    n, c, h, w = input.shape
    for name, tensor in (("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)):
        if tensor.shape != (c,):
            raise DimensionError(f"batch_norm: {name} shape {tensor.shape} does not match {c} channels.")
    if mode not in ("train", "eval"):
        raise DimensionError(f"batch_norm: unknown mode {mode!r}.")

    x = input.data
    g = gamma.data.reshape(1, c, 1, 1)
    count = n * h * w
    if mode == "train":
        if count < 2:
            raise DimensionError(
                f"batch_norm: degenerate statistics, train mode needs N*H*W >= 2 per channel (got {count})."
            )
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        if update_stats:
            running_mean.data[...] = (1.0 - momentum) * running_mean.data + momentum * mean
            running_var.data[...] = (1.0 - momentum) * running_var.data + momentum * var * count / (count - 1)
    else:
        mean = running_mean.data
        var = running_var.data
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    x_hat = (x - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out = g * x_hat + beta.data.reshape(1, c, 1, 1)

    def backward_fn(grad: np.ndarray):
        grad_input = grad_gamma = grad_beta = None
        if gamma.requires_grad:
            grad_gamma = (grad * x_hat).sum(axis=(0, 2, 3))
        if beta.requires_grad:
            grad_beta = grad.sum(axis=(0, 2, 3))
        if input.requires_grad:
            grad_x_hat = grad * g
            if mode == "train":
                sum_grad = grad_x_hat.sum(axis=(0, 2, 3), keepdims=True)
                sum_grad_x_hat = (grad_x_hat * x_hat).sum(axis=(0, 2, 3), keepdims=True)
                grad_input = (inv_std.reshape(1, c, 1, 1) / count) * (
                    count * grad_x_hat - sum_grad - x_hat * sum_grad_x_hat
                )
            else:
                grad_input = grad_x_hat * inv_std.reshape(1, c, 1, 1)
        return grad_input, grad_gamma, grad_beta

    return record(OpKind.BATCH_NORM, out, (input, gamma, beta), backward_fn)


def relu(input: Tensor) -> Tensor:
    out = np.maximum(input.data, 0)

    def backward_fn(grad: np.ndarray):
        return (grad * (input.data > 0),)

    return record(OpKind.RELU, out, (input,), backward_fn)


def sigmoid(input: Tensor) -> Tensor:
    """Numerically stable logistic function; results are kept strictly inside (0, 1)."""
    x = input.data
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype)
    one = x.dtype.type(1)
    out = np.clip(out, np.finfo(x.dtype).tiny, np.nextafter(one, x.dtype.type(0)))

    def backward_fn(grad: np.ndarray):
        return (grad * out * (1.0 - out),)

    return record(OpKind.SIGMOID, out, (input,), backward_fn)


def max_pool2d(input: Tensor, kernel: int, stride: int, padding: int = 0) -> Tensor:
    """
    Windowed maximum. Ties go to the first element in row-major window order, and the
    backward pass routes each window's gradient to that element only.
    """
    _require_rank(input, 4, "max_pool2d input")
    n, c, h, w = input.shape
    if padding > kernel // 2:
        raise DimensionError(f"max_pool2d: padding {padding} exceeds half the kernel {kernel}.")
    out_h = _output_size(h, kernel, stride, padding, "height")
    out_w = _output_size(w, kernel, stride, padding, "width")

    padded = _pad_spatial(input.data, padding, value=-np.inf)
    windows = _windows(padded, kernel, kernel, stride)[:, :, :out_h, :out_w].reshape(
        n, c, out_h, out_w, kernel * kernel
    )
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def backward_fn(grad: np.ndarray):
        rows = np.arange(out_h).reshape(1, 1, out_h, 1) * stride + argmax // kernel
        cols = np.arange(out_w).reshape(1, 1, 1, out_w) * stride + argmax % kernel
        grad_padded = np.zeros(padded.shape, dtype=grad.dtype)
        batch_idx = np.arange(n).reshape(n, 1, 1, 1)
        channel_idx = np.arange(c).reshape(1, c, 1, 1)
        np.add.at(grad_padded, (batch_idx, channel_idx, rows, cols), grad)
        return (grad_padded[:, :, padding : padding + h, padding : padding + w],)

    return record(OpKind.MAX_POOL2D, out, (input,), backward_fn)


def global_avg_pool(input: Tensor) -> Tensor:
    _require_rank(input, 4, "global_avg_pool input")
    n, c, h, w = input.shape
    out = input.data.mean(axis=(2, 3), keepdims=True)

    def backward_fn(grad: np.ndarray):
        return (np.broadcast_to(grad / (h * w), input.shape),)

    return record(OpKind.GLOBAL_AVG_POOL, out, (input,), backward_fn)


def fully_connected(input: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Dense layer y = x W^T + b on N x C (or N x C x 1 x 1) input, weight D x C.

    The output keeps the input's rank, so pooled N x C x 1 x 1 features stay broadcastable.
    """
    squeeze = input.ndim == 4
    if squeeze and input.shape[2:] != (1, 1):
        raise DimensionError(f"fully_connected: 4-D input must be N x C x 1 x 1, got {input.shape}.")
    if not squeeze:
        _require_rank(input, 2, "fully_connected input")
    _require_rank(weight, 2, "fully_connected weight")
    n, c = input.shape[:2]
    d, k = weight.shape
    if c != k:
        raise DimensionError(f"fully_connected: input has {c} features but weight expects {k}.")
    if bias is not None and bias.shape != (d,):
        raise DimensionError(f"fully_connected: bias shape {bias.shape} does not match {d} outputs.")

    x = input.data.reshape(n, c)
    out = x @ weight.data.T
    if bias is not None:
        out = out + bias.data
    if squeeze:
        out = out.reshape(n, d, 1, 1)

    def backward_fn(grad: np.ndarray):
        grad_2d = grad.reshape(n, d)
        grad_input = grad_weight = grad_bias = None
        if input.requires_grad:
            grad_input = (grad_2d @ weight.data).reshape(input.shape)
        if weight.requires_grad:
            grad_weight = grad_2d.T @ x
        if bias is not None and bias.requires_grad:
            grad_bias = grad_2d.sum(axis=0)
        return grad_input, grad_weight, grad_bias

    inputs = (input, weight) if bias is None else (input, weight, bias)
    return record(OpKind.FULLY_CONNECTED, out, inputs, backward_fn)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _require_rank(a, 4, "concat_channels first input")
    _require_rank(b, 4, "concat_channels second input")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise DimensionError(f"concat_channels: N, H, W must match, got {a.shape} and {b.shape}.")
    split = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward_fn(grad: np.ndarray):
        return grad[:, :split], grad[:, split:]

    return record(OpKind.CONCAT, out, (a, b), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes differ, {a.shape} vs {b.shape}.")

    def backward_fn(grad: np.ndarray):
        return grad, grad

    return record(OpKind.ADD, a.data + b.data, (a, b), backward_fn)


def _broadcast_compatible(small: Tuple[int, ...], full: Tuple[int, ...]) -> bool:
    if len(small) != 4 or len(full) != 4 or small[0] != full[0]:
        return False
    n, c, h, w = full
    return small in ((n, c, 1, 1), (n, 1, h, w))


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    axes = tuple(axis for axis, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True) if axes else grad


def mul(a: Tensor, b: Tensor) -> Tensor:
    """
    Elementwise product. Besides equal shapes, an N x C x 1 x 1 (channel gate) or
    N x 1 x H x W (spatial gate) operand broadcasts against N x C x H x W.
    """
    if a.shape != b.shape and not (
        _broadcast_compatible(a.shape, b.shape) or _broadcast_compatible(b.shape, a.shape)
    ):
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} are not broadcast-compatible.")

    def backward_fn(grad: np.ndarray):
        grad_a = _unbroadcast(grad * b.data, a.shape) if a.requires_grad else None
        grad_b = _unbroadcast(grad * a.data, b.shape) if b.requires_grad else None
        return grad_a, grad_b

    return record(OpKind.MUL, a.data * b.data, (a, b), backward_fn)


def sum_all(input: Tensor) -> Tensor:
    out = np.asarray(input.data.sum(), dtype=input.dtype)

    def backward_fn(grad: np.ndarray):
        return (np.broadcast_to(grad, input.shape),)

    return record(OpKind.SUM, out, (input,), backward_fn)


def scale(input: Tensor, factor: float) -> Tensor:
    out = (input.data * factor).astype(input.dtype)

    def backward_fn(grad: np.ndarray):
        return (grad * factor,)

    return record(OpKind.SCALE, out, (input,), backward_fn)
