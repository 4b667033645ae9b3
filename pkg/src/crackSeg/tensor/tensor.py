"""
Dense tensors and the reverse-mode tape.

Every op in `crackSeg.tensor.ops` produces a new `Tensor`; when gradients are enabled and
any input requires a gradient, the op also attaches a `TapeNode` holding the closure that
maps the output gradient to input gradients. `backward` walks those nodes once, in reverse
topological order, and accumulates into the `.grad` of every leaf that asked for one.
"""
import contextlib
import contextvars
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from crackSeg.config import config
from crackSeg.errors import ContractError

SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("crackseg_grad_enabled", default=True)


class OpKind(str, Enum):
    CONV2D = "conv2d"
    CONV_TRANSPOSE2D = "conv_transpose2d"
    BATCH_NORM = "batch_norm"
    RELU = "relu"
    SIGMOID = "sigmoid"
    MAX_POOL2D = "max_pool2d"
    GLOBAL_AVG_POOL = "global_avg_pool"
    FULLY_CONNECTED = "fully_connected"
    CONCAT = "concat_channels"
    ADD = "add"
    MUL = "mul"
    SUM = "sum_all"
    SCALE = "scale"
    DICE_LOSS = "dice_loss"


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(eq=False)
class TapeNode:
    """Record of one op application: its kind, its inputs, and the saved backward closure."""

    op: OpKind
    inputs: Tuple["Tensor", ...]
    backward_fn: Optional[BackwardFn]
    consumed: bool = field(default=False)


class Tensor:
    """Dense row-major float32/float64 array, optionally attached to the tape."""

    __slots__ = ("data", "requires_grad", "grad", "node", "__weakref__")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        if dtype is None:
            source_dtype = getattr(data, "dtype", None)
            dtype = source_dtype if source_dtype in SUPPORTED_DTYPES else np.float32
        dtype = np.dtype(dtype)
        if dtype not in SUPPORTED_DTYPES:
            raise ContractError(f"Unsupported dtype {dtype}; use float32 or float64.")
        self.data: np.ndarray = np.array(data, dtype=dtype, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[TapeNode] = None

    @classmethod
    def _from_op(cls, data: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        data = np.asarray(data)
        out.data = data if data.flags.c_contiguous else np.ascontiguousarray(data)
        out.data.flags.writeable = False
        out.requires_grad = False
        out.grad = None
        out.node = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype).reshape(self.data.shape)
        else:
            self.grad += grad

    def __repr__(self) -> str:
        kind = self.node.op.value if self.node else "leaf"
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, {kind})"


class Parameter(Tensor):
    """Named trainable leaf. Frozen parameters neither record nor accumulate gradients."""

    __slots__ = ("name",)

    def __init__(self, name: str, data, dtype=None, trainable: bool = True):
        super().__init__(data, dtype=dtype, requires_grad=trainable)
        self.name = name

    @property
    def trainable(self) -> bool:
        return self.requires_grad

    @trainable.setter
    def trainable(self, value: bool) -> None:
        self.requires_grad = bool(value)

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.shape}, trainable={self.trainable})"


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run ops without recording anything on the tape."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def record(op: OpKind, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Wrap an op result and, when any input needs a gradient, attach its tape node."""
    out = Tensor._from_op(data)
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = TapeNode(op=op, inputs=tuple(inputs), backward_fn=backward_fn)
    return out


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.inputs:
                if parent.node is not None and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Populate `.grad` on every leaf reachable from `loss` that requires a gradient.

    Gradients accumulate; callers zero them between steps. The tape is consumed: a second
    call without a fresh forward pass raises ContractError.

    Args:
        loss (Tensor): Scalar result of a forward pass.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}.")
    if loss.node is None:
        raise ContractError("Loss is detached from the tape (no recorded op requires a gradient).")

    order = _topological_order(loss)
    if any(t.node.consumed for t in order):
        raise ContractError("Tape already consumed by an earlier backward; re-run the forward pass.")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for tensor in reversed(order):
        node = tensor.node
        upstream = grads.pop(id(tensor), None)
        if upstream is not None:
            input_grads = node.backward_fn(upstream)
            for parent, grad in zip(node.inputs, input_grads):
                if grad is None or not parent.requires_grad:
                    continue
                if parent.node is None:
                    parent._accumulate(grad)
                elif id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + grad
                else:
                    grads[id(parent)] = grad
        node.consumed = True
        node.backward_fn = None
    config.logger.debug(f"backward visited {len(order)} tape nodes")
