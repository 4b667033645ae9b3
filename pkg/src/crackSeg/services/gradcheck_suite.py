"""Finite-difference checks of every tape op and of the reduced full model."""
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from crackSeg.config import config
from crackSeg.metrics.dice import dice_loss
from crackSeg.models.configs import ModelConfig
from crackSeg.network.unet import build_model
from crackSeg.tensor import ops
from crackSeg.tensor.gradcheck import grad_check, grad_check_parameters
from crackSeg.tensor.tensor import OpKind, Tensor

CheckCase = Tuple[Callable[..., Tensor], Sequence[Tensor]]


def _leaf(array: np.ndarray, requires_grad: bool = True) -> Tensor:
    return Tensor(array, dtype=np.float64, requires_grad=requires_grad)


def _away_from_zero(rng: np.random.Generator, shape) -> np.ndarray:
    values = rng.standard_normal(shape)
    return np.sign(values) * (0.1 + np.abs(values))


def _distinct(rng: np.random.Generator, shape) -> np.ndarray:
    size = int(np.prod(shape))
    return (rng.permutation(size).reshape(shape) / size) * 2.0 - 1.0


def op_cases(rng: np.random.Generator) -> Dict[OpKind, CheckCase]:
    """A small float64 instance of every op kind, with inputs kept away from kinks and ties."""
    x = lambda *shape: _leaf(rng.standard_normal(shape))
    running_mean = _leaf(np.zeros(3), requires_grad=False)
    running_var = _leaf(np.ones(3), requires_grad=False)
    return {
        OpKind.CONV2D: (
            lambda a, w, b: ops.conv2d(a, w, b, stride=2, padding=1),
            [x(2, 3, 7, 7), x(4, 3, 3, 3), x(4)],
        ),
        OpKind.CONV_TRANSPOSE2D: (
            lambda a, w, b: ops.conv_transpose2d(a, w, b, stride=2),
            [x(2, 3, 4, 4), x(3, 2, 2, 2), x(2)],
        ),
        OpKind.BATCH_NORM: (
            lambda a, g, b: ops.batch_norm(a, g, b, running_mean, running_var, mode="train"),
            [x(2, 3, 4, 4), x(3), x(3)],
        ),
        OpKind.RELU: (ops.relu, [_leaf(_away_from_zero(rng, (2, 3, 4, 4)))]),
        OpKind.SIGMOID: (ops.sigmoid, [x(2, 3, 4, 4)]),
        OpKind.MAX_POOL2D: (
            lambda a: ops.max_pool2d(a, kernel=3, stride=2, padding=1),
            [_leaf(_distinct(rng, (2, 3, 8, 8)))],
        ),
        OpKind.GLOBAL_AVG_POOL: (ops.global_avg_pool, [x(2, 3, 4, 4)]),
        OpKind.FULLY_CONNECTED: (ops.fully_connected, [x(2, 5), x(3, 5), x(3)]),
        OpKind.CONCAT: (ops.concat_channels, [x(2, 3, 4, 4), x(2, 2, 4, 4)]),
        OpKind.ADD: (ops.add, [x(2, 3, 4, 4), x(2, 3, 4, 4)]),
        OpKind.MUL: (ops.mul, [x(2, 3, 4, 4), x(2, 3, 1, 1)]),
        OpKind.SUM: (ops.sum_all, [x(2, 3, 4, 4)]),
        OpKind.SCALE: (lambda a: ops.scale(a, 0.37), [x(2, 3, 4, 4)]),
        OpKind.DICE_LOSS: (
            dice_loss,
            [
                _leaf(rng.uniform(0.05, 0.95, size=(2, 1, 8, 8))),
                _leaf((rng.random((2, 1, 8, 8)) > 0.5).astype(np.float64), requires_grad=False),
            ],
        ),
    }


def run_op_checks(seed: int = 0) -> List[Tuple[str, float]]:
    """Worst relative error of every op kind."""
    rng = np.random.default_rng(seed)
    rows = []
    for kind, (fn, inputs) in op_cases(rng).items():
        rows.append((kind.value, grad_check(fn, inputs, seed=seed)))
    return rows


def run_model_check(seed: int = 0, max_elements: int = 16) -> List[Tuple[str, float]]:
    """
    Dice loss of the reduced float64 model on a 2 x 3 x 32 x 32 batch, checked against sampled
    elements of every parameter. Errors use the default 1e-8 denominator floor.
    """
    rng = np.random.default_rng(seed)
    model = build_model(ModelConfig.reduced(dtype="float64", init_seed=seed))
    images = Tensor(rng.uniform(0.0, 1.0, size=(2, 3, 32, 32)), dtype=np.float64)
    masks = Tensor((rng.random((2, 1, 32, 32)) > 0.8).astype(np.float64), dtype=np.float64)

    def loss_fn() -> Tensor:
        return dice_loss(model.forward(images, "train"), masks)

    error = grad_check_parameters(loss_fn, list(model.parameters.values()), seed=seed, max_elements=max_elements)
    return [("reduced model", error)]


def format_table(rows: List[Tuple[str, float]], tolerance: float = config.GRADCHECK_TOLERANCE) -> str:
    lines = [f"{'check':<20} {'max rel error':>14}  result"]
    for name, error in rows:
        lines.append(f"{name:<20} {error:>14.3e}  {'PASS' if error < tolerance else 'FAIL'}")
    return "\n".join(lines)
