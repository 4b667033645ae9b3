from typing import Callable, Optional, Sequence

import numpy as np

from crackSeg.config import config
from crackSeg.errors import ContractError
from crackSeg.tensor import ops
from crackSeg.tensor.tensor import Parameter, Tensor, backward, no_grad


def _relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    denominator = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denominator)) if analytic.size else 0.0


def _require_float64(tensors: Sequence[Tensor]) -> None:
    for tensor in tensors:
        if tensor.dtype != np.float64:
            raise ContractError(f"Gradient checks need float64 tensors, got {tensor.dtype} for {tensor!r}.")


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    fd_step: float = config.GRADCHECK_STEP,
    seed: int = 0,
    max_elements: Optional[int] = None,
    floor: float = 1e-8,
) -> float:
    """
    Compare the tape's gradients of `fn` with central finite differences.

    The output is reduced to a scalar with a fixed random projection, so every output element
    contributes with a distinct weight.

    Args:
        fn (Callable): Maps the input tensors to an output tensor through crackSeg ops.
        inputs (Sequence[Tensor]): float64 tensors; those with `requires_grad` are checked.
        fd_step (float): Central-difference step h.
        seed (int): Seed of the projection and of element sampling.
        max_elements (int, optional): Check at most this many random elements per input.
        floor (float): Lower bound of the relative-error denominator.

    Returns:
        float: max |analytic - numeric| / max(|analytic|, |numeric|, floor) over checked elements.
    """
    _require_float64(inputs)
    rng = np.random.default_rng(seed)
    for tensor in inputs:
        tensor.grad = None

    output = fn(*inputs)
    projection = rng.standard_normal(output.shape)
    loss = ops.sum_all(ops.mul(output, Tensor(projection, dtype=np.float64)))
    backward(loss)

    def objective() -> float:
        with no_grad():
            return float(np.sum(fn(*inputs).data * projection))

    worst = 0.0
    for tensor in inputs:
        if not tensor.requires_grad:
            continue
        analytic = np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad
        worst = max(worst, _finite_difference_error(tensor, analytic, objective, fd_step, rng, max_elements, floor))
    return worst


def grad_check_parameters(
    loss_fn: Callable[[], Tensor],
    parameters: Sequence[Parameter],
    fd_step: float = config.GRADCHECK_STEP,
    seed: int = 0,
    max_elements: Optional[int] = 8,
    floor: float = 1e-8,
) -> float:
    """
    Finite-difference check of a scalar loss with respect to named parameters.

    Args:
        loss_fn (Callable): Runs a full forward pass and returns the scalar loss.
        parameters (Sequence[Parameter]): float64 trainable parameters to check.
        fd_step (float): Central-difference step h.
        seed (int): Seed for element sampling.
        max_elements (int, optional): Elements sampled per parameter; None checks all.
        floor (float): Lower bound of the relative-error denominator.

    Returns:
        float: Worst relative error across the sampled elements.
    """
    _require_float64(parameters)
    rng = np.random.default_rng(seed)
    for parameter in parameters:
        parameter.grad = None
    backward(loss_fn())

    def objective() -> float:
        with no_grad():
            return float(loss_fn().data)

    worst = 0.0
    for parameter in parameters:
        analytic = np.zeros_like(parameter.data) if parameter.grad is None else parameter.grad
        error = _finite_difference_error(parameter, analytic, objective, fd_step, rng, max_elements, floor)
        config.logger.debug(f"gradcheck {parameter.name}: {error:.3e}")
        worst = max(worst, error)
    return worst


def _finite_difference_error(
    tensor: Tensor,
    analytic: np.ndarray,
    objective: Callable[[], float],
    fd_step: float,
    rng: np.random.Generator,
    max_elements: Optional[int],
    floor: float,
) -> float:
    flat = tensor.data.reshape(-1)
    indices = np.arange(flat.size)
    if max_elements is not None and flat.size > max_elements:
        indices = np.sort(rng.choice(flat.size, size=max_elements, replace=False))
    numeric = np.empty(indices.size)
    for slot, index in enumerate(indices):
        original = flat[index]
        flat[index] = original + fd_step
        plus = objective()
        flat[index] = original - fd_step
        minus = objective()
        flat[index] = original
        numeric[slot] = (plus - minus) / (2.0 * fd_step)
    return _relative_error(analytic.reshape(-1)[indices], numeric, floor)
