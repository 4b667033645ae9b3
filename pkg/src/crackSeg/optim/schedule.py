"""One-cycle learning-rate schedule and layer-group scaling."""
import math
from typing import Dict, Iterable

from crackSeg.config import config
from crackSeg.errors import ContractError
from crackSeg.models.configs import GroupScale, LayerGroup, OneCycleConfig
from crackSeg.tensor.tensor import Parameter


def peak_iteration(schedule: OneCycleConfig) -> int:
    """Iteration where the cycle reaches lr_max, warm_frac * total rounded half-up."""
    return int(math.floor(schedule.warm_frac * schedule.total_iterations + 0.5))


def lr_at(iteration: int, schedule: OneCycleConfig) -> float:
    """
    Piecewise-linear single cycle: min_frac * lr_max at 0, lr_max at the peak,
    final_frac * lr_max at total_iterations.

    Args:
        iteration (int): Step index in [0, total_iterations].
        schedule (OneCycleConfig): Cycle parameters.

    Returns:
        float: Learning rate before group scaling.
    """
    total = schedule.total_iterations
    if iteration < 0 or iteration > total:
        message = f"Iteration {iteration} is outside the schedule [0, {total}]."
        config.logger.error(message)
        raise ContractError(message)

    lr_max = schedule.lr_max
    lr_min = schedule.min_frac * lr_max
    lr_end = schedule.final_frac * lr_max
    peak = peak_iteration(schedule)
    if iteration <= peak:
        if peak == 0:
            return lr_max
        return lr_min + (lr_max - lr_min) * iteration / peak
    return lr_max + (lr_end - lr_max) * (iteration - peak) / (total - peak)


def group_lrs(base_lr: float, scale: GroupScale = GroupScale()) -> Dict[LayerGroup, float]:
    """Learning rate of each layer group: `base_lr` times the group's scale."""
    return {group: base_lr * scale.of(group) for group in LayerGroup}


def zero_grads(params: Iterable[Parameter]) -> None:
    """Zero the gradient buffer of every trainable parameter; frozen ones are left alone."""
    for parameter in params:
        if parameter.trainable and parameter.grad is not None:
            parameter.grad[...] = 0
