"""AdamW with decoupled weight decay and per-layer-group learning rates."""
from collections import OrderedDict
from typing import Dict, Iterable, Mapping

import numpy as np

from crackSeg.config import config
from crackSeg.errors import CheckpointError, ContractError
from crackSeg.models.configs import AdamWHyper, LayerGroup
from crackSeg.tensor.tensor import Parameter

# float32 holds integers below 2**24 exactly, so the step counter is stored in two such limbs.
_STEP_LIMB = 1 << 24


class AdamW:
    """
    Per-parameter first/second moments keyed by parameter name, plus one global step counter.

    The update is
        m <- b1*m + (1-b1)*g
        v <- b2*v + (1-b2)*g^2
        m_hat = m / (1 - b1^t), v_hat = v / (1 - b2^t)
        theta <- (1 - wd) * theta - lr * m_hat / sqrt(v_hat + eps)
    with eps inside the square root. `decay_scaled_by_lr` switches the decay term to lr * wd * theta.
    Frozen parameters keep their value and their moments.
    """

    def __init__(self, hyper: AdamWHyper = AdamWHyper()):
        self.hyper = hyper
        self.t = 0
        self.m: Dict[str, np.ndarray] = OrderedDict()
        self.v: Dict[str, np.ndarray] = OrderedDict()

    def step(
        self,
        params: Iterable[Parameter],
        lr_per_group: Mapping[LayerGroup, float],
        layer_group: Mapping[str, LayerGroup],
    ) -> None:
        """
        One update of every trainable parameter in `params`.

        Args:
            params (Iterable[Parameter]): Parameters to update; non-trainable ones are skipped.
            lr_per_group (Mapping[LayerGroup, float]): Learning rate of each group at this step.
            layer_group (Mapping[str, LayerGroup]): Group of each parameter name.

        Raises:
            ContractError: A trainable parameter has no gradient.
        """
        trainable = [p for p in params if p.trainable]
        for parameter in trainable:
            if parameter.grad is None:
                message = f"AdamW step: trainable parameter {parameter.name} has no gradient."
                config.logger.error(message)
                raise ContractError(message)

        self.t += 1
        hyper = self.hyper
        correction1 = 1.0 - hyper.beta1**self.t
        correction2 = 1.0 - hyper.beta2**self.t
        for parameter in trainable:
            lr = lr_per_group[layer_group[parameter.name]]
            grad = parameter.grad
            m = self.m.get(parameter.name)
            if m is None:
                m = self.m[parameter.name] = np.zeros_like(parameter.data)
                self.v[parameter.name] = np.zeros_like(parameter.data)
            v = self.v[parameter.name]

            m *= hyper.beta1
            m += (1.0 - hyper.beta1) * grad
            v *= hyper.beta2
            v += (1.0 - hyper.beta2) * grad * grad
            m_hat = m / correction1
            v_hat = v / correction2

            decay = lr * hyper.weight_decay if hyper.decay_scaled_by_lr else hyper.weight_decay
            update = (1.0 - decay) * parameter.data - lr * m_hat / np.sqrt(v_hat + hyper.eps)
            parameter.data[...] = update

    def state_tensors(self, prefix: str = "optim.") -> "OrderedDict[str, np.ndarray]":
        """
        Moments as "<prefix><param>.m" / ".v". The step counter is split into 0-d "<prefix>t"
        (t mod 2**24) and "<prefix>t_high" (t // 2**24) so it survives float32 storage exactly.
        """
        tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
        high, low = divmod(int(self.t), _STEP_LIMB)
        tensors[f"{prefix}t"] = np.asarray(low, dtype=np.float64)
        tensors[f"{prefix}t_high"] = np.asarray(high, dtype=np.float64)
        for name, m in self.m.items():
            tensors[f"{prefix}{name}.m"] = m
            tensors[f"{prefix}{name}.v"] = self.v[name]
        return tensors

    def load_state_tensors(self, tensors: Mapping[str, np.ndarray], prefix: str = "optim.") -> None:
        """
        Restore moments and step counter written by `state_tensors`.

        Raises:
            CheckpointError: A first moment without its second moment.
        """
        m: Dict[str, np.ndarray] = OrderedDict()
        v: Dict[str, np.ndarray] = OrderedDict()
        for key, array in tensors.items():
            if key.endswith(".m"):
                name = key[len(prefix) : -2]
                if f"{prefix}{name}.v" not in tensors:
                    message = f"Optimizer state has {key} but no {prefix}{name}.v"
                    config.logger.error(message)
                    raise CheckpointError(message)
                m[name] = np.array(array)
                v[name] = np.array(tensors[f"{prefix}{name}.v"])
        low = int(tensors[f"{prefix}t"]) if f"{prefix}t" in tensors else 0
        high = int(tensors[f"{prefix}t_high"]) if f"{prefix}t_high" in tensors else 0
        self.t = high * _STEP_LIMB + low
        self.m, self.v = m, v


def adamw_step(
    params: Iterable[Parameter],
    state: AdamW,
    lr_per_group: Mapping[LayerGroup, float],
    layer_group: Mapping[str, LayerGroup],
) -> None:
    state.step(params, lr_per_group, layer_group)
