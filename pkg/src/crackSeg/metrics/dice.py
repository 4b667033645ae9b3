import numpy as np

from crackSeg.config import config
from crackSeg.errors import DimensionError
from crackSeg.tensor.tensor import OpKind, Tensor, record


def dice_loss(pred: Tensor, target: Tensor, eps: float = config.DICE_EPS) -> Tensor:
    """
    Soft dice loss, averaged over the batch.

    L = (1/N) * sum_n [1 - 2 * sum(p * y) / (sum(p) + sum(y) + eps)], eps in the denominator only,
    so an empty prediction against an empty target costs 1.

    Args:
        pred (Tensor): N x 1 x H x W probabilities.
        target (Tensor): Binary mask of the same shape; never receives a gradient.
        eps (float): Denominator smoothing.

    Returns:
        Tensor: 0-d loss on the tape.
    """
    if pred.shape != target.shape:
        raise DimensionError(f"dice_loss: prediction {pred.shape} and target {target.shape} differ.")
    if pred.ndim < 2 or pred.shape[0] < 1:
        raise DimensionError(f"dice_loss needs a non-empty batch, got shape {pred.shape}.")

    n = pred.shape[0]
    p = pred.data.reshape(n, -1)
    y = target.data.reshape(n, -1).astype(p.dtype)
    intersection = (p * y).sum(axis=1)
    denominator = p.sum(axis=1) + y.sum(axis=1) + eps
    loss = np.asarray(np.mean(1.0 - 2.0 * intersection / denominator), dtype=pred.dtype)

    def backward_fn(grad: np.ndarray):
        # d/dp of -2I/D is -2y/D + 2I/D^2
        per_pixel = (-2.0 * y / denominator[:, None] + 2.0 * (intersection / denominator**2)[:, None]) / n
        return (grad * per_pixel).reshape(pred.shape).astype(pred.dtype), None

    return record(OpKind.DICE_LOSS, loss, (pred, target), backward_fn)
