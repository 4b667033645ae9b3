from concurrent.futures import ThreadPoolExecutor
from typing import List, Literal, Sequence

import numpy as np

from crackSeg.config import config
from crackSeg.data.dataset import Sample
from crackSeg.errors import ContractError
from crackSeg.metrics.tolerance import binarize, precision_recall_f1, tolerant_counts
from crackSeg.models.configs import ToleranceConfig
from crackSeg.models.records import ImageMetrics, MetricsReport
from crackSeg.network.unet import Model
from crackSeg.tensor.tensor import Tensor, no_grad


def pad_to_multiple(image: np.ndarray, multiple: int = config.SIZE_MULTIPLE) -> np.ndarray:
    """Reflect-pad a C x H x W array at the bottom/right so H and W divide by `multiple`."""
    _, h, w = image.shape
    pad_h, pad_w = (-h) % multiple, (-w) % multiple
    if not pad_h and not pad_w:
        return image
    mode = "reflect" if pad_h < h and pad_w < w else "symmetric"
    return np.pad(image, ((0, 0), (0, pad_h), (0, pad_w)), mode=mode)


def predict_probabilities(model: Model, image: np.ndarray) -> np.ndarray:
    """
    Eval-mode crack probabilities for one image of any size.

    Args:
        model (Model): Trained model.
        image (np.ndarray): 3 x H x W float image in [0, 1].

    Returns:
        np.ndarray: H x W probabilities, cropped back from the padded forward pass.
    """
    _, h, w = image.shape
    padded = pad_to_multiple(image)
    with no_grad():
        out = model.forward(Tensor(padded[None], dtype=model.dtype), mode="eval")
    return out.data[0, 0, :h, :w]


def _score(model: Model, sample: Sample, tol: ToleranceConfig, threshold: float) -> ImageMetrics:
    prediction = binarize(predict_probabilities(model, sample.image), threshold)
    tp_pr, fp, tp_re, fn = tolerant_counts(prediction, sample.mask[0], tol)
    precision, recall, f1 = precision_recall_f1(tp_pr, fp, tp_re, fn)
    return ImageMetrics(
        image=sample.name, tp_pr=tp_pr, fp=fp, tp_re=tp_re, fn=fn, precision=precision, recall=recall, f1=f1
    )


def summarize(
    rows: List[ImageMetrics], tol: ToleranceConfig, aggregate: Literal["image", "pixel"] = "image"
) -> MetricsReport:
    """
    Dataset means over per-image rows. "image" averages per-image scores; "pixel" pools the
    counts of every image first.
    """
    if aggregate == "pixel":
        totals = [sum(getattr(row, field) for row in rows) for field in ("tp_pr", "fp", "tp_re", "fn")]
        mean_precision, mean_recall, mean_f1 = precision_recall_f1(*totals)
    else:
        mean_precision = float(np.mean([row.precision for row in rows]))
        mean_recall = float(np.mean([row.recall for row in rows]))
        mean_f1 = float(np.mean([row.f1 for row in rows]))
    return MetricsReport(
        per_image=rows,
        mean_precision=mean_precision,
        mean_recall=mean_recall,
        mean_f1=mean_f1,
        tolerance_radius=tol.radius,
        aggregate=aggregate,
    )


def evaluate_dataset(
    model: Model,
    dataset: Sequence[Sample],
    tol: ToleranceConfig = ToleranceConfig(),
    aggregate: Literal["image", "pixel"] = "image",
    threshold: float = config.BINARIZE_THRESHOLD,
    threads: int = 1,
) -> MetricsReport:
    """
    Eval-mode forward, binarize and score every sample, then average.

    Args:
        model (Model): Model to evaluate; only read.
        dataset (Sequence[Sample]): Non-empty list of full-size samples.
        tol (ToleranceConfig): Matching radius.
        aggregate (str): "image" (per-image mean) or "pixel" (pooled counts).
        threshold (float): Binarization threshold.
        threads (int): Images scored concurrently; rows keep dataset order.

    Returns:
        MetricsReport: Per-image rows and dataset means.
    """
    if len(dataset) == 0:
        message = "Cannot evaluate an empty dataset."
        config.logger.error(message)
        raise ContractError(message)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda sample: _score(model, sample, tol, threshold), dataset))
    else:
        rows = [_score(model, sample, tol, threshold) for sample in dataset]

    report = summarize(rows, tol, aggregate)
    config.logger.info(f"Evaluated {len(rows)} images at radius {tol.radius}: {report.summary_line()}")
    return report
