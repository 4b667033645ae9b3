import os
from typing import Dict, List, Sequence, Tuple

from crackSeg.config import config
from crackSeg.data.dataset import Sample
from crackSeg.errors import ConfigError
from crackSeg.metrics.evaluation import evaluate_dataset
from crackSeg.models.configs import ModelConfig, RunConfig, TrainConfig
from crackSeg.models.records import AblationArm, AblationReport
from crackSeg.network.unet import build_model
from crackSeg.services.trainer import Trainer

ABLATIONS: Dict[str, List[Tuple[str, Dict[str, object]]]] = {
    "one-stage-vs-two-stage": [
        ("One-stage", {"two_stage": False}),
        ("Two-stage", {"two_stage": True}),
    ],
    "scse": [
        ("Without SCSE", {"use_scse": False}),
        ("With SCSE", {"use_scse": True}),
    ],
    "progressive-sizes": [
        ("Single size", {"progressive": False}),
        ("Progressive sizes", {"progressive": True}),
    ],
}


def arm_config(base: RunConfig, overrides: Dict[str, object]) -> RunConfig:
    """Copy of `base` with the override keys applied to every section that has them."""
    model_updates = {key: value for key, value in overrides.items() if key in ModelConfig.model_fields}
    train_updates = {key: value for key, value in overrides.items() if key in TrainConfig.model_fields}
    return base.model_copy(
        update={
            "model": base.model.model_copy(update=model_updates),
            "train": base.train.model_copy(update=train_updates),
        }
    )


def _slug(label: str) -> str:
    return label.lower().replace(" ", "-")


def run_ablation(
    name: str,
    train_samples: Sequence[Sample],
    test_samples: Sequence[Sample],
    base: RunConfig,
    output_dir: str,
) -> AblationReport:
    """
    Train and evaluate the two arms of an ablation with identical seeds and data.

    Args:
        name (str): "one-stage-vs-two-stage", "scse" or "progressive-sizes".
        train_samples (Sequence[Sample]): Training pairs shared by both arms.
        test_samples (Sequence[Sample]): Evaluation pairs shared by both arms.
        base (RunConfig): Configuration the arms start from.
        output_dir (str): Each arm writes its checkpoints and log under a subdirectory.

    Returns:
        AblationReport: One MetricsReport per arm, in table order.
    """
    if name not in ABLATIONS:
        message = f"Unknown ablation `{name}`; choose one of {', '.join(ABLATIONS)}."
        config.logger.error(message)
        raise ConfigError(message)

    arms = []
    for label, overrides in ABLATIONS[name]:
        run = arm_config(base, overrides)
        arm_dir = os.path.join(output_dir, _slug(label))
        config.logger.info(f"Ablation {name}: training arm `{label}` with {overrides}")
        model = build_model(run.model)
        trainer = Trainer(
            model,
            train_samples,
            run.train,
            run.augment,
            checkpoint_dir=arm_dir,
            log_path=os.path.join(arm_dir, "train_log.jsonl"),
        )
        trainer.train_progressive()
        report = evaluate_dataset(
            model, test_samples, run.tolerance, aggregate=run.aggregate, threads=run.threads or 1
        )
        arms.append(AblationArm(label=label, overrides=overrides, report=report))
        config.logger.info(f"Ablation {name}, {label}: {report.summary_line()}")
    return AblationReport(name=name, arms=arms)
