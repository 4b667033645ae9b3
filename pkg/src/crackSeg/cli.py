"""`crackseg` command line: split, train, evaluate, predict, gradcheck, ablate, synth."""
import argparse
import logging
import os
import sys
from typing import Callable, Dict, List, Optional, Sequence

import cv2
import numpy as np

from crackSeg.config import config
from crackSeg.data.dataset import has_split, load_dataset, load_manifest, load_split, split, write_split
from crackSeg.data.synthetic import write_synthetic_dataset
from crackSeg.errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DimensionError,
    ImageFormatError,
    IngestionError,
    TrainingError,
)
from crackSeg.metrics.evaluation import evaluate_dataset, predict_probabilities
from crackSeg.metrics.tolerance import binarize
from crackSeg.models.configs import RunConfig
from crackSeg.network.checkpoint import load_checkpoint, load_training_state
from crackSeg.network.unet import build_model
from crackSeg.reporting.markdown_report import render_ablation_report, write_ablation_report
from crackSeg.reporting.metrics_pdf import MetricsPDFGenerator
from crackSeg.services.ablation import ABLATIONS, run_ablation
from crackSeg.services.gradcheck_suite import format_table, run_model_check, run_op_checks
from crackSeg.services.trainer import Trainer
from crackSeg.utils import file_handler, yaml_handler

INPUT_ERRORS = (IngestionError, ImageFormatError, CheckpointError, ConfigError, OSError)
NUMERIC_ERRORS = (TrainingError, ContractError, DimensionError)

MODEL_KEYS = ("use_scse", "base_channels", "blocks_per_stage", "pretrained_encoder_path", "dtype", "init_seed")
TRAIN_KEYS = (
    "lr_max",
    "batch_size",
    "epochs_stage1",
    "epochs_stage2",
    "epochs_per_size",
    "single_size_epochs",
    "sizes",
    "two_stage",
    "progressive",
    "seed",
)
RUN_KEYS = ("dataset_root", "output_dir", "radius", "aggregate", "train_ratio")
REDUCED_MODEL = {"base_channels": 8, "blocks_per_stage": [1, 1, 1, 1]}


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _collect(args: argparse.Namespace, keys: Sequence[str]) -> Dict[str, object]:
    return {key: getattr(args, key) for key in keys if getattr(args, key, None) is not None}


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """
    Packaged defaults, then the `--config` YAML file, then command-line flags.

    Args:
        args (argparse.Namespace): Parsed flags.

    Returns:
        RunConfig: Validated configuration.
    """
    values = dict(yaml_handler.read_yaml(filename=str(config.DEFAULTS_YAML)) or {})
    if getattr(args, "config", None):
        values.update(yaml_handler.read_yaml(filename=args.config) or {})
    if getattr(args, "reduced", False):
        values.update(REDUCED_MODEL)
    if getattr(args, "single_size", None) is not None:
        values.update({"progressive": False, "sizes": [args.single_size]})
    values.update(_collect(args, MODEL_KEYS + TRAIN_KEYS + RUN_KEYS))
    if getattr(args, "threads", None) is not None:
        values["threads"] = args.threads
    return RunConfig.from_flat(values)


def _threads(run: Optional[RunConfig], args: argparse.Namespace) -> int:
    threads = config.resolve_threads(args.threads if args.threads is not None else (run.threads if run else None))
    cv2.setNumThreads(threads)
    return threads


def _require_split(root: str):
    if not has_split(root):
        message = f"No {config.TRAIN_MANIFEST}/{config.TEST_MANIFEST} in {root}; run `crackseg split {root}` first."
        config.logger.error(message)
        raise IngestionError(message)
    return load_split(root)


def _load_model(run: RunConfig, checkpoint: str):
    model = build_model(run.model)
    load_checkpoint(model, checkpoint)
    return model


def cmd_split(args: argparse.Namespace) -> int:
    _threads(None, args)
    index = load_dataset(args.root)
    train, test = split(index, args.ratio, args.seed)
    write_split(args.root, train, test)
    print(f"train: {len(train)}, test: {len(test)}")
    return config.EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    run = load_run_config(args)
    run.require_training_fields()
    _threads(run, args)
    train_index, _ = _require_split(run.dataset_root)
    samples = train_index.load()

    os.makedirs(run.output_dir, exist_ok=True)
    yaml_handler.write_yaml(run.to_flat(), os.path.join(run.output_dir, config.RUN_CONFIG_YAML))
    log_path = os.path.join(run.output_dir, "train_log.jsonl")
    if os.path.exists(log_path):
        os.remove(log_path)
    model = build_model(run.model)
    trainer = Trainer(
        model,
        samples,
        run.train,
        run.augment,
        checkpoint_dir=os.path.join(run.output_dir, run.train.checkpoint_dir),
        log_path=log_path,
    )
    if args.resume:
        load_training_state(model, trainer.optimizer, args.resume)
    logs = trainer.train_progressive()
    final = os.path.join(trainer.checkpoint_dir, f"final{config.CHECKPOINT_SUFFIX}")
    print(f"trained {len(logs)} epochs, final loss {logs[-1].mean_train_loss:.4f}, checkpoint {final}")
    return config.EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    run = load_run_config(args)
    threads = _threads(run, args)
    manifest = args.manifest
    root = run.dataset_root or (os.path.dirname(os.path.abspath(manifest)) if manifest else None)
    if root is None:
        message = "evaluate needs --dataset-root or --manifest."
        config.logger.error(message)
        raise ConfigError(message)
    manifest = manifest or os.path.join(root, config.TEST_MANIFEST)

    model = _load_model(run, args.checkpoint)
    samples = load_manifest(root, manifest).load()
    report = evaluate_dataset(model, samples, run.tolerance, aggregate=run.aggregate, threads=threads)

    out = args.out or os.path.join(run.output_dir, "metrics.json")
    file_handler.write_json(out, report.model_dump())
    if args.pdf:
        MetricsPDFGenerator().generate(report, args.pdf)
    print(report.summary_line())
    return config.EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    run = load_run_config(args)
    _threads(run, args)
    model = _load_model(run, args.checkpoint)
    pixels = file_handler.read_png(args.image)
    image = np.ascontiguousarray(pixels.transpose(2, 0, 1), dtype=np.float32) / np.float32(255.0)

    mask = binarize(predict_probabilities(model, image), args.threshold)
    file_handler.write_png(args.out_path, mask * np.uint8(255))

    overlay_path = args.overlay or f"{os.path.splitext(args.out_path)[0]}_overlay.png"
    overlay = pixels.copy()
    overlay[mask > 0] = (255, 0, 0)
    file_handler.write_png(overlay_path, overlay)
    print(f"mask: {args.out_path} ({int(mask.sum())} crack pixels), overlay: {overlay_path}")
    return config.EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    rows = run_op_checks(args.seed) if args.scope == "ops" else run_model_check(args.seed)
    print(format_table(rows))
    failed = [name for name, error in rows if not error < config.GRADCHECK_TOLERANCE]
    if failed:
        config.logger.error(f"Gradient check failed for: {', '.join(failed)}")
        return config.EXIT_NUMERIC_FAILURE
    return config.EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    run = load_run_config(args)
    run.require_training_fields()
    _threads(run, args)
    train_index, test_index = _require_split(run.dataset_root)
    output_dir = os.path.join(run.output_dir, f"ablation-{args.name}")
    report = run_ablation(args.name, train_index.load(), test_index.load(), run, output_dir)
    file_handler.write_json(os.path.join(output_dir, "ablation.json"), report.model_dump())
    write_ablation_report(report, os.path.join(output_dir, "ablation.md"))
    print(render_ablation_report(report))
    return config.EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    names = write_synthetic_dataset(args.out_dir, args.count, args.size, args.seed)
    print(f"wrote {len(names)} synthetic pairs to {args.out_dir}")
    return config.EXIT_OK


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("model")
    group.add_argument("--config", help="Flat YAML file of configuration keys.")
    group.add_argument("--scse", dest="use_scse", action=argparse.BooleanOptionalAction, default=None)
    group.add_argument("--reduced", action="store_true", help="One block per stage, 8 base channels.")
    group.add_argument("--base-channels", dest="base_channels", type=int)
    group.add_argument("--blocks-per-stage", dest="blocks_per_stage", type=_int_list)
    group.add_argument("--dtype", choices=["float32", "float64"])
    group.add_argument("--init-seed", dest="init_seed", type=int)
    group.add_argument("--pretrained-encoder", dest="pretrained_encoder_path")
    group.add_argument("--output-dir", dest="output_dir")


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training")
    group.add_argument("--dataset-root", dest="dataset_root")
    group.add_argument("--lr-max", dest="lr_max", type=float)
    group.add_argument("--batch-size", dest="batch_size", type=int)
    group.add_argument("--sizes", type=_int_list, help="Progressive sizes, e.g. 128,256,320.")
    group.add_argument("--two-stage", dest="two_stage", action=argparse.BooleanOptionalAction, default=None)
    group.add_argument("--progressive", action=argparse.BooleanOptionalAction, default=None)
    group.add_argument("--single-size", dest="single_size", type=int, help="Train only this size.")
    group.add_argument("--epochs", dest="single_size_epochs", type=int, help="Total epochs of a single-size run.")
    group.add_argument("--epochs-stage1", dest="epochs_stage1", type=int)
    group.add_argument("--epochs-stage2", dest="epochs_stage2", type=int)
    group.add_argument("--epochs-per-size", dest="epochs_per_size", type=int)
    group.add_argument("--seed", type=int)


def _add_eval_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("evaluation")
    group.add_argument("--radius", type=int, help="Tolerance radius in pixels (default 2).")
    group.add_argument("--aggregate", choices=["image", "pixel"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crackseg", description="Crack segmentation with a U-Net / ResNet-34.")
    parser.add_argument("--threads", type=int, help=f"Worker threads (env {config.THREADS_ENV_VAR}).")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--log-file")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("split", help="Write train.txt / test.txt manifests.")
    p.add_argument("root")
    p.add_argument(
        "--ratio",
        type=float,
        default=config.TRAIN_RATIO,
        help="Training fraction; ceil(ratio * n) images go to train (118 images: 0.6 gives 71 / 47, 0.61 gives 72 / 46).",
    )
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = commands.add_parser("train", help="Two-stage, progressive-size training.")
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--resume", help="Training checkpoint (model and optimizer) to continue from.")
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("evaluate", help="Tolerance-matched Pr / Re / F1 of a checkpoint.")
    p.add_argument("checkpoint")
    _add_model_flags(p)
    _add_eval_flags(p)
    p.add_argument("--dataset-root", dest="dataset_root")
    p.add_argument("--manifest", help="Names to evaluate (default <root>/test.txt).")
    p.add_argument("--out", help="Metrics JSON path (default <output-dir>/metrics.json).")
    p.add_argument("--pdf", help="Also write a PDF report here.")
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser("predict", help="Binary mask and red overlay for one image.")
    p.add_argument("checkpoint")
    p.add_argument("image")
    p.add_argument("out_path")
    _add_model_flags(p)
    p.add_argument("--threshold", type=float, default=config.BINARIZE_THRESHOLD)
    p.add_argument("--overlay", help="Overlay PNG path (default <out>_overlay.png).")
    p.set_defaults(func=cmd_predict)

    p = commands.add_parser("gradcheck", help="Finite-difference gradient checks.")
    p.add_argument("scope", choices=["ops", "model"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = commands.add_parser("ablate", help="Train and evaluate both arms of an ablation.")
    p.add_argument("name", choices=list(ABLATIONS))
    _add_model_flags(p)
    _add_train_flags(p)
    _add_eval_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = commands.add_parser("synth", help="Generate a synthetic crack dataset.")
    p.add_argument("out_dir")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command.

    Returns:
        int: 0 on success, 1 on numeric or training failure, 2 on input / IO errors.
    """
    args = build_parser().parse_args(argv)
    config.configure_logging(getattr(logging, args.log_level), args.log_file)
    handler: Callable[[argparse.Namespace], int] = args.func
    try:
        return handler(args)
    except INPUT_ERRORS as e:
        config.logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return config.EXIT_INPUT_ERROR
    except NUMERIC_ERRORS as e:
        config.logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return config.EXIT_NUMERIC_FAILURE
