"""Two-stage fine-tuning, progressive image sizes and per-stage one-cycle schedules."""
import math
import os
import time
from typing import Iterable, List, Optional, Sequence, Set

import numpy as np

from crackSeg.config import config
from crackSeg.data.batches import make_batches, batches_per_epoch
from crackSeg.data.dataset import Sample
from crackSeg.errors import ContractError, TrainingError
from crackSeg.metrics.dice import dice_loss
from crackSeg.models.configs import AugmentSpec, LayerGroup, OneCycleConfig, TrainConfig
from crackSeg.models.records import EpochLog
from crackSeg.network.checkpoint import save_training_state
from crackSeg.network.unet import Model, set_group_trainable
from crackSeg.optim.adamw import AdamW
from crackSeg.optim.schedule import group_lrs, lr_at, zero_grads
from crackSeg.services.prefetch import BatchPrefetcher
from crackSeg.tensor.tensor import Tensor, backward, no_grad
from crackSeg.utils import file_handler


class Trainer:
    """
    Owns the optimizer, the random stream and the epoch counter of one training run.

    Attributes:
        model (Model): Model being trained in place.
        samples (Sequence[Sample]): Decoded training pairs.
        train_config (TrainConfig): Epochs, sizes, switches and seed.
        augment_spec (AugmentSpec): Training-time augmentation.
        rng (np.random.Generator): Shuffling, cropping and augmentation randomness.
        optimizer (AdamW): Moments keyed by parameter name, shared across stages.
        lr_trace (List[float]): Scheduled base learning rate of every optimizer iteration.
    """

    def __init__(
        self,
        model: Model,
        samples: Sequence[Sample],
        train_config: TrainConfig,
        augment_spec: AugmentSpec = AugmentSpec(),
        rng: Optional[np.random.Generator] = None,
        checkpoint_dir: Optional[str] = None,
        log_path: Optional[str] = None,
        prefetch: bool = True,
    ):
        if len(samples) == 0:
            message = "Training needs at least one sample."
            config.logger.error(message)
            raise ContractError(message)
        self.model = model
        self.samples = samples
        self.train_config = train_config
        self.augment_spec = augment_spec
        self.rng = rng if rng is not None else np.random.default_rng(train_config.seed)
        self.optimizer = AdamW(train_config.adamw)
        self.checkpoint_dir = checkpoint_dir if checkpoint_dir is not None else train_config.checkpoint_dir
        self.log_path = log_path
        self.prefetch = prefetch
        self.epoch = 0
        self.lr_trace: List[float] = []

    def _batches(self, size: int) -> Iterable:
        stream = make_batches(
            self.samples,
            self.train_config.batch_size,
            size,
            mode="train",
            spec=self.augment_spec,
            rng=self.rng,
            dtype=self.model.config.dtype,
        )
        return BatchPrefetcher(stream) if self.prefetch else stream

    def train_stage(
        self,
        epochs: int,
        frozen_groups: Set[LayerGroup],
        lr_max: Optional[float] = None,
        size: Optional[int] = None,
        stage: int = 1,
    ) -> List[EpochLog]:
        """
        Train for `epochs` epochs under one fresh one-cycle schedule.

        Trainable flags are set from `frozen_groups` on entry and left as they are on exit.

        Args:
            epochs (int): Epochs in this stage.
            frozen_groups (Set[LayerGroup]): Groups held fixed (values and running stats).
            lr_max (float, optional): Peak learning rate; defaults to the config's.
            size (int, optional): Training crop size; defaults to the last scheduled size.
            stage (int): Stage number written to the logs.

        Returns:
            List[EpochLog]: One entry per epoch.

        Raises:
            TrainingError: A batch produced a non-finite loss.
        """
        lr_max = lr_max if lr_max is not None else self.train_config.require_lr()
        size = size if size is not None else self.train_config.size_schedule.sizes[-1]
        for group in LayerGroup:
            set_group_trainable(self.model, group, group not in frozen_groups)
        trainable = self.model.trainable_parameters()

        n_batches = batches_per_epoch(len(self.samples), self.train_config.batch_size)
        schedule = OneCycleConfig(lr_max=lr_max, total_iterations=epochs * n_batches)
        frozen = ", ".join(sorted(g.value for g in frozen_groups)) or "none"
        config.logger.info(
            f"Stage {stage} at size {size}: {epochs} epochs x {n_batches} batches, frozen {frozen}, lr_max {lr_max}"
        )

        logs: List[EpochLog] = []
        iteration = 0
        for _ in range(epochs):
            started = time.perf_counter()
            losses = []
            for batch_index, (images, masks) in enumerate(self._batches(size)):
                base_lr = lr_at(iteration, schedule)
                loss = self._step(images, masks, trainable, base_lr)
                if not math.isfinite(loss):
                    message = (
                        f"Non-finite loss {loss} at epoch {self.epoch}, batch {batch_index} "
                        f"(stage {stage}, size {size}, lr {base_lr:.3e})"
                    )
                    config.logger.error(message)
                    raise TrainingError(message)
                losses.append(loss)
                self.lr_trace.append(base_lr)
                iteration += 1

            midpoint = (iteration - n_batches) + n_batches // 2
            log = EpochLog(
                epoch=self.epoch,
                stage=stage,
                size=size,
                mean_train_loss=float(np.mean(losses)),
                lr=lr_at(midpoint, schedule),
                wall_time=time.perf_counter() - started,
            )
            logs.append(log)
            self._write_log(log)
            config.logger.info(
                f"epoch {log.epoch} stage {stage} size {size}: loss {log.mean_train_loss:.4f} lr {log.lr:.3e}"
            )
            self.epoch += 1
        return logs

    def _step(self, images: Tensor, masks: Tensor, trainable: List, base_lr: float) -> float:
        if not trainable:
            with no_grad():
                return float(dice_loss(self.model.forward(images, "train"), masks).data)
        loss = dice_loss(self.model.forward(images, "train"), masks)
        value = float(loss.data)
        if not math.isfinite(value):
            return value
        backward(loss)
        self.optimizer.step(trainable, group_lrs(base_lr), self.model.layer_group)
        zero_grads(trainable)
        return value

    def _write_log(self, log: EpochLog) -> None:
        if self.log_path:
            file_handler.append_json_line(self.log_path, log.model_dump())

    def save(self, name: str) -> str:
        path = os.path.join(self.checkpoint_dir, name)
        save_training_state(self.model, self.optimizer, path)
        return path

    def train_two_stage(self, size: Optional[int] = None, total_epochs: Optional[int] = None) -> List[EpochLog]:
        """
        Stage 1 with G1 frozen, then stage 2 with everything trainable, each with its own cycle.

        With `two_stage` off this is a single unfrozen stage (the stage-2 recipe alone).
        `total_epochs` fixes the overall epoch count; stage 2 then gets what stage 1 leaves.

        Args:
            size (int, optional): Training size; defaults to the first scheduled size.
            total_epochs (int, optional): Total epochs across both stages.

        Returns:
            List[EpochLog]: Logs of both stages.
        """
        cfg = self.train_config
        size = size if size is not None else cfg.size_schedule.sizes[0]
        if not cfg.two_stage:
            epochs = total_epochs if total_epochs is not None else cfg.epochs_stage2
            logs = self.train_stage(epochs, set(), size=size, stage=1)
            self.save(f"stage1_size{size}{config.CHECKPOINT_SUFFIX}")
            return logs

        stage2_epochs = cfg.epochs_stage2 if total_epochs is None else total_epochs - cfg.epochs_stage1
        if stage2_epochs < 1:
            message = f"total_epochs {total_epochs} leaves no epochs after the {cfg.epochs_stage1}-epoch frozen stage."
            config.logger.error(message)
            raise TrainingError(message)
        logs = self.train_stage(cfg.epochs_stage1, {LayerGroup.G1}, size=size, stage=1)
        self.save(f"stage1_size{size}{config.CHECKPOINT_SUFFIX}")
        config.logger.info(f"Stage boundary at epoch {self.epoch}: unfreezing G1")
        logs += self.train_stage(stage2_epochs, set(), size=size, stage=2)
        self.save(f"stage2_size{size}{config.CHECKPOINT_SUFFIX}")
        return logs

    def preflight(self, sizes: Sequence[int]) -> None:
        """Eval-mode forward of a blank image at every size, before any training."""
        with no_grad():
            for size in sizes:
                blank = Tensor(np.zeros((1, self.model.config.input_channels, size, size)), dtype=self.model.dtype)
                self.model.forward(blank, mode="eval")

    def train_progressive(self) -> List[EpochLog]:
        """
        Progressive run: the configured (two-stage) procedure at the first size, then one
        unfrozen stage of `epochs_per_size` at every later size. With `progressive` off, only
        the last size is trained, for `single_size_epochs` (default epochs_per_size x sizes).

        Returns:
            List[EpochLog]: Logs of every phase, sizes in increasing order.
        """
        cfg = self.train_config
        cfg.require_lr()
        sizes = cfg.size_schedule.sizes
        self.preflight(sizes if cfg.progressive else sizes[-1:])

        if cfg.progressive:
            logs = self.train_two_stage(sizes[0])
            stage = 2 if cfg.two_stage else 1
            for size in sizes[1:]:
                config.logger.info(f"Progressive resize to {size}x{size}")
                logs += self.train_stage(cfg.epochs_per_size, set(), size=size, stage=stage)
                self.save(f"stage{stage}_size{size}{config.CHECKPOINT_SUFFIX}")
        else:
            total = cfg.single_size_epochs or cfg.epochs_per_size * len(sizes)
            logs = self.train_two_stage(sizes[-1], total_epochs=total)

        self.save(f"final{config.CHECKPOINT_SUFFIX}")
        return logs
