"""End-to-end training of the SIS/TCC pair on pseudo targets."""
import csv
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from ..networks.checkpoint import build_models, save_checkpoint
from ..networks.losses import GroupObjective, PerceptualExtractor
from ..services.pseudo_gt import MotionFn
from ..services.telemetry import RunTelemetry
from ..utils.config import PipelineConfig
from ..utils.exceptions import ConfigurationError, DatasetError, TrainingDivergenceError
from ..utils.logger import get_logger, PipelineLogger
from .augment import random_crop_augment
from .dataset import GroupRef, SceneDataset, stack_group

LOSS_CSV_HEADER = ["step", "l_sis", "l_tcc", "l_per", "l_grad", "total"]


def linear_lr(step: int, total_steps: int, start: float, end: float) -> float:
    """Learning rate interpolated from ``start`` at step 0 to ``end`` at the last step."""
    if total_steps <= 1:
        return start
    frac = min(max(step / (total_steps - 1), 0.0), 1.0)
    return start + (end - start) * frac


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


@dataclass
class TrainResult:
    """Artifacts and loss history of a run."""
    steps: int
    loss_csv: Path
    final_checkpoint: Path
    epoch_checkpoints: List[Path] = field(default_factory=list)
    totals: List[float] = field(default_factory=list)


class Trainer:
    """Optimise both networks jointly on sampled, augmented groups."""

    def __init__(
        self,
        config: Optional[PipelineConfig] = None,
        logger: Optional[logging.Logger] = None,
        motion_fn: Optional[MotionFn] = None,
    ):
        """
        Initialize trainer.

        Args:
            config: Pipeline configuration (train, sis, tcc, pseudo_gt blocks)
            logger: Logger instance
            motion_fn: Thermal motion estimator used for temporal targets
        """
        self.config = config or PipelineConfig()
        self.logger = logger or get_logger("trainer")
        self.events = PipelineLogger(self.logger)
        self.telemetry = RunTelemetry(self.logger)
        self.motion_fn = motion_fn
        self.device = torch.device(self.config.device)

        tcfg = self.config.train
        if self.config.tcc.n_frames != tcfg.group_len:
            raise ConfigurationError(
                "tcc.n_frames", f"must equal train.group_len ({tcfg.group_len})"
            )
        seed_everything(tcfg.seed)
        self.rng = np.random.default_rng(tcfg.seed)
        self.sis, self.tcc = build_models(self.config.sis, self.config.tcc, self.logger)
        self.sis.to(self.device)
        self.tcc.to(self.device)
        self.objective = GroupObjective(PerceptualExtractor().to(self.device), tcfg.loss_weights)
        self.optimizer = torch.optim.Adam(
            list(self.sis.parameters()) + list(self.tcc.parameters()),
            lr=tcfg.lr_start,
            betas=(tcfg.beta1, tcfg.beta2),
        )

    def total_steps(self, n_groups: int) -> int:
        tcfg = self.config.train
        per_epoch = math.ceil(n_groups / tcfg.batch_size)
        total = per_epoch * tcfg.epochs
        return min(total, tcfg.max_steps) if tcfg.max_steps else total

    def _batch(self, dataset: SceneDataset, refs: Sequence[GroupRef]) -> Dict[str, torch.Tensor]:
        cfg = self.config
        samples = []
        for ref in refs:
            targets = dataset.targets(ref, self.motion_fn, cfg.pseudo_gt, cfg.events)
            arrays = stack_group(dataset.group(ref), targets)
            samples.append(random_crop_augment(
                arrays, self.rng, cfg.train.crop, cfg.sis.levels, cfg.train.augment
            ))
        return {
            key: torch.from_numpy(np.stack([s[key] for s in samples])).to(self.device)
            for key in samples[0]
        }

    def step(self, batch: Dict[str, torch.Tensor], step: int):
        """One optimisation step; returns the loss report."""
        self.sis.train()
        self.tcc.train()
        sketches = self.sis.sketch_frames(batch["events"], batch["thermal"])
        volume = sketches.detach() if self.config.tcc.detach_sis else sketches
        corrected = self.tcc(volume)
        report = self.objective(sketches, corrected, batch["sis_gt"], batch["tcc_gt"][:, 0], batch["masks"])
        if not math.isfinite(report.total):
            raise TrainingDivergenceError(step, report.total)

        self.optimizer.zero_grad(set_to_none=True)
        report.total_tensor.backward()
        self.optimizer.step()
        return report

    def fit(self, dataset: SceneDataset, output_dir: Optional[Path] = None) -> TrainResult:
        """
        Train on the dataset's training split.

        Checkpoints are written after every epoch and once more after the
        final step; the loss CSV gets one row per step.

        Raises:
            DatasetError: If there are no training groups
            TrainingDivergenceError: If the total loss becomes NaN or Inf
        """
        tcfg = self.config.train
        groups = dataset.train_groups
        if not groups:
            raise DatasetError("no training groups", recoverable=False,
                               user_message="The dataset has no usable training groups.")
        self._check_resolutions(dataset, groups)

        out = Path(output_dir or tcfg.checkpoint_dir)
        out.mkdir(parents=True, exist_ok=True)
        loss_csv = out / "loss.csv"
        total_steps = self.total_steps(len(groups))

        def lr_factor(s: int) -> float:
            return linear_lr(s, total_steps, tcfg.lr_start, tcfg.lr_end) / tcfg.lr_start

        scheduler = torch.optim.lr_scheduler.LambdaLR(self.optimizer, lr_factor)

        self.logger.info(f"Training {len(groups)} groups for {total_steps} steps")
        result = TrainResult(0, loss_csv, out / "final.pt")
        step = 0
        epoch = 0
        with loss_csv.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(LOSS_CSV_HEADER)
            while step < total_steps:
                epoch += 1
                order = self.rng.permutation(len(groups))
                for i in range(0, len(order), tcfg.batch_size):
                    if step >= total_steps:
                        break
                    refs = [groups[j] for j in order[i:i + tcfg.batch_size]]
                    self.telemetry.start_timer("step")
                    lr = self.optimizer.param_groups[0]["lr"]
                    report = self.step(self._batch(dataset, refs), step)
                    scheduler.step()
                    self.telemetry.stop_timer("step", step)

                    writer.writerow(report.csv_row(step))
                    self.telemetry.record("total", report.total, step=step)
                    self.events.training_step(step, report.total, lr, {
                        k: v for k, v in report.to_dict().items() if k.startswith("l_")
                    })
                    result.totals.append(report.total)
                    step += 1
                handle.flush()
                path = save_checkpoint(out / f"epoch_{epoch:03d}.pt", self.sis, self.tcc, step, epoch)
                result.epoch_checkpoints.append(path)
                self.events.checkpoint_saved(str(path), epoch, step)

        save_checkpoint(result.final_checkpoint, self.sis, self.tcc, step, epoch,
                        extra={"config": self.config.to_dict()})
        self.events.checkpoint_saved(str(result.final_checkpoint), epoch, step)
        self.telemetry.log_summary()
        result.steps = step
        return result

    def _check_resolutions(self, dataset: SceneDataset, groups: Sequence[GroupRef]) -> None:
        if self.config.train.crop is not None:
            return
        sizes = {dataset.scenes[g.scene].rig.ir_resolution for g in groups}
        if len(sizes) > 1:
            raise ConfigurationError(
                "train.crop", f"quarter-area crops need one scene resolution, found {sorted(sizes)}"
            )


def train(
    dataset: SceneDataset,
    config: Optional[PipelineConfig] = None,
    output_dir: Optional[Path] = None,
    motion_fn: Optional[MotionFn] = None,
    logger: Optional[logging.Logger] = None,
) -> TrainResult:
    """Build a trainer and run it to completion."""
    return Trainer(config, logger, motion_fn).fit(dataset, output_dir)
