"""Structured logging setup for the thermal-event signage sketching pipeline."""
import logging
import sys
from typing import Optional, Dict, Any
from datetime import datetime


def setup_logger(
    name: str = "uta_sign",
    level: str = "INFO",
    log_file: Optional[str] = None
) -> logging.Logger:
    """
    Set up structured logger.

    Args:
        name: Logger name
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional file path to write logs to

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper()))

    # Remove existing handlers
    logger.handlers.clear()

    formatter = logging.Formatter(
        fmt='%(asctime)s | %(levelname)-8s | %(name)s | %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(getattr(logging, level.upper()))
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(logging.DEBUG)  # Log everything to file
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False

    return logger


def get_logger(module: str) -> logging.Logger:
    """Child logger of the pipeline root, e.g. ``uta_sign.calib``."""
    return logging.getLogger(f"uta_sign.{module}")


class PipelineLogger:
    """Structured event logging for pipeline runs."""

    def __init__(self, logger: logging.Logger):
        """
        Initialize pipeline logger.

        Args:
            logger: Base logger instance
        """
        self.logger = logger

    def _extra(self, event: str, **fields: Any) -> Dict[str, Any]:
        return {"event": event, **fields, "timestamp": datetime.now().isoformat()}

    def scene_generated(self, scene_dir: str, n_frames: int, n_events: int) -> None:
        """Log synthetic scene generation."""
        self.logger.info(
            f"Scene written: {scene_dir} ({n_frames} frames, {n_events} events)",
            extra=self._extra("scene_generated", scene_dir=scene_dir,
                              n_frames=n_frames, n_events=n_events)
        )

    def group_rejected(self, scene: str, start: int, reason: str) -> None:
        """Log a frame group excluded from the dataset."""
        self.logger.warning(
            f"Group rejected: {scene}@{start} - {reason}",
            extra=self._extra("group_rejected", scene=scene, start=start, reason=reason)
        )

    def targets_sparse(self, kept: int, total: int) -> None:
        """Log a target pass that rejected most groups."""
        self.logger.warning(
            f"Most groups rejected: {kept}/{total} kept; check thermal texture and motion",
            extra=self._extra("targets_sparse", kept=kept, total=total)
        )

    def motion_estimated(self, inliers: int, rms: float) -> None:
        """Log a thermal ego-motion fit."""
        self.logger.debug(
            f"Motion estimated: {inliers} inliers, rms={rms:.3f}px",
            extra=self._extra("motion_estimated", inliers=inliers, rms=rms)
        )

    def training_step(self, step: int, total: float, lr: float, components: Dict[str, float]) -> None:
        """Log one optimisation step."""
        self.logger.debug(
            f"Step {step}: total={total:.5f} lr={lr:.3e}",
            extra=self._extra("training_step", step=step, total=total, lr=lr, **components)
        )

    def checkpoint_saved(self, path: str, epoch: int, step: int) -> None:
        """Log checkpoint creation."""
        self.logger.info(
            f"Checkpoint saved: {path} (epoch {epoch}, step {step})",
            extra=self._extra("checkpoint_saved", path=path, epoch=epoch, step=step)
        )

    def frame_evaluated(self, frame: str, scores: Dict[str, float]) -> None:
        """Log per-frame quality metrics."""
        rendered = ", ".join(f"{k}={v:.3f}" for k, v in scores.items())
        self.logger.debug(
            f"Evaluated {frame}: {rendered}",
            extra=self._extra("frame_evaluated", frame=frame, **scores)
        )

    def run_summary(self, what: str, **fields: Any) -> None:
        """Log the end-of-run summary of a CLI verb."""
        rendered = ", ".join(f"{k}={v}" for k, v in fields.items())
        self.logger.info(
            f"{what} completed: {rendered}",
            extra=self._extra("run_summary", what=what, **fields)
        )
