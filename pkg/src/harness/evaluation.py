"""Per-frame no-reference quality report."""
import csv
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from ..models.reports import EvaluationRow, NiqeModel
from ..services.metrics import entropy, masked_entropy, masked_std_dev, niqe, std_dev
from ..services.telemetry import RunTelemetry
from ..utils.exceptions import ConfigurationError, FileOperationError, NiqeModelError
from ..utils.logger import get_logger, PipelineLogger
from ..utils.raster_io import read_gray

MEAN_ROW = "mean"
KNOWN_METRICS = ("en", "sd", "niqe")


def _scorers(metrics: Sequence[str], model: Optional[NiqeModel]) -> Dict[str, Callable[[np.ndarray], float]]:
    scorers = {}
    for name in metrics:
        key = name.lower()
        if key == "en":
            scorers[key] = entropy
        elif key == "sd":
            scorers[key] = std_dev
        elif key == "niqe":
            if model is None:
                raise NiqeModelError("NIQE requested without a fitted model")
            scorers[key] = lambda img, m=model: niqe(img, m)
        else:
            raise ConfigurationError("metrics", f"unknown metric {name!r} (known: {', '.join(KNOWN_METRICS)})")
    return scorers


def evaluate(
    frames_dir: Union[str, Path],
    metrics: Sequence[str] = ("en", "sd"),
    niqe_model: Optional[NiqeModel] = None,
    output_csv: Optional[Union[str, Path]] = None,
    mask_dir: Optional[Union[str, Path]] = None,
    logger: Optional[logging.Logger] = None,
) -> List[EvaluationRow]:
    """
    Score every PNG frame of a directory and append the mean row.

    When ``mask_dir`` holds masks of the same file names, masked entropy and
    standard deviation are reported as ``en_mask`` and ``sd_mask``.

    Raises:
        FileOperationError: If the directory has no frames
        ConfigurationError: If a metric name is unknown
    """
    log = logger or get_logger("evaluation")
    events = PipelineLogger(log)
    telemetry = RunTelemetry(log)
    frames_dir = Path(frames_dir)
    paths = sorted(frames_dir.glob("*.png"))
    if not paths:
        raise FileOperationError("read", str(frames_dir), "no PNG frames found")
    scorers = _scorers(metrics, niqe_model)

    rows = []
    for path in paths:
        img = read_gray(path)
        scores = {name: float(fn(img)) for name, fn in scorers.items()}
        if mask_dir is not None and (Path(mask_dir) / path.name).is_file():
            mask = read_gray(Path(mask_dir) / path.name) >= 0.5
            scores["en_mask"] = masked_entropy(img, mask)
            scores["sd_mask"] = masked_std_dev(img, mask)
        rows.append(EvaluationRow(path.name, scores))
        events.frame_evaluated(path.name, scores)
        for name, value in scores.items():
            telemetry.record(name, value)

    columns = sorted({k for r in rows for k in r.scores}, key=lambda k: (k not in scorers, k))
    mean = {c: float(np.mean([r.scores[c] for r in rows if c in r.scores])) for c in columns}
    rows.append(EvaluationRow(MEAN_ROW, mean))

    if output_csv is not None:
        write_report(output_csv, rows, columns)
    events.run_summary("eval", frames=len(paths), **{k: round(v, 4) for k, v in mean.items()})
    return rows


def write_report(path: Union[str, Path], rows: Sequence[EvaluationRow], columns: Sequence[str]) -> Path:
    """CSV with a ``frame`` column followed by one column per metric."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=["frame", *columns], restval="")
            writer.writeheader()
            for row in rows:
                writer.writerow({"frame": row.frame, **{c: repr(v) for c, v in row.scores.items()}})
    except OSError as e:
        raise FileOperationError("write", str(path), str(e))
    return path
