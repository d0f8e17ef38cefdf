"""Checkpoint archives for the SIS/TCC pair."""
import logging
import pickle
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import torch

from ..utils.config import SisConfig, TccConfig
from ..utils.exceptions import CheckpointError, FileOperationError
from ..utils.validators import RasterValidator
from .layers import parameter_count
from .sis import SisNetwork
from .tcc import TccNetwork

CHECKPOINT_MAGIC = "UTASIGN-CKPT-v1"

# Reference model scale reported alongside parameter counts
REFERENCE_PARAMETERS = 38.27e6


def build_models(
    sis_config: Optional[SisConfig] = None,
    tcc_config: Optional[TccConfig] = None,
    logger: Optional[logging.Logger] = None,
) -> Tuple[SisNetwork, TccNetwork]:
    """Construct both networks and log their size."""
    sis = SisNetwork(sis_config)
    tcc = TccNetwork(tcc_config)
    if logger:
        n_sis, n_tcc = parameter_count(sis), parameter_count(tcc)
        logger.info(
            f"Models built: SIS {n_sis / 1e6:.2f}M + TCC {n_tcc / 1e6:.2f}M parameters "
            f"(reference scale {REFERENCE_PARAMETERS / 1e6:.2f}M)"
        )
    return sis, tcc


def save_checkpoint(
    path: Union[str, Path],
    sis: SisNetwork,
    tcc: TccNetwork,
    step: int,
    epoch: int,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write both networks with their configs.

    Raises:
        FileOperationError: If the archive cannot be written
    """
    path = Path(path)
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "step": int(step),
        "epoch": int(epoch),
        "sis_config": sis.config.model_dump(mode="json"),
        "tcc_config": tcc.config.model_dump(mode="json"),
        "sis_state": sis.state_dict(),
        "tcc_state": tcc.state_dict(),
        "extra": extra or {},
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, path)
    except OSError as e:
        raise FileOperationError("write", str(path), str(e))
    return path


def load_checkpoint(
    path: Union[str, Path],
    map_location: Union[str, torch.device] = "cpu",
) -> Tuple[SisNetwork, TccNetwork, Dict[str, Any]]:
    """
    Rebuild both networks from an archive.

    Returns:
        (sis, tcc, {"step", "epoch", "extra"})

    Raises:
        FileOperationError: If the file does not exist
        CheckpointError: If the archive is foreign, truncated or inconsistent
    """
    path = RasterValidator.validate_file_path(path)
    try:
        payload = torch.load(path, map_location=map_location, weights_only=True)
    except (RuntimeError, pickle.UnpicklingError, EOFError, ValueError) as e:
        raise CheckpointError(str(path), f"unreadable archive ({e})")

    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(str(path), f"not a {CHECKPOINT_MAGIC} archive")

    try:
        sis = SisNetwork(SisConfig.model_validate(payload["sis_config"]))
        tcc = TccNetwork(TccConfig.model_validate(payload["tcc_config"]))
        sis.load_state_dict(payload["sis_state"])
        tcc.load_state_dict(payload["tcc_state"])
    except KeyError as e:
        raise CheckpointError(str(path), f"missing field {e}")
    except (RuntimeError, ValueError) as e:
        raise CheckpointError(str(path), f"state does not match config ({e})")

    meta = {"step": payload.get("step", 0), "epoch": payload.get("epoch", 0),
            "extra": payload.get("extra", {})}
    return sis, tcc, meta
