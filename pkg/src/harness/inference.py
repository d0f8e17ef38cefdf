"""Sliding-window inference over a scene."""
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from ..networks.checkpoint import load_checkpoint
from ..networks.sis import SisNetwork
from ..networks.tcc import TccNetwork
from ..utils.config import EventConfig
from ..utils.logger import get_logger, PipelineLogger
from ..utils.raster_io import frame_name, write_gray
from .dataset import load_scene


@dataclass
class InferenceResult:
    outputs: List[Path] = field(default_factory=list)
    corrected: int = 0

    def __len__(self) -> int:
        return len(self.outputs)


def pad_to_multiple(x: torch.Tensor, factor: int) -> Tuple[torch.Tensor, Tuple[int, int]]:
    """
    Pad the bottom and right edges of (B, C, H, W) up to multiples of ``factor``.

    Reflect padding is used where the frame is large enough, edge replication
    otherwise.
    """
    h, w = x.shape[-2:]
    ph, pw = (-h) % factor, (-w) % factor
    if ph == 0 and pw == 0:
        return x, (h, w)
    mode = "reflect" if ph < h and pw < w else "replicate"
    return F.pad(x, (0, pw, 0, ph), mode=mode), (h, w)


class SceneSketcher:
    """Stateful per-frame sketcher holding the last N sketches."""

    def __init__(self, sis: SisNetwork, tcc: TccNetwork, recurrent: bool = False,
                 device: Union[str, torch.device] = "cpu"):
        self.sis = sis.to(device).eval()
        self.tcc = tcc.to(device).eval()
        self.device = torch.device(device)
        self.recurrent = recurrent
        self.buffer = deque(maxlen=tcc.config.n_frames)

    def reset(self) -> None:
        self.buffer.clear()

    @torch.no_grad()
    def push(self, events: np.ndarray, thermal: np.ndarray) -> Tuple[np.ndarray, bool]:
        """
        Sketch one frame and, once the buffer is full, correct it.

        Returns:
            (output raster, whether the corrected output was emitted)
        """
        ev = torch.from_numpy(np.ascontiguousarray(events, dtype=np.float32))[None, None].to(self.device)
        ir = torch.from_numpy(np.ascontiguousarray(thermal, dtype=np.float32))[None, None].to(self.device)
        ev, size = pad_to_multiple(ev, self.sis.factor)
        ir, _ = pad_to_multiple(ir, self.sis.factor)
        sketch = self.sis(ev, ir)[:, 0]
        self.buffer.append(sketch)

        out, corrected = sketch, False
        if len(self.buffer) == self.buffer.maxlen:
            out = self.tcc(torch.stack(list(self.buffer), dim=1))
            corrected = True
            if self.recurrent:
                self.buffer[-1] = out
        h, w = size
        return out[0, :h, :w].cpu().numpy(), corrected


def infer_video(
    checkpoint: Union[str, Path],
    scene_dir: Union[str, Path],
    output_dir: Union[str, Path],
    recurrent: bool = False,
    event_config: Optional[EventConfig] = None,
    device: Union[str, torch.device] = "cpu",
    logger: Optional[logging.Logger] = None,
) -> InferenceResult:
    """
    Write one output frame per input thermal frame.

    Frames before the window fills get their sketch; from the N-th frame on
    the corrected output of the N most recent sketches is written.
    """
    log = logger or get_logger("inference")
    sis, tcc, meta = load_checkpoint(checkpoint, map_location=device)
    scene, indices = load_scene(scene_dir, event_config)
    sketcher = SceneSketcher(sis, tcc, recurrent, device)

    output_dir = Path(output_dir)
    result = InferenceResult()
    for i in indices:
        out, corrected = sketcher.push(scene.registered[i].pixels, scene.thermal[i].pixels)
        result.outputs.append(write_gray(output_dir / frame_name(i), np.clip(out, 0.0, 1.0)))
        result.corrected += int(corrected)

    PipelineLogger(log).run_summary(
        "infer", scene=scene.name, frames=len(result), corrected=result.corrected,
        checkpoint_step=meta["step"],
    )
    return result
