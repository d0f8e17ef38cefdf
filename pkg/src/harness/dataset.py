"""Scene directories, group windowing and pseudo-target caching."""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..models.frames import EventFrame, FrameClock, FrameGroup, ThermalFrame
from ..models.geometry import RigCalibration
from ..models.targets import GroupTargets
from ..services.calib import load_rig
from ..services.events import read_events, register_to_thermal, stream_to_frames
from ..services.pseudo_gt import MotionFn, build_group_targets, read_cache, write_cache
from ..utils.config import EventConfig, PseudoGtConfig
from ..utils.exceptions import GeometryError, UtaSignError, GroupValidationError
from ..utils.logger import get_logger, PipelineLogger
from ..utils.raster_io import read_gray

THERMAL_DIR = "thermal"
EVENT_FILES = ("events.csv", "events.bin")
RIG_FILE = "rig.json"


@dataclass(frozen=True)
class GroupRef:
    """Window of ``length`` consecutive frames of a scene."""
    scene: str
    start: int
    length: int

    @property
    def indices(self) -> List[int]:
        return list(range(self.start, self.start + self.length))


@dataclass(frozen=True)
class Rejection:
    scene: str
    start: int
    reason: str


@dataclass(eq=False)
class Scene:
    """One scene loaded into memory; frame lists are indexed by file number."""
    name: str
    path: Path
    rig: RigCalibration
    thermal: Dict[int, ThermalFrame]
    events: List[EventFrame]
    registered: List[EventFrame]

    @property
    def n_frames(self) -> int:
        return len(self.events)


@dataclass(eq=False)
class SceneDataset:
    """Validated groups over a dataset root."""
    root: Path
    scenes: Dict[str, Scene] = field(default_factory=dict)
    groups: List[GroupRef] = field(default_factory=list)
    rejected: List[Rejection] = field(default_factory=list)
    val_scenes: Tuple[str, ...] = ()
    _targets: Dict[GroupRef, GroupTargets] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def train_groups(self) -> List[GroupRef]:
        return [g for g in self.groups if g.scene not in self.val_scenes]

    @property
    def val_groups(self) -> List[GroupRef]:
        return [g for g in self.groups if g.scene in self.val_scenes]

    def group(self, ref: GroupRef) -> FrameGroup:
        scene = self.scenes[ref.scene]
        idx = ref.indices
        return FrameGroup(
            thermal=[scene.thermal[i] for i in idx],
            events=[scene.events[i] for i in idx],
            rig=scene.rig,
            registered_events=[scene.registered[i] for i in idx],
            scene=ref.scene,
            start=ref.start,
        )

    def targets(
        self,
        ref: GroupRef,
        motion_fn: Optional[MotionFn] = None,
        config: Optional[PseudoGtConfig] = None,
        event_config: Optional[EventConfig] = None,
    ) -> GroupTargets:
        """
        Pseudo targets of a group, built and cached on first use.

        Freshly built targets are read back from the cache so that every run
        sees the same 8-bit values.
        """
        if ref in self._targets:
            return self._targets[ref]
        scene_dir = self.scenes[ref.scene].path
        cached = read_cache(scene_dir, ref.indices)
        if cached is None:
            built = build_group_targets(self.group(ref), motion_fn, config, event_config)
            write_cache(scene_dir, ref.indices, built)
            cached = read_cache(scene_dir, ref.indices)
        self._targets[ref] = cached
        return cached

    def prepare_targets(
        self,
        motion_fn: Optional[MotionFn] = None,
        config: Optional[PseudoGtConfig] = None,
        event_config: Optional[EventConfig] = None,
        logger: Optional[logging.Logger] = None,
    ) -> int:
        """
        Build every group's targets; groups whose motion cannot be estimated
        are dropped and reported, with a warning when more than half go.

        Returns:
            Number of groups with targets
        """
        events = PipelineLogger(logger or get_logger("dataset"))
        total = len(self.groups)
        kept = []
        for ref in self.groups:
            try:
                self.targets(ref, motion_fn, config, event_config)
            except GeometryError as e:
                self._reject(events, ref.scene, ref.start, f"pseudo target: {e}")
                continue
            kept.append(ref)
        self.groups = kept
        if 2 * len(kept) < total:
            events.targets_sparse(len(kept), total)
        return len(kept)

    def _reject(self, events: PipelineLogger, scene: str, start: int, reason: str) -> None:
        self.rejected.append(Rejection(scene, start, reason))
        events.group_rejected(scene, start, reason)


def _thermal_indices(scene_dir: Path) -> Dict[int, Path]:
    found = {}
    for path in sorted((scene_dir / THERMAL_DIR).glob("*.png")):
        if path.stem.isdigit():
            found[int(path.stem)] = path
    return found


def _event_file(scene_dir: Path) -> Optional[Path]:
    for name in EVENT_FILES:
        if (scene_dir / name).is_file():
            return scene_dir / name
    return None


def window_starts(n_frames: int, group_len: int, stride: int) -> List[int]:
    """Start indices of all full windows over ``n_frames``."""
    if n_frames < group_len:
        return []
    return list(range(0, n_frames - group_len + 1, stride))


def load_scene(
    scene_dir: Union[str, Path],
    event_config: Optional[EventConfig] = None,
) -> Tuple[Scene, List[int]]:
    """
    Read one scene and rasterise its events against the thermal clock.

    Returns:
        The scene and the sorted indices of thermal frames present on disk

    Raises:
        GroupValidationError: If the scene has no usable event file or frames
    """
    ecfg = event_config or EventConfig()
    scene_dir = Path(scene_dir)
    name = scene_dir.name
    frame_paths = _thermal_indices(scene_dir)
    if not frame_paths:
        raise GroupValidationError(name, 0, "no thermal frames")
    event_path = _event_file(scene_dir)
    if event_path is None:
        raise GroupValidationError(name, 0, "event file missing")

    thermal = {i: ThermalFrame(read_gray(p)) for i, p in frame_paths.items()}
    if (scene_dir / RIG_FILE).is_file():
        rig, clock = load_rig(scene_dir / RIG_FILE)
    else:
        h, w = next(iter(thermal.values())).shape
        rig, clock = RigCalibration.shared_sensor((w, h)), None
    clock = clock or FrameClock(ecfg.period_us, ecfg.t0_us)

    n_frames = max(frame_paths) + 1
    for i, frame in thermal.items():
        frame.t_us = clock.window(i)[1]

    events = stream_to_frames(read_events(event_path), clock, n_frames, rig.ev_resolution, ecfg.gain)
    registered = register_to_thermal(events, rig)
    return Scene(name, scene_dir, rig, thermal, events, registered), sorted(frame_paths)


def load_dataset(
    root: Union[str, Path],
    group_len: int = 7,
    stride: int = 7,
    val_fraction: float = 0.0,
    event_config: Optional[EventConfig] = None,
    logger: Optional[logging.Logger] = None,
) -> SceneDataset:
    """
    Scan ``root`` for scene directories and window them into groups.

    A group is rejected (and reported) when any of its thermal frames is
    missing; a scene without an event file or with a malformed event stream
    has all of its groups rejected. The last ``val_fraction`` of scenes (by
    name) form the validation split.
    """
    log = logger or get_logger("dataset")
    events = PipelineLogger(log)
    root = Path(root)
    dataset = SceneDataset(root)
    if not root.is_dir():
        log.warning(f"Dataset root {root} does not exist")
        return dataset

    for scene_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            scene, present = load_scene(scene_dir, event_config)
        except UtaSignError as e:
            dataset._reject(events, scene_dir.name, 0, e.user_message)
            continue

        dataset.scenes[scene.name] = scene
        have = set(present)
        for start in window_starts(scene.n_frames, group_len, stride):
            ref = GroupRef(scene.name, start, group_len)
            missing = [i for i in ref.indices if i not in have]
            if missing:
                dataset._reject(events, scene.name, start, f"missing thermal frame {missing[0]:06d}")
                continue
            dataset.groups.append(ref)

    names = sorted(dataset.scenes)
    n_val = int(round(val_fraction * len(names)))
    dataset.val_scenes = tuple(names[len(names) - n_val:]) if n_val else ()
    log.info(
        f"Dataset {root}: {len(dataset.scenes)} scenes, {len(dataset.groups)} groups, "
        f"{len(dataset.rejected)} rejected"
    )
    return dataset


def stack_group(group: FrameGroup, targets: GroupTargets) -> Dict[str, np.ndarray]:
    """(T, H, W) float32 arrays of a group and its targets."""
    return {
        "thermal": group.thermal_stack().astype(np.float32),
        "events": group.event_stack().astype(np.float32),
        "masks": targets.mask_stack(),
        "sis_gt": targets.sis_stack(),
        "tcc_gt": targets.tcc_gt.pixels[None].astype(np.float32),
    }
