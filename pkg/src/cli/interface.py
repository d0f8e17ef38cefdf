"""Command-line interface for the thermal-event signage sketching pipeline."""
import argparse
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from ..harness.dataset import load_dataset
from ..harness.evaluation import evaluate
from ..harness.inference import infer_video
from ..harness.trainer import Trainer
from ..models.frames import ThermalFrame
from ..services.calib import calibrate_rig, save_rig
from ..services.metrics import fit_niqe, load_niqe_model, save_niqe_model
from ..services.pseudo_gt import MotionFn, static_motion
from ..services.simgen import read_rgb_frames, render_signage_scene, write_scene
from ..utils.config import PipelineConfig
from ..utils.exceptions import FileOperationError
from ..utils.logger import PipelineLogger
from ..utils.raster_io import read_gray


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uta", description="Thermal/event signage sketching pipeline")
    parser.add_argument("--config", help="YAML or JSON configuration document")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simgen", help="Generate scenes from RGB video or synthetic signage")
    p.add_argument("--out", required=True, help="Dataset root to write scenes into")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", "--source", dest="source", help="RGB video file or image directory")
    src.add_argument("--synthetic", type=int, metavar="N", help="Render N synthetic signage scenes")
    p.add_argument("--frames", type=int, default=14, help="Frames per scene")
    p.add_argument("--size", type=int, nargs=2, default=(128, 128), metavar=("W", "H"))
    p.add_argument("--pan", type=int, default=2, help="Synthetic camera pan in px/frame")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("pseudo-gt", help="Build the mask and target caches")
    p.add_argument("--root", required=True)
    p.add_argument("--static", action="store_true", help="Assume a fixed camera (no motion estimation)")

    p = sub.add_parser("train", help="Train SIS and TCC")
    p.add_argument("--root", required=True)
    p.add_argument("--out", help="Checkpoint directory (defaults to train.checkpoint_dir)")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--static", action="store_true")

    p = sub.add_parser("infer", help="Sketch every frame of a scene")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--recurrent", action="store_true", help="Feed corrected frames back into the window")

    p = sub.add_parser("eval", help="No-reference quality report")
    p.add_argument("--dir", "--frames", dest="frames", required=True)
    p.add_argument("--metrics", default="en,sd", help="Comma-separated subset of en,sd,niqe")
    p.add_argument("--model", "--niqe-model", dest="niqe_model")
    p.add_argument("--masks", help="Directory of signage masks for masked EN/SD")
    p.add_argument("--out", help="Report CSV path")

    p = sub.add_parser("fit-niqe", help="Fit the NIQE model on pristine images")
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("calib", help="Rig calibration")
    calib = p.add_subparsers(dest="calib_command", required=True)
    r = calib.add_parser("register", help="Register event and thermal views of one instant")
    r.add_argument("--ev", "--event", dest="event", required=True, help="Grayscale frame from the event camera")
    r.add_argument("--ir", "--thermal", dest="thermal", required=True, help="Thermal frame")
    r.add_argument("--out", required=True, help="rig.json to write")
    return parser


class PipelineCLI:
    """Dispatch parsed arguments to the pipeline and render results."""

    def __init__(self, config: PipelineConfig, logger: logging.Logger, console: Optional[Console] = None):
        """
        Initialize CLI interface.

        Args:
            config: Validated pipeline configuration
            logger: Root pipeline logger
            console: Rich console (a fresh one by default)
        """
        self.config = config
        self.logger = logger
        self.events = PipelineLogger(logger)
        self.console = console or Console()

    def run(self, args: argparse.Namespace) -> int:
        handlers: Dict[str, Callable[[argparse.Namespace], int]] = {
            "simgen": self.simgen,
            "pseudo-gt": self.pseudo_gt,
            "train": self.train,
            "infer": self.infer,
            "eval": self.eval,
            "fit-niqe": self.fit_niqe,
            "calib": self.calib,
        }
        return handlers[args.command](args)

    def _motion(self, static: bool) -> Optional[MotionFn]:
        return static_motion if static else None

    def _table(self, title: str, rows: Sequence[Sequence[str]], columns: Sequence[str]) -> None:
        table = Table(title=title, show_header=True)
        for i, col in enumerate(columns):
            table.add_column(col, style="cyan" if i == 0 else "white", justify="left" if i == 0 else "right")
        for row in rows:
            table.add_row(*row)
        self.console.print(table)

    # ------------------------------------------------------------------------
    # Verbs
    # ------------------------------------------------------------------------

    def simgen(self, args: argparse.Namespace) -> int:
        out = Path(args.out)
        rows = []
        if args.source:
            frames = read_rgb_frames(args.source, args.frames)
            rows.append(write_scene(out / Path(args.source).stem, frames, self.config.sim, self.config.events.gain))
        else:
            with Progress(SpinnerColumn(), TextColumn("{task.description}"), console=self.console) as progress:
                task = progress.add_task("Rendering scenes", total=args.synthetic)
                for i in range(args.synthetic):
                    frames = render_signage_scene(args.frames, tuple(args.size), args.pan, seed=args.seed + i)
                    rows.append(write_scene(out / f"scene_{i:03d}", frames, self.config.sim,
                                            self.config.events.gain))
                    progress.advance(task)
        self._table("Generated scenes", [(Path(r["scene"]).name, str(r["frames"]), str(r["events"]))
                                         for r in rows], ("scene", "frames", "events"))
        return 0

    def _dataset(self, root: str):
        tcfg = self.config.train
        return load_dataset(root, tcfg.group_len, tcfg.stride, event_config=self.config.events,
                            logger=self.logger)

    def pseudo_gt(self, args: argparse.Namespace) -> int:
        dataset = self._dataset(args.root)
        with self.console.status("Building pseudo targets..."):
            kept = dataset.prepare_targets(self._motion(args.static), self.config.pseudo_gt,
                                           self.config.events, self.logger)
        self._report_rejections(dataset)
        self.console.print(f"[green]Cached targets for {kept} groups[/green]")
        return 0

    def _report_rejections(self, dataset) -> None:
        if dataset.rejected:
            self._table("Rejected groups", [(r.scene, str(r.start), r.reason) for r in dataset.rejected],
                        ("scene", "start", "reason"))

    def train(self, args: argparse.Namespace) -> int:
        if args.max_steps:
            self.config.train.max_steps = args.max_steps
        dataset = self._dataset(args.root)
        trainer = Trainer(self.config, self.logger, self._motion(args.static))
        dataset.prepare_targets(trainer.motion_fn, self.config.pseudo_gt, self.config.events, self.logger)
        self._report_rejections(dataset)
        result = trainer.fit(dataset, Path(args.out) if args.out else None)
        self.console.print(Panel(
            f"Steps: {result.steps}\nFinal loss: {result.totals[-1]:.5f}\n"
            f"Loss log: {result.loss_csv}\nCheckpoint: {result.final_checkpoint}",
            title="Training complete", border_style="green",
        ))
        return 0

    def infer(self, args: argparse.Namespace) -> int:
        result = infer_video(args.checkpoint, args.scene, args.out, args.recurrent,
                             self.config.events, self.config.device, self.logger)
        self.console.print(f"[green]Wrote {len(result)} frames ({result.corrected} corrected) to {args.out}[/green]")
        return 0

    def eval(self, args: argparse.Namespace) -> int:
        metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
        model = load_niqe_model(args.niqe_model) if args.niqe_model else None
        rows = evaluate(args.frames, metrics, model, args.out, args.masks, self.logger)
        columns = list(rows[-1].scores)
        self._table("Quality report", [(r.frame, *(f"{r.scores.get(c, float('nan')):.4f}" for c in columns))
                                       for r in rows], ("frame", *columns))
        return 0

    def fit_niqe(self, args: argparse.Namespace) -> int:
        paths = sorted(Path(args.images).glob("*.png"))
        if not paths:
            raise FileOperationError("read", args.images, "no PNG images found")
        model = fit_niqe((read_gray(p) for p in paths), self.config.niqe)
        save_niqe_model(args.out, model)
        self.events.run_summary("fit-niqe", images=len(paths), features=model.dims)
        self.console.print(f"[green]NIQE model written to {args.out}[/green]")
        return 0

    def calib(self, args: argparse.Namespace) -> int:
        rig = calibrate_rig(read_gray(args.event), ThermalFrame(read_gray(args.thermal)), self.config.calib)
        save_rig(args.out, rig)
        self._table("Rig calibration", [
            ("thermal", f"{rig.ir_resolution[0]}x{rig.ir_resolution[1]}"),
            ("event", f"{rig.ev_resolution[0]}x{rig.ev_resolution[1]}"),
        ], ("sensor", "resolution"))
        return 0


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)
