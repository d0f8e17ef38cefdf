"""
Integration tests across pipeline stages.

Covers scene generation through training, inference and evaluation, both
through the library and through the command line.
"""
import csv

import numpy as np
import pytest

from main import main
from src.harness.dataset import load_dataset
from src.harness.evaluation import MEAN_ROW, evaluate
from src.harness.inference import infer_video
from src.harness.trainer import LOSS_CSV_HEADER, train
from src.networks.checkpoint import load_checkpoint
from src.services.calib import estimate_thermal_motion
from src.services.metrics import masked_entropy, masked_std_dev
from src.utils.config import PipelineConfig, SisConfig, TccConfig, TrainConfig
from src.utils.raster_io import frame_name, read_gray
from tests.fixtures import PAN_PX, pan_motion, write_synthetic_dataset

CLI_CONFIG = """\
sis: {levels: 2, base_channels: 4, norm_groups: 2}
tcc:
  n_frames: 3
  window: [2, 4, 4]
  stage_depths: [2, 1, 1, 1]
  embed_dim: 8
  heads: [2, 2, 2, 2]
  decoder_window: 4
  decoder_heads: 2
train: {batch_size: 2, epochs: 1, crop: 32, group_len: 3, stride: 3, seed: 11}
niqe: {patch_size: 32}
log_level: WARNING
"""


def with_train(config, **updates):
    return config.model_copy(update={"train": config.train.model_copy(update=updates)})


# ============================================================================
# Library workflow
# ============================================================================

@pytest.mark.integration
class TestLibraryWorkflow:
    """Run every stage through the Python API."""

    def test_train_infer_evaluate(self, dataset_root, smoke_config, tmp_path):
        dataset = load_dataset(dataset_root, group_len=3, stride=3)
        assert len(dataset) == 4

        config = with_train(smoke_config, max_steps=3)
        result = train(dataset, config, tmp_path / "run", motion_fn=pan_motion)
        assert result.steps == 3
        assert len(result.epoch_checkpoints) == 2
        assert all(np.isfinite(result.totals))
        with result.loss_csv.open() as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == LOSS_CSV_HEADER
        assert [r[0] for r in rows[1:]] == ["0", "1", "2"]

        _, tcc, meta = load_checkpoint(result.final_checkpoint)
        assert meta["step"] == 3 and meta["epoch"] == 2
        assert meta["extra"]["config"]["train"]["max_steps"] == 3
        assert tcc.config.n_frames == 3

        out_dir = tmp_path / "sketches"
        inferred = infer_video(result.final_checkpoint, dataset_root / "scene_000", out_dir)
        assert len(inferred) == 6
        assert inferred.corrected == 4
        assert read_gray(inferred.outputs[0]).shape == (64, 64)

        rows = evaluate(out_dir, output_csv=tmp_path / "report.csv")
        assert len(rows) == 7
        assert rows[-1].frame == MEAN_ROW
        assert 0.0 <= rows[-1].scores["en"] <= 8.0

    def test_recurrent_inference(self, dataset_root, smoke_config, tmp_path):
        dataset = load_dataset(dataset_root, group_len=3, stride=3)
        result = train(dataset, with_train(smoke_config, max_steps=1), tmp_path / "run", motion_fn=pan_motion)
        plain = infer_video(result.final_checkpoint, dataset_root / "scene_001", tmp_path / "plain")
        recurrent = infer_video(result.final_checkpoint, dataset_root / "scene_001", tmp_path / "rec",
                                recurrent=True)
        assert len(plain) == len(recurrent) == 6
        for a, b in zip(plain.outputs[:3], recurrent.outputs[:3]):
            assert np.array_equal(read_gray(a), read_gray(b))


# ============================================================================
# Command line
# ============================================================================

@pytest.mark.integration
class TestCommandLine:
    """Drive the verbs through main()."""

    def test_full_command_sequence(self, tmp_path):
        config = tmp_path / "config.yaml"
        config.write_text(CLI_CONFIG)
        root, ckpt, out = tmp_path / "data", tmp_path / "ckpt", tmp_path / "out"
        base = ["--config", str(config)]

        assert main(base + ["simgen", "--out", str(root), "--synthetic", "2",
                            "--frames", "6", "--size", "64", "64"]) == 0
        assert sorted(p.name for p in root.iterdir()) == ["scene_000", "scene_001"]

        assert main(base + ["pseudo-gt", "--root", str(root), "--static"]) == 0
        assert len(list((root / "scene_000" / "masks").glob("*.png"))) == 6

        assert main(base + ["train", "--root", str(root), "--out", str(ckpt),
                            "--max-steps", "2", "--static"]) == 0
        assert (ckpt / "final.pt").is_file()
        with (ckpt / "loss.csv").open() as handle:
            assert len(list(csv.reader(handle))) == 3

        assert main(base + ["infer", "--checkpoint", str(ckpt / "final.pt"),
                            "--scene", str(root / "scene_000"), "--out", str(out)]) == 0
        assert len(list(out.glob("*.png"))) == 6

        model = tmp_path / "niqe.bin"
        assert main(base + ["fit-niqe", "--images", str(root / "scene_000" / "thermal"),
                            "--out", str(model)]) == 0
        report = tmp_path / "report.csv"
        assert main(base + ["eval", "--dir", str(out), "--metrics", "en,sd,niqe",
                            "--model", str(model), "--masks", str(root / "scene_000" / "masks"),
                            "--out", str(report)]) == 0
        with report.open() as handle:
            header = next(csv.reader(handle))
        assert header == ["frame", "en", "niqe", "sd", "en_mask", "sd_mask"]

    def test_pipeline_error_exit_code(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main(["eval", "--dir", str(tmp_path / "empty")]) == 1

    def test_bad_config_exit_code(self, tmp_path):
        config = tmp_path / "config.yaml"
        config.write_text("train:\n  lr_start: 1.0e-7\n")
        assert main(["--config", str(config), "eval", "--dir", str(tmp_path)]) == 1

    def test_unknown_verb(self):
        with pytest.raises(SystemExit):
            main(["explode"])


# ============================================================================
# Training smoke test
# ============================================================================

SMOKE_STEPS = 200


def smoke_run_config(checkpoint_dir) -> PipelineConfig:
    """Tiny networks on 7-frame groups, batch 4, 64x64 crops, 200 steps."""
    return PipelineConfig(
        sis=SisConfig(levels=2, base_channels=4, norm_groups=2),
        tcc=TccConfig(
            n_frames=7, window=(2, 4, 4), stage_depths=(2, 1, 1, 1),
            embed_dim=8, heads=(2, 2, 2, 2), decoder_window=4, decoder_heads=2,
        ),
        train=TrainConfig(
            lr_start=2e-3, batch_size=4, epochs=100, max_steps=SMOKE_STEPS, crop=64,
            group_len=7, stride=1, seed=11, checkpoint_dir=str(checkpoint_dir),
        ),
    )


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    """Two panning 128x128 scenes of 10 frames and one seeded training run on them."""
    base = tmp_path_factory.mktemp("smoke")
    root = write_synthetic_dataset(base / "data", n_scenes=2, n_frames=10, size=(128, 128))
    config = smoke_run_config(base / "ckpt")
    result = train(load_dataset(root, 7, 1), config, base / "a", motion_fn=pan_motion)
    return root, config, result


@pytest.mark.integration
@pytest.mark.slow
class TestTrainingSmoke:
    """Short seeded runs must be reproducible and must learn."""

    def test_loss_halves(self, smoke_run):
        _, _, result = smoke_run
        totals = np.asarray(result.totals)
        assert len(totals) == SMOKE_STEPS
        assert np.isfinite(totals).all()
        assert totals[-10:].mean() <= 0.5 * totals[:10].mean()

    def test_seeded_rerun_reproduces_loss_csv(self, smoke_run, tmp_path):
        root, config, first = smoke_run
        second = train(load_dataset(root, 7, 1), config, tmp_path / "b", motion_fn=pan_motion)
        assert first.loss_csv.read_bytes() == second.loss_csv.read_bytes()

    def test_sketch_adds_detail_inside_masks(self, smoke_run, tmp_path):
        root, _, result = smoke_run
        scene = root / "scene_000"
        inferred = infer_video(result.final_checkpoint, scene, tmp_path / "sketches")

        out_frames, ir_frames, masks = [], [], []
        for i, path in enumerate(inferred.outputs):
            mask = read_gray(scene / "masks" / frame_name(i)) > 0.5
            if not mask.any():
                continue
            masks.append(mask)
            out_frames.append(read_gray(path))
            ir_frames.append(read_gray(scene / "thermal" / frame_name(i)))
        assert masks

        sketch, thermal, masks = np.stack(out_frames), np.stack(ir_frames), np.stack(masks)
        assert masked_entropy(sketch, masks) >= masked_entropy(thermal, masks) + 0.2
        assert masked_std_dev(sketch, masks) > masked_std_dev(thermal, masks)


# ============================================================================
# Real motion estimation
# ============================================================================

@pytest.mark.integration
class TestEstimatedMotion:
    """Pseudo targets built with the thermal motion estimator instead of a known pan."""

    def test_all_groups_kept_at_default_size(self, tmp_path, mock_logger):
        root = write_synthetic_dataset(tmp_path / "data", n_scenes=1, n_frames=6, size=(128, 128))
        dataset = load_dataset(root, 3, 3)
        assert dataset.prepare_targets(None, logger=mock_logger) == 2
        assert dataset.rejected == []
        mock_logger.warning.assert_not_called()

    def test_pan_recovered(self, tmp_path):
        root = write_synthetic_dataset(tmp_path / "data", n_scenes=1, n_frames=6, size=(128, 128))
        dataset = load_dataset(root, 3, 3)
        group = dataset.group(dataset.groups[0])
        for prev, cur in zip(group.thermal, group.thermal[1:]):
            h = estimate_thermal_motion(prev, cur)
            assert h.m[0, 2] == pytest.approx(-PAN_PX, abs=0.1)
            assert h.m[1, 2] == pytest.approx(0.0, abs=0.1)
