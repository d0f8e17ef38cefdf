"""
Boundary-condition tests across the pipeline: smallest sizes, degenerate
windows and malformed containers.
"""
import numpy as np
import pytest
import torch

from src.harness.augment import random_crop_augment
from src.harness.dataset import load_dataset
from src.harness.evaluation import evaluate
from src.harness.inference import SceneSketcher, pad_to_multiple
from src.models.frames import EventFrame, FrameClock, FrameGroup, ThermalFrame
from src.networks.sis import SisNetwork
from src.networks.tcc import TccNetwork
from src.services.metrics import entropy, std_dev
from src.services.pseudo_gt import vote_frames
from src.utils.config import TccConfig
from src.utils.exceptions import EventStreamError, InvalidRasterError
from src.utils.raster_io import frame_name, to_uint8, write_gray


@pytest.mark.edge_case
class TestNetworkSizes:
    """Smallest and odd spatial sizes."""

    def test_sis_smallest_divisible_frame(self, tiny_sis_config):
        sis = SisNetwork(tiny_sis_config).eval()
        with torch.no_grad():
            out = sis(torch.rand(1, 1, 4, 4), torch.rand(1, 1, 4, 4))
        assert out.shape == (1, 1, 4, 4)
        assert torch.isfinite(out).all()

    def test_tcc_odd_frame(self, tiny_tcc_config):
        tcc = TccNetwork(tiny_tcc_config).eval()
        with torch.no_grad():
            out = tcc(torch.rand(1, 3, 5, 7))
        assert out.shape == (1, 5, 7)
        assert torch.isfinite(out).all()

    def test_tcc_window_larger_than_volume(self):
        tcc = TccNetwork(TccConfig(
            n_frames=2, window=(2, 7, 7), stage_depths=(1, 1, 1, 1), embed_dim=8,
            heads=(2, 2, 2, 2), decoder_window=7, decoder_heads=2,
        )).eval()
        with torch.no_grad():
            assert tcc(torch.rand(1, 2, 6, 6)).shape == (1, 6, 6)

    def test_single_frame_window_corrects_every_frame(self, tiny_sis_config, tiny_tcc_config):
        tcc_config = tiny_tcc_config.model_copy(update={"n_frames": 1})
        sketcher = SceneSketcher(SisNetwork(tiny_sis_config), TccNetwork(tcc_config))
        flags = [sketcher.push(np.zeros((8, 8)), np.full((8, 8), 0.5))[1] for _ in range(3)]
        assert flags == [True, True, True]

    def test_pad_factor_one(self):
        x = torch.rand(1, 1, 3, 5)
        assert pad_to_multiple(x, 1)[0] is x


@pytest.mark.edge_case
class TestDegenerateInputs:
    """Empty, constant and exact-fit inputs."""

    def test_empty_raster_scores(self):
        assert entropy(np.zeros(0)) == 0.0
        assert std_dev(np.zeros(0)) == 0.0

    def test_single_pixel_frame_report(self, tmp_path):
        write_gray(tmp_path / frame_name(0), np.ones((1, 1)))
        rows = evaluate(tmp_path)
        assert rows[0].scores == {"en": 0.0, "sd": 0.0}

    def test_crop_equal_to_frame(self, rng):
        stack = rng.random((2, 16, 16))
        out = random_crop_augment({"x": stack}, rng, 16, 2, augment=False)
        assert np.array_equal(out["x"], stack)

    def test_vote_exactly_at_threshold_excluded(self):
        ballots = [np.array([[1, 1]]), np.array([[1, 0]])]
        assert vote_frames(ballots, 1.0).tolist() == [[True, False]]

    def test_quantisation_rounds_half_to_even(self):
        assert to_uint8(np.array([0.0, 0.5, 1.0])).tolist() == [0, 128, 255]

    def test_group_equal_to_scene_length(self, dataset_root):
        assert len(load_dataset(dataset_root, group_len=6, stride=6)) == 2
        assert len(load_dataset(dataset_root, group_len=7, stride=7)) == 0

    def test_overlapping_groups(self, dataset_root):
        assert len(load_dataset(dataset_root, group_len=3, stride=1)) == 8


@pytest.mark.edge_case
class TestContainerValidation:
    """Malformed frames, clocks and groups."""

    def test_zero_period_clock(self):
        with pytest.raises(EventStreamError):
            FrameClock(period_us=0)

    def test_empty_event_window(self):
        with pytest.raises(InvalidRasterError):
            EventFrame(np.zeros((4, 4)), t_start=100, t_end=100)

    def test_out_of_range_thermal(self):
        with pytest.raises(InvalidRasterError):
            ThermalFrame(np.full((4, 4), 1.5))

    def test_group_length_mismatch(self):
        with pytest.raises(EventStreamError):
            FrameGroup([ThermalFrame(np.zeros((4, 4)))] * 2, [EventFrame(np.zeros((4, 4)))])
