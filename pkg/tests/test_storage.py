"""Tests for the on-disk formats: event text, flow files, PNG rendering and checkpoints."""

import numpy as np
import pytest
import torch
from PIL import Image

from src.core.errors import (
    CheckpointError,
    CheckpointMismatch,
    EventFileError,
    FlowFileError,
    ShapeError,
)
from src.events import Event, EventStream
from src.storage import (
    load_checkpoint,
    load_into,
    read_event_file,
    read_flow,
    save_checkpoint,
    save_flow_png,
    valid_mask,
    write_event_file,
    write_flow,
)
from src.storage.flow_png import error_to_gray, flow_to_rgb


@pytest.fixture
def stream():
    """Small stream with both polarities."""
    events = [Event(0, 1, 10, 1), Event(3, 2, 15, -1), Event(1, 1, 30, 1)]
    return EventStream.from_events(events, width=4, height=3)


class TestEventFile:
    def test_write_then_read(self, tmp_path, stream):
        path = tmp_path / "events.evt"
        write_event_file(path, stream)

        loaded = read_event_file(path)

        assert (loaded.width, loaded.height) == (4, 3)
        assert loaded.xs.tolist() == [0, 3, 1]
        assert loaded.ps.tolist() == [1, -1, 1]
        assert (loaded.t_start, loaded.t_end) == (10, 30)

    def test_explicit_bounds(self, tmp_path, stream):
        path = tmp_path / "events.evt"
        write_event_file(path, stream)

        loaded = read_event_file(path, t_start=0, t_end=100)

        assert (loaded.t_start, loaded.t_end) == (0, 100)

    def test_header_only_file_is_empty_stream(self, tmp_path):
        path = tmp_path / "empty.evt"
        path.write_text("EVT1 5 4\n")

        loaded = read_event_file(path)

        assert len(loaded) == 0
        assert (loaded.width, loaded.height) == (5, 4)

    @pytest.mark.parametrize(
        "content",
        [
            "",
            "EVT0 4 4\n",
            "EVT1 4\n",
            "EVT1 4 4\n0 0 1\n",
            "EVT1 4 4\n0 0 x 1\n",
            "EVT1 4 4\n0 0 1 0\n",
            "EVT1 4 4\n0 0 1 255\n",
            "EVT1 4 4\n0 0 1 257\n",
        ],
    )
    def test_malformed(self, tmp_path, content):
        path = tmp_path / "bad.evt"
        path.write_text(content)

        with pytest.raises(EventFileError):
            read_event_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(EventFileError):
            read_event_file(tmp_path / "absent.evt")


class TestFlowFile:
    def test_values_and_nan_survive(self, tmp_path):
        flow = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
        flow[:, 1, 2] = np.nan
        path = tmp_path / "flow.flo"
        write_flow(path, flow)

        loaded = read_flow(path)

        assert loaded.shape == (2, 3, 4)
        np.testing.assert_array_equal(loaded, flow)
        assert valid_mask(loaded).sum() == 11

    def test_interleaved_layout(self, tmp_path):
        flow = np.stack([np.full((1, 2), 1.0), np.full((1, 2), -2.0)]).astype(np.float32)
        path = tmp_path / "flow.flo"
        write_flow(path, flow)

        data = path.read_bytes()

        assert data[:4] == b"FLO2"
        assert np.frombuffer(data, dtype="<f4", offset=12).tolist() == [1.0, -2.0, 1.0, -2.0]

    def test_truncated(self, tmp_path):
        path = tmp_path / "flow.flo"
        write_flow(path, np.zeros((2, 3, 3), dtype=np.float32))
        path.write_bytes(path.read_bytes()[:-4])

        with pytest.raises(FlowFileError):
            read_flow(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "flow.flo"
        path.write_bytes(b"PIEH" + bytes(8))

        with pytest.raises(FlowFileError):
            read_flow(path)

    def test_rejects_wrong_shape(self, tmp_path):
        with pytest.raises(ShapeError):
            write_flow(tmp_path / "flow.flo", np.zeros((3, 2, 2), dtype=np.float32))


class TestFlowPng:
    def test_zero_flow_is_white(self):
        rgb = flow_to_rgb(np.zeros((2, 4, 5)))

        assert rgb.shape == (4, 5, 3)
        assert (rgb == 255).all()

    def test_constant_flow_single_hue(self):
        flow = np.stack([np.full((6, 6), 2.0), np.full((6, 6), -1.0)])

        rgb = flow_to_rgb(flow)

        assert len({tuple(px) for px in rgb.reshape(-1, 3)}) == 1
        assert not (rgb == 255).all()

    def test_invalid_pixels_black(self):
        flow = np.ones((2, 3, 3))
        flow[:, 0, 0] = np.nan

        rgb = flow_to_rgb(flow)

        assert rgb[0, 0].tolist() == [0, 0, 0]

    def test_rendering_is_deterministic(self, tmp_path, rng):
        flow = rng.normal(size=(2, 8, 8))
        first, second = tmp_path / "a.png", tmp_path / "b.png"

        save_flow_png(first, flow)
        save_flow_png(second, flow)

        assert first.read_bytes() == second.read_bytes()
        assert Image.open(first).mode == "RGB"

    def test_error_map(self, tmp_path):
        gt = np.zeros((2, 4, 4))
        pred = gt.copy()
        pred[0, 2, 3] = 5.0

        gray = error_to_gray(pred, gt)
        save_flow_png(tmp_path / "err.png", pred, error_against=gt)

        assert gray[2, 3] == 255
        assert gray.sum() == 255
        assert Image.open(tmp_path / "err.png").mode == "L"

    def test_error_map_shape_mismatch(self):
        with pytest.raises(ShapeError):
            error_to_gray(np.zeros((2, 4, 4)), np.zeros((2, 4, 5)))


class TestCheckpoint:
    def test_save_then_load(self, tmp_path):
        state = {
            "a.weight": torch.randn(3, 4),
            "b.bias": torch.randn(5, dtype=torch.float64),
        }
        path = tmp_path / "model.ckpt"

        digest = save_checkpoint(path, state, {"g": 5})
        checkpoint = load_checkpoint(path)

        assert checkpoint.sha256 == digest
        assert checkpoint.model_config == {"g": 5}
        assert checkpoint.param_count() == 17
        assert checkpoint.tensors["b.bias"].dtype == torch.float64
        torch.testing.assert_close(checkpoint.tensors["a.weight"], state["a.weight"])

    def test_hash_is_stable(self, tmp_path):
        state = {"w": torch.arange(6, dtype=torch.float32)}

        assert save_checkpoint(tmp_path / "1.ckpt", state) == save_checkpoint(
            tmp_path / "2.ckpt", state
        )

    def test_corrupted_payload(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, {"w": torch.ones(4)})
        data = bytearray(path.read_bytes())
        data[-1] ^= 0xFF
        path.write_bytes(bytes(data))

        with pytest.raises(CheckpointError, match="hash"):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"PK\x03\x04junk")

        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_rejects_integer_tensors(self, tmp_path):
        with pytest.raises(CheckpointError):
            save_checkpoint(tmp_path / "model.ckpt", {"i": torch.arange(3)})

    def test_load_into_module(self, tmp_path):
        source, target = torch.nn.Linear(3, 2), torch.nn.Linear(3, 2)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, dict(source.named_parameters()))

        load_into(target, load_checkpoint(path))

        torch.testing.assert_close(target.weight, source.weight)
        torch.testing.assert_close(target.bias, source.bias)

    def test_load_into_mismatch(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, dict(torch.nn.Linear(3, 2).named_parameters()))

        with pytest.raises(CheckpointMismatch):
            load_into(torch.nn.Linear(4, 2), load_checkpoint(path))
        with pytest.raises(CheckpointMismatch):
            load_into(torch.nn.Conv2d(3, 2, 1), load_checkpoint(path))
