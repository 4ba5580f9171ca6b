"""File formats: event text, flow files, flow PNGs and parameter checkpoints."""

from src.storage.checkpoint import Checkpoint, load_checkpoint, load_into, save_checkpoint
from src.storage.event_file import read_event_file, write_event_file
from src.storage.flow_file import read_flow, valid_mask, write_flow
from src.storage.flow_png import save_flow_png

__all__ = [
    "Checkpoint",
    "load_checkpoint",
    "load_into",
    "save_checkpoint",
    "read_event_file",
    "write_event_file",
    "read_flow",
    "valid_mask",
    "write_flow",
    "save_flow_png",
]
