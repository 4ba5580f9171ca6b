"""CLI entry point for EDCFlow.

Usage:
    # Estimate flow for one recording
    python -m src infer --events s.evt --ckpt m.ckpt --g 5 --bins 3 --iters 6 --out f.flo

    # Train on synthetic data
    python -m src train --out-dir runs/base --steps 2000 --samples 512

    # MAC / parameter breakdown and scaling check
    python -m src bench --height 480 --width 640 --sweep

    # Generate a synthetic dataset
    python -m src synth --out-dir data/synth --count 16

    # Render a flow file or its error map
    python -m src viz f.flo --out f.png --error-against gt.flo

    # Metrics of a prediction against ground truth
    python -m src eval f.flo gt.flo

Every command also reads ``model``/``train``/``synth`` sections from the
YAML file given with ``--config``; explicit flags take precedence.
"""

import json
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Optional

import click
import numpy as np
import torch
from loguru import logger
from rich.console import Console
from rich.table import Table

from src import __version__
from src.core.config import (
    ModelConfig,
    Settings,
    SynthConfig,
    TrainConfig,
    load_yaml_config,
    make_model_config,
    make_synth_config,
    make_train_config,
)
from src.core.errors import CheckpointMismatch, EDCFlowError, InputError
from src.core.log import configure_logging
from src.events.stream import EventStream
from src.events.voxel import split_recording
from src.macs.accountant import count_model, dense_volume_macs, verify_scaling
from src.model.network import build_model
from src.objective.metrics import evaluate
from src.storage.checkpoint import load_checkpoint, load_into
from src.storage.event_file import read_event_file, write_event_file
from src.storage.flow_file import read_flow, valid_mask, write_flow
from src.storage.flow_png import save_flow_png
from src.synth.camera import make_dataset
from src.trainkit.augment import FlowSample
from src.trainkit.trainer import fit


@contextmanager
def _exit_on_error(action: str) -> Iterator[None]:
    """Log package errors and exit with their code."""
    try:
        yield
    except EDCFlowError as e:
        logger.error(f"Error running {action}: {e}")
        sys.exit(e.exit_code)


def _configs(ctx: click.Context) -> tuple[ModelConfig, TrainConfig, SynthConfig]:
    return ctx.obj["configs"]


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="YAML file with model/train/synth sections",
)
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[Path]) -> None:
    """EDCFlow - event-based optical flow with temporal feature differences."""
    settings = Settings()
    configure_logging(settings.log_level)
    if settings.threads is not None:
        torch.set_num_threads(settings.threads)
    if settings.deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)

    ctx.ensure_object(dict)
    with _exit_on_error("configuration"):
        if config_path is None:
            ctx.obj["configs"] = (ModelConfig(), TrainConfig(), SynthConfig())
        else:
            ctx.obj["configs"] = load_yaml_config(config_path)


@cli.command()
@click.option("--events", "events_path", required=True, type=click.Path(path_type=Path))
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--g", "windows", type=int, default=None, help="Window count (must match model)")
@click.option("--bins", type=int, default=None, help="Temporal bins (must match model)")
@click.option("--iters", type=int, default=None, help="Refinement iterations")
@click.option("--t-start", type=int, default=None, help="Current-window start (us)")
@click.option("--t-end", type=int, default=None, help="Current-window end (us)")
@click.option("--png", "png_path", type=click.Path(path_type=Path), default=None)
def infer(
    events_path: Path,
    ckpt_path: Path,
    out_path: Path,
    windows: Optional[int],
    bins: Optional[int],
    iters: Optional[int],
    t_start: Optional[int],
    t_end: Optional[int],
    png_path: Optional[Path],
) -> None:
    """Estimate full-resolution flow for one event recording.

    Example:
        python -m src infer --events s.evt --ckpt m.ckpt --g 5 --bins 3 --iters 6 --out f.flo
    """
    with _exit_on_error("inference"):
        stream = read_event_file(events_path)
        checkpoint = load_checkpoint(ckpt_path)
        config = make_model_config(**checkpoint.model_config)
        for flag, value, expected in (
            ("--g", windows, config.windows),
            ("--bins", bins, config.bins),
        ):
            if value is not None and value != expected:
                raise CheckpointMismatch(
                    f"{flag} {value} but the checkpoint was built with {expected}"
                )

        double = any(t.dtype == torch.float64 for t in checkpoint.tensors.values())
        model = build_model(config, double=double)
        load_into(model, checkpoint)
        model.eval()

        window_set = split_recording(stream, config.windows, config.bins, t_start, t_end)
        dtype = torch.float64 if double else torch.float32
        inputs = torch.from_numpy(window_set.to_array(np.float64)).to(dtype).unsqueeze(0)
        with torch.no_grad():
            trace = model.run_iterations(inputs, iters)
        flow = trace.final[0].cpu().numpy().astype(np.float32)

        write_flow(out_path, flow)
        logger.info(f"Wrote {flow.shape[2]}x{flow.shape[1]} flow to {out_path}")
        if png_path is not None:
            save_flow_png(png_path, flow)
            logger.info(f"Wrote color-wheel rendering to {png_path}")


def _synthetic_samples(config: SynthConfig, count: int, seed: int) -> list[FlowSample]:
    synth = config.model_copy(update={"count": count, "seed": seed})
    return [FlowSample.from_synthetic(s) for s in make_dataset(synth)]


@cli.command()
@click.option("--out-dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--steps", type=int, default=None, help="Optimizer steps")
@click.option("--samples", type=int, default=None, help="Synthetic training samples")
@click.option("--val-samples", type=int, default=32, show_default=True)
@click.option("--batch", type=int, default=None, help="Samples per step")
@click.option("--seed", type=int, default=None, help="Training and data seed")
@click.option("--iters", type=int, default=None, help="Refinement iterations")
@click.option("--double/--single", default=None, help="Train in float64")
@click.option("--no-difference", is_flag=True, help="Disable the difference branch")
@click.option("--no-correlation", is_flag=True, help="Disable the correlation branch")
@click.pass_context
def train(
    ctx: click.Context,
    out_dir: Path,
    steps: Optional[int],
    samples: Optional[int],
    val_samples: int,
    batch: Optional[int],
    seed: Optional[int],
    iters: Optional[int],
    double: Optional[bool],
    no_difference: bool,
    no_correlation: bool,
) -> None:
    """Train on synthetic samples; writes train.jsonl and model.ckpt to OUT_DIR."""
    model_config, train_config, synth_config = _configs(ctx)
    with _exit_on_error("training"):
        model_overrides: dict[str, Any] = {}
        if iters is not None:
            model_overrides["iterations"] = iters
        if no_difference:
            model_overrides["use_difference"] = False
        if no_correlation:
            model_overrides["use_correlation"] = False
        model_config = make_model_config(**{**model_config.model_dump(), **model_overrides})

        train_overrides = {
            key: value
            for key, value in (
                ("total_steps", steps),
                ("batch", batch),
                ("seed", seed),
                ("double_precision", double),
            )
            if value is not None
        }
        train_config = make_train_config(**{**train_config.model_dump(), **train_overrides})
        count = samples if samples is not None else synth_config.count
        train_set = _synthetic_samples(synth_config, count, synth_config.seed)
        val_set = _synthetic_samples(synth_config, val_samples, synth_config.seed + 1)

        model = build_model(model_config, seed=train_config.seed)
        result = fit(
            model,
            train_set,
            train_config,
            val_set=val_set,
            log_path=out_dir / "train.jsonl",
            checkpoint_path=out_dir / "model.ckpt",
        )
        logger.info(
            f"Training complete: final loss {result.final_loss:.4f}, "
            f"checkpoint {result.checkpoint_sha256}"
        )


@cli.command()
@click.option("--height", type=int, default=480, show_default=True)
@click.option("--width", type=int, default=640, show_default=True)
@click.option("--json", "json_path", type=click.Path(path_type=Path), default=None)
@click.option("--sweep", is_flag=True, help="Also fit complexity exponents over input sizes")
@click.pass_context
def bench(
    ctx: click.Context, height: int, width: int, json_path: Optional[Path], sweep: bool
) -> None:
    """Print the per-module MAC and parameter breakdown."""
    model_config, _, _ = _configs(ctx)
    with _exit_on_error("bench"):
        report = count_model(model_config, height, width)
        table = Table(title=f"EDCFlow cost at {width}x{height}")
        for column in ("module", "MACs/call", "calls", "total MACs", "params"):
            table.add_column(column, justify="left" if column == "module" else "right")
        for name, entry in report.entries.items():
            table.add_row(
                name,
                f"{entry.macs:,}",
                str(entry.calls),
                f"{entry.total_macs:,}",
                f"{entry.params:,}",
            )
        table.add_row("total", "", "", f"{report.total_macs:,}", f"{report.total_params:,}")
        console = Console(stderr=True)
        console.print(table)

        payload = report.to_dict()
        payload["dense_volume_macs"] = dense_volume_macs(model_config, height, width)
        if sweep:
            payload["scaling"] = verify_scaling(model_config).to_dict()
        text = json.dumps(payload, indent=2)
        if json_path is not None:
            json_path.parent.mkdir(parents=True, exist_ok=True)
            json_path.write_text(text + "\n", encoding="utf-8")
        click.echo(text)


@cli.command()
@click.option("--out-dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--count", type=int, default=None, help="Number of samples")
@click.option("--seed", type=int, default=None, help="Dataset seed")
@click.option("--height", type=int, default=None)
@click.option("--width", type=int, default=None)
@click.option("--max-displacement", type=float, default=None, help="Velocity disc radius (px)")
@click.pass_context
def synth(
    ctx: click.Context,
    out_dir: Path,
    count: Optional[int],
    seed: Optional[int],
    height: Optional[int],
    width: Optional[int],
    max_displacement: Optional[float],
) -> None:
    """Write synthetic recordings, ground-truth flow and a manifest to OUT_DIR."""
    _, _, synth_config = _configs(ctx)
    with _exit_on_error("synthesis"):
        overrides = {
            key: value
            for key, value in (
                ("count", count),
                ("seed", seed),
                ("height", height),
                ("width", width),
                ("max_displacement", max_displacement),
            )
            if value is not None
        }
        synth_config = make_synth_config(**{**synth_config.model_dump(), **overrides})
        samples = make_dataset(synth_config)

        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "manifest.jsonl", "w", encoding="utf-8") as manifest:
            for index, sample in enumerate(samples):
                stem = f"sample_{index:05d}"
                recording = EventStream.concatenate([sample.reference, sample.current])
                write_event_file(out_dir / f"{stem}.evt", recording)

                gt = sample.flow.copy()
                gt[:, ~sample.valid] = np.nan
                write_flow(out_dir / f"{stem}.flo", gt)

                entry = {
                    "events": f"{stem}.evt",
                    "flow": f"{stem}.flo",
                    "t_start": sample.current.t_start,
                    "t_end": sample.current.t_end,
                    "velocity": list(sample.velocity),
                    "texture": sample.texture,
                }
                manifest.write(json.dumps(entry) + "\n")
        logger.info(f"Wrote {len(samples)} samples to {out_dir}")


@cli.command()
@click.argument("flow_path", type=click.Path(path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option(
    "--error-against",
    type=click.Path(path_type=Path),
    default=None,
    help="Ground-truth flow; renders the end-point-error map instead",
)
def viz(flow_path: Path, out_path: Path, error_against: Optional[Path]) -> None:
    """Render FLOW_PATH as a color-wheel PNG."""
    with _exit_on_error("visualization"):
        flow = read_flow(flow_path)
        gt = read_flow(error_against) if error_against is not None else None
        save_flow_png(out_path, flow, error_against=gt)
        logger.info(f"Wrote {out_path}")


@cli.command(name="eval")
@click.argument("pred_path", type=click.Path(path_type=Path))
@click.argument("gt_path", type=click.Path(path_type=Path))
@click.option(
    "--mask/--no-mask",
    default=True,
    show_default=True,
    help="Skip invalid (NaN) ground-truth pixels; --no-mask requires complete ground truth",
)
def eval_command(pred_path: Path, gt_path: Path, mask: bool) -> None:
    """Print EPE, AE, 1/2/3PE and outlier percentage as JSON."""
    with _exit_on_error("evaluation"):
        pred = read_flow(pred_path)
        gt = read_flow(gt_path)
        valid = valid_mask(gt)
        if not mask and not valid.all():
            raise InputError(f"{gt_path} has {int((~valid).sum())} invalid pixels; use --mask")
        report = evaluate(pred, gt, valid)
        click.echo(json.dumps(report.to_dict()))


@cli.command()
def version() -> None:
    """Show version information."""
    click.echo(f"EDCFlow v{__version__}")


if __name__ == "__main__":
    cli()
