"""Synthetic event camera under uniform translation.

A textured plane translates at constant velocity in front of the sensor.
Each pixel tracks its log intensity ``log(0.01 + I)`` on a fine time grid and
emits an event whenever the signal crosses a new multiple of the contrast
threshold; the crossing time is linearly interpolated within the step.

Timeline (microseconds): the reference window is ``[0, dt)`` and the current
stream ``[dt, dt + T]`` with ``dt = T // g``. The label is the displacement
between ``dt`` and ``dt + T``, which is exactly ``velocity`` everywhere.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from loguru import logger

from src.core.config import SynthConfig
from src.core.errors import DegenerateScene, InvalidConfig
from src.events.stream import EventStream
from src.events.voxel import WindowSet, split_windows
from src.synth.textures import random_texture

LOG_FLOOR = 0.01
STEPS_PER_WINDOW = 20

SeedLike = Union[int, np.random.SeedSequence]


@dataclass
class Scene:
    """A texture translating at constant velocity.

    Attributes:
        texture: Grayscale canvas in [0, 1]; the sensor looks at its center
        velocity: (vx, vy) displacement in pixels over the current stream
        duration_us: Current-stream duration T
        contrast_threshold: Log-intensity change per event
        height: Sensor rows (default: canvas rows)
        width: Sensor columns (default: canvas columns)
    """

    texture: np.ndarray
    velocity: tuple[float, float]
    duration_us: int = 100_000
    contrast_threshold: float = 0.2
    height: Optional[int] = None
    width: Optional[int] = None

    def __post_init__(self) -> None:
        self.texture = np.asarray(self.texture, dtype=np.float64)
        if self.texture.ndim != 2:
            raise InvalidConfig(f"texture must be 2D, got shape {self.texture.shape}")
        if self.contrast_threshold <= 0:
            raise InvalidConfig(f"contrast threshold must be > 0, got {self.contrast_threshold}")
        if self.duration_us <= 0:
            raise InvalidConfig(f"duration must be > 0, got {self.duration_us}")
        canvas_h, canvas_w = self.texture.shape
        self.height = canvas_h if self.height is None else self.height
        self.width = canvas_w if self.width is None else self.width
        if not (0 < self.height <= canvas_h and 0 < self.width <= canvas_w):
            raise InvalidConfig(
                f"sensor {self.width}x{self.height} does not fit canvas {canvas_w}x{canvas_h}"
            )

    @property
    def sensor_size(self) -> tuple[int, int]:
        return int(self.height or 0), int(self.width or 0)


@dataclass
class SyntheticSample:
    """One generated sample with exact labels.

    Attributes:
        windows: g+1 voxel grids
        flow: Ground-truth flow (2, H, W), float32
        valid: Pixels whose displaced position stays on the sensor (H, W)
        reference: Reference-window events
        current: Current-stream events
        velocity: The scene velocity
        texture: Texture family name
    """

    windows: WindowSet
    flow: np.ndarray
    valid: np.ndarray
    reference: EventStream
    current: EventStream
    velocity: tuple[float, float]
    texture: str = "custom"
    metadata: dict = field(default_factory=dict)


def sample_bilinear(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear lookup with coordinates clamped to the image border."""
    height, width = image.shape
    xs = np.clip(xs, 0.0, width - 1)
    ys = np.clip(ys, 0.0, height - 1)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    wx = xs - x0
    wy = ys - y0
    top = image[y0, x0] * (1 - wx) + image[y0, x1] * wx
    bottom = image[y1, x0] * (1 - wx) + image[y1, x1] * wx
    return top * (1 - wy) + bottom * wy


def _crossings(
    lattice: np.ndarray, s_prev: np.ndarray, s_cur: np.ndarray, up: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Pixel index and crossing fraction of every lattice crossing in one direction."""
    if up:
        count = np.floor(s_cur).astype(np.int64) - lattice
    else:
        count = lattice - np.ceil(s_cur).astype(np.int64)
    count = np.maximum(count, 0)
    pixels = np.flatnonzero(count)
    if pixels.size == 0:
        return pixels, np.zeros(0)

    n = count[pixels]
    idx = np.repeat(pixels, n)
    first = np.repeat(np.cumsum(n) - n, n)
    j = np.arange(idx.size) - first + 1
    levels = lattice[idx] + j if up else lattice[idx] - j
    span = s_cur[idx] - s_prev[idx]
    frac = np.clip((levels - s_prev[idx]) / span, 0.0, 1.0)
    return idx, frac


def simulate_events(
    scene: Scene, g: int, rng: np.random.Generator, noise_rate_hz: float = 0.0
) -> tuple[EventStream, EventStream]:
    """Simulate the reference and current streams of a scene.

    Raises:
        DegenerateScene: If the texture is constant
        InvalidConfig: If g < 1 or T // g is zero
    """
    if g < 1:
        raise InvalidConfig(f"window count g must be >= 1, got {g}")
    if np.ptp(scene.texture) == 0:
        raise DegenerateScene("texture is constant; no event can ever fire")

    height, width = scene.sensor_size
    duration = int(scene.duration_us)
    dt = duration // g
    if dt == 0:
        raise InvalidConfig(f"duration {duration} us is too short for {g} windows")
    t_start, t_end = dt, dt + duration

    canvas_h, canvas_w = scene.texture.shape
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    xs = xs.ravel() + (canvas_w - width) / 2
    ys = ys.ravel() + (canvas_h - height) / 2
    vx, vy = scene.velocity

    def log_intensity(t: float) -> np.ndarray:
        shift = (t - t_start) / duration
        return np.log(LOG_FLOOR + sample_bilinear(scene.texture, xs - vx * shift, ys - vy * shift))

    step = duration / (STEPS_PER_WINDOW * g)
    steps = math.ceil(t_end / step)
    base = log_intensity(0.0)
    threshold = scene.contrast_threshold
    lattice = np.zeros(base.size, dtype=np.int64)
    s_prev = np.zeros(base.size)
    t_prev = 0.0

    pixel_chunks, time_chunks, polarity_chunks = [], [], []
    for k in range(1, steps + 1):
        t_cur = min(k * step, float(t_end))
        s_cur = (log_intensity(t_cur) - base) / threshold
        for up in (True, False):
            idx, frac = _crossings(lattice, s_prev, s_cur, up)
            if idx.size == 0:
                continue
            pixel_chunks.append(idx)
            time_chunks.append(np.floor(t_prev + frac * (t_cur - t_prev)).astype(np.int64))
            polarity_chunks.append(np.full(idx.size, 1 if up else -1, dtype=np.int8))
            if up:
                lattice = np.maximum(lattice, np.floor(s_cur).astype(np.int64))
            else:
                lattice = np.minimum(lattice, np.ceil(s_cur).astype(np.int64))
        s_prev, t_prev = s_cur, t_cur

    if pixel_chunks:
        pixels = np.concatenate(pixel_chunks)
        ts = np.clip(np.concatenate(time_chunks), 0, t_end)
        ps = np.concatenate(polarity_chunks)
    else:
        pixels = np.zeros(0, dtype=np.int64)
        ts = np.zeros(0, dtype=np.int64)
        ps = np.zeros(0, dtype=np.int8)

    stream = EventStream(
        xs=pixels % width,
        ys=pixels // width,
        ts=ts,
        ps=ps,
        width=width,
        height=height,
        t_start=0,
        t_end=t_end,
    )
    if noise_rate_hz > 0:
        stream = EventStream.concatenate(
            [stream, background_events(width, height, 0, t_end, noise_rate_hz, rng)]
        )
    stream = stream.sorted()

    before = stream.ts < t_start
    reference = stream.select(before, t_start - dt, t_start)
    current = stream.select(~before, t_start, t_end)
    return reference, current


def background_events(
    width: int,
    height: int,
    t_start: int,
    t_end: int,
    rate_hz: float,
    rng: np.random.Generator,
) -> EventStream:
    """Uniform background events at ``rate_hz`` per pixel."""
    expected = rate_hz * width * height * (t_end - t_start) / 1e6
    count = int(rng.poisson(expected))
    return EventStream(
        xs=rng.integers(0, width, size=count),
        ys=rng.integers(0, height, size=count),
        ts=rng.integers(t_start, t_end + 1, size=count),
        ps=rng.choice(np.array([-1, 1], dtype=np.int8), size=count),
        width=width,
        height=height,
        t_start=t_start,
        t_end=t_end,
    )


def ground_truth(scene: Scene) -> tuple[np.ndarray, np.ndarray]:
    """Constant flow field and the mask of pixels that stay on the sensor."""
    height, width = scene.sensor_size
    vx, vy = scene.velocity
    flow = np.empty((2, height, width), dtype=np.float32)
    flow[0], flow[1] = vx, vy
    ys, xs = np.mgrid[0:height, 0:width]
    valid = (xs + vx >= 0) & (xs + vx <= width - 1) & (ys + vy >= 0) & (ys + vy <= height - 1)
    return flow, valid


def generate(
    scene: Scene,
    seed: SeedLike = 0,
    g: int = 5,
    bins: int = 3,
    noise_rate_hz: float = 0.0,
) -> SyntheticSample:
    """Simulate a scene and voxelize its g+1 windows.

    Args:
        scene: Texture, velocity and sensor parameters
        seed: Seed for background noise
        g: Current-stream window count
        bins: Temporal bins per grid
        noise_rate_hz: Background events per pixel per second

    Raises:
        DegenerateScene: If the texture is constant
    """
    rng = np.random.default_rng(seed)
    reference, current = simulate_events(scene, g, rng, noise_rate_hz)
    windows = split_windows(reference, current, g, bins)
    flow, valid = ground_truth(scene)
    return SyntheticSample(
        windows=windows,
        flow=flow,
        valid=valid,
        reference=reference,
        current=current,
        velocity=(float(scene.velocity[0]), float(scene.velocity[1])),
    )


def sample_velocity(rng: np.random.Generator, radius: float) -> tuple[float, float]:
    """Uniform draw from the disc of the given radius."""
    r = radius * math.sqrt(rng.uniform())
    theta = rng.uniform(0.0, 2 * math.pi)
    return r * math.cos(theta), r * math.sin(theta)


def canvas_margin(max_displacement: float, g: int) -> int:
    """Texture border that keeps every sampled position on the canvas."""
    return math.ceil(max_displacement * (1 + 1 / g)) + 2


def make_dataset(config: SynthConfig, count: Optional[int] = None) -> list[SyntheticSample]:
    """Deterministic list of samples; every sample has its own seed sequence.

    Raises:
        InvalidConfig: If count < 1
    """
    count = config.count if count is None else count
    if count < 1:
        raise InvalidConfig(f"dataset count must be >= 1, got {count}")

    margin = canvas_margin(config.max_displacement, config.windows)
    children = np.random.SeedSequence(config.seed).spawn(count)
    samples = []
    for index, child in enumerate(children):
        rng = np.random.default_rng(child)
        name, texture = random_texture(
            config.height + 2 * margin, config.width + 2 * margin, rng
        )
        scene = Scene(
            texture=texture,
            velocity=sample_velocity(rng, config.max_displacement),
            duration_us=config.duration_us,
            contrast_threshold=config.contrast_threshold,
            height=config.height,
            width=config.width,
        )
        sample = generate(
            scene,
            seed=int(rng.integers(2**32)),
            g=config.windows,
            bins=config.bins,
            noise_rate_hz=config.noise_rate_hz,
        )
        sample.texture = name
        sample.metadata = {"index": index, "seed": config.seed}
        samples.append(sample)

    logger.info(f"Generated {count} synthetic samples of {config.width}x{config.height}")
    return samples
