"""
Procedural moving-shapes videos: coloured sprites moving over textured
backgrounds, and add/remove pairs whose ground truth is known by
construction.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from dataclasses import dataclass
from functools import cache
from pathlib import Path
from typing import NamedTuple, Protocol, TextIO
import math
import sys

import numpy as np
from scipy import ndimage

from nova_edit.autofinder import get_clips
from nova_edit.core import ConfigError, MaskSequence, Video
from nova_edit.misc import emph
from nova_edit.rng import Rng
from nova_edit.video_io import load_video, save_video

SPRITE_KINDS: list[str] = ["disc", "square", "triangle"]
MOTIONS: list[str] = ["linear", "sinusoidal", "mixed"]


@dataclass(frozen=True)
class ClipConfig:
    """Size and content of generated clips."""

    height: int = 16
    width: int = 16
    frames: int = 17
    channels: int = 3
    shapes: int = 2
    motion: str = "mixed"
    radius_range: tuple[float, float] = (0.12, 0.25)  # fraction of min(H, W)

    def __post_init__(self):
        if self.height < 4 or self.width < 4 or self.frames < 2:
            raise ConfigError("Clips need at least 4x4 pixels and 2 frames.")
        if self.channels not in (1, 3):
            raise ConfigError(f"Clips have 1 or 3 channels, got {self.channels}.")
        if self.motion not in MOTIONS:
            raise ConfigError(f"Unknown motion {self.motion!r}, expected one of {MOTIONS}.")
        if self.shapes < 0:
            raise ConfigError("The number of shapes must be non-negative.")


@dataclass(frozen=True)
class Sprite:
    """A moving coloured shape."""

    kind: str
    color: tuple[float, ...]
    radius: float
    start: tuple[float, float]
    velocity: tuple[float, float]
    motion: str = "linear"
    phase: float = 0.0

    def position(self, t: int, H: int, W: int) -> tuple[float, float]:
        """Center at frame t; linear motion reflects on the frame borders."""
        if self.motion == "sinusoidal":
            return (
                self.start[0] + self.velocity[0] * 4 * math.sin(0.3 * t + self.phase),
                self.start[1] + self.velocity[1] * 4 * math.sin(0.2 * t + self.phase),
            )

        def reflect(p0: float, v: float, lo: float, hi: float) -> float:
            if hi <= lo:
                return (lo + hi) / 2
            span = hi - lo
            q = (p0 - lo + v * t) % (2 * span)
            return lo + (q if q <= span else 2 * span - q)

        r = self.radius
        return reflect(self.start[0], self.velocity[0], r, W - r), reflect(
            self.start[1], self.velocity[1], r, H - r
        )

    def coverage(self, t: int, H: int, W: int) -> np.ndarray:
        """Soft (H, W) coverage with a one-pixel antialiased edge."""
        cx, cy = self.position(t, H, W)
        ys, xs = np.mgrid[0:H, 0:W] + 0.5
        dx, dy = xs - cx, ys - cy
        if self.kind == "disc":
            dist = np.hypot(dx, dy) - self.radius
        elif self.kind == "square":
            dist = np.maximum(np.abs(dx), np.abs(dy)) - self.radius
        else:
            # upward triangle as the intersection of three half-planes
            normals = [(0.0, 1.0), (math.sqrt(3) / 2, -0.5), (-math.sqrt(3) / 2, -0.5)]
            dist = np.max(
                [nx * dx + ny * dy - self.radius / 2 for nx, ny in normals], axis=0
            )
        return np.clip(0.5 - dist, 0.0, 1.0).astype(np.float32)


def texture(H: int, W: int, C: int, rng: Rng) -> np.ndarray:
    """Smooth noise plus faint stripes, values in [0.15, 0.85]."""
    noise = ndimage.gaussian_filter(
        rng.uniform_array((H, W, C)), sigma=(max(H, W) / 8, max(H, W) / 8, 0), mode="wrap"
    )
    noise = (noise - noise.min()) / max(noise.max() - noise.min(), 1e-8)
    ys, xs = np.mgrid[0:H, 0:W]
    angle = rng.uniform(0.0, math.pi)
    period = rng.uniform(4.0, max(H, W) / 2)
    stripes = np.sin(2 * math.pi * (xs * math.cos(angle) + ys * math.sin(angle)) / period)
    base = 0.15 + 0.6 * noise + 0.1 * (stripes[..., None] + 1) / 2
    return np.clip(base, 0.0, 1.0).astype(np.float32)


def random_sprite(cfg: ClipConfig, rng: Rng, kind: str | None = None) -> Sprite:
    H, W = cfg.height, cfg.width
    radius = rng.uniform(*cfg.radius_range) * min(H, W)
    motion = cfg.motion
    if motion == "mixed":
        motion = MOTIONS[rng.integers(0, 2)]
    hue = rng.random()
    color = tuple(
        float(0.5 + 0.45 * math.cos(2 * math.pi * (hue + c / 3))) for c in range(3)
    )
    if cfg.channels == 1:
        color = (float(np.mean(color)),)
    speed = rng.uniform(0.3, 1.2) * max(H, W) / 16
    heading = rng.uniform(0.0, 2 * math.pi)
    return Sprite(
        kind=kind or SPRITE_KINDS[rng.integers(0, len(SPRITE_KINDS))],
        color=color,
        radius=radius,
        start=(rng.uniform(radius, W - radius), rng.uniform(radius, H - radius)),
        velocity=(speed * math.cos(heading), speed * math.sin(heading)),
        motion=motion,
        phase=rng.uniform(0.0, 2 * math.pi),
    )


def render(background: np.ndarray, sprites: list[Sprite], T1: int) -> np.ndarray:
    """Composites sprites, in order, over a static background."""
    H, W, C = background.shape
    frames = np.repeat(background[None], T1, axis=0)
    for t in range(T1):
        for s in sprites:
            a = s.coverage(t, H, W)[..., None]
            frames[t] = (1 - a) * frames[t] + a * np.asarray(s.color, dtype=np.float32)
    return frames


def make_clip(cfg: ClipConfig, rng: Rng) -> Video:
    """One procedural clip."""
    background = texture(cfg.height, cfg.width, cfg.channels, rng.fork("texture"))
    sprites = [random_sprite(cfg, rng.fork("sprite", i)) for i in range(cfg.shapes)]
    return Video.clamped(render(background, sprites, cfg.frames))


class AddRemovePair(NamedTuple):
    """`source` lacks the sprite that `target` shows inside `masks`."""

    source: Video
    target: Video
    masks: MaskSequence
    sprite: Sprite


def make_add_remove_pair(cfg: ClipConfig, rng: Rng) -> AddRemovePair:
    """
    A clip without and with one extra disc sprite; the masks are the binary
    footprint of the sprite. Swapping `source` and `target` gives the
    removal task.
    """
    background = texture(cfg.height, cfg.width, cfg.channels, rng.fork("texture"))
    sprites = [random_sprite(cfg, rng.fork("sprite", i)) for i in range(cfg.shapes)]
    extra = random_sprite(cfg, rng.fork("extra"), kind="disc")
    source = render(background, sprites, cfg.frames)
    target = render(background, sprites + [extra], cfg.frames)
    masks = np.stack(
        [
            (extra.coverage(t, cfg.height, cfg.width) > 0).astype(np.float32)
            for t in range(cfg.frames)
        ]
    )
    return AddRemovePair(
        Video.clamped(source), Video.clamped(target), MaskSequence(masks), extra
    )


class ClipSource(Protocol):
    """Indexable collection of training clips."""

    def __len__(self) -> int: ...

    def __getitem__(self, i: int) -> Video: ...


class ProceduralClips:
    """`count` clips generated on demand, clip i from stream ("clip", i)."""

    def __init__(self, cfg: ClipConfig, seed: int, count: int):
        if count < 1:
            raise ConfigError("A procedural dataset needs at least one clip.")
        self.cfg = cfg
        self.seed = seed
        self.count = count
        self._get = cache(self._make)

    def _make(self, i: int) -> Video:
        return make_clip(self.cfg, Rng(self.seed).fork("clip", i))

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, i: int) -> Video:
        if not 0 <= i < self.count:
            raise IndexError(i)
        return self._get(i)


class ClipDirectory:
    """Clips stored in a directory (containers or frame folders), loaded lazily."""

    def __init__(self, dr: str | Path):
        self.paths = get_clips(Path(dr))
        self._get = cache(self._load)

    def _load(self, i: int) -> Video:
        return load_video(self.paths[i])

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, i: int) -> Video:
        return self._get(i)


def make_dataset(
    cfg: ClipConfig, seed: int, count: int, out_dir: str | Path, out: TextIO = sys.stdout
) -> list[Path]:
    """Writes `count` clips as `clip_#####.nvt` containers."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    clips = ProceduralClips(cfg, seed, count)
    paths = []
    for i in range(count):
        path = out_dir / f"clip_{i:05d}.nvt"
        save_video(clips[i], path, format="container")
        paths.append(path)
    print(f"Wrote {count} clip" + ("s" if count >= 2 else "") + " to" + emph(f" {out_dir}") + ".", file=out)
    return paths
