"""
Source fidelity pipeline: builds a pseudo-source video by pasting a moving
mask-shaped patch of a filler video onto the target,

    x~_t = m_t * y_t + (1 - m_t) * x_t.

The mask follows a bouncing rigid motion so that consecutive masks are
temporally coherent.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace, asdict
from pathlib import Path
from typing import Callable, NamedTuple, Sequence
import math

import numpy as np
from skimage.measure import points_in_poly
from skimage.transform import resize

from nova_edit import cst
from nova_edit.autofinder import get_clips
from nova_edit.core import ConfigError, DataError, MaskSequence, ShapeMismatch, Video
from nova_edit.rng import Rng


class DegenerateMaskError(DataError):
    """When a mask has zero area once clipped to the frame."""


@dataclass(frozen=True)
class MaskShapeSpec:
    """
    Base geometry of a mask. `size` is the side (or diameter) as a fraction
    of min(H, W); `aspect` is the width/height ratio; `angles` are the sorted
    vertex angles of a polygon inscribed in the base ellipse, which makes it
    convex.
    """

    shape: str
    size: float
    vertices: int = 3
    aspect: float = 1.0
    angles: tuple[float, ...] = ()

    def __post_init__(self):
        if self.shape not in cst.MASK_SHAPES:
            raise ConfigError(
                f"Unknown mask shape {self.shape!r}, expected one of {cst.MASK_SHAPES}."
            )
        if not 0.0 < self.size < 1.0:
            raise ConfigError(f"Mask size must lie in (0,1), got {self.size}.")
        if self.vertices < 3:
            raise ConfigError(f"A polygon needs at least 3 vertices, got {self.vertices}.")
        if self.aspect <= 0.0:
            raise ConfigError(f"Mask aspect must be positive, got {self.aspect}.")
        if self.shape == "polygon" and not self.angles:
            regular = tuple(2.0 * math.pi * i / self.vertices for i in range(self.vertices))
            object.__setattr__(self, "angles", regular)
        if self.angles and len(self.angles) != self.vertices:
            raise ConfigError("Polygon angles and vertex count disagree.")

    def half_axes(self, scale: float, height: int, width: int) -> tuple[float, float]:
        """Half width and half height of the unrotated shape, in pixels."""
        half = 0.5 * self.size * min(height, width) * scale
        root = math.sqrt(self.aspect)
        return half * root, half / root

    def polygon(self, scale: float, height: int, width: int) -> np.ndarray:
        """Vertices (u, v) of the polygon in shape-local pixel coordinates."""
        hw, hh = self.half_axes(scale, height, width)
        angles = np.asarray(self.angles)
        return np.column_stack([hw * np.cos(angles), hh * np.sin(angles)])


@dataclass(frozen=True)
class MaskMotionState:
    """Pose and velocity of a mask at one frame."""

    position: tuple[float, float]  # (x, y) in pixels
    velocity: tuple[float, float]  # pixels / frame
    theta: float = 0.0
    dtheta: float = 0.0
    scale: float = 1.0
    scale_rate: float = 0.0  # additive, per frame
    frame: int = 0


@dataclass(frozen=True)
class FidelityConfig:
    """Sampling ranges of the source fidelity pipeline."""

    seed: int = 0
    shapes: tuple[str, ...] = tuple(cst.MASK_SHAPES)
    size_range: tuple[float, float] = (0.15, 0.45)
    vertex_range: tuple[int, int] = (3, 8)
    aspect_range: tuple[float, float] = (1.0, 1.0)
    speed_range: tuple[float, float] = (0.5, 3.0)
    angular_range: tuple[float, float] = (-0.05, 0.05)
    scale_range: tuple[float, float] = (1.0, 1.0)
    scale_rate: float = 0.0
    antialias: bool = False
    pool: str | None = None
    workers: int = 0

    def __post_init__(self):
        ranges = {
            "size": self.size_range,
            "vertices": self.vertex_range,
            "aspect": self.aspect_range,
            "speed": self.speed_range,
            "angular rate": self.angular_range,
            "scale": self.scale_range,
        }
        for name, (lo, hi) in ranges.items():
            if lo > hi:
                raise ConfigError(f"Empty {name} range [{lo}, {hi}].")
        if not (0.0 < self.size_range[0] and self.size_range[1] < 1.0):
            raise ConfigError(f"Mask size range must lie in (0,1), got {self.size_range}.")
        if self.vertex_range[0] < 3:
            raise ConfigError("Polygons need at least 3 vertices.")
        if self.speed_range[0] < 0.0:
            raise ConfigError("Mask speeds must be non-negative.")
        if self.scale_range[0] <= 0.0 or self.aspect_range[0] <= 0.0:
            raise ConfigError("Mask scale and aspect must be positive.")
        if not self.shapes or any(s not in cst.MASK_SHAPES for s in self.shapes):
            raise ConfigError(f"Mask shapes must be a non-empty subset of {cst.MASK_SHAPES}.")

    @property
    def max_speed(self) -> float:
        return self.speed_range[1]


def half_extents(
    spec: MaskShapeSpec, state: MaskMotionState, height: int, width: int
) -> tuple[float, float]:
    """Half sizes (x, y) of the axis-aligned bounding box of the posed shape."""
    c, s = abs(math.cos(state.theta)), abs(math.sin(state.theta))
    hw, hh = spec.half_axes(state.scale, height, width)
    if spec.shape == "rectangle":
        return hw * c + hh * s, hw * s + hh * c
    if spec.shape == "ellipse":
        return math.hypot(hw * c, hh * s), math.hypot(hw * s, hh * c)
    verts = spec.polygon(state.scale, height, width)
    ct, st = math.cos(state.theta), math.sin(state.theta)
    xs = verts[:, 0] * ct - verts[:, 1] * st
    ys = verts[:, 0] * st + verts[:, 1] * ct
    return float(np.abs(xs).max()), float(np.abs(ys).max())


def _inside(
    spec: MaskShapeSpec, state: MaskMotionState, xs: np.ndarray, ys: np.ndarray,
    height: int, width: int,
) -> np.ndarray:
    """Membership of points (xs, ys) in the posed shape."""
    dx = xs - state.position[0]
    dy = ys - state.position[1]
    ct, st = math.cos(state.theta), math.sin(state.theta)
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    hw, hh = spec.half_axes(state.scale, height, width)
    if spec.shape == "rectangle":
        return (np.abs(u) <= hw) & (np.abs(v) <= hh)
    if spec.shape == "ellipse":
        return (u / hw) ** 2 + (v / hh) ** 2 <= 1.0
    points = np.column_stack([u.ravel(), v.ravel()])
    return points_in_poly(points, spec.polygon(state.scale, height, width)).reshape(u.shape)


def rasterize_mask(
    spec: MaskShapeSpec,
    state: MaskMotionState,
    H: int,
    W: int,
    antialias: bool = False,
    supersample: int = 4,
) -> np.ndarray:
    """
    Rasterizes the posed shape on an H x W grid, testing pixel centers.

    Args:
        spec: the base shape.
        state: its pose (position, rotation, scale).
        H, W: frame size in pixels.
        antialias: if set, average a supersample x supersample grid per pixel,
            which yields a soft mask.

    Returns:
        a float32 (H, W) mask, binary unless `antialias` is set.

    Raises:
        DegenerateMaskError: if no pixel is covered.
    """
    n = supersample if antialias else 1
    offsets = (np.arange(n) + 0.5) / n
    ys = (np.arange(H)[:, None] + offsets[None, :]).reshape(-1)
    xs = (np.arange(W)[:, None] + offsets[None, :]).reshape(-1)
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    inside = _inside(spec, state, grid_x, grid_y, H, W).astype(np.float32)
    if n > 1:
        inside = inside.reshape(H, n, W, n).mean(axis=(1, 3))
    if not np.any(inside > 0.0):
        raise DegenerateMaskError(
            f"Mask at position {state.position} has zero area in a {W}x{H} frame."
        )
    return inside.astype(np.float32)


def step_motion(
    state: MaskMotionState,
    H: int,
    W: int,
    extent: MaskShapeSpec | tuple[float, float],
) -> MaskMotionState:
    """
    Advances a mask by one frame. Position moves by the velocity and the
    rotation by the angular rate; when the bounding box would cross a frame
    edge it is moving toward, that velocity component is negated and the
    position re-advanced from the previous one. The center is finally kept
    inside the frame, so the bounding box always intersects it.

    Args:
        state: the current pose.
        H, W: frame size.
        extent: the mask shape, or fixed bounding-box half sizes (x, y).
    """
    moved = replace(
        state,
        theta=state.theta + state.dtheta,
        scale=max(state.scale + state.scale_rate, 1e-3),
        frame=state.frame + 1,
    )
    if isinstance(extent, MaskShapeSpec):
        ex, ey = half_extents(extent, moved, H, W)
    else:
        ex, ey = extent

    def bounce(p: float, v: float, half: float, size: int) -> tuple[float, float]:
        q = p + v
        if (v < 0 and q - half < 0) or (v > 0 and q + half > size):
            v = -v
            q = p + v
        return min(max(q, 0.0), float(size)), v

    x, vx = bounce(state.position[0], state.velocity[0], ex, W)
    y, vy = bounce(state.position[1], state.velocity[1], ey, H)
    return replace(moved, position=(x, y), velocity=(vx, vy))


def pingpong_index(t: int, L: int) -> int:
    """
    Reflect-mode index into a clip of length L: 0, 1, ..., L-1, L-2, ..., 1,
    0, 1, ... with period 2(L-1); always 0 when L = 1.
    """
    if L < 1:
        raise DataError(f"Cannot loop over a clip of length {L}.")
    if L == 1:
        return 0
    period = 2 * (L - 1)
    r = t % period
    return r if r < L else period - r


class FillerPool:
    """
    Videos from which the pasted content is drawn. Clips given as paths are
    loaded on first use.
    """

    def __init__(self, clips: Sequence[Video | Path], loader: Callable[[Path], Video] | None = None):
        if len(clips) == 0:
            raise DataError("The filler pool is empty.")
        self.clips: list[Video | Path] = list(clips)
        self.loader = loader

    @classmethod
    def from_directory(cls, dr: str | Path) -> FillerPool:
        from nova_edit.video_io import load_video

        return cls(get_clips(Path(dr)), loader=load_video)

    def __len__(self) -> int:
        return len(self.clips)

    def get(self, i: int) -> Video:
        clip = self.clips[i]
        if isinstance(clip, Video):
            return clip
        if self.loader is None:
            raise DataError(f"No loader for filler clip {clip}.")
        video = self.loader(clip)
        self.clips[i] = video
        return video

    def draw(self, rng: Rng) -> tuple[int, Video]:
        i = rng.integers(0, len(self.clips))
        return i, self.get(i)


def resample_filler(y: Video, like: Video) -> Video:
    """Resizes a filler to the (H, W, C) of `like` with bilinear sampling."""
    y = y.with_channels(like.channels)
    if y.frame_shape == like.frame_shape:
        return y
    out = resize(
        y.frames,
        (y.length, like.height, like.width, like.channels),
        order=1,
        anti_aliasing=False,
        preserve_range=True,
    )
    filler = Video.clamped(out)
    if filler.frame_shape != like.frame_shape:
        raise ShapeMismatch(
            f"Filler of shape {filler.frame_shape} incompatible with {like.frame_shape}."
        )
    return filler


def sample_shape(cfg: FidelityConfig, rng: Rng) -> MaskShapeSpec:
    """Draws a base shape; polygons get sorted random vertex angles."""
    shape = cfg.shapes[rng.integers(0, len(cfg.shapes))]
    size = rng.uniform(*cfg.size_range)
    aspect = rng.uniform(*cfg.aspect_range)
    vertices = rng.integers(cfg.vertex_range[0], cfg.vertex_range[1] + 1)
    angles: tuple[float, ...] = ()
    if shape == "polygon":
        angles = tuple(float(a) for a in np.sort(rng.uniform_array((vertices,)) * 2 * math.pi))
    return MaskShapeSpec(shape, size, vertices, aspect, angles)


def sample_motion(
    spec: MaskShapeSpec, cfg: FidelityConfig, H: int, W: int, rng: Rng
) -> MaskMotionState:
    """Draws an initial pose with the bounding box inside the frame when it fits."""
    state = MaskMotionState(
        position=(0.0, 0.0),
        velocity=(0.0, 0.0),
        theta=rng.uniform(0.0, 2 * math.pi),
        dtheta=rng.uniform(*cfg.angular_range),
        scale=rng.uniform(*cfg.scale_range),
        scale_rate=cfg.scale_rate,
    )
    ex, ey = half_extents(spec, state, H, W)
    x = rng.uniform(ex, W - ex) if 2 * ex < W else W / 2
    y = rng.uniform(ey, H - ey) if 2 * ey < H else H / 2
    speed = rng.uniform(*cfg.speed_range) * W / cst.SPEED_REFERENCE_WIDTH
    heading = rng.uniform(0.0, 2 * math.pi)
    return replace(
        state,
        position=(x, y),
        velocity=(speed * math.cos(heading), speed * math.sin(heading)),
    )


def motion_track(
    spec: MaskShapeSpec, start: MaskMotionState, length: int, H: int, W: int
) -> list[MaskMotionState]:
    """The sequential poses of a mask over `length` frames."""
    states = [start]
    for _ in range(length - 1):
        states.append(step_motion(states[-1], H, W, spec))
    return states


def composite(x: np.ndarray, y: np.ndarray, m: np.ndarray) -> np.ndarray:
    """m * y + (1 - m) * x, the mask broadcast over channels."""
    m = m[..., None].astype(np.float32)
    return m * y + (np.float32(1.0) - m) * x


class PseudoSource(NamedTuple):
    video: Video
    masks: MaskSequence
    params: dict


def synth_pseudo_source(
    x: Video, pool: FillerPool, cfg: FidelityConfig, rng: Rng | None = None
) -> PseudoSource:
    """
    Builds the pseudo-source video of a target.

    Args:
        x: the target video.
        pool: the filler videos.
        cfg: sampling ranges.
        rng: randomness; defaults to the `fidelity` stream of `cfg.seed`.

    Returns:
        the pseudo-source, its binary masks and the sampled parameters.
    """
    if len(pool) == 0:
        raise DataError("The filler pool is empty.")
    rng = rng if rng is not None else Rng(cfg.seed).fork("fidelity")
    H, W = x.height, x.width
    filler_idx, filler = pool.draw(rng.fork("filler"))
    y = resample_filler(filler, x)
    offset = rng.integers(0, y.length) if y.length > x.length else 0
    for attempt in range(cst.MAX_MASK_ATTEMPTS):
        draw = rng.fork("mask", attempt)
        spec = sample_shape(cfg, draw)
        states = motion_track(spec, sample_motion(spec, cfg, H, W, draw), x.length, H, W)

        def raster(state: MaskMotionState) -> np.ndarray:
            return rasterize_mask(spec, state, H, W, antialias=cfg.antialias)

        try:
            if cfg.workers > 1:
                with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
                    masks = list(ex.map(raster, states))
            else:
                masks = [raster(s) for s in states]
        except DegenerateMaskError:
            continue
        break
    else:
        raise DataError(
            f"Could not draw a non-degenerate mask in {cst.MAX_MASK_ATTEMPTS} attempts."
        )
    m = np.stack(masks)
    idx = [pingpong_index(offset + t, y.length) for t in range(x.length)]
    frames = composite(x.frames, y.frames[idx], m)
    params = {
        "filler": filler_idx,
        "filler_length": y.length,
        "offset": offset,
        "attempts": attempt + 1,
        "shape": asdict(spec),
        "start": asdict(states[0]),
    }
    video = Video.clamped(frames) if cfg.antialias else Video(frames)
    return PseudoSource(video, MaskSequence(m, binary=not cfg.antialias), params)
