"""
Anchored control pipeline: samples keyframes of a target video, degrades
every keyframe but the first, and rebuilds a degraded reference by linear
interpolation between adjacent keyframes.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping
import math

import numpy as np
from scipy import ndimage

from nova_edit import cst
from nova_edit.core import ConfigError, DataError, KeyframeSet, ShapeMismatch, Video, check_frame
from nova_edit.rng import Rng


@dataclass(frozen=True)
class DegradationConfig:
    """
    Parameters of the keyframe degradation. Each operator of `operators`
    fires independently with its probability: `zoom_stretch` with
    `geometric_p`, `blur_blob` with `appearance_p`.
    """

    geometric_p: float = 0.5
    appearance_p: float = 0.5
    zoom_range: tuple[float, float] = (0.9, 1.1)
    stretch_range: tuple[float, float] = (0.95, 1.05)
    rotation_range: tuple[float, float] = (-3.0, 3.0)  # degrees
    sigma_range: tuple[float, float] = (0.5, 2.0)  # pixels
    blob_range: tuple[float, float] = (0.1, 0.4)  # fraction of the frame area
    operators: tuple[str, ...] = tuple(cst.DEGRADATION_OPERATORS)

    def __post_init__(self):
        for name in ("geometric_p", "appearance_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"Probability {name} must lie in [0,1], got {p}.")
        for name in ("zoom_range", "stretch_range", "rotation_range", "sigma_range", "blob_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"Empty range {name} = [{lo}, {hi}].")
        if self.sigma_range[0] <= 0.0:
            raise ConfigError("Blur sigma must be positive.")
        if self.zoom_range[0] <= 0.0 or self.stretch_range[0] <= 0.0:
            raise ConfigError("Zoom and stretch factors must be positive.")
        if not (0.0 < self.blob_range[0] and self.blob_range[1] <= 1.0):
            raise ConfigError("Blob sizes must lie in (0,1].")
        unknown = [op for op in self.operators if op not in cst.DEGRADATION_OPERATORS]
        if unknown:
            raise ConfigError(
                f"Unknown degradation operators {unknown}, expected {cst.DEGRADATION_OPERATORS}."
            )

    @classmethod
    def disabled(cls) -> DegradationConfig:
        return cls(geometric_p=0.0, appearance_p=0.0)


@dataclass(frozen=True)
class KeyframeMode:
    """Either `random` with `value` interior anchors, or `fixed` with interval `value`."""

    kind: str
    value: int

    def __post_init__(self):
        if self.kind not in ("random", "fixed"):
            raise ConfigError(f"Unknown keyframe mode {self.kind!r}.")
        if self.kind == "fixed" and self.value < 1:
            raise ConfigError(f"Keyframe interval must be positive, got {self.value}.")
        if self.kind == "random" and self.value < 0:
            raise ConfigError(f"Interior keyframe count must be >= 0, got {self.value}.")

    @classmethod
    def random(cls, n_interior: int) -> KeyframeMode:
        return cls("random", n_interior)

    @classmethod
    def fixed(cls, interval: int) -> KeyframeMode:
        return cls("fixed", interval)


@dataclass(frozen=True)
class DegradationRecord:
    """What happened to one keyframe."""

    index: int
    operations: tuple[tuple[str, dict], ...] = ()

    def describe(self) -> str:
        if not self.operations:
            return "clean"
        return "; ".join(
            name + "(" + ", ".join(f"{k}={v:.4g}" for k, v in params.items()) + ")"
            for name, params in self.operations
        )


@dataclass(frozen=True, eq=False)
class DegradedReference:
    """The degraded reference video with its anchors and degradation log."""

    video: Video
    keyframes: KeyframeSet
    frames: Mapping[int, np.ndarray]
    log: tuple[DegradationRecord, ...] = field(default_factory=tuple)


def sample_keyframes(T: int, n_interior: int, rng: Rng) -> KeyframeSet:
    """
    Returns {0, T} plus `n_interior` distinct indices drawn from (0, T).
    """
    if n_interior < 0 or n_interior > T - 1:
        raise DataError(
            f"Cannot draw {n_interior} interior keyframes from (0, {T})."
        )
    interior = [k + 1 for k in rng.choice(T - 1, n_interior)] if n_interior else []
    return KeyframeSet.from_indices([0, T, *interior], T + 1)


def fixed_keyframes(T: int, interval: int) -> KeyframeSet:
    """Returns {0, interval, 2 interval, ...} plus T."""
    if interval < 1:
        raise DataError(f"Keyframe interval must be positive, got {interval}.")
    return KeyframeSet.from_indices([*range(0, T + 1, interval), T], T + 1)


def keyframes_for(mode: KeyframeMode, T: int, rng: Rng) -> KeyframeSet:
    if mode.kind == "fixed":
        return fixed_keyframes(T, mode.value)
    return sample_keyframes(T, mode.value, rng)


def zoom_stretch(
    frame: np.ndarray, zoom: float, stretch: tuple[float, float], rotation: float = 0.0
) -> np.ndarray:
    """
    Warps a frame by a zoom, a per-axis stretch (x, y) and a rotation in
    degrees about the frame center, with bilinear sampling and edge
    replication.
    """
    frame = check_frame(frame)
    a = math.radians(rotation)
    forward = np.array(
        [[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]]
    ) @ np.diag([zoom * stretch[1], zoom * stretch[0]])
    matrix = np.linalg.inv(forward)
    center = (np.array(frame.shape[:2], dtype=np.float64) - 1.0) / 2.0
    offset = center - matrix @ center
    out = np.empty_like(frame)
    for c in range(frame.shape[2]):
        out[..., c] = ndimage.affine_transform(
            frame[..., c], matrix, offset=offset, order=1, mode="nearest"
        )
    return out


def gaussian_blur(frame: np.ndarray, sigma: float) -> np.ndarray:
    """Spatial Gaussian blur with edge replication."""
    return ndimage.gaussian_filter(frame, sigma=(sigma, sigma, 0.0), mode="nearest")


def blob_mask(H: int, W: int, area: float, rng: Rng) -> np.ndarray:
    """
    A random ellipse covering about `area` of the frame, with a soft edge of
    `cst.BLOB_SOFT_EDGE` pixels.
    """
    ratio = math.exp(rng.uniform(math.log(0.5), math.log(2.0)))
    ab = area * H * W / math.pi
    a, b = math.sqrt(ab * ratio), math.sqrt(ab / ratio)
    cx, cy = rng.uniform(0.0, W), rng.uniform(0.0, H)
    ys, xs = np.mgrid[0:H, 0:W] + 0.5
    r = np.sqrt(((xs - cx) / a) ** 2 + ((ys - cy) / b) ** 2)
    dist = (r - 1.0) * min(a, b)
    return np.clip(0.5 - dist / cst.BLOB_SOFT_EDGE, 0.0, 1.0).astype(np.float32)


def blend_blur(frame: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    """(1 - b) * x + b * Blur(x), b broadcast over channels."""
    b = b[..., None].astype(np.float32)
    return (np.float32(1.0) - b) * frame + b * gaussian_blur(frame, sigma)


def degrade_keyframe(
    x_k: np.ndarray, cfg: DegradationConfig, rng: Rng
) -> tuple[np.ndarray, tuple[tuple[str, dict], ...]]:
    """
    Applies the configured operators, each firing with its probability.

    Args:
        x_k: the clean keyframe, (H, W, C).
        cfg: degradation parameters.
        rng: the keyframe's own stream.

    Returns:
        the degraded frame and the list of (operator, parameters) that fired.
    """
    out = check_frame(x_k).copy()
    H, W = out.shape[:2]
    log: list[tuple[str, dict]] = []
    for op in cfg.operators:
        if op == "zoom_stretch":
            if rng.random() >= cfg.geometric_p:
                continue
            params = {
                "zoom": rng.uniform(*cfg.zoom_range),
                "stretch_x": rng.uniform(*cfg.stretch_range),
                "stretch_y": rng.uniform(*cfg.stretch_range),
                "rotation": rng.uniform(*cfg.rotation_range),
            }
            out = zoom_stretch(
                out, params["zoom"], (params["stretch_x"], params["stretch_y"]),
                params["rotation"],
            )
        else:
            if rng.random() >= cfg.appearance_p:
                continue
            params = {
                "sigma": rng.uniform(*cfg.sigma_range),
                "area": rng.uniform(*cfg.blob_range),
            }
            b = blob_mask(H, W, params["area"], rng)
            out = blend_blur(out, b, params["sigma"])
        log.append((op, params))
    return np.clip(out, 0.0, 1.0), tuple(log)


def interpolate_reference(
    keyframes: Mapping[int, np.ndarray], T: int, workers: int = 0
) -> Video:
    """
    Piecewise-linear video through the given keyframes: exact copies at the
    anchors, (1 - a) x_{k_{n-1}} + a x_{k_n} with a = (t - k_{n-1}) / (k_n - k_{n-1})
    in between. Interpolated values are kept within the range of their two
    bracketing pixels.
    """
    if 0 not in keyframes or T not in keyframes:
        raise DataError(f"Keyframes must include both endpoints 0 and {T}.")
    K = KeyframeSet.from_indices(list(keyframes), T + 1)
    frames = {k: check_frame(keyframes[k]) for k in K}
    shapes = {f.shape for f in frames.values()}
    if len(shapes) > 1:
        raise ShapeMismatch(f"Keyframes have different shapes: {sorted(shapes)}.")

    def frame_at(t: int) -> np.ndarray:
        lo, hi = K.bracket(t)
        if lo == hi:
            return frames[t]
        a, b = frames[lo], frames[hi]
        alpha = (t - lo) / (hi - lo)
        mixed = ((1.0 - alpha) * a.astype(np.float64) + alpha * b.astype(np.float64))
        mixed = mixed.astype(np.float32)
        return np.clip(mixed, np.minimum(a, b), np.maximum(a, b))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(frame_at, range(T + 1)))
    else:
        out = [frame_at(t) for t in range(T + 1)]
    return Video(np.stack(out))


def build_degraded_reference(
    x: Video,
    cfg: DegradationConfig,
    mode: KeyframeMode,
    rng: Rng,
    workers: int = 0,
) -> DegradedReference:
    """
    Samples keyframes, degrades every keyframe except frame 0, and
    interpolates the degraded reference.
    """
    T = x.last
    K = keyframes_for(mode, T, rng.fork("keyframes"))

    def degrade(k: int) -> tuple[np.ndarray, tuple]:
        return degrade_keyframe(x[k], cfg, rng.fork("degrade", k))

    targets = [k for k in K if k != 0]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(degrade, targets))
    else:
        results = [degrade(k) for k in targets]
    frames: dict[int, np.ndarray] = {0: x[0]}
    log = [DegradationRecord(0)]
    for k, (frame, ops) in zip(targets, results):
        frames[k] = frame
        log.append(DegradationRecord(k, ops))
    video = interpolate_reference(frames, T, workers=workers)
    return DegradedReference(video, K, frames, tuple(log))
