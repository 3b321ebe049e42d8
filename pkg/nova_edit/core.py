"""
Domain data model shared by every pipeline: videos, mask sequences,
keyframe sets, and the exceptions raised when they are misused.

Pixel values are linear [0,1] floats stored as float32 arrays of shape
(T+1, H, W, C). Instances are read-only after construction.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from nova_edit import cst


class NovaError(Exception):
    """Base class of the errors reported to the user."""

    exit_code: int = 1


class ConfigError(NovaError):
    """When a configuration is malformed or inconsistent."""

    exit_code = cst.EXIT_CONFIG


class DataError(NovaError):
    """When input data does not satisfy a precondition."""

    exit_code = cst.EXIT_DATA


class ShapeMismatch(DataError):
    """When frames, masks or videos do not share the expected shape."""


class NumericError(NovaError):
    """When a computation produces non-finite values."""

    exit_code = cst.EXIT_NUMERIC


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Video:
    """
    A sequence of T+1 frames of shape (H, W, C), values in [0,1].

    Use `Video.clamped` to build a video from values that may fall
    slightly outside [0,1]; the plain constructor rejects them.
    """

    frames: np.ndarray

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if frames.ndim == 3:
            frames = frames[..., None]
        if frames.ndim != 4:
            raise ShapeMismatch(
                f"A video must have shape (T+1, H, W, C), got {frames.shape}."
            )
        if frames.shape[0] < 2:
            raise DataError(f"A video needs at least 2 frames, got {frames.shape[0]}.")
        if frames.shape[3] not in (1, 3):
            raise ShapeMismatch(f"Channel count must be 1 or 3, got {frames.shape[3]}.")
        if not np.all(np.isfinite(frames)):
            raise DataError("Video contains non-finite values.")
        if frames.size and (frames.min() < 0.0 or frames.max() > 1.0):
            raise DataError("Video values must lie in [0,1].")
        if frames is self.frames:
            frames = frames.copy()
        object.__setattr__(self, "frames", _frozen(frames))

    @classmethod
    def clamped(cls, frames: np.ndarray) -> Video:
        """Builds a video after explicitly clamping values to [0,1]."""
        return cls(np.clip(np.nan_to_num(frames, nan=0.0), 0.0, 1.0))

    @classmethod
    def from_frames(cls, frames: Iterable[np.ndarray]) -> Video:
        """Stacks single frames of shape (H, W, C) or (H, W)."""
        frames = list(frames)
        shapes = {np.shape(f) for f in frames}
        if len(shapes) > 1:
            raise ShapeMismatch(f"Frames have different shapes: {sorted(shapes)}.")
        return cls(np.stack(frames))

    @property
    def length(self) -> int:
        """Number of frames, T+1."""
        return self.frames.shape[0]

    @property
    def last(self) -> int:
        """Index T of the last frame."""
        return self.frames.shape[0] - 1

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def channels(self) -> int:
        return self.frames.shape[3]

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.frames.shape[1:]  # type: ignore

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, t: int) -> np.ndarray:
        return self.frames[t]

    def equals(self, other: Video) -> bool:
        """Bitwise equality."""
        return self.frames.shape == other.frames.shape and bool(
            np.array_equal(self.frames, other.frames)
        )

    def with_channels(self, channels: int) -> Video:
        """Converts between grayscale and RGB by replication or luminance."""
        if channels == self.channels:
            return self
        if channels == 3:
            return Video(np.repeat(self.frames, 3, axis=3))
        weights = np.array([0.2125, 0.7154, 0.0721], dtype=np.float32)
        return Video.clamped(self.frames @ weights)


@dataclass(frozen=True, eq=False)
class MaskSequence:
    """
    Per-frame single-channel masks of shape (T+1, H, W), values in [0,1].
    When `binary` is set, every value is exactly 0 or 1.
    """

    masks: np.ndarray
    binary: bool = True

    def __post_init__(self):
        masks = np.ascontiguousarray(self.masks, dtype=np.float32)
        if masks.ndim == 4 and masks.shape[3] == 1:
            masks = masks[..., 0]
        if masks.ndim != 3:
            raise ShapeMismatch(f"Masks must have shape (T+1, H, W), got {masks.shape}.")
        if not np.all(np.isfinite(masks)) or masks.min() < 0.0 or masks.max() > 1.0:
            raise DataError("Mask values must lie in [0,1].")
        if self.binary and not np.all((masks == 0.0) | (masks == 1.0)):
            raise DataError("A binary mask sequence may only contain 0 and 1.")
        if masks is self.masks:
            masks = masks.copy()
        object.__setattr__(self, "masks", _frozen(masks))

    @classmethod
    def empty_like(cls, video: Video) -> MaskSequence:
        """All-zero binary masks matching a video."""
        return cls(np.zeros(video.frames.shape[:3], dtype=np.float32))

    def __len__(self) -> int:
        return self.masks.shape[0]

    def __getitem__(self, t: int) -> np.ndarray:
        return self.masks[t]

    def check_pairs(self, video: Video) -> None:
        """Fails unless the masks match the length and (H, W) of a video."""
        if self.masks.shape != video.frames.shape[:3]:
            raise ShapeMismatch(
                f"Masks of shape {self.masks.shape} do not match video "
                f"of shape {video.frames.shape}."
            )


@dataclass(frozen=True)
class KeyframeSet:
    """Strictly increasing anchor indices, always including 0 and T."""

    indices: tuple[int, ...]
    length: int

    def __post_init__(self):
        indices = tuple(int(k) for k in self.indices)
        last = self.length - 1
        if self.length < 2:
            raise DataError("Keyframes need a video of at least 2 frames.")
        if len(indices) < 2:
            raise DataError("A keyframe set holds at least the first and last frame.")
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise DataError(f"Keyframe indices must be strictly increasing: {indices}.")
        if indices[0] != 0 or indices[-1] != last:
            raise DataError(
                f"Keyframes must start at 0 and end at {last}, got {indices}."
            )
        object.__setattr__(self, "indices", indices)

    @classmethod
    def from_indices(cls, indices: Sequence[int], length: int) -> KeyframeSet:
        """Sorts and deduplicates before validating."""
        return cls(tuple(sorted(set(int(k) for k in indices))), length)

    @property
    def last(self) -> int:
        return self.length - 1

    @property
    def segments(self) -> int:
        """Number N of interpolation segments."""
        return len(self.indices) - 1

    def __iter__(self):
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, t: object) -> bool:
        return t in self.indices

    def bracket(self, t: int) -> tuple[int, int]:
        """Returns the adjacent anchors (k_{n-1}, k_n) with k_{n-1} <= t <= k_n."""
        if not 0 <= t <= self.last:
            raise DataError(f"Frame {t} outside [0, {self.last}].")
        pos = int(np.searchsorted(self.indices, t, side="left"))
        if self.indices[pos] == t:
            return t, t
        return self.indices[pos - 1], self.indices[pos]


def check_frame(frame: np.ndarray) -> np.ndarray:
    """Validates one (H, W, C) frame and returns it as float32."""
    frame = np.asarray(frame, dtype=np.float32)
    if frame.ndim == 2:
        frame = frame[..., None]
    if frame.ndim != 3 or frame.shape[2] not in (1, 3):
        raise ShapeMismatch(f"A frame must have shape (H, W, C), got {frame.shape}.")
    if not np.all(np.isfinite(frame)):
        raise DataError("Frame contains non-finite values.")
    return frame
