"""
Reading and writing videos and masks: frame directories of 8-bit PNG files,
or lossless `.nvt` containers.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from pathlib import Path
from typing import Literal

import numpy as np
from PIL import Image, UnidentifiedImageError

from nova_edit import cst, container
from nova_edit.autofinder import get_frame_files
from nova_edit.core import DataError, MaskSequence, ShapeMismatch, Video, check_frame


def frame_name(t: int) -> str:
    """Zero-padded file name of the t-th frame."""
    return f"{t:0{cst.FRAME_NAME_DIGITS}d}.png"


def _to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_frame(path: Path) -> np.ndarray:
    """Reads one PNG as a float32 (H, W, C) frame in [0,1]."""
    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "RGB"):
                img = img.convert("RGB")
            array = np.asarray(img, dtype=np.float32) / 255.0
    except (OSError, UnidentifiedImageError) as e:
        raise DataError(f"Cannot read frame {path}: {e}.") from e
    return check_frame(array)


def write_frame(path: Path, frame: np.ndarray) -> None:
    frame = check_frame(frame)
    pixels = _to_uint8(frame)
    img = Image.fromarray(pixels[..., 0] if pixels.shape[2] == 1 else pixels)
    try:
        img.save(path, format="PNG")
    except OSError as e:
        raise DataError(f"Cannot write frame {path}: {e.strerror}.") from e


def load_video(path: str | Path) -> Video:
    """
    Loads a video from a directory of lexicographically ordered frames or
    from a `.nvt` container of shape (T+1, H, W, C).

    Args:
        path: a frame directory or a `.nvt` file.

    Returns:
        the video, with values scaled to [0,1] and frame order preserved.
    """
    path = Path(path)
    if path.is_file():
        array = container.load_tensor(path)
        if array.ndim == 3:
            array = array[..., None]
        return Video(array)
    frames = [read_frame(p) for p in get_frame_files(path)]
    if len(frames) < 2:
        raise DataError(f"{path} holds {len(frames)} frame(s); a video needs 2.")
    shapes = {f.shape for f in frames}
    if len(shapes) > 1:
        raise ShapeMismatch(
            f"Frames of {path} have different shapes: {sorted(shapes)}."
        )
    return Video(np.stack(frames))


def save_video(
    v: Video, path: str | Path, format: Literal["frames", "container"] = "frames"
) -> None:
    """
    Saves a video either as 8-bit PNG frames in a directory (created if
    needed) or as a bit-exact `.nvt` container.
    """
    if not isinstance(v, Video) or v.length < 2:
        raise DataError("Only valid videos of at least 2 frames can be saved.")
    path = Path(path)
    if format == "container":
        container.save_tensor(path, v.frames)
        return
    if format != "frames":
        raise ValueError(f"Unknown video format {format!r}.")
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"Cannot create {path}: {e.strerror}.") from e
    for t in range(v.length):
        write_frame(path / frame_name(t), v[t])


def load_masks(path: str | Path) -> MaskSequence:
    """Loads masks from a frame directory (grayscale PNG) or a container."""
    path = Path(path)
    if path.is_file():
        masks = container.load_tensor(path)
        return MaskSequence(masks, binary=bool(np.all((masks == 0) | (masks == 1))))
    video = load_video(path).with_channels(1)
    masks = video.frames[..., 0]
    return MaskSequence(masks, binary=bool(np.all((masks == 0) | (masks == 1))))


def save_masks(
    m: MaskSequence, path: str | Path, format: Literal["frames", "container"] = "frames"
) -> None:
    """Saves masks like `save_video`, as single-channel frames."""
    path = Path(path)
    if format == "container":
        container.save_tensor(path, m.masks)
        return
    save_video(Video(m.masks[..., None]), path, format="frames")


def load_frame_or_video_frame(path: str | Path, t: int = 0) -> np.ndarray:
    """Reads a single PNG frame, or frame `t` of a video."""
    path = Path(path)
    if path.is_file() and path.suffix.lower() == ".png":
        return read_frame(path)
    return load_video(path)[t]
