"""
Editing metrics: SSIM and its background-only variant, temporal and frame
consistency through a pluggable embedder, PSNR, and the report that bundles
them.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol
import json
import math

import numpy as np
from scipy import ndimage
from skimage.color import rgb2gray
from skimage.metrics import structural_similarity

from nova_edit import cst
from nova_edit.core import DataError, MaskSequence, ShapeMismatch, Video, check_frame
from nova_edit.editors import circular_mean_hue, hue_distance
from nova_edit.file_updater import AtomicWrite


class NoBackgroundError(DataError):
    """When every frame is fully covered by the edit mask."""


def _gray(frame: np.ndarray) -> np.ndarray:
    frame = check_frame(frame).astype(np.float64)
    if frame.shape[2] == 3:
        return rgb2gray(frame)
    return frame[..., 0]


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Local SSIM at every pixel, on grayscale frames."""
    if np.shape(a) != np.shape(b):
        raise ShapeMismatch(f"Cannot compare frames of shapes {np.shape(a)} and {np.shape(b)}.")
    ga, gb = _gray(a), _gray(b)
    if min(ga.shape) < cst.SSIM_WINDOW:
        raise DataError(
            f"Frames of size {ga.shape} are smaller than the {cst.SSIM_WINDOW}x{cst.SSIM_WINDOW} window."
        )
    _, full = structural_similarity(
        ga,
        gb,
        win_size=cst.SSIM_WINDOW,
        gaussian_weights=True,
        sigma=cst.SSIM_SIGMA,
        use_sample_covariance=False,
        data_range=1.0,
        K1=cst.SSIM_K1,
        K2=cst.SSIM_K2,
        full=True,
    )
    return full


def valid_windows(shape: tuple[int, int]) -> np.ndarray:
    """Centers whose whole window lies inside the frame."""
    pad = (cst.SSIM_WINDOW - 1) // 2
    valid = np.zeros(shape, dtype=bool)
    valid[pad : shape[0] - pad, pad : shape[1] - pad] = True
    return valid


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM over the valid window positions."""
    full = ssim_map(a, b)
    return float(np.mean(full[valid_windows(full.shape)]))


def background_windows(mask: np.ndarray) -> np.ndarray:
    """Valid window centers whose footprint does not touch the mask."""
    touched = ndimage.maximum_filter(
        (mask > 0).astype(np.uint8), size=cst.SSIM_WINDOW, mode="constant", cval=0
    )
    return valid_windows(mask.shape) & (touched == 0)


def bg_ssim_series(gen: Video, src: Video, masks: MaskSequence) -> list[float | None]:
    """Per-frame background SSIM; None where no background window remains."""
    if gen.frames.shape != src.frames.shape:
        raise ShapeMismatch(f"Videos of shapes {gen.frames.shape} and {src.frames.shape}.")
    masks.check_pairs(src)
    series: list[float | None] = []
    for t in range(gen.length):
        full = ssim_map(gen[t], src[t])
        keep = background_windows(masks[t])
        series.append(float(np.mean(full[keep])) if keep.any() else None)
    return series


def bg_ssim(gen: Video, src: Video, masks: MaskSequence) -> float:
    """SSIM restricted to windows untouched by the edit, averaged over frames."""
    defined = [v for v in bg_ssim_series(gen, src, masks) if v is not None]
    if not defined:
        raise NoBackgroundError("No frame has any background left outside the edit mask.")
    return float(np.mean(defined))


class Embedder(Protocol):
    """Maps a frame to a unit-norm vector of fixed width."""

    name: str

    def embed(self, frame: np.ndarray) -> np.ndarray: ...


class PooledGridEmbedder:
    """
    Average-pools each channel on a `grid` x `grid` lattice, subtracts the
    mean and normalizes. Constant frames map to a fixed unit vector.
    """

    name = "pooled-grid"

    def __init__(self, grid: int = cst.EMBED_GRID):
        self.grid = grid

    def embed(self, frame: np.ndarray) -> np.ndarray:
        frame = check_frame(frame).astype(np.float64)
        H, W, C = frame.shape
        if H < self.grid or W < self.grid:
            raise DataError(f"Frames of size {H}x{W} are smaller than the {self.grid}x{self.grid} grid.")
        rows = np.linspace(0, H, self.grid + 1).round().astype(int)
        cols = np.linspace(0, W, self.grid + 1).round().astype(int)
        sums = np.add.reduceat(np.add.reduceat(frame, rows[:-1], axis=0), cols[:-1], axis=1)
        counts = np.outer(np.diff(rows), np.diff(cols))[..., None]
        v = (sums / counts).reshape(-1)
        v = v - v.mean()
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            return np.full(v.shape, 1.0 / math.sqrt(v.size))
        return v / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of unit vectors; exactly 1.0 for equal inputs."""
    d = np.asarray(a) - np.asarray(b)
    return float(np.clip(1.0 - 0.5 * np.dot(d, d), -1.0, 1.0))


def temporal_series(gen: Video, first: np.ndarray, e: Embedder) -> list[float]:
    ref = e.embed(first)
    return [cosine(e.embed(gen[t]), ref) for t in range(gen.length)]


def temporal_consistency(gen: Video, edited_first: np.ndarray, e: Embedder) -> float:
    """Mean similarity of every generated frame to the edited first frame."""
    if check_frame(edited_first).shape != gen.frame_shape:
        raise ShapeMismatch(
            f"First frame of shape {np.shape(edited_first)} for frames {gen.frame_shape}."
        )
    return float(np.mean(temporal_series(gen, edited_first, e)))


def frame_series(gen: Video, src: Video, e: Embedder) -> list[float]:
    if gen.length != src.length:
        raise ShapeMismatch(f"Videos of {gen.length} and {src.length} frames.")
    return [cosine(e.embed(gen[t]), e.embed(src[t])) for t in range(gen.length)]


def frame_consistency(gen: Video, src: Video, e: Embedder) -> float:
    """Mean per-frame similarity between generated and source frames."""
    return float(np.mean(frame_series(gen, src, e)))


def psnr(a: np.ndarray, b: np.ndarray, where: np.ndarray | None = None) -> float:
    """PSNR in dB for [0,1] data, capped at `cst.PSNR_CAP`."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"Cannot compare arrays of shapes {a.shape} and {b.shape}.")
    diff = a - b
    if where is not None:
        diff = diff[np.broadcast_to(where, a.shape)]
        if diff.size == 0:
            raise NoBackgroundError("No pixel left to compare.")
    mse = float(np.mean(diff**2))
    if mse <= 10 ** (-cst.PSNR_CAP / 10):
        return cst.PSNR_CAP
    return float(min(10 * math.log10(1.0 / mse), cst.PSNR_CAP))


def background_psnr(gen: Video, ref: Video, masks: MaskSequence) -> float:
    """PSNR over the pixels outside the edit mask, all frames together."""
    masks.check_pairs(ref)
    outside = (masks.masks == 0)[..., None]
    return psnr(gen.frames, ref.frames, where=outside)


def keyframe_hue_spread(
    edited: Mapping[int, np.ndarray], masks: Mapping[int, np.ndarray] | None = None
) -> tuple[float, float]:
    """
    Circular variance (1 - R) of the in-mask hue across keyframes, and the
    largest hue deviation (degrees) from the first keyframe.
    """
    hues = []
    for k in sorted(edited):
        frame = check_frame(edited[k])
        region = np.ones(frame.shape[:2], dtype=bool) if masks is None else masks[k] > 0.5
        h = circular_mean_hue(frame, region)
        if h is not None:
            hues.append(h)
    if len(hues) < 2:
        return 0.0, 0.0
    angles = 2 * np.pi * np.asarray(hues)
    R = math.hypot(float(np.mean(np.cos(angles))), float(np.mean(np.sin(angles))))
    return max(0.0, 1.0 - R), max(hue_distance(h, hues[0]) for h in hues)


@dataclass
class MetricReport:
    """Per-frame series, their means and how they were obtained."""

    series: dict[str, list[float | None]] = field(default_factory=dict)
    means: dict[str, float] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def check(self) -> None:
        for name, value in self.means.items():
            if not math.isfinite(value):
                raise DataError(f"Metric {name} is not finite.")

    def to_json(self) -> str:
        return json.dumps(
            {"means": self.means, "series": self.series, "metadata": self.metadata},
            indent=2,
            sort_keys=True,
        )

    def write(self, path: str | Path) -> None:
        with AtomicWrite(path) as f:
            f.write(self.to_json() + "\n")

    @classmethod
    def read(cls, path: str | Path) -> MetricReport:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["series"], data["means"], data["metadata"])


def evaluate(
    gen: Video,
    src: Video,
    masks: MaskSequence | None = None,
    first_edit: np.ndarray | None = None,
    embedder: Embedder | None = None,
    tc_reference: str = "edited_first",
) -> MetricReport:
    """
    Computes TC, FC, SSIM, BG-SSIM and PSNR (plus background PSNR with masks).

    Args:
        gen: the generated video.
        src: the original video.
        masks: edit masks (1 = edited); without them the whole frame is background.
        first_edit: the edited first keyframe; defaults to gen's first frame.
        embedder: defaults to `PooledGridEmbedder`.
        tc_reference: `edited_first` or `generated_first`.

    Returns:
        the report.
    """
    if gen.frames.shape != src.frames.shape:
        raise ShapeMismatch(f"Videos of shapes {gen.frames.shape} and {src.frames.shape}.")
    if tc_reference not in ("edited_first", "generated_first"):
        raise DataError(f"Unknown TC reference {tc_reference!r}.")
    e = embedder if embedder is not None else PooledGridEmbedder()
    first = gen[0] if first_edit is None or tc_reference == "generated_first" else first_edit
    mask_seq = masks if masks is not None else MaskSequence.empty_like(src)
    report = MetricReport(
        metadata={
            "embedder": e.name,
            "mask_source": "given" if masks is not None else "none",
            "tc_reference": tc_reference if first_edit is not None else "generated_first",
        }
    )
    report.series["tc"] = temporal_series(gen, first, e)
    report.series["fc"] = frame_series(gen, src, e)
    report.series["ssim"] = [ssim(gen[t], src[t]) for t in range(gen.length)]
    report.series["bg_ssim"] = bg_ssim_series(gen, src, mask_seq)
    report.series["psnr"] = [psnr(gen[t], src[t]) for t in range(gen.length)]
    for name in ("tc", "fc", "ssim", "psnr"):
        report.means[name] = float(np.mean(report.series[name]))
    defined = [v for v in report.series["bg_ssim"] if v is not None]
    if not defined:
        raise NoBackgroundError("No frame has any background left outside the edit mask.")
    report.means["bg_ssim"] = float(np.mean(defined))
    report.metadata["bg_ssim_undefined"] = ",".join(
        str(t) for t, v in enumerate(report.series["bg_ssim"]) if v is None
    )
    if masks is not None:
        report.means["bg_psnr"] = background_psnr(gen, src, masks)
    report.check()
    return report
