"""
Keyframe editors. An editor turns a frame (with an optional reference frame,
optional mask and a free-text prompt) into an edited frame of the same shape.
The oracle editors understand a micro-grammar of prompts:

  recolor:#rrggbb   set the hue inside the mask to that of the colour
  add:#rrggbb       paste a disc of that colour inside the mask
  remove            inpaint the masked region from its surroundings
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from typing import Protocol
import math
import re

import numpy as np
from skimage.color import hsv2rgb, rgb2hsv
from skimage.restoration import inpaint_biharmonic

from nova_edit import cst
from nova_edit.core import ConfigError, DataError, check_frame
from nova_edit.rng import Rng

COLOR_RE = re.compile(r"^#([0-9a-fA-F]{6})$")


class EditorError(DataError):
    """When an editor cannot edit a frame."""


class KeyframeEditor(Protocol):
    """Edits one keyframe."""

    name: str

    def edit(
        self,
        frame: np.ndarray,
        reference: np.ndarray | None,
        mask: np.ndarray | None,
        prompt: str,
        reference_mask: np.ndarray | None = None,
    ) -> np.ndarray: ...


def parse_color(text: str) -> np.ndarray:
    """`#rrggbb` -> RGB array in [0,1]."""
    match = COLOR_RE.match(text.strip())
    if match is None:
        raise EditorError(f"Expected a colour #rrggbb, got {text!r}.")
    hexa = match.group(1)
    return np.array([int(hexa[i : i + 2], 16) / 255.0 for i in (0, 2, 4)])


def parse_prompt(prompt: str, verbs: list[str]) -> tuple[str, str]:
    """Splits `verb:argument`; the argument may be empty."""
    verb, _, arg = prompt.strip().partition(":")
    verb = verb.lower()
    if verb not in verbs:
        raise EditorError(f"Unsupported prompt {prompt!r}; expected one of {verbs}.")
    return verb, arg


def _region(frame: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is None:
        return np.ones(frame.shape[:2], dtype=bool)
    if mask.shape != frame.shape[:2]:
        raise EditorError(f"Mask of shape {mask.shape} for a frame of shape {frame.shape}.")
    return mask > 0.5


def keep_outside(edited: np.ndarray, frame: np.ndarray, region: np.ndarray) -> np.ndarray:
    """Restores the original pixels outside `region`."""
    return np.where(region[..., None], edited, frame).astype(np.float32)


def circular_mean_hue(frame: np.ndarray, region: np.ndarray) -> float | None:
    """Saturation-weighted circular mean of the hue inside `region`, in [0,1)."""
    hsv = rgb2hsv(frame)
    h, s = hsv[..., 0][region], hsv[..., 1][region]
    if h.size == 0 or np.sum(s) == 0.0:
        return None
    angle = 2 * math.pi * h
    mean = math.atan2(float(np.sum(s * np.sin(angle))), float(np.sum(s * np.cos(angle))))
    return (mean / (2 * math.pi)) % 1.0


def hue_distance(a: float, b: float) -> float:
    """Circular distance between two hues in [0,1), in degrees."""
    d = abs(a - b) % 1.0
    return 360.0 * min(d, 1.0 - d)


class IdentityEditor:
    """Returns the frame unchanged."""

    name = "identity"

    def edit(self, frame, reference, mask, prompt, reference_mask=None):
        return check_frame(frame).copy()


class RecolorOracle:
    """
    Sets the hue of the masked pixels to the hue of the prompt colour,
    flooring their saturation so that the hue stays visible. With
    `jitter` > 0, each call shifts the target hue by a uniform draw in
    [-jitter, jitter] degrees. When a reference frame is given, its hue
    under `reference_mask` (the mask of the reference, defaulting to `mask`)
    is reused instead, without jitter.
    """

    name = "recolor"

    def __init__(self, jitter: float = 0.0, seed: int = 0):
        if jitter < 0.0:
            raise ConfigError(f"Hue jitter must be non-negative, got {jitter}.")
        self.jitter = jitter
        self.rng = Rng(seed).fork("recolor")

    def target_hue(self, prompt: str) -> float:
        _, arg = parse_prompt(prompt, ["recolor"])
        hue = float(rgb2hsv(parse_color(arg)[None, None, :])[0, 0, 0])
        if self.jitter > 0.0:
            hue += self.rng.uniform(-self.jitter, self.jitter) / 360.0
        return hue % 1.0

    def edit(self, frame, reference, mask, prompt, reference_mask=None):
        frame = check_frame(frame)
        if frame.shape[2] != 3:
            raise EditorError("Recolouring needs RGB frames.")
        region = _region(frame, mask)
        hue = None
        if reference is not None:
            ref_mask = mask if reference_mask is None else reference_mask
            hue = circular_mean_hue(check_frame(reference), _region(reference, ref_mask))
        if hue is None:
            hue = self.target_hue(prompt)
        hsv = rgb2hsv(frame)
        hsv[..., 0] = hue
        hsv[..., 1] = np.maximum(hsv[..., 1], cst.RECOLOR_MIN_SATURATION)
        hsv[..., 2] = np.maximum(hsv[..., 2], cst.RECOLOR_MIN_VALUE)
        return keep_outside(np.clip(hsv2rgb(hsv), 0.0, 1.0), frame, region)


class PasteSpriteOracle:
    """
    Adds a disc of the prompt colour (filling the mask, or centred when no
    mask is given), or removes the masked content by biharmonic inpainting.
    """

    name = "paste"

    def edit(self, frame, reference, mask, prompt, reference_mask=None):
        frame = check_frame(frame)
        verb, arg = parse_prompt(prompt, ["add", "remove"])
        H, W, C = frame.shape
        if verb == "remove":
            if mask is None:
                raise EditorError("Removing an object needs a mask.")
            region = _region(frame, mask)
            if not region.any():
                return frame.copy()
            filled = inpaint_biharmonic(frame, region, channel_axis=-1)
            return keep_outside(np.clip(filled, 0.0, 1.0), frame, region)
        color = parse_color(arg)
        if C == 1:
            color = np.array([color.mean()])
        if mask is not None:
            region = _region(frame, mask)
        else:
            ys, xs = np.mgrid[0:H, 0:W] + 0.5
            radius = cst.SPRITE_RADIUS * min(H, W)
            region = np.hypot(xs - W / 2, ys - H / 2) <= radius
        painted = np.broadcast_to(color.astype(np.float32), frame.shape)
        return keep_outside(painted, frame, region)


EDITORS: list[str] = ["identity", "recolor", "paste"]


def get_editor(name: str, jitter: float = 0.0, seed: int = 0) -> KeyframeEditor:
    """Editor by id."""
    if name == "identity":
        return IdentityEditor()
    if name == "recolor":
        return RecolorOracle(jitter=jitter, seed=seed)
    if name == "paste":
        return PasteSpriteOracle()
    raise ConfigError(f"Unknown editor {name!r}, expected one of {EDITORS}.")
