"""
Multi-keyframe guided editing: edit the keyframes (each anchored to the
first edited one), interpolate them into a reference video, then sample
with the reference in the sparse branch and the original video in the
dense branch.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from nova_edit.anchor import fixed_keyframes, interpolate_reference
from nova_edit.core import DataError, KeyframeSet, MaskSequence, ShapeMismatch, Video
from nova_edit.denoiser import NoiseSchedule, NovaDenoiser, sample
from nova_edit.editors import EditorError, KeyframeEditor
from nova_edit.rng import Rng


@dataclass(frozen=True, eq=False)
class EditRequest:
    """A source video, its keyframes, a prompt and optional per-keyframe masks."""

    source: Video
    keyframes: KeyframeSet
    prompt: str
    editor: str = "identity"
    masks: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.keyframes.length != self.source.length:
            raise DataError(
                f"Keyframes are for {self.keyframes.length} frames, "
                f"the source has {self.source.length}."
            )
        for k, m in self.masks.items():
            if k not in self.keyframes:
                raise DataError(f"Mask given for frame {k}, which is not a keyframe.")
            if m.shape != self.source.frame_shape[:2]:
                raise ShapeMismatch(
                    f"Mask of frame {k} has shape {m.shape}, expected {self.source.frame_shape[:2]}."
                )

    @classmethod
    def with_interval(
        cls,
        source: Video,
        interval: int,
        prompt: str,
        editor: str = "identity",
        masks: MaskSequence | None = None,
    ) -> EditRequest:
        """Keyframes every `interval` frames, masks taken at the keyframes."""
        K = fixed_keyframes(source.last, interval)
        per_key = {} if masks is None else {k: masks[k] for k in K}
        return cls(source, K, prompt, editor, per_key)


def edit_keyframes(
    req: EditRequest, editor: KeyframeEditor, anchored: bool = True
) -> dict[int, np.ndarray]:
    """
    Edits the keyframes in increasing order. The first keyframe is edited
    on its own; every later one receives the edited first keyframe as
    reference (with the mask of the first keyframe), unless `anchored` is off.
    """
    edited: dict[int, np.ndarray] = {}
    first: np.ndarray | None = None
    first_mask = req.masks.get(req.keyframes.indices[0])
    for k in req.keyframes:
        reference = first if anchored else None
        try:
            frame = editor.edit(
                req.source[k], reference, req.masks.get(k), req.prompt,
                reference_mask=first_mask if reference is not None else None,
            )
        except EditorError as e:
            raise EditorError(f"Editing keyframe {k} failed: {e}") from e
        if frame.shape != req.source.frame_shape:
            raise EditorError(
                f"Editor {editor.name} returned shape {frame.shape} for keyframe {k}."
            )
        edited[k] = np.asarray(frame, dtype=np.float32)
        if first is None:
            first = edited[k]
    return edited


def build_reference(edited: Mapping[int, np.ndarray], T: int, workers: int = 0) -> Video:
    """The interpolated reference through the edited keyframes."""
    return interpolate_reference(edited, T, workers=workers)


@dataclass(frozen=True, eq=False)
class EditResult:
    video: Video
    reference: Video
    edited: dict[int, np.ndarray]
    manifest: dict[str, object]


def run_edit(
    req: EditRequest,
    editor: KeyframeEditor,
    model: NovaDenoiser,
    schedule: NoiseSchedule,
    steps: int | None = None,
    seed: int = 0,
    anchored: bool = True,
    use_dense: bool | None = None,
    workers: int = 0,
) -> EditResult:
    """
    Edits keyframes, builds the reference and samples the edited video.

    Args:
        req: what to edit.
        editor: the keyframe editor.
        model: a trained denoiser.
        schedule: its noise schedule.
        steps: sampling steps, the full schedule by default.
        seed: sampling seed.
        anchored: edit keyframes against the first edited one.
        use_dense: overrides the model's dense-branch switch.
        workers: threads used to interpolate the reference.

    Returns:
        the edited video, the reference, the edited keyframes and a manifest.
    """
    steps = len(schedule) if steps is None else steps
    edited = edit_keyframes(req, editor, anchored=anchored)
    reference = build_reference(edited, req.source.last, workers=workers)
    video = sample(
        reference, req.source, model, schedule, steps, Rng(seed).fork("sample"),
        use_dense=use_dense,
    )
    manifest = {
        "keyframes": ",".join(str(k) for k in req.keyframes),
        "editor": editor.name,
        "prompt": req.prompt,
        "seed": seed,
        "steps": steps,
        "anchored": anchored,
        "use_dense": model.cfg.use_dense if use_dense is None else use_dense,
    }
    return EditResult(video, reference, edited, manifest)
