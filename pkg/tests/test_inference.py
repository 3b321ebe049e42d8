"""
Tests for keyframe-guided editing.
"""

import numpy as np
import pytest

from nova_edit.core import DataError, KeyframeSet, MaskSequence, ShapeMismatch, Video
from nova_edit.denoiser import ModelConfig, NoiseSchedule, NovaDenoiser
from nova_edit.editors import (
    EditorError,
    IdentityEditor,
    RecolorOracle,
    circular_mean_hue,
    hue_distance,
)
from nova_edit.inference import EditRequest, build_reference, edit_keyframes, run_edit
from nova_edit.metrics import keyframe_hue_spread


def _video(length: int, seed: int = 0, size: int = 8) -> Video:
    return Video(np.random.default_rng(seed).random((length, size, size, 3)))


def _masks(length: int, size: int = 8) -> MaskSequence:
    masks = np.zeros((length, size, size), dtype=np.float32)
    masks[:, 2:6, 2:6] = 1.0
    return MaskSequence(masks)


def test_identity_edit() -> None:
    src = _video(21)
    req = EditRequest.with_interval(src, 10, "")
    assert req.keyframes.indices == (0, 10, 20)
    edited = edit_keyframes(req, IdentityEditor())
    for k, frame in edited.items():
        assert np.array_equal(frame, src[k])


def test_request_validation() -> None:
    src = _video(11)
    with pytest.raises(DataError):
        EditRequest(src, KeyframeSet((0, 5, 11), 12), "")
    with pytest.raises(DataError):
        EditRequest(src, KeyframeSet((0, 10), 11), "", masks={5: np.zeros((8, 8))})
    with pytest.raises(ShapeMismatch):
        EditRequest(src, KeyframeSet((0, 10), 11), "", masks={0: np.zeros((4, 4))})
    with pytest.raises(DataError):
        KeyframeSet((5, 10), 11)


def test_anchored_recolor() -> None:
    """Anchored keyframes share the hue of the first edit."""
    src = _video(81, seed=1)
    req = EditRequest.with_interval(src, 10, "recolor:#ff8800", editor="recolor", masks=_masks(81))
    anchored = edit_keyframes(req, RecolorOracle(jitter=20.0, seed=1))
    independent = edit_keyframes(req, RecolorOracle(jitter=20.0, seed=1), anchored=False)
    inside = req.masks[0] > 0.5
    first = circular_mean_hue(anchored[0], inside)
    for k in req.keyframes:
        assert hue_distance(circular_mean_hue(anchored[k], inside), first) < 2.0
    spread_a = keyframe_hue_spread(anchored, dict(req.masks))
    spread_i = keyframe_hue_spread(independent, dict(req.masks))
    assert spread_a[0] < spread_i[0]
    assert spread_a[1] < 2.0


def test_anchor_follows_a_moving_mask() -> None:
    """Later keyframes take the hue the first edit gave its own masked region."""
    frames = np.zeros((11, 8, 8, 3))
    frames[..., 0] = 1.0
    left = np.zeros((8, 8), dtype=np.float32)
    left[:, :4] = 1.0
    right = 1.0 - left
    req = EditRequest(
        Video(frames), KeyframeSet((0, 5, 10), 11), "recolor:#0000ff",
        editor="recolor", masks={0: left, 5: right, 10: right},
    )
    edited = edit_keyframes(req, RecolorOracle())
    assert hue_distance(circular_mean_hue(edited[0], left > 0.5), 2 / 3) < 1.0
    for k in (5, 10):
        assert hue_distance(circular_mean_hue(edited[k], right > 0.5), 2 / 3) < 1.0


def test_editor_errors_name_the_keyframe() -> None:
    src = _video(11)
    req = EditRequest.with_interval(src, 5, "bogus", editor="recolor")
    with pytest.raises(EditorError, match="keyframe 0"):
        edit_keyframes(req, RecolorOracle())


def test_build_reference() -> None:
    """The reference is exact at the anchors and linear in between."""
    gen = np.random.default_rng(2)
    edited = {k: gen.random((4, 4, 3)).astype(np.float32) for k in range(0, 81, 16)}
    ref = build_reference(edited, 80)
    assert ref.length == 81
    for k, frame in edited.items():
        assert np.array_equal(ref[k], frame)
    for t in (8, 40, 71):
        lo, hi = 16 * (t // 16), 16 * (t // 16) + 16
        alpha = (t - lo) / 16
        expected = (1 - alpha) * edited[lo].astype(np.float64) + alpha * edited[hi].astype(np.float64)
        assert np.max(np.abs(ref[t] - expected)) <= 1e-6
    cross_fade = build_reference({0: edited[0], 80: edited[80]}, 80)
    assert np.allclose(cross_fade[40], 0.5 * edited[0] + 0.5 * edited[80], atol=1e-6)


def test_run_edit() -> None:
    """A full edit produces a video of the source shape, reproducibly."""
    cfg = ModelConfig(height=8, width=8, frames=5, patch=4, dim=48, layers=2, heads=4, schedule_steps=20)
    model = NovaDenoiser(cfg)
    schedule = NoiseSchedule.cosine(20)
    src = _video(5, seed=3)
    req = EditRequest.with_interval(src, 2, "recolor:#3366ff", editor="recolor", masks=_masks(5))
    a = run_edit(req, RecolorOracle(), model, schedule, steps=4, seed=7)
    b = run_edit(req, RecolorOracle(), model, schedule, steps=4, seed=7)
    assert a.video.frames.shape == src.frames.shape
    assert a.video.equals(b.video)
    for k in req.keyframes:
        assert np.array_equal(a.reference[k], a.edited[k])
    assert a.manifest["keyframes"] == "0,2,4"
    assert a.manifest["editor"] == "recolor" and a.manifest["seed"] == 7
    c = run_edit(req, RecolorOracle(), model, schedule, steps=4, seed=7, use_dense=False)
    assert c.manifest["use_dense"] is False
