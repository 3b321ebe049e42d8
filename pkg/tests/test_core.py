"""
Tests for the core data model.
"""

import numpy as np
import pytest

from nova_edit.core import (
    DataError,
    KeyframeSet,
    MaskSequence,
    ShapeMismatch,
    Video,
    check_frame,
)


def test_video_validation() -> None:
    """Videos are (T+1, H, W, C) arrays in [0,1] with C in {1, 3}."""
    v = Video(np.zeros((3, 4, 5, 3)))
    assert v.length == 3 and v.last == 2
    assert v.frame_shape == (4, 5, 3)
    assert v.frames.dtype == np.float32
    assert Video(np.zeros((2, 4, 4))).channels == 1
    with pytest.raises(DataError):
        Video(np.zeros((1, 4, 4, 3)))
    with pytest.raises(ShapeMismatch):
        Video(np.zeros((3, 4, 4, 2)))
    with pytest.raises(DataError):
        Video(np.full((3, 4, 4, 3), 1.5))
    with pytest.raises(DataError):
        Video(np.full((3, 4, 4, 3), np.nan))


def test_video_is_read_only() -> None:
    """The frames of a video cannot be modified, nor the caller's array through them."""
    array = np.zeros((2, 2, 2, 1), dtype=np.float32)
    v = Video(array)
    array[0, 0, 0, 0] = 1.0
    assert v[0][0, 0, 0] == 0.0
    with pytest.raises(ValueError):
        v.frames[0, 0, 0, 0] = 1.0


def test_video_clamped() -> None:
    """Clamping maps out of range values to [0,1] and NaN to 0."""
    v = Video.clamped(np.array([-0.5, 0.5, 1.5, np.nan]).reshape(2, 1, 2, 1))
    assert v.frames.ravel().tolist() == [0.0, 0.5, 1.0, 0.0]


def test_video_channels() -> None:
    """Gray videos replicate to RGB, RGB videos reduce by luminance."""
    gray = Video(np.full((2, 2, 2, 1), 0.5))
    rgb = gray.with_channels(3)
    assert rgb.channels == 3 and np.all(rgb.frames == 0.5)
    back = rgb.with_channels(1)
    assert np.allclose(back.frames, 0.5, atol=1e-6)
    assert gray.with_channels(1) is gray


def test_from_frames() -> None:
    frames = [np.zeros((3, 3, 3)), np.ones((3, 3, 3))]
    assert Video.from_frames(frames).length == 2
    with pytest.raises(ShapeMismatch):
        Video.from_frames([np.zeros((3, 3, 3)), np.zeros((3, 4, 3))])


def test_mask_sequence() -> None:
    """Binary masks only hold 0 and 1; soft masks anything in [0,1]."""
    m = MaskSequence(np.zeros((3, 4, 4, 1)))
    assert m.masks.shape == (3, 4, 4)
    MaskSequence(np.full((3, 4, 4), 0.5), binary=False)
    with pytest.raises(DataError):
        MaskSequence(np.full((3, 4, 4), 0.5))
    with pytest.raises(DataError):
        MaskSequence(np.full((3, 4, 4), 2.0), binary=False)
    video = Video(np.zeros((3, 4, 4, 3)))
    m.check_pairs(video)
    with pytest.raises(ShapeMismatch):
        m.check_pairs(Video(np.zeros((4, 4, 4, 3))))
    assert not MaskSequence.empty_like(video).masks.any()


def test_keyframe_set() -> None:
    """Keyframes always include 0 and T and are strictly increasing."""
    k = KeyframeSet((0, 10, 20, 30, 40, 50, 60, 70, 80), 81)
    assert k.segments == 8
    assert 40 in k and 41 not in k
    assert k.bracket(0) == (0, 0)
    assert k.bracket(15) == (10, 20)
    assert k.bracket(80) == (80, 80)
    with pytest.raises(DataError):
        k.bracket(81)
    with pytest.raises(DataError):
        KeyframeSet((0, 5), 10)
    with pytest.raises(DataError):
        KeyframeSet((0, 5, 5, 9), 10)
    with pytest.raises(DataError):
        KeyframeSet((9,), 10)
    assert KeyframeSet.from_indices([9, 0, 4, 4], 10).indices == (0, 4, 9)


def test_check_frame() -> None:
    assert check_frame(np.zeros((2, 2))).shape == (2, 2, 1)
    with pytest.raises(ShapeMismatch):
        check_frame(np.zeros((2, 2, 4)))
