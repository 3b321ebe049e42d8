"""
Tests for the autofinder module.
"""

from pathlib import Path

from nova_edit.autofinder import NoFile, TooManyFiles, get_clips, get_frame_files


def test_autofinder(tmp_path: Path) -> None:
    """Test function for the functions get_frame_files, get_clips
    from the module autofinder."""
    p = tmp_path / "testaf"
    p.mkdir()
    test_results = [False] * 5
    # 0th test with 2 clips as frame directories and 1 container (OK)
    (p / "clip_b").mkdir()
    (p / "clip_a").mkdir()
    (p / "empty").mkdir()
    (p / "clip_b/00001.png").touch()
    (p / "clip_b/00000.png").touch()
    (p / "clip_a/00000.png").touch()
    (p / "clip_c.nvt").touch()
    # Content of testaf directory:
    # - clip_a
    # |-- 00000.png
    # - clip_b
    # |-- 00000.png
    # |-- 00001.png
    # - clip_c.nvt
    # - empty
    try:
        clips = get_clips(p)
        frames = get_frame_files(p / "clip_b")
        if [c.name for c in clips] == ["clip_a", "clip_b", "clip_c.nvt"] and [
            f.name for f in frames
        ] == ["00000.png", "00001.png"]:
            test_results[0] = True
    except (NoFile, TooManyFiles):
        pass
    # 1st test with a directory holding no frame (not OK)
    try:
        _ = get_frame_files(p / "empty")
    except NoFile:
        test_results[1] = True
    # 2nd test with a path that is not a directory (not OK)
    try:
        _ = get_frame_files(p / "clip_c.nvt")
    except NoFile:
        test_results[2] = True
    # 3rd test with a directory holding no clip (not OK)
    try:
        _ = get_clips(p / "empty")
    except NoFile:
        test_results[3] = True
    # 4th test: files that are not frames are ignored (OK)
    (p / "clip_a/notes.txt").touch()
    try:
        if len(get_frame_files(p / "clip_a")) == 1:
            test_results[4] = True
    except (NoFile, TooManyFiles):
        pass
    assert all(test_results)
