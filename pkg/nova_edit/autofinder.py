"""Automatically finds frame files and clips in a directory."""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from pathlib import Path

from nova_edit import cst
from nova_edit.core import DataError


class NoFile(DataError):
    """When no file is found."""


class TooManyFiles(DataError):
    """When too many files are found compared to what was expected."""


def find_ext(dr: Path, ext: str) -> list[Path]:
    """
    Lists all files directly inside a directory that end with some given
    extension, in lexicographic order.
    """
    return sorted(p for p in dr.glob(f"*.{ext}") if p.is_file())


def get_frame_files(dr: Path) -> list[Path]:
    """
    Returns the lexicographically ordered frame files of a frame directory,
    fails if there is none or if several raster formats are mixed.
    """
    if not dr.is_dir():
        raise NoFile(f"{dr} is not a directory.")
    found = {ext: find_ext(dr, ext) for ext in cst.FRAME_EXTENSIONS}
    found = {ext: files for ext, files in found.items() if files}
    if len(found) == 0:
        raise NoFile(f"No frame file present in the directory {dr}.")
    if len(found) > 1:
        raise TooManyFiles(
            f"Frames of several formats present in {dr}: {', '.join(sorted(found))}."
        )
    return next(iter(found.values()))


def get_clips(dr: Path) -> list[Path]:
    """
    Returns the clips stored in a directory: `.nvt` containers and frame
    subdirectories, in lexicographic order. Fails if there is none.
    """
    if not dr.is_dir():
        raise NoFile(f"{dr} is not a directory.")
    clips = find_ext(dr, cst.NVT_SUFFIX.lstrip("."))
    for sub in sorted(p for p in dr.iterdir() if p.is_dir()):
        if any(find_ext(sub, ext) for ext in cst.FRAME_EXTENSIONS):
            clips.append(sub)
    if len(clips) == 0:
        raise NoFile(f"No clip present in the directory {dr}.")
    return sorted(clips)
