"""
Tests for the nova command line.
"""

from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from nova_edit.core import MaskSequence, Video
from nova_edit.manifest import read_manifest
from nova_edit.metrics import MetricReport
from nova_edit.scripts.app import cli
from nova_edit.video_io import load_video, save_masks, save_video

SMALL_RUN = "\n".join(
    [
        "data.height=8",
        "data.width=8",
        "data.frames=5",
        "data.clips=3",
        "model.dim=48",
        "model.layers=1",
        "schedule.steps=10",
        "sample.steps=3",
        "train.steps=2",
        "train.log_every=1",
        "infer.interval=2",
        "",
    ]
)


def _config(tmp_path: Path, text: str = SMALL_RUN) -> str:
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_make_dataset_and_rerun(tmp_path: Path) -> None:
    """A run records its command line; re-running it gives identical outputs."""
    runner = CliRunner()
    cfg = _config(tmp_path)
    result = runner.invoke(cli, ["make-dataset", "-c", cfg, "--seed", "4", "-o", str(tmp_path / "data")])
    assert result.exit_code == 0, result.output
    manifest = read_manifest(tmp_path / "data")
    assert manifest.command == "make-dataset" and manifest.seed == 4
    assert sorted(manifest.digests) == ["clip_00000.nvt", "clip_00001.nvt", "clip_00002.nvt"]
    assert (tmp_path / "data/config.txt").is_file()
    result = runner.invoke(
        cli, ["rerun", str(tmp_path / "data/manifest.txt"), "-o", str(tmp_path / "again")]
    )
    assert result.exit_code == 0, result.output
    assert read_manifest(tmp_path / "again").digests == manifest.digests


def test_seed_from_environment(tmp_path: Path) -> None:
    runner = CliRunner(env={"NOVA_SEED": "12"})
    result = runner.invoke(cli, ["make-dataset", "-c", _config(tmp_path), "-n", "1", "-o", str(tmp_path / "d")])
    assert result.exit_code == 0, result.output
    manifest = read_manifest(tmp_path / "d")
    assert manifest.seed == 12 and manifest.args[-2:] == ["--seed", "12"]


def test_exit_codes(tmp_path: Path) -> None:
    """Configuration errors exit with 2, data errors with 3."""
    runner = CliRunner()
    bad = _config(tmp_path, "data.frames=81\nkeyframe.interval=7\n")
    result = runner.invoke(cli, ["make-dataset", "-c", bad, "-o", str(tmp_path / "x")])
    assert result.exit_code == 2
    assert "[Error]" in result.output and "8/10/16/20" in result.output
    result = runner.invoke(cli, ["make-dataset", "-s", "model.depth=2", "-o", str(tmp_path / "x")])
    assert result.exit_code == 2
    (tmp_path / "empty").mkdir()
    result = runner.invoke(cli, ["sa", "-t", str(tmp_path / "empty"), "-o", str(tmp_path / "y")])
    assert result.exit_code == 3


def test_synth_commands(tmp_path: Path) -> None:
    runner = CliRunner()
    cfg = _config(tmp_path)
    runner.invoke(cli, ["make-dataset", "-c", cfg, "-o", str(tmp_path / "data")])
    clip = str(tmp_path / "data/clip_00000.nvt")
    result = runner.invoke(
        cli, ["ss", "-t", clip, "-p", str(tmp_path / "data"), "-c", cfg, "-o", str(tmp_path / "src")]
    )
    assert result.exit_code == 0, result.output
    source = load_video(tmp_path / "src/source.nvt")
    assert source.frame_shape == (8, 8, 3) and source.length == 5
    assert len(list((tmp_path / "src/masks").iterdir())) == 5
    assert (tmp_path / "src/params.txt").read_text(encoding="utf-8").startswith("filler=")
    result = runner.invoke(cli, ["synth-anchor", "-t", clip, "-c", cfg, "-o", str(tmp_path / "ref")])
    assert result.exit_code == 0, result.output
    assert load_video(tmp_path / "ref/reference.nvt").length == 5
    assert (tmp_path / "ref/keyframes.txt").read_text(encoding="utf-8").startswith("0: clean")


def test_train_then_infer(tmp_path: Path) -> None:
    """Train a tiny model, then edit with it (infer is the default command)."""
    runner = CliRunner()
    cfg = _config(tmp_path)
    result = runner.invoke(cli, ["train", "-c", cfg, "-o", str(tmp_path / "train")])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "train/model.nvt").is_file()
    assert (tmp_path / "train/model.nvt.manifest").is_file()
    assert len((tmp_path / "train/loss.csv").read_text(encoding="utf-8").splitlines()) == 3

    frames = np.random.default_rng(0).random((5, 8, 8, 3))
    save_video(Video(frames), tmp_path / "clip")
    masks = np.zeros((5, 8, 8), dtype=np.float32)
    masks[:, 2:6, 2:6] = 1.0
    save_masks(MaskSequence(masks), tmp_path / "masks")
    result = runner.invoke(
        cli,
        [
            "-i", str(tmp_path / "clip"), "-k", str(tmp_path / "train/model.nvt"),
            "-e", "recolor", "-P", "recolor:#ff8800", "-m", str(tmp_path / "masks"),
            "-c", cfg, "-o", str(tmp_path / "edit"),
        ],
    )
    assert result.exit_code == 0, result.output
    assert load_video(tmp_path / "edit/video").length == 5
    assert sorted(p.name for p in (tmp_path / "edit/keyframes").iterdir()) == [
        "00000.png", "00002.png", "00004.png",
    ]
    manifest = read_manifest(tmp_path / "edit")
    assert manifest.command == "infer"
    assert manifest.entries["editor"] == "recolor" and manifest.entries["keyframes"] == "0,2,4"
    result = runner.invoke(
        cli, ["rerun", str(tmp_path / "edit/manifest.txt"), "-o", str(tmp_path / "edit2")]
    )
    assert result.exit_code == 0, result.output


def test_eval(tmp_path: Path) -> None:
    runner = CliRunner()
    frames = np.random.default_rng(1).random((4, 16, 16, 3))
    save_video(Video(frames), tmp_path / "src")
    masks = np.zeros((4, 16, 16), dtype=np.float32)
    masks[:, :3, :3] = 1.0
    save_masks(MaskSequence(masks), tmp_path / "masks")
    result = runner.invoke(
        cli,
        [
            "eval", "--gen", str(tmp_path / "src"), "--src", str(tmp_path / "src"),
            "--mask", str(tmp_path / "masks"), "--first-edit", str(tmp_path / "src/00000.png"),
            "-o", str(tmp_path / "eval"),
        ],
    )
    assert result.exit_code == 0, result.output
    report = MetricReport.read(tmp_path / "eval/report.json")
    assert report.means["bg_ssim"] == 1.0
    assert report.means["fc"] == pytest.approx(1.0)
    assert report.metadata["mask_source"] == "given"
