"""
Tests for the configuration layer.
"""

from pathlib import Path

import pytest

from nova_edit.config import (
    KEYS,
    load_config,
    parse_config,
    read_defaults,
    segment_divisors,
)
from nova_edit.core import ConfigError


def test_defaults() -> None:
    """An empty file resolves to the packaged defaults, every key covered."""
    cfg = parse_config("", env={})
    assert dict(cfg.values) == read_defaults()
    assert set(cfg.values) == set(KEYS)
    assert cfg.explicit == frozenset()
    assert cfg["data.frames"] == 17 and cfg["infer.interval"] == 10
    assert cfg["degrade.zoom"] == (0.9, 1.1)
    assert cfg["mask.shapes"] == ("rectangle", "ellipse", "polygon")
    assert cfg["data.dir"] == ""


def test_comments_and_overrides() -> None:
    text = "\n".join(
        [
            "# training run",
            "data.frames=81",
            "keyframe.interval = 10   # keyframes 0, 10, ..., 80",
            "",
            "infer.prompt=recolor:#ff8800",
        ]
    )
    cfg = parse_config(text, overrides=["train.steps=5", "data.frames=81"], env={})
    assert cfg["keyframe.interval"] == 10
    assert cfg["infer.prompt"] == "recolor:#ff8800"
    assert cfg["train.steps"] == 5
    assert cfg.explicit == {"data.frames", "keyframe.interval", "infer.prompt", "train.steps"}
    assert cfg.keyframe_mode().kind == "fixed"


def test_interval_must_divide() -> None:
    """A non-dividing interval is rejected with the intervals that work."""
    with pytest.raises(ConfigError) as e:
        parse_config("data.frames=81\nkeyframe.interval=7", env={})
    assert str(e.value) == (
        "line 2: interval 7 does not divide 80 (data.frames - 1); try 8/10/16/20."
    )
    assert segment_divisors(80) == [8, 10, 16, 20]


def test_rejections() -> None:
    with pytest.raises(ConfigError, match=r"line 1: unknown key 'model.depth'\."):
        parse_config("model.depth=3", env={})
    with pytest.raises(ConfigError, match="line 2: bad value for train.lr"):
        parse_config("\ntrain.lr=fast", env={})
    with pytest.raises(ConfigError, match="--set train.freeze=all"):
        parse_config("", overrides=["train.freeze=all"], env={})
    with pytest.raises(ConfigError, match="expected key=value"):
        parse_config("seed 3", env={})
    with pytest.raises(ConfigError):
        parse_config("mask.size=0.5,0.2", env={})
    with pytest.raises(ConfigError):
        parse_config("degrade.geometric_p=1.5", env={})
    with pytest.raises(ConfigError, match="sampling steps"):
        parse_config("sample.steps=200", env={})
    with pytest.raises(ConfigError, match="model"):
        parse_config("model.patch=5", env={})


def test_seed_precedence() -> None:
    """--seed beats the file, which beats NOVA_SEED."""
    env = {"NOVA_SEED": "11"}
    assert parse_config("", env=env).seed == 11
    assert parse_config("seed=5", env=env).seed == 5
    assert parse_config("seed=5", seed=9, env=env).seed == 9
    assert parse_config("", env={}).seed == 0
    with pytest.raises(ConfigError, match="NOVA_SEED"):
        parse_config("", env={"NOVA_SEED": "many"})


def test_snapshot_round_trip() -> None:
    cfg = parse_config("data.frames=81\nmask.antialias=true\ninfer.prompt=add:#00ff00", env={})
    again = parse_config(cfg.snapshot(), env={})
    assert dict(again.values) == dict(cfg.values)
    assert again.snapshot() == cfg.snapshot()


def test_typed_views() -> None:
    cfg = parse_config("model.dim=96\nmodel.hint=cross\ntrain.freeze=two_phase", seed=4, env={})
    model = cfg.model_config()
    assert model.dim == 96 and model.hint == "cross" and model.seed == 4
    assert model.tokens == 17 * 4 * 4
    assert cfg.train_config().freeze == "two_phase"
    assert cfg.keyframe_mode().kind == "random" and cfg.keyframe_mode().value == 3
    assert len(cfg.clips()) == 64
    assert cfg.with_seed(8).seed == 8
    assert cfg.updated({"model.use_dense": False}).model_config().use_dense is False
    with pytest.raises(ConfigError):
        cfg.updated({"model.depth": 2})


def test_load_config(tmp_path: Path) -> None:
    (tmp_path / "run.cfg").write_text("train.steps=3\n", encoding="utf-8")
    assert load_config(tmp_path / "run.cfg")["train.steps"] == 3
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")
