"""
Tests for the ablation runner.
"""

from io import StringIO
from pathlib import Path
import functools
import math

import pytest

from nova_edit import ablation, cst
from nova_edit.config import parse_config
from nova_edit.core import NumericError
from nova_edit.denoiser import NovaDenoiser, sample
from nova_edit.rng import Rng

TINY = "\n".join(
    [
        "data.frames=5",
        "data.clips=2",
        "model.dim=48",
        "model.layers=1",
        "schedule.steps=10",
        "sample.steps=2",
        "train.steps=1",
        "infer.interval=2",
        "ablate.seeds=1",
        "ablate.clips=1",
        "ablate.intervals=2,4",
    ]
)


def _untrained(cfg, seed, use_dense):
    variant = cfg.with_seed(seed).updated({"model.use_dense": use_dense})
    return NovaDenoiser(variant.model_config())


def test_tables_and_checks(tmp_path: Path, monkeypatch) -> None:
    """Every job fills the table; each expected direction becomes a check."""
    monkeypatch.setattr(ablation, "train_variant", _untrained)
    cfg = parse_config(TINY, seed=2, env={})
    result = ablation.ablate(cfg, tmp_path, out=StringIO())
    assert not result.failed
    assert {c.name for c in result.checks} == {
        "dense_branch", "anchored_editing", "interval_robustness",
    }
    assert {(r.variant, r.metric) for r in result.rows} == {
        ("full", "bg_psnr"),
        ("no-dense", "bg_psnr"),
        ("anchored", "hue_variance"),
        ("independent", "hue_variance"),
        ("interval-2", "bg_ssim"),
        ("interval-4", "bg_ssim"),
    }
    assert next(c for c in result.checks if c.name == "anchored_editing").passed
    lines = (tmp_path / "ablation.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "variant,seed,metric,value" and len(lines) == 1 + len(result.rows)
    checks = (tmp_path / "checks.csv").read_text(encoding="utf-8").splitlines()
    assert checks[0] == "check,detail,result" and len(checks) == 4


def test_failure_skips_dependants(monkeypatch) -> None:
    """A failed training job skips the jobs needing it, not the others."""

    def flaky(cfg, seed, use_dense):
        if not use_dense:
            raise NumericError("loss is nan")
        return _untrained(cfg, seed, use_dense)

    monkeypatch.setattr(ablation, "train_variant", flaky)
    out = StringIO()
    result = ablation.ablate(parse_config(TINY, env={}), out=out)
    assert result.failed["train:no-dense:0"] == "loss is nan"
    assert result.failed["dense:0"] == "skipped, train:no-dense:0 failed"
    assert "interval:2" not in result.failed and "consistency" not in result.failed
    assert not result.passed
    assert "dense_branch" not in {c.name for c in result.checks}
    assert "dense:0 skipped" in out.getvalue()


def test_to_hex() -> None:
    assert ablation.to_hex((1.0, 0.5, 0.0)) == "#ff8000"
    assert ablation.to_hex((0.2,)) == "#333333"


def test_any_exception_is_isolated(monkeypatch) -> None:
    """A job crashing with a plain exception is recorded like any failure."""

    def crashing(cfg, seed, use_dense):
        if use_dense:
            raise RuntimeError("out of memory")
        return _untrained(cfg, seed, use_dense)

    monkeypatch.setattr(ablation, "train_variant", crashing)
    result = ablation.ablate(parse_config(TINY, env={}), out=StringIO())
    assert result.failed["train:full:0"] == "RuntimeError: out of memory"
    assert result.failed["interval:2"] == "skipped, train:full:0 failed"
    assert "train:no-dense:0" not in result.failed
    assert "consistency" not in result.failed
    assert any(r.metric == "hue_variance" for r in result.rows)


def test_dense_branch_reads_the_source() -> None:
    """After a few steps the full model depends on its source; the ablated one does not."""
    cfg = parse_config(TINY + "\ntrain.steps=3", env={})
    full = ablation.train_variant(cfg, 0, True)
    bare = ablation.train_variant(cfg, 0, False)
    clips, schedule = cfg.clips(), cfg.schedule()
    x, other = clips[0], clips[1]
    a = sample(x, x, full, schedule, 2, Rng(0))
    b = sample(x, other, full, schedule, 2, Rng(0))
    assert not a.equals(b)
    c = sample(x, x, bare, schedule, 2, Rng(0))
    d = sample(x, other, bare, schedule, 2, Rng(0))
    assert c.equals(d)


def test_short_trained_ablation(tmp_path: Path) -> None:
    """Short runs on two seeds: every job succeeds and the intervals stay close."""
    cfg = parse_config(TINY + "\nablate.seeds=2\ntrain.steps=30", env={})
    result = ablation.ablate(cfg, tmp_path, out=StringIO())
    assert not result.failed
    gaps = [r.value for r in result.rows if r.metric == "bg_psnr"]
    assert len(gaps) == 4 and all(math.isfinite(v) for v in gaps)
    assert _check(result, "anchored_editing").passed
    bg = [r.value for r in result.rows if r.metric == "bg_ssim"]
    assert max(bg) - min(bg) <= 4 * cst.INTERVAL_BAND
    assert (tmp_path / "checks.csv").is_file()


def _check(result: ablation.AblationResult, name: str) -> ablation.Check:
    return next(c for c in result.checks if c.name == name)


@functools.cache
def _default_ablation() -> ablation.AblationResult:
    return ablation.ablate(parse_config("", env={}), out=StringIO())


@pytest.mark.slow
def test_dense_branch_direction() -> None:
    """The full model wins by 1 dB of background PSNR on 4 of 5 seeds."""
    result = _default_ablation()
    assert not result.failed
    assert _check(result, "dense_branch").passed


@pytest.mark.slow
def test_anchored_editing_direction() -> None:
    result = _default_ablation()
    assert len([r for r in result.rows if r.variant == "anchored"]) == 10
    assert _check(result, "anchored_editing").passed


@pytest.mark.slow
def test_interval_band() -> None:
    """BG-SSIM at intervals 8, 16 and 20 stays within 0.05 of interval 10."""
    result = _default_ablation()
    assert {r.variant for r in result.rows if r.metric == "bg_ssim"} == {
        "interval-8", "interval-10", "interval-16", "interval-20",
    }
    assert _check(result, "interval_robustness").passed
