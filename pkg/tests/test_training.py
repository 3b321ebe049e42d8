"""
Tests for training and checkpoints.
"""

from io import StringIO
from pathlib import Path
import functools

import numpy as np
import pytest
import torch

from nova_edit import cst
from nova_edit.anchor import DegradationConfig, KeyframeMode
from nova_edit.config import parse_config
from nova_edit.core import ConfigError, NumericError
from nova_edit.dataset import ClipConfig, ProceduralClips
from nova_edit.denoiser import ModelConfig, NoiseSchedule, NovaDenoiser, sample
from nova_edit.editors import IdentityEditor
from nova_edit.fidelity import FidelityConfig
from nova_edit.inference import EditRequest, run_edit
from nova_edit.metrics import psnr
from nova_edit.rng import Rng
from nova_edit.training import (
    SampleFactory,
    TrainConfig,
    TrainResult,
    configure_torch,
    load_checkpoint,
    manifest_path,
    phase_groups,
    read_loss_curve,
    report,
    save_checkpoint,
    smooth,
    train,
)

MODEL = ModelConfig(height=8, width=8, frames=5, patch=4, dim=48, layers=2, heads=4, schedule_steps=20)


def _factory(seed: int = 0) -> SampleFactory:
    clips = ProceduralClips(ClipConfig(height=8, width=8, frames=5), seed=seed, count=3)
    return SampleFactory(
        clips, MODEL, NoiseSchedule.cosine(20), FidelityConfig(seed=seed),
        DegradationConfig(), KeyframeMode.random(1), seed,
    )


def _train(cfg: TrainConfig, **kwargs) -> tuple[NovaDenoiser, list[float]]:
    configure_torch(1)
    model = NovaDenoiser(MODEL)
    result = train(model, NoiseSchedule.cosine(20), _factory(cfg.seed), cfg, out=StringIO(), **kwargs)
    return result.model, result.losses


def test_samples_are_reproducible() -> None:
    """A sample only depends on the seed, the step and the slot."""
    model = NovaDenoiser(MODEL)
    a, b = _factory().make(3, 1, model), _factory().make(3, 1, model)
    assert a.target.equals(b.target) and a.source.equals(b.source)
    assert a.reference.equals(b.reference)
    assert a.timestep == b.timestep and np.array_equal(a.noise, b.noise)
    c = _factory().make(4, 1, model)
    assert not np.array_equal(a.noise, c.noise)


def test_zero_learning_rate() -> None:
    """With a zero learning rate the parameters do not move."""
    before = {k: v.clone() for k, v in NovaDenoiser(MODEL).state_dict().items()}
    model, losses = _train(TrainConfig(steps=3, lr=0.0))
    assert len(losses) == 3
    for k, v in model.state_dict().items():
        assert torch.equal(v, before[k])


def test_same_seed_same_curve() -> None:
    _, a = _train(TrainConfig(steps=4, seed=2))
    _, b = _train(TrainConfig(steps=4, seed=2))
    _, c = _train(TrainConfig(steps=4, seed=2, prefetch=2))
    assert a == b == c
    _, d = _train(TrainConfig(steps=4, seed=3))
    assert a != d


def test_training_moves_parameters(tmp_path: Path) -> None:
    model, losses = _train(TrainConfig(steps=2, log_every=1), run_dir=tmp_path)
    assert torch.any(model.head.weight != 0)
    assert read_loss_curve(tmp_path / "loss.csv") == losses
    assert (tmp_path / "loss.csv").read_text(encoding="utf-8").startswith("step,loss\n")


def test_freeze_regimes() -> None:
    cfg = TrainConfig(steps=10, freeze="two_phase", phase_split=0.5)
    first = phase_groups(cfg, 0)
    second = phase_groups(cfg, 5)
    assert set(cst.PARAM_GROUPS) - first == set(cst.TWO_PHASE_FIRST)
    assert set(cst.PARAM_GROUPS) - second == {"cross"}
    assert "codec" in first and "codec" in second
    assert phase_groups(TrainConfig(), 0) == {"codec"}
    assert set(cst.PARAM_GROUPS) - phase_groups(TrainConfig(freeze="cross_only"), 0) == {"cross"}


def test_two_phase_training() -> None:
    """Frozen groups do not move; the freeze mask switches mid-run."""
    seen: list[set[str]] = []
    cross: list[torch.Tensor] = []
    main: list[torch.Tensor] = []
    dense: list[torch.Tensor] = []
    model = NovaDenoiser(MODEL)

    def record(step: int, loss: float) -> None:
        seen.append(set(model.frozen))
        cross.append(model.cross[0].attn.out.weight.detach().clone())
        main.append(model.main[0].attn.q.weight.detach().clone())
        dense.append(model.dense[0].attn.q.weight.detach().clone())

    cfg = TrainConfig(steps=4, freeze="two_phase", phase_split=0.5)
    out = StringIO()
    train(model, NoiseSchedule.cosine(20), _factory(), cfg, out=out, on_step=record)
    assert seen[0] == seen[1] and seen[2] == seen[3] and seen[0] != seen[2]
    assert "cross" in seen[0] and "cross" not in seen[2]
    assert "step 2: training ['cross']" in out.getvalue()
    assert torch.all(cross[1] == 0)
    assert torch.any(cross[3] != 0)
    assert not torch.equal(main[0], main[1])
    assert torch.equal(main[1], main[3])
    assert not torch.equal(dense[1], main[1])
    assert torch.equal(dense[2], main[1]) and torch.equal(dense[3], main[3])
    assert all(torch.equal(a, b) for a, b in zip(model.dense.parameters(), model.main.parameters()))


def test_cross_only_dense_copies_main() -> None:
    """With a frozen main branch from the start, the dense branch is its copy."""
    model, _ = _train(TrainConfig(steps=1, freeze="cross_only"))
    for a, b in zip(model.dense.state_dict().values(), model.main.state_dict().values()):
        assert torch.equal(a, b)
    model, _ = _train(TrainConfig(steps=1))
    assert not torch.equal(model.dense[0].attn.q.weight, model.main[0].attn.q.weight)


def test_non_finite_loss(tmp_path: Path) -> None:
    """A NaN loss aborts the run and dumps the failing sample."""
    model = NovaDenoiser(MODEL)
    with torch.no_grad():
        model.head.bias.fill_(float("nan"))
    with pytest.raises(NumericError):
        train(model, NoiseSchedule.cosine(20), _factory(), TrainConfig(steps=2), out=StringIO(), run_dir=tmp_path)
    dump = (tmp_path / "nonfinite_sample.txt").read_text(encoding="utf-8")
    assert "step=0" in dump and "loss=nan" in dump


def test_checkpoint_round_trip(tmp_path: Path) -> None:
    model, _ = _train(TrainConfig(steps=1))
    model.freeze(["codec", "dense"])
    save_checkpoint(model, tmp_path / "model.nvt")
    manifest = manifest_path(tmp_path / "model.nvt").read_text(encoding="utf-8")
    assert "model.dim=48" in manifest and "frozen=codec,dense" in manifest
    assert "param=head.weight 48x48 head" in manifest
    back = load_checkpoint(tmp_path / "model.nvt")
    assert back.cfg == model.cfg
    assert back.frozen == {"codec", "dense"}
    for (name, p), (other, q) in zip(model.named_parameters(), back.named_parameters()):
        assert name == other and torch.equal(p, q)


def test_smooth() -> None:
    assert smooth([1.0, 3.0, 5.0], window=2).tolist() == [1.0, 2.0, 4.0]
    assert smooth([]).size == 0


def test_report() -> None:
    out = StringIO()
    _, losses = _train(TrainConfig(steps=2))
    report(TrainResult(NovaDenoiser(MODEL), losses), out)
    assert "after 2 steps" in out.getvalue()


def test_bad_train_config() -> None:
    with pytest.raises(ConfigError):
        TrainConfig(freeze="all")
    with pytest.raises(ConfigError):
        TrainConfig(lr=-1.0)
    with pytest.raises(ConfigError):
        configure_torch(0)


@functools.cache
def _short_run() -> tuple[NovaDenoiser, list[float]]:
    return _train(TrainConfig(steps=300, seed=0))


@functools.cache
def _default_run():
    cfg = parse_config("", env={})
    configure_torch(1)
    model = NovaDenoiser(cfg.model_config())
    schedule = cfg.schedule()
    factory = cfg.sample_factory(cfg.clips(), schedule)
    return cfg, train(model, schedule, factory, cfg.train_config(), out=StringIO())


def _conditioning_gains(
    model: NovaDenoiser, schedule: NoiseSchedule, clips: ProceduralClips, steps: int, interval: int
) -> tuple[float, float, float]:
    """Mean PSNR of conditional, unconditional and identity-edit samples on held-out clips."""
    cond, uncond, edit = [], [], []
    for i in range(len(clips)):
        x = clips[i]
        cond.append(psnr(sample(x, x, model, schedule, steps, Rng(i)).frames, x.frames))
        bare = sample(x, x, model, schedule, steps, Rng(i), use_sparse=False, use_dense=False)
        uncond.append(psnr(bare.frames, x.frames))
        req = EditRequest.with_interval(x, interval, "")
        result = run_edit(req, IdentityEditor(), model, schedule, steps, seed=i)
        edit.append(psnr(result.video.frames, x.frames))
    return float(np.mean(cond)), float(np.mean(uncond)), float(np.mean(edit))


def test_short_run_reduces_the_loss() -> None:
    _, losses = _short_run()
    assert np.all(np.isfinite(losses))
    assert np.mean(losses[-50:]) <= 0.8 * np.mean(losses[:50])


def test_conditioning_helps_after_a_short_run() -> None:
    """Conditioning on the target itself beats sampling without branches."""
    model, _ = _short_run()
    clips = ProceduralClips(ClipConfig(height=8, width=8, frames=5), seed=1000, count=3)
    cond, uncond, edit = _conditioning_gains(model, NoiseSchedule.cosine(20), clips, 20, 2)
    assert cond > uncond
    assert edit > uncond


@pytest.mark.slow
def test_training_progress() -> None:
    """2000 steps at the default size halve the smoothed loss."""
    _, result = _default_run()
    assert len(result.losses) == 2000 and np.all(np.isfinite(result.losses))
    s = result.smoothed()
    assert s[-1] <= 0.5 * s[cst.LOSS_SMOOTHING - 1]


@pytest.mark.slow
def test_conditioning_gain() -> None:
    """Conditional samples gain 3 dB; an identity edit reconstructs the clip."""
    cfg, result = _default_run()
    clips = ProceduralClips(cfg.clip_config(), seed=1000, count=3)
    cond, uncond, edit = _conditioning_gains(
        result.model, cfg.schedule(), clips, cfg["sample.steps"], 8
    )
    assert cond >= uncond + 3.0
    assert edit >= 25.0
