"""
Training the denoiser on samples synthesized on the fly, and storing it.

Each training sample is a pure function of (seed, step, slot): a target clip
is drawn from the dataset, its pseudo-source comes from the source fidelity
pipeline and its degraded reference from the anchored control pipeline.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from collections import deque
from concurrent.futures import ThreadPoolExecutor, Future
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, TextIO
import sys

import numpy as np
import torch

from nova_edit import cst
from nova_edit.anchor import DegradationConfig, KeyframeMode, build_degraded_reference
from nova_edit.container import TensorBlob, load_blobs, save_blobs
from nova_edit.core import ConfigError, DataError, NumericError
from nova_edit.dataset import ClipSource
from nova_edit.denoiser import (
    ModelConfig,
    NoiseSchedule,
    NovaDenoiser,
    TrainingSample,
    batch_loss,
    draw_sample,
)
from nova_edit.fidelity import FidelityConfig, FillerPool, synth_pseudo_source
from nova_edit.file_updater import AtomicWrite
from nova_edit.misc import emph, print_notice
from nova_edit.rng import Rng

FREEZE_REGIMES: list[str] = ["none", "two_phase", "cross_only"]


def configure_torch(threads: int = 1) -> None:
    """Thread count; a single thread makes runs bitwise reproducible."""
    if threads < 1:
        raise ConfigError(f"Thread count must be positive, got {threads}.")
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(True)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    steps: int = 2000
    lr: float = 1e-3
    weight_decay: float = 0.01
    batch: int = 1
    freeze: str = "none"
    phase_split: float = 0.5
    log_every: int = 100
    prefetch: int = 0  # worker threads synthesizing samples ahead

    def __post_init__(self):
        if self.steps < 0 or self.batch < 1:
            raise ConfigError("Training needs a non-negative step count and a positive batch.")
        if self.lr < 0.0 or self.weight_decay < 0.0:
            raise ConfigError("Learning rate and weight decay must be non-negative.")
        if self.freeze not in FREEZE_REGIMES:
            raise ConfigError(f"Unknown freeze regime {self.freeze!r}, expected {FREEZE_REGIMES}.")
        if not 0.0 <= self.phase_split <= 1.0:
            raise ConfigError(f"Phase split must lie in [0,1], got {self.phase_split}.")


class SampleFactory:
    """Builds the training samples of a run."""

    def __init__(
        self,
        clips: ClipSource,
        model_cfg: ModelConfig,
        schedule: NoiseSchedule,
        fidelity: FidelityConfig,
        degradation: DegradationConfig,
        keyframes: KeyframeMode,
        seed: int,
        pool: FillerPool | None = None,
        workers: int = 0,
    ):
        if len(clips) == 0:
            raise DataError("The training set is empty.")
        self.clips = clips
        self.model_cfg = model_cfg
        self.schedule = schedule
        self.fidelity = fidelity
        self.degradation = degradation
        self.keyframes = keyframes
        self.seed = seed
        self.pool = pool if pool is not None else FillerPool([clips[i] for i in range(len(clips))])
        self.workers = workers

    def describe(self, step: int, slot: int) -> dict[str, object]:
        """What is needed to rebuild a sample by hand."""
        return {"seed": self.seed, "step": step, "slot": slot, "keyframes": self.keyframes}

    def make(self, step: int, slot: int, model: NovaDenoiser) -> TrainingSample:
        rng = Rng(self.seed).fork("sample", step, slot)
        target = self.clips[rng.fork("clip").integers(0, len(self.clips))]
        source = synth_pseudo_source(target, self.pool, self.fidelity, rng.fork("fidelity"))
        reference = build_degraded_reference(
            target, self.degradation, self.keyframes, rng.fork("anchor"), workers=self.workers
        )
        return draw_sample(
            target, source.video, reference.video, model, self.schedule, rng.fork("noise")
        )

    def batch(self, step: int, size: int, model: NovaDenoiser) -> list[TrainingSample]:
        return [self.make(step, b, model) for b in range(size)]


@dataclass
class TrainResult:
    model: NovaDenoiser
    losses: list[float]

    def smoothed(self, window: int = cst.LOSS_SMOOTHING) -> np.ndarray:
        return smooth(self.losses, window)


def smooth(losses: list[float], window: int = cst.LOSS_SMOOTHING) -> np.ndarray:
    """Trailing mean over the last `window` values (fewer at the start)."""
    values = np.asarray(losses, dtype=np.float64)
    if values.size == 0:
        return values
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, values.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def phase_groups(cfg: TrainConfig, step: int) -> set[str]:
    """Frozen parameter groups at a given step."""
    if cfg.freeze == "cross_only":
        return set(cst.PARAM_GROUPS) - set(cst.TWO_PHASE_SECOND)
    if cfg.freeze == "two_phase":
        trained = cst.TWO_PHASE_FIRST if step < cfg.phase_split * cfg.steps else cst.TWO_PHASE_SECOND
        return set(cst.PARAM_GROUPS) - set(trained)
    return {"codec"}


def _follow_main(model: NovaDenoiser, cfg: TrainConfig, frozen: set[str]) -> None:
    # a frozen main branch is the base the dense branch copies
    if cfg.freeze != "none" and "main" in frozen:
        model.copy_main_to_dense()


def _dump_sample(path: Path, info: dict[str, object], loss: float) -> None:
    with AtomicWrite(path) as f:
        for key, value in info.items():
            f.write(f"{key}={value}\n")
        f.write(f"loss={loss}\n")


def train(
    model: NovaDenoiser,
    schedule: NoiseSchedule,
    factory: SampleFactory,
    cfg: TrainConfig,
    out: TextIO = sys.stdout,
    run_dir: Path | None = None,
    on_step: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """
    Runs `cfg.steps` AdamW steps.

    Args:
        model: the denoiser, updated in place.
        schedule: the noise schedule.
        factory: the sample builder.
        cfg: optimization parameters.
        out: where progress is written.
        run_dir: where `loss.csv` (and a dump of a failing sample) is written.
        on_step: called with (step, loss) after each update.

    Returns:
        the trained model and its loss curve.
    """
    torch.manual_seed(cfg.seed)
    losses: list[float] = []
    frozen = phase_groups(cfg, 0)
    model.freeze(frozen)
    _follow_main(model, cfg, frozen)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay
    )
    pending: deque[Future] = deque()
    executor = ThreadPoolExecutor(max_workers=cfg.prefetch) if cfg.prefetch > 0 else None

    def fetch(step: int) -> list[TrainingSample]:
        return factory.batch(step, cfg.batch, model)

    try:
        for step in range(cfg.steps):
            if executor is not None:
                while len(pending) < cfg.prefetch and step + len(pending) < cfg.steps:
                    pending.append(executor.submit(fetch, step + len(pending)))
                samples = pending.popleft().result()
            else:
                samples = fetch(step)
            groups = phase_groups(cfg, step)
            if groups != frozen:
                frozen = groups
                model.freeze(frozen)
                _follow_main(model, cfg, frozen)
                print_notice(f"step {step}: training {sorted(set(cst.PARAM_GROUPS) - frozen)}.", out)
            model.train()
            optimizer.zero_grad(set_to_none=True)
            value = batch_loss(samples, model, schedule)
            loss = float(value.detach())
            if not np.isfinite(loss):
                info = factory.describe(step, 0)
                if run_dir is not None:
                    _dump_sample(Path(run_dir) / "nonfinite_sample.txt", info, loss)
                raise NumericError(
                    f"Non-finite loss at step {step}; sample "
                    + ", ".join(f"{k}={v}" for k, v in info.items())
                    + "."
                )
            value.backward()
            optimizer.step()
            losses.append(loss)
            if on_step is not None:
                on_step(step, loss)
            if cfg.log_every and (step + 1) % cfg.log_every == 0:
                print(
                    f"step {step + 1:>6}  loss {smooth(losses)[-1]:.5f}", file=out
                )
    finally:
        if executor is not None:
            executor.shutdown(wait=True, cancel_futures=True)
    if run_dir is not None:
        write_loss_curve(Path(run_dir) / "loss.csv", losses)
    return TrainResult(model, losses)


def write_loss_curve(path: Path, losses: list[float]) -> None:
    with AtomicWrite(path) as f:
        f.write("step,loss\n")
        for step, loss in enumerate(losses):
            f.write(f"{step},{loss!r}\n")


def read_loss_curve(path: Path) -> list[float]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [float(line.split(",")[1]) for line in lines[1:] if line]


# ---
# Checkpoints
# ---


def manifest_path(path: Path) -> Path:
    return path.with_name(path.name + ".manifest")


def save_checkpoint(model: NovaDenoiser, path: str | Path) -> None:
    """
    Writes the parameters as a `.nvt` bundle and a sidecar manifest listing
    the model configuration, every parameter (name, shape, group) and the
    freeze mask.
    """
    path = Path(path)
    names, blobs = [], []
    for name, p in model.named_parameters():
        names.append(name)
        blobs.append(TensorBlob.of(p.detach().cpu().to(torch.float32).numpy(), name))
    save_blobs(path, blobs)
    with AtomicWrite(manifest_path(path)) as f:
        for key, value in model.cfg.to_dict().items():
            f.write(f"model.{key}={value}\n")
        f.write(f"frozen={','.join(sorted(model.frozen))}\n")
        for blob in blobs:
            shape = "x".join(str(d) for d in blob.shape)
            f.write(f"param={blob.name} {shape} {model.group_of(blob.name)}\n")


def _cast(text: str, like: object) -> object:
    if isinstance(like, bool):
        if text not in ("True", "False"):
            raise DataError(f"Bad boolean {text!r} in checkpoint manifest.")
        return text == "True"
    return type(like)(text)


def load_checkpoint(path: str | Path) -> NovaDenoiser:
    """Rebuilds a denoiser from a bundle and its manifest."""
    path = Path(path)
    try:
        lines = manifest_path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"Cannot read the manifest of checkpoint {path}: {e.strerror}.") from e
    defaults = ModelConfig()
    kwargs: dict[str, object] = {}
    names: list[str] = []
    frozen: list[str] = []
    known = {f.name for f in fields(ModelConfig)}
    for line in lines:
        key, _, value = line.partition("=")
        if key.startswith("model."):
            field_name = key[len("model."):]
            if field_name not in known:
                raise DataError(f"Unknown model key {field_name!r} in {manifest_path(path)}.")
            kwargs[field_name] = _cast(value, getattr(defaults, field_name))
        elif key == "frozen":
            frozen = [g for g in value.split(",") if g]
        elif key == "param":
            names.append(value.split()[0])
    model = NovaDenoiser(ModelConfig(**kwargs))
    blobs = {b.name: b for b in load_blobs(path, names)}
    params = dict(model.named_parameters())
    if set(blobs) != set(params):
        raise DataError(f"Checkpoint {path} does not match its model configuration.")
    with torch.no_grad():
        for name, p in params.items():
            array = blobs[name].array()
            if tuple(p.shape) != array.shape:
                raise DataError(f"Parameter {name} has shape {array.shape}, expected {tuple(p.shape)}.")
            p.copy_(torch.as_tensor(array))
    model.freeze(frozen)
    return model


def report(result: TrainResult, out: TextIO = sys.stdout) -> None:
    """Prints the initial and final smoothed loss."""
    if not result.losses:
        print_notice("no training step was run.", out)
        return
    s = result.smoothed()
    window = min(cst.LOSS_SMOOTHING, len(result.losses))
    print(
        f"Smoothed loss {emph(f'{s[window - 1]:.5f}')} -> {emph(f'{s[-1]:.5f}')} "
        f"after {len(result.losses)} steps.",
        file=out,
    )
