"""
Matched-seed ablations: the full model against a model trained and sampled
without its dense branch, anchored against independent keyframe editing,
and a sweep over inference keyframe intervals. Jobs are ordered by their
dependencies; a failing job is reported and only its dependants are skipped.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import Callable, TextIO
import sys

import numpy as np
import toposort  # Topological sort pylint: disable=import-error

from nova_edit import cst
from nova_edit.config import RunConfig
from nova_edit.core import NovaError
from nova_edit.dataset import AddRemovePair, make_add_remove_pair
from nova_edit.denoiser import NovaDenoiser
from nova_edit.editors import PasteSpriteOracle, RecolorOracle
from nova_edit.file_updater import AtomicWrite
from nova_edit.inference import EditRequest, edit_keyframes, run_edit
from nova_edit.metrics import background_psnr, bg_ssim, keyframe_hue_spread
from nova_edit.misc import emph, print_error, print_warning, verdict
from nova_edit.rng import Rng
from nova_edit.training import configure_torch, train


@dataclass(frozen=True)
class Row:
    variant: str
    seed: int
    metric: str
    value: float


@dataclass(frozen=True)
class Check:
    name: str
    detail: str
    passed: bool


@dataclass
class AblationResult:
    rows: list[Row] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)

    def value(self, variant: str, seed: int, metric: str) -> float:
        return next(
            r.value for r in self.rows
            if (r.variant, r.seed, r.metric) == (variant, seed, metric)
        )

    def write(self, out_dir: Path) -> None:
        with AtomicWrite(out_dir / "ablation.csv") as f:
            f.write("variant,seed,metric,value\n")
            for r in self.rows:
                f.write(f"{r.variant},{r.seed},{r.metric},{r.value!r}\n")
        with AtomicWrite(out_dir / "checks.csv") as f:
            f.write("check,detail,result\n")
            for c in self.checks:
                f.write(f"{c.name},{c.detail},{'pass' if c.passed else 'fail'}\n")

    @property
    def passed(self) -> bool:
        return not self.failed and all(c.passed for c in self.checks)


def to_hex(color: tuple[float, ...]) -> str:
    rgb = [color[0]] * 3 if len(color) == 1 else color
    return "#" + "".join(f"{int(round(255 * c)):02x}" for c in rgb)


def fixture_pairs(cfg: RunConfig, seed: int) -> list[AddRemovePair]:
    """The add/remove evaluation set of a seed."""
    rng = Rng(seed).fork("fixture")
    return [
        make_add_remove_pair(cfg.clip_config(), rng.fork(i))
        for i in range(cfg["ablate.clips"])
    ]


def train_variant(cfg: RunConfig, seed: int, use_dense: bool) -> NovaDenoiser:
    variant = cfg.with_seed(seed).updated({"model.use_dense": use_dense})
    model = NovaDenoiser(variant.model_config())
    schedule = variant.schedule()
    factory = variant.sample_factory(variant.clips(), schedule)
    train(model, schedule, factory, variant.train_config(), out=StringIO())
    return model


def dense_gap(cfg: RunConfig, models: dict[str, NovaDenoiser], seed: int) -> dict[str, float]:
    """Mean background PSNR of each model on the add task."""
    schedule = cfg.schedule()
    editor = PasteSpriteOracle()
    scores: dict[str, list[float]] = {name: [] for name in models}
    for pair in fixture_pairs(cfg, seed):
        req = EditRequest.with_interval(
            pair.source, cfg["infer.interval"], f"add:{to_hex(pair.sprite.color)}",
            editor=editor.name, masks=pair.masks,
        )
        for name, model in models.items():
            result = run_edit(req, editor, model, schedule, cfg["sample.steps"], seed=seed)
            scores[name].append(background_psnr(result.video, pair.target, pair.masks))
    return {name: float(np.mean(v)) for name, v in scores.items()}


def hue_spreads(cfg: RunConfig, seed: int) -> list[tuple[float, float]]:
    """(anchored, independent) in-mask hue variance per fixture clip."""
    jitter = cfg["infer.jitter"] or cst.ABLATION_JITTER
    spreads = []
    for i, pair in enumerate(fixture_pairs(cfg, seed)):
        req = EditRequest.with_interval(
            pair.target, cfg["infer.interval"], "recolor:#3366ff",
            editor="recolor", masks=pair.masks,
        )
        masks = dict(req.masks)
        anchored = edit_keyframes(req, RecolorOracle(jitter, seed=seed + i), anchored=True)
        independent = edit_keyframes(req, RecolorOracle(jitter, seed=seed + i), anchored=False)
        spreads.append(
            (keyframe_hue_spread(anchored, masks)[0], keyframe_hue_spread(independent, masks)[0])
        )
    return spreads


def interval_bg_ssim(cfg: RunConfig, model: NovaDenoiser, interval: int, seed: int) -> float:
    schedule = cfg.schedule()
    editor = RecolorOracle()
    values = []
    for pair in fixture_pairs(cfg, seed):
        req = EditRequest.with_interval(
            pair.target, interval, "recolor:#3366ff", editor=editor.name, masks=pair.masks
        )
        result = run_edit(req, editor, model, schedule, cfg["sample.steps"], seed=seed)
        values.append(bg_ssim(result.video, pair.target, pair.masks))
    return float(np.mean(values))


def ablate(cfg: RunConfig, out_dir: str | Path | None = None, out: TextIO = sys.stdout) -> AblationResult:
    """
    Runs every ablation job and evaluates the expected directions.

    Args:
        cfg: the resolved configuration; `ablate.seeds` seeds starting at `seed`.
        out_dir: where `ablation.csv` and `checks.csv` are written.
        out: where progress is written.

    Returns:
        the table rows, the checks and the failed jobs.
    """
    configure_torch(cfg["threads"])
    seeds = [cfg.seed + i for i in range(cfg["ablate.seeds"])]
    intervals = list(cfg["ablate.intervals"])
    result = AblationResult()
    models: dict[str, NovaDenoiser] = {}
    gaps: dict[int, dict[str, float]] = {}
    bg: dict[int, float] = {}

    jobs: dict[str, Callable[[], None]] = {}
    deps: dict[str, set[str]] = {}
    for s in seeds:
        for variant, dense in (("full", True), ("no-dense", False)):

            def train_job(s=s, v=variant, d=dense):
                models[f"{v}:{s}"] = train_variant(cfg, s, d)

            jobs[f"train:{variant}:{s}"] = train_job
            deps[f"train:{variant}:{s}"] = set()

        def dense_job(s=s):
            gaps[s] = dense_gap(cfg, {v: models[f"{v}:{s}"] for v in ("full", "no-dense")}, s)
            for v, value in gaps[s].items():
                result.rows.append(Row(v, s, "bg_psnr", value))

        jobs[f"dense:{s}"] = dense_job
        deps[f"dense:{s}"] = {f"train:full:{s}", f"train:no-dense:{s}"}

    def consistency_job():
        for i, (a, b) in enumerate(hue_spreads(cfg, cfg.seed)):
            result.rows.append(Row("anchored", i, "hue_variance", a))
            result.rows.append(Row("independent", i, "hue_variance", b))

    jobs["consistency"] = consistency_job
    deps["consistency"] = set()
    for n in intervals:

        def interval_job(n=n):
            bg[n] = interval_bg_ssim(cfg, models[f"full:{seeds[0]}"], n, cfg.seed)
            result.rows.append(Row(f"interval-{n}", cfg.seed, "bg_ssim", bg[n]))

        jobs[f"interval:{n}"] = interval_job
        deps[f"interval:{n}"] = {f"train:full:{seeds[0]}"}

    for name in toposort.toposort_flatten(deps, sort=True):
        blocked = [d for d in deps[name] if d in result.failed]
        if blocked:
            result.failed[name] = f"skipped, {blocked[0]} failed"
            print_warning(f"{name} skipped since {blocked[0]} failed.", out)
            continue
        print(f"Running {emph(name)}.", file=out)
        try:
            jobs[name]()
        except NovaError as e:
            result.failed[name] = str(e)
            print_error(f"{name}: {e}", out)
        except Exception as e:  # pylint: disable=broad-except
            result.failed[name] = f"{type(e).__name__}: {e}"
            print_error(f"{name}: {result.failed[name]}", out)

    _evaluate(result, seeds, intervals, gaps, bg)
    for c in result.checks:
        print(f"{verdict(c.passed)} {c.name}: {c.detail}", file=out)
    if out_dir is not None:
        result.write(Path(out_dir))
    return result


def _evaluate(
    result: AblationResult,
    seeds: list[int],
    intervals: list[int],
    gaps: dict[int, dict[str, float]],
    bg: dict[int, float],
) -> None:
    if gaps:
        wins = sum(
            g["full"] >= g["no-dense"] + cst.DENSE_MARGIN_DB for g in gaps.values()
        )
        needed = int(np.ceil(cst.DENSE_WIN_FRACTION * len(seeds)))
        result.checks.append(
            Check("dense_branch", f"full wins by {cst.DENSE_MARGIN_DB} dB on {wins}/{len(seeds)} seeds",
                  wins >= needed)
        )
    spreads = [r for r in result.rows if r.metric == "hue_variance"]
    if spreads:
        anchored = {r.seed: r.value for r in spreads if r.variant == "anchored"}
        independent = {r.seed: r.value for r in spreads if r.variant == "independent"}
        lower = sum(anchored[i] < independent[i] for i in anchored)
        result.checks.append(
            Check("anchored_editing", f"lower hue variance on {lower}/{len(anchored)} clips",
                  lower == len(anchored))
        )
    if bg:
        base_interval = 10 if 10 in bg else min(bg)
        base = bg[base_interval]
        spread = max(abs(v - base) for v in bg.values())
        result.checks.append(
            Check("interval_robustness",
                  f"max BG-SSIM deviation {spread:.4f} from interval {base_interval}",
                  spread <= cst.INTERVAL_BAND and len(bg) == len(intervals))
        )
