"""
Launching nova commands (synth-source, synth-anchor, make-dataset, train,
infer, eval, ablate, rerun).
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9
from pathlib import Path
from typing import Callable

import functools
import sys
import click
from click_default_group import DefaultGroup  # type: ignore

from nova_edit import _version, ablation, metrics
from nova_edit.anchor import build_degraded_reference
from nova_edit.config import RunConfig, load_config, segment_divisors
from nova_edit.core import NovaError
from nova_edit.dataset import make_dataset
from nova_edit.denoiser import NovaDenoiser
from nova_edit.editors import get_editor
from nova_edit.fidelity import FillerPool, synth_pseudo_source
from nova_edit.file_updater import AtomicWrite
from nova_edit.inference import EditRequest, run_edit
from nova_edit.manifest import compare, finish_run, read_manifest, start_run
from nova_edit.misc import emph, print_error, print_warning, verdict
from nova_edit.rng import Rng
from nova_edit.training import configure_torch, load_checkpoint, report, save_checkpoint, train
from nova_edit.video_io import (
    load_frame_or_video_frame,
    load_masks,
    load_video,
    save_masks,
    save_video,
    write_frame,
)


class AliasedGroup(DefaultGroup):
    """Group where `ss` and `sa` are synonyms for `synth-source` and `synth-anchor`."""

    ALIASES = {"ss": "synth-source", "sa": "synth-anchor"}

    def get_command(self, ctx, cmd_name):
        return DefaultGroup.get_command(self, ctx, self.ALIASES.get(cmd_name, cmd_name))


@click.group(cls=AliasedGroup, default="infer", default_if_no_args=False)
@click.version_option(_version.VERSION)
def cli():
    """Keyframe-guided video editing with sparse control and dense synthesis"""


def reports_errors(f: Callable) -> Callable:
    """Prints user errors as `[Error]` and exits with their code."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except NovaError as e:
            print_error(str(e), sys.stderr)
            sys.exit(e.exit_code)

    return wrapper


def config_options(f: Callable) -> Callable:
    """Options shared by every command reading a run configuration."""
    f = click.option(
        "--seed",
        type=click.IntRange(min=0),
        default=None,
        help="Seed of the run; beats `seed=` of the configuration file and NOVA_SEED.",
    )(f)
    f = click.option(
        "--set",
        "-s",
        "sets",
        multiple=True,
        help="Overrides a configuration key, as key=value. May be repeated.",
    )(f)
    f = click.option(
        "--config",
        "-c",
        "config_filename",
        type=click.Path(exists=True, dir_okay=False, resolve_path=True),
        default=None,
        help="Configuration file of key=value lines. Missing keys take their default.",
    )(f)
    return f


def out_option(f: Callable) -> Callable:
    return click.option(
        "--out",
        "-o",
        type=click.Path(file_okay=False, resolve_path=True),
        required=True,
        help="Run directory, receiving the outputs, config.txt and manifest.txt.",
    )(f)


def recorded_args(ctx: click.Context, cfg: RunConfig) -> list[str]:
    """The options of the current command as a command line, seed pinned."""
    args: list[str] = []
    for p in ctx.command.params:
        value = ctx.params.get(p.name)
        if p.name == "seed":
            continue
        if isinstance(p, click.Argument):
            args.append(str(value))
        elif value is None or value == () or value == p.default and not p.required:
            continue
        elif p.is_flag:
            args.append(p.opts[0] if value else p.secondary_opts[0])
        elif p.multiple:
            for v in value:
                args += [p.opts[0], str(v)]
        else:
            args += [p.opts[0], str(value)]
    return args + ["--seed", str(cfg.seed)]


def setup(config_filename, sets, seed, out) -> tuple[RunConfig, Path]:
    cfg = load_config(config_filename, sets, seed)
    configure_torch(cfg["threads"])
    return cfg, start_run(out, cfg)


@cli.command("synth-source")
@click.option(
    "--target", "-t",
    type=click.Path(exists=True, resolve_path=True),
    required=True,
    help="Target clip: a frame directory or a .nvt container.",
)
@click.option(
    "--pool", "-p",
    type=click.Path(exists=True, file_okay=False, resolve_path=True),
    default=None,
    help="Directory of filler clips. Defaults to `mask.pool`, then to the target's directory.",
)
@config_options
@out_option
@reports_errors
def synth_source(target, pool, config_filename, sets, seed, out):
    """
    Pastes a moving masked patch of a filler clip into the target.
    """
    cfg, run_dir = setup(config_filename, sets, seed, out)
    x = load_video(target)
    pool_dir = pool or cfg["mask.pool"] or str(Path(target).parent)
    result = synth_pseudo_source(
        x, FillerPool.from_directory(pool_dir), cfg.fidelity_config(), Rng(cfg.seed).fork("fidelity")
    )
    save_video(result.video, run_dir / "source")
    save_masks(result.masks, run_dir / "masks")
    save_video(result.video, run_dir / "source.nvt", format="container")
    with AtomicWrite(run_dir / "params.txt") as f:
        for key, value in result.params.items():
            f.write(f"{key}={value}\n")
    finish_run(run_dir, "synth-source", recorded_args(click.get_current_context(), cfg), cfg)
    print(f"Pseudo-source written to {emph(str(run_dir))}.")


@cli.command("synth-anchor")
@click.option(
    "--target", "-t",
    type=click.Path(exists=True, resolve_path=True),
    required=True,
    help="Target clip: a frame directory or a .nvt container.",
)
@config_options
@out_option
@reports_errors
def synth_anchor(target, config_filename, sets, seed, out):
    """
    Degrades keyframes of the target and interpolates them into a reference.
    """
    cfg, run_dir = setup(config_filename, sets, seed, out)
    x = load_video(target)
    ref = build_degraded_reference(
        x, cfg.degradation_config(), cfg.keyframe_mode(), Rng(cfg.seed).fork("anchor"),
        workers=cfg["workers"],
    )
    save_video(ref.video, run_dir / "reference")
    save_video(ref.video, run_dir / "reference.nvt", format="container")
    with AtomicWrite(run_dir / "keyframes.txt") as f:
        for record in ref.log:
            f.write(f"{record.index}: {record.describe()}\n")
    finish_run(run_dir, "synth-anchor", recorded_args(click.get_current_context(), cfg), cfg)
    print(
        f"Reference through keyframes {list(ref.keyframes)} written to {emph(str(run_dir))}."
    )


@cli.command("make-dataset")
@click.option(
    "--count", "-n",
    type=click.IntRange(min=1),
    default=None,
    help="Number of clips. Defaults to `data.clips`.",
)
@config_options
@out_option
@reports_errors
def make_dataset_cmd(count, config_filename, sets, seed, out):
    """
    Generates procedural moving-shape clips.
    """
    cfg, run_dir = setup(config_filename, sets, seed, out)
    n = count or cfg["data.clips"]
    make_dataset(cfg.clip_config(), cfg.seed, n, run_dir)
    finish_run(
        run_dir, "make-dataset", recorded_args(click.get_current_context(), cfg), cfg,
        {"clips": n},
    )


@cli.command("train")
@config_options
@out_option
@reports_errors
def train_cmd(config_filename, sets, seed, out):
    """
    Trains the denoiser on samples synthesized on the fly.
    """
    cfg, run_dir = setup(config_filename, sets, seed, out)
    model = NovaDenoiser(cfg.model_config())
    schedule = cfg.schedule()
    factory = cfg.sample_factory(cfg.clips(), schedule)
    result = train(model, schedule, factory, cfg.train_config(), run_dir=run_dir)
    save_checkpoint(model, run_dir / "model.nvt")
    report(result)
    finish_run(
        run_dir, "train", recorded_args(click.get_current_context(), cfg), cfg,
        {"checkpoint": "model.nvt", "steps": len(result.losses)},
    )


@cli.command()
@click.option(
    "--source", "-i",
    type=click.Path(exists=True, resolve_path=True),
    required=True,
    help="Video to edit: a frame directory or a .nvt container.",
)
@click.option(
    "--checkpoint", "-k",
    type=click.Path(exists=True, dir_okay=False, resolve_path=True),
    required=True,
    help="Trained model (.nvt bundle with its .manifest).",
)
@click.option("--interval", type=click.IntRange(min=1), default=None, help="Keyframe interval. Defaults to `infer.interval`.")
@click.option("--editor", "-e", default=None, help="Keyframe editor: identity, recolor or paste.")
@click.option("--prompt", "-P", default=None, help="Prompt given to the editor, e.g. recolor:#ff8800.")
@click.option(
    "--masks", "-m",
    type=click.Path(exists=True, resolve_path=True),
    default=None,
    help="Edit masks (frame directory or container); used at keyframes.",
)
@click.option(
    "--independent/--anchored",
    default=None,
    help="Edit each keyframe on its own instead of against the first edited one.",
)
@config_options
@out_option
@reports_errors
def infer(source, checkpoint, interval, editor, prompt, masks, independent, config_filename, sets, seed, out):
    """
    Edits keyframes, interpolates them and samples the edited video.
    """
    cfg, run_dir = setup(config_filename, sets, seed, out)
    x = load_video(source)
    interval = interval or cfg["infer.interval"]
    if x.last % interval:
        print_warning(
            f"interval {interval} does not divide {x.last}; the last segment is shorter. "
            f"Intervals giving even segments: {segment_divisors(x.last) or 'none'}."
        )
    anchored = cfg["infer.anchored"] if independent is None else not independent
    model = load_checkpoint(checkpoint)
    kf_editor = get_editor(editor or cfg["infer.editor"], cfg["infer.jitter"], cfg.seed)
    req = EditRequest.with_interval(
        x, interval, prompt if prompt is not None else cfg["infer.prompt"],
        editor=kf_editor.name, masks=load_masks(masks) if masks else None,
    )
    result = run_edit(
        req, kf_editor, model, cfg.schedule(), cfg["sample.steps"], seed=cfg.seed,
        anchored=anchored, workers=cfg["workers"],
    )
    save_video(result.video, run_dir / "video")
    save_video(result.video, run_dir / "video.nvt", format="container")
    save_video(result.reference, run_dir / "reference")
    (run_dir / "keyframes").mkdir(exist_ok=True)
    for k, frame in result.edited.items():
        write_frame(run_dir / "keyframes" / f"{k:05d}.png", frame)
    finish_run(
        run_dir, "infer", recorded_args(click.get_current_context(), cfg), cfg,
        {**result.manifest, "source": source, "checkpoint": checkpoint},
    )
    print(f"Edited video written to {emph(str(run_dir / 'video'))}.")


@cli.command("eval")
@click.option("--gen", type=click.Path(exists=True, resolve_path=True), required=True, help="Generated video.")
@click.option("--src", type=click.Path(exists=True, resolve_path=True), required=True, help="Original video.")
@click.option(
    "--mask", type=click.Path(exists=True, resolve_path=True), default=None,
    help="Edit masks; without them the whole frame counts as background.",
)
@click.option(
    "--first-edit", type=click.Path(exists=True, resolve_path=True), default=None,
    help="Edited first keyframe (PNG) for temporal consistency.",
)
@config_options
@out_option
@reports_errors
def eval_cmd(gen, src, mask, first_edit, config_filename, sets, seed, out):
    """
    Computes TC, FC, SSIM, BG-SSIM and PSNR into report.json.
    """
    cfg, run_dir = setup(config_filename, sets, seed, out)
    rep = metrics.evaluate(
        load_video(gen),
        load_video(src),
        masks=load_masks(mask) if mask else None,
        first_edit=load_frame_or_video_frame(first_edit) if first_edit else None,
        tc_reference=cfg["eval.tc_reference"],
    )
    rep.write(run_dir / "report.json")
    for name, value in sorted(rep.means.items()):
        print(f"{name:>8}  {value:.6f}")
    if rep.metadata.get("bg_ssim_undefined"):
        print_warning(f"BG-SSIM undefined on frames {rep.metadata['bg_ssim_undefined']}.")
    finish_run(run_dir, "eval", recorded_args(click.get_current_context(), cfg), cfg)


@cli.command()
@config_options
@out_option
@reports_errors
def ablate(config_filename, sets, seed, out):
    """
    Runs the dense-branch, keyframe-editing and interval ablations.
    """
    cfg, run_dir = setup(config_filename, sets, seed, out)
    result = ablation.ablate(cfg, run_dir)
    finish_run(run_dir, "ablate", recorded_args(click.get_current_context(), cfg), cfg)
    print(f"Ablation {verdict(result.passed)}; table in {emph(str(run_dir / 'ablation.csv'))}.")


@cli.command()
@click.argument("manifest", type=click.Path(exists=True, resolve_path=True))
@click.option(
    "--out", "-o",
    type=click.Path(file_okay=False, resolve_path=True),
    required=True,
    help="Fresh run directory for the re-execution.",
)
@reports_errors
def rerun(manifest, out):
    """
    Re-executes a recorded run and compares the digests of its outputs.
    """
    old = read_manifest(manifest)
    args = list(old.args)
    for flag in ("--out", "-o"):
        if flag in args:
            args[args.index(flag) + 1] = out
            break
    else:
        args += ["--out", out]
    cli.main([old.command, *args], standalone_mode=False)
    new = read_manifest(out)
    same = compare(old, new)
    print(f"Re-run {verdict(same)}.")
    if not same:
        sys.exit(1)


if __name__ == "__main__":
    cli()
