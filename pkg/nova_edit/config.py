"""
Run configuration: plain `key=value` text with dotted keys.

Defaults and their documentation live in the packaged `data/defaults.ini`.
A user file uses the same keys without a section header; unknown keys,
malformed values and out-of-range values are rejected, citing the line.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping
import configparser
import os
import re

from nova_edit import cst
from nova_edit.anchor import DegradationConfig, KeyframeMode
from nova_edit.core import ConfigError
from nova_edit.dataset import MOTIONS, ClipConfig, ClipDirectory, ClipSource, ProceduralClips
from nova_edit.denoiser import ModelConfig, NoiseSchedule
from nova_edit.editors import EDITORS
from nova_edit.fidelity import FidelityConfig, FillerPool
from nova_edit.training import FREEZE_REGIMES, SampleFactory, TrainConfig

SEED_ENV: str = "NOVA_SEED"
COMMENT_RE = re.compile(r"(^|\s)#.*$")


class DefaultsParser(configparser.ConfigParser):
    """Config parser for the packaged defaults: dotted keys, inline comments."""

    def __init__(self):
        super().__init__(inline_comment_prefixes=("#",), interpolation=None)

    def optionxform(self, optionstr: str) -> str:
        return optionstr.strip()

    def defaults_text(self) -> dict[str, str]:
        return dict(self.defaults())


# ---
# Value kinds
# ---


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _pair(cast: Callable[[str], object]) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 2:
            raise ValueError(f"expected two comma-separated values, got {text!r}")
        lo, hi = cast(parts[0]), cast(parts[1])
        if lo > hi:
            raise ValueError(f"empty range {lo},{hi}")
        return lo, hi

    return parse


def _list(cast: Callable[[str], object]) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        return tuple(cast(p.strip()) for p in text.split(",") if p.strip())

    return parse


def _render(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Key:
    """How to read a key and which values are allowed."""

    parse: Callable[[str], object]
    lo: float | None = None
    hi: float | None = None
    choices: tuple[str, ...] | None = None

    def read(self, text: str) -> object:
        value = self.parse(text)
        items = value if isinstance(value, tuple) else (value,)
        for item in items:
            if self.choices is not None and item not in self.choices:
                raise ValueError(f"{item!r} is not one of {list(self.choices)}")
            if isinstance(item, (int, float)) and not isinstance(item, bool):
                if self.lo is not None and item < self.lo:
                    raise ValueError(f"{item} is below {self.lo}")
                if self.hi is not None and item > self.hi:
                    raise ValueError(f"{item} is above {self.hi}")
        return value


def _path(text: str) -> str:
    return text


KEYS: dict[str, Key] = {
    "seed": Key(int, lo=0, hi=cst.SEED_MASK),
    "threads": Key(int, lo=1),
    "workers": Key(int, lo=0),
    "data.height": Key(int, lo=4),
    "data.width": Key(int, lo=4),
    "data.frames": Key(int, lo=2),
    "data.channels": Key(int, lo=1, hi=3),
    "data.clips": Key(int, lo=1),
    "data.shapes": Key(int, lo=0),
    "data.motion": Key(str, choices=tuple(MOTIONS)),
    "data.dir": Key(_path),
    "keyframe.interval": Key(int, lo=0),
    "keyframe.n_interior": Key(int, lo=0),
    "degrade.geometric_p": Key(float, lo=0.0, hi=1.0),
    "degrade.appearance_p": Key(float, lo=0.0, hi=1.0),
    "degrade.zoom": Key(_pair(float), lo=1e-3),
    "degrade.stretch": Key(_pair(float), lo=1e-3),
    "degrade.rotation": Key(_pair(float), lo=-180.0, hi=180.0),
    "degrade.sigma": Key(_pair(float), lo=1e-3),
    "degrade.blob": Key(_pair(float), lo=1e-3, hi=1.0),
    "degrade.operators": Key(_list(str), choices=tuple(cst.DEGRADATION_OPERATORS)),
    "mask.shapes": Key(_list(str), choices=tuple(cst.MASK_SHAPES)),
    "mask.size": Key(_pair(float), lo=1e-3, hi=0.999),
    "mask.vertices": Key(_pair(int), lo=3),
    "mask.aspect": Key(_pair(float), lo=1e-3),
    "mask.speed": Key(_pair(float), lo=0.0),
    "mask.angular": Key(_pair(float)),
    "mask.scale": Key(_pair(float), lo=1e-3),
    "mask.scale_rate": Key(float, lo=-0.5, hi=0.5),
    "mask.antialias": Key(_bool),
    "mask.pool": Key(_path),
    "model.patch": Key(int, lo=1),
    "model.tpatch": Key(int, lo=1),
    "model.dim": Key(int, lo=2),
    "model.layers": Key(int, lo=1),
    "model.heads": Key(int, lo=1),
    "model.mlp_ratio": Key(float, lo=0.25),
    "model.hint": Key(str, choices=("additive", "cross")),
    "model.dense": Key(str, choices=("copy", "shared")),
    "model.codec_init": Key(str, choices=("orthogonal", "identity")),
    "model.use_sparse": Key(_bool),
    "model.use_dense": Key(_bool),
    "schedule.steps": Key(int, lo=1),
    "train.steps": Key(int, lo=0),
    "train.lr": Key(float, lo=0.0),
    "train.weight_decay": Key(float, lo=0.0),
    "train.batch": Key(int, lo=1),
    "train.freeze": Key(str, choices=tuple(FREEZE_REGIMES)),
    "train.phase_split": Key(float, lo=0.0, hi=1.0),
    "train.log_every": Key(int, lo=0),
    "train.prefetch": Key(int, lo=0),
    "sample.steps": Key(int, lo=1),
    "infer.interval": Key(int, lo=1),
    "infer.editor": Key(str, choices=tuple(EDITORS)),
    "infer.prompt": Key(str),
    "infer.jitter": Key(float, lo=0.0, hi=180.0),
    "infer.anchored": Key(_bool),
    "eval.tc_reference": Key(str, choices=("edited_first", "generated_first")),
    "ablate.seeds": Key(int, lo=1),
    "ablate.clips": Key(int, lo=1),
    "ablate.intervals": Key(_list(int), lo=1),
}


def read_defaults(filename: Path = cst.DEFAULTS_FILE) -> dict[str, object]:
    """Parsed values of the packaged defaults."""
    p = DefaultsParser()
    p.read(filename, encoding="utf-8")
    raw = p.defaults_text()
    if set(raw) != set(KEYS):
        missing, extra = set(KEYS) - set(raw), set(raw) - set(KEYS)
        raise ConfigError(f"Defaults out of sync: missing {sorted(missing)}, extra {sorted(extra)}.")
    return {key: KEYS[key].read(text) for key, text in raw.items()}


def segment_divisors(span: int) -> list[int]:
    """Intervals dividing `span` into a number of segments within the suggested band."""
    lo, hi = cst.SUGGESTED_SEGMENTS
    return [d for d in range(1, span + 1) if span % d == 0 and lo <= span // d <= hi]


@dataclass(frozen=True)
class RunConfig:
    """Every key resolved; `explicit` lists the keys set by the user."""

    values: Mapping[str, object]
    explicit: frozenset[str] = field(default_factory=frozenset)

    def __getitem__(self, key: str) -> object:
        return self.values[key]

    def snapshot(self) -> str:
        """Every key, sorted, as `key=value` lines."""
        return "".join(f"{k}={_render(self.values[k])}\n" for k in sorted(self.values))

    def with_seed(self, seed: int) -> RunConfig:
        values = dict(self.values)
        values["seed"] = seed
        return RunConfig(values, self.explicit | {"seed"})

    def updated(self, changes: Mapping[str, object]) -> RunConfig:
        """A copy with some keys replaced by already parsed values."""
        unknown = set(changes) - set(KEYS)
        if unknown:
            raise ConfigError(f"Unknown keys {sorted(unknown)}.")
        return RunConfig({**self.values, **changes}, self.explicit | set(changes))

    # ---
    # Typed views
    # ---

    @property
    def seed(self) -> int:
        return int(self["seed"])

    def clip_config(self) -> ClipConfig:
        return ClipConfig(
            height=self["data.height"],
            width=self["data.width"],
            frames=self["data.frames"],
            channels=self["data.channels"],
            shapes=self["data.shapes"],
            motion=self["data.motion"],
        )

    def fidelity_config(self) -> FidelityConfig:
        return FidelityConfig(
            seed=self.seed,
            shapes=self["mask.shapes"],
            size_range=self["mask.size"],
            vertex_range=self["mask.vertices"],
            aspect_range=self["mask.aspect"],
            speed_range=self["mask.speed"],
            angular_range=self["mask.angular"],
            scale_range=self["mask.scale"],
            scale_rate=self["mask.scale_rate"],
            antialias=self["mask.antialias"],
            pool=self["mask.pool"] or None,
            workers=self["workers"],
        )

    def degradation_config(self) -> DegradationConfig:
        return DegradationConfig(
            geometric_p=self["degrade.geometric_p"],
            appearance_p=self["degrade.appearance_p"],
            zoom_range=self["degrade.zoom"],
            stretch_range=self["degrade.stretch"],
            rotation_range=self["degrade.rotation"],
            sigma_range=self["degrade.sigma"],
            blob_range=self["degrade.blob"],
            operators=self["degrade.operators"],
        )

    def keyframe_mode(self) -> KeyframeMode:
        if self["keyframe.interval"] > 0:
            return KeyframeMode.fixed(self["keyframe.interval"])
        return KeyframeMode.random(self["keyframe.n_interior"])

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            height=self["data.height"],
            width=self["data.width"],
            frames=self["data.frames"],
            channels=self["data.channels"],
            patch=self["model.patch"],
            tpatch=self["model.tpatch"],
            dim=self["model.dim"],
            layers=self["model.layers"],
            heads=self["model.heads"],
            mlp_ratio=self["model.mlp_ratio"],
            hint=self["model.hint"],
            dense=self["model.dense"],
            codec_init=self["model.codec_init"],
            use_sparse=self["model.use_sparse"],
            use_dense=self["model.use_dense"],
            schedule_steps=self["schedule.steps"],
            seed=self.seed,
        )

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule.cosine(self["schedule.steps"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            seed=self.seed,
            steps=self["train.steps"],
            lr=self["train.lr"],
            weight_decay=self["train.weight_decay"],
            batch=self["train.batch"],
            freeze=self["train.freeze"],
            phase_split=self["train.phase_split"],
            log_every=self["train.log_every"],
            prefetch=self["train.prefetch"],
        )

    def clips(self, seed: int | None = None) -> ClipSource:
        """Clips of `data.dir`, or procedural clips."""
        if self["data.dir"]:
            return ClipDirectory(self["data.dir"])
        seed = self.seed if seed is None else seed
        return ProceduralClips(self.clip_config(), seed, self["data.clips"])

    def sample_factory(self, clips: ClipSource, schedule: NoiseSchedule) -> SampleFactory:
        pool = FillerPool.from_directory(self["mask.pool"]) if self["mask.pool"] else None
        return SampleFactory(
            clips,
            self.model_config(),
            schedule,
            self.fidelity_config(),
            self.degradation_config(),
            self.keyframe_mode(),
            seed=self.seed,
            pool=pool,
            workers=self["workers"],
        )


def _split_line(line: str, label: str) -> tuple[str, str] | None:
    stripped = COMMENT_RE.sub("", line).strip()
    if not stripped:
        return None
    if "=" not in stripped:
        raise ConfigError(f"{label}: expected key=value, got {line.strip()!r}.")
    key, _, value = stripped.partition("=")
    return key.strip(), value.strip()


def _check(values: dict[str, object], where: dict[str, str]) -> None:
    """Cross-key constraints."""
    interval = values["keyframe.interval"]
    span = values["data.frames"] - 1
    if interval and span % interval:
        suggestions = "/".join(str(d) for d in segment_divisors(span)) or "none"
        raise ConfigError(
            f"{where.get('keyframe.interval', 'keyframe.interval')}: interval {interval} "
            f"does not divide {span} (data.frames - 1); try {suggestions}."
        )
    if values["sample.steps"] > values["schedule.steps"]:
        raise ConfigError(
            f"{where.get('sample.steps', 'sample.steps')}: {values['sample.steps']} sampling "
            f"steps exceed the {values['schedule.steps']}-step schedule."
        )
    try:
        ModelConfig(
            height=values["data.height"], width=values["data.width"],
            frames=values["data.frames"], channels=values["data.channels"],
            patch=values["model.patch"], tpatch=values["model.tpatch"],
            dim=values["model.dim"], layers=values["model.layers"],
            heads=values["model.heads"],
        )
    except ConfigError as e:
        raise ConfigError(f"model: {e}") from e
    if values["data.channels"] not in (1, 3):
        raise ConfigError(f"{where.get('data.channels', 'data.channels')}: channels must be 1 or 3.")


def parse_config(
    text: str = "",
    overrides: Iterable[str] = (),
    seed: int | None = None,
    env: Mapping[str, str] | None = None,
) -> RunConfig:
    """
    Resolves a configuration.

    Args:
        text: the user file, `key=value` lines, `#` comments.
        overrides: `key=value` strings applied after the file (`--set`).
        seed: a seed given on the command line; beats the file.
        env: where to look for `NOVA_SEED` when no seed is given otherwise.

    Returns:
        the resolved configuration.
    """
    values = read_defaults()
    explicit: set[str] = set()
    where: dict[str, str] = {}
    entries = [(f"line {i}", line) for i, line in enumerate(text.splitlines(), start=1)]
    entries += [(f"--set {o}", o) for o in overrides]
    for label, line in entries:
        parts = _split_line(line, label)
        if parts is None:
            continue
        key, raw = parts
        if key not in KEYS:
            raise ConfigError(f"{label}: unknown key {key!r}.")
        try:
            values[key] = KEYS[key].read(raw)
        except ValueError as e:
            raise ConfigError(f"{label}: bad value for {key}: {e}.") from e
        explicit.add(key)
        where[key] = label
    if seed is not None:
        values["seed"] = KEYS["seed"].read(str(seed))
        explicit.add("seed")
    elif "seed" not in explicit:
        env = os.environ if env is None else env
        if env.get(SEED_ENV):
            try:
                values["seed"] = KEYS["seed"].read(env[SEED_ENV])
            except ValueError as e:
                raise ConfigError(f"{SEED_ENV}: {e}.") from e
            explicit.add("seed")
    _check(values, where)
    return RunConfig(values, frozenset(explicit))


def load_config(
    filename: str | Path | None,
    overrides: Iterable[str] = (),
    seed: int | None = None,
) -> RunConfig:
    """Reads a config file (or none) and resolves it."""
    text = ""
    if filename is not None:
        try:
            text = Path(filename).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read {filename}: {e.strerror}.") from e
        except UnicodeDecodeError as e:
            raise ConfigError(f"{filename} is not UTF-8 text.") from e
    return parse_config(text, overrides, seed)
