"""
Run directories: every subcommand writes its resolved configuration to
`config.txt` and a `manifest.txt` of `key=value` lines recording how to run
it again and the blake2b digest of every output file.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO
import shlex
import sys

from nova_edit import _version
from nova_edit.config import RunConfig
from nova_edit.core import DataError
from nova_edit.file_updater import AtomicWrite, digest_tree
from nova_edit.misc import emph, paint

MANIFEST_NAME: str = "manifest.txt"
SNAPSHOT_NAME: str = "config.txt"
# Files of a run directory that are not outputs of the command itself.
BOOKKEEPING: set[str] = {MANIFEST_NAME, SNAPSHOT_NAME}


@dataclass
class RunManifest:
    command: str
    args: list[str]
    seed: int
    entries: dict[str, str] = field(default_factory=dict)
    digests: dict[str, str] = field(default_factory=dict)
    version: str = _version.VERSION

    def render(self) -> str:
        lines = [
            f"command={self.command}",
            f"args={shlex.join(self.args)}",
            f"version={self.version}",
            f"seed={self.seed}",
            f"config={SNAPSHOT_NAME}",
        ]
        lines += [f"{k}={v}" for k, v in self.entries.items()]
        lines += [f"digest.{name}={h}" for name, h in sorted(self.digests.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> RunManifest:
        raw: dict[str, str] = {}
        for line in text.splitlines():
            if line.strip():
                key, sep, value = line.partition("=")
                if not sep:
                    raise DataError(f"Malformed manifest line {line!r}.")
                raw[key] = value
        try:
            manifest = cls(
                command=raw.pop("command"),
                args=shlex.split(raw.pop("args")),
                seed=int(raw.pop("seed")),
                version=raw.pop("version"),
            )
        except (KeyError, ValueError) as e:
            raise DataError(f"Incomplete manifest: {e}.") from e
        raw.pop("config", None)
        for key, value in raw.items():
            if key.startswith("digest."):
                manifest.digests[key[len("digest."):]] = value
            else:
                manifest.entries[key] = value
        return manifest


def output_digests(run_dir: Path) -> dict[str, str]:
    return {
        name: h for name, h in digest_tree(run_dir).items() if name not in BOOKKEEPING
    }


def start_run(run_dir: str | Path, cfg: RunConfig) -> Path:
    """Creates the run directory and writes the configuration snapshot."""
    run_dir = Path(run_dir)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"Cannot create {run_dir}: {e.strerror}.") from e
    with AtomicWrite(run_dir / SNAPSHOT_NAME) as f:
        f.write(cfg.snapshot())
    return run_dir


def finish_run(
    run_dir: Path,
    command: str,
    args: list[str],
    cfg: RunConfig,
    entries: dict[str, object] | None = None,
) -> RunManifest:
    """Hashes the outputs and writes the manifest."""
    manifest = RunManifest(
        command=command,
        args=list(args),
        seed=cfg.seed,
        entries={k: str(v) for k, v in (entries or {}).items()},
        digests=output_digests(run_dir),
    )
    with AtomicWrite(run_dir / MANIFEST_NAME) as f:
        f.write(manifest.render())
    return manifest


def read_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        return RunManifest.parse(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DataError(f"Cannot read manifest {path}: {e.strerror}.") from e


def compare(
    old: RunManifest, new: RunManifest, out: TextIO = sys.stdout
) -> bool:
    """Prints, per output file, whether the two runs agree. True if all do."""
    same = True
    for name in sorted(set(old.digests) | set(new.digests)):
        a, b = old.digests.get(name), new.digests.get(name)
        if a == b:
            status = paint("identical", "green")
        elif a is None or b is None:
            status = paint("missing", "bold", "red")
            same = False
        else:
            status = paint("differs", "bold", "red")
            same = False
        print(f"{emph(name)}: {status}", file=out)
    return same
