"""
Atomically write a file by writing to a temporary file in the same
directory and replacing the destination, and hash files for manifests.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from pathlib import Path

import hashlib
import os
import tempfile

from nova_edit.core import DataError


def hash_file(filepath: str | Path):
    """
    Compute a hash of the content of the given filepath
    """
    with open(filepath, "rb") as f:
        file_hash = hashlib.blake2b()
        chunk: bytes = f.read(8192)
        while chunk:
            file_hash.update(chunk)
            chunk = f.read(8192)
        return file_hash


def digest_tree(root: str | Path) -> dict[str, str]:
    """
    Hex digests of every regular file below `root`, keyed by their
    POSIX path relative to `root`.
    """
    root = Path(root)
    return {
        p.relative_to(root).as_posix(): hash_file(p).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class AtomicWrite:
    """
    Context manager yielding a temporary file object; on success the
    temporary file replaces `filename`, on failure it is removed and the
    destination is left untouched.
    """

    def __init__(self, filename: str | Path, mode: str = "w"):
        self.filename = Path(filename)
        self.mode = mode
        self.tmp = None
        if not self.filename.parent.is_dir():
            raise DataError(f"Cannot write {self.filename}: no such directory.")

    def __enter__(self):
        encoding = None if "b" in self.mode else "utf-8"
        try:
            self.tmp = tempfile.NamedTemporaryFile(
                mode=self.mode,
                dir=self.filename.parent,
                delete=False,
                encoding=encoding,
                prefix=f".{self.filename.name}.",
            )
        except OSError as e:
            raise DataError(f"Cannot write {self.filename}: {e.strerror}.") from e
        return self.tmp

    def __exit__(self, typ, value, traceback):
        assert self.tmp is not None
        self.tmp.close()
        if typ is None:
            os.replace(self.tmp.name, self.filename)
        else:
            Path(self.tmp.name).unlink(missing_ok=True)
        return False
