"""
The `.nvt` tensor container.

A record is the magic `NVT1`, a little-endian u32 rank, `rank` u64 dims, and
the raw little-endian float32 payload. A single-tensor file holds one
record; a bundle holds several records back to back, their names being kept
in a sidecar manifest.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable
import struct

import numpy as np

from nova_edit import cst
from nova_edit.core import DataError
from nova_edit.file_updater import AtomicWrite

_LE_F32 = np.dtype("<f4")


class ContainerError(DataError):
    """When a `.nvt` file is truncated or malformed."""


@dataclass(frozen=True, eq=False)
class TensorBlob:
    """A named float32 tensor."""

    shape: tuple[int, ...]
    data: np.ndarray
    name: str = ""

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        data = np.ascontiguousarray(self.data, dtype=_LE_F32).reshape(-1)
        if any(d < 0 for d in shape) or data.size != int(np.prod(shape, dtype=np.int64)):
            raise ContainerError(
                f"Tensor {self.name!r}: {data.size} elements do not fill shape {shape}."
            )
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)

    @classmethod
    def of(cls, array: np.ndarray, name: str = "") -> TensorBlob:
        array = np.asarray(array)
        return cls(array.shape, array.reshape(-1), name)

    def array(self) -> np.ndarray:
        """The payload reshaped, as native float32."""
        return self.data.astype(np.float32).reshape(self.shape)

    def equals(self, other: TensorBlob) -> bool:
        """Bitwise equality of shape and payload."""
        return self.shape == other.shape and self.data.tobytes() == other.data.tobytes()


def write_record(f: BinaryIO, blob: TensorBlob) -> None:
    f.write(cst.NVT_MAGIC)
    f.write(struct.pack("<I", len(blob.shape)))
    f.write(struct.pack(f"<{len(blob.shape)}Q", *blob.shape))
    f.write(blob.data.tobytes())


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise ContainerError(f"Truncated container while reading {what}.")
    return buf


def read_record(f: BinaryIO, name: str = "") -> TensorBlob | None:
    """Reads the next record, or returns None at end of file."""
    magic = f.read(len(cst.NVT_MAGIC))
    if not magic:
        return None
    if magic != cst.NVT_MAGIC:
        raise ContainerError(f"Bad magic {magic!r}, expected {cst.NVT_MAGIC!r}.")
    (rank,) = struct.unpack("<I", _read_exact(f, 4, "rank"))
    shape = struct.unpack(f"<{rank}Q", _read_exact(f, 8 * rank, "dims"))
    count = int(np.prod(shape, dtype=np.int64))
    payload = _read_exact(f, 4 * count, "payload")
    return TensorBlob(shape, np.frombuffer(payload, dtype=_LE_F32), name)


def save_blobs(path: str | Path, blobs: Iterable[TensorBlob]) -> None:
    """Writes one or more records atomically."""
    with AtomicWrite(path, mode="wb") as f:
        for blob in blobs:
            write_record(f, blob)


def load_blobs(path: str | Path, names: list[str] | None = None) -> list[TensorBlob]:
    """Reads every record of a file, naming them from `names` when given."""
    try:
        with open(path, "rb") as f:
            blobs: list[TensorBlob] = []
            while True:
                name = names[len(blobs)] if names and len(blobs) < len(names) else ""
                blob = read_record(f, name)
                if blob is None:
                    break
                blobs.append(blob)
    except OSError as e:
        raise ContainerError(f"Cannot read {path}: {e.strerror}.") from e
    if names is not None and len(names) != len(blobs):
        raise ContainerError(
            f"{path} holds {len(blobs)} tensors but {len(names)} names were given."
        )
    return blobs


def save_tensor(path: str | Path, array: np.ndarray) -> None:
    save_blobs(path, [TensorBlob.of(array)])


def load_tensor(path: str | Path) -> np.ndarray:
    blobs = load_blobs(path)
    if len(blobs) != 1:
        raise ContainerError(f"{path} holds {len(blobs)} tensors, expected one.")
    return blobs[0].array()
