"""Dense float64 tensor values and their binary snapshot format.

Tensors are immutable once constructed (the backing array is marked
read-only), so they can be shared freely across evaluation workers.  All
exposed constructors reject non-finite elements.

Snapshot wire format (little-endian), used for checkpoints and inline
manifest frames::

    b"SPBT" | version u16 | ndim u16 | dims ndim*u64 | payload float64[]
"""

from __future__ import annotations

import io
import struct
from typing import BinaryIO, Iterable

import numpy as np

from .errors import DimensionError, InputError, SnapshotError

SNAPSHOT_MAGIC = b"SPBT"
SNAPSHOT_VERSION = 1


class Tensor:
    """Immutable dense array of 64-bit reals, row-major."""

    __slots__ = ("_arr",)

    def __init__(self, values, shape: Iterable[int] | None = None):
        arr = np.array(values, dtype=np.float64, order="C")
        if shape is not None:
            shape = tuple(shape)
            if arr.size != int(np.prod(shape, dtype=np.int64)):
                raise DimensionError(f"cannot view {arr.size} elements as shape {shape}")
            arr = arr.reshape(shape)
        if not np.isfinite(arr).all():
            raise InputError("tensor elements must be finite")
        arr.flags.writeable = False
        self._arr = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # fast path for freshly computed arrays owned by the caller
        if arr.dtype != np.float64 or not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise InputError("tensor elements must be finite")
        obj = object.__new__(cls)
        arr.flags.writeable = False
        obj._arr = arr
        return obj

    @classmethod
    def zeros(cls, shape: Iterable[int]) -> "Tensor":
        return cls._wrap(np.zeros(tuple(shape)))

    @classmethod
    def full(cls, shape: Iterable[int], value: float) -> "Tensor":
        return cls._wrap(np.full(tuple(shape), float(value)))

    @property
    def shape(self) -> tuple[int, ...]:
        return self._arr.shape

    @property
    def ndim(self) -> int:
        return self._arr.ndim

    @property
    def size(self) -> int:
        return self._arr.size

    @property
    def array(self) -> np.ndarray:
        """Read-only view of the backing array."""
        return self._arr

    @property
    def data(self) -> np.ndarray:
        """Read-only flat (row-major) view of the elements."""
        return self._arr.reshape(-1)

    def reshape(self, shape: Iterable[int]) -> "Tensor":
        shape = tuple(shape)
        if self._arr.size != int(np.prod(shape, dtype=np.int64)):
            raise DimensionError(f"cannot view {self._arr.size} elements as shape {shape}")
        obj = object.__new__(Tensor)
        obj._arr = self._arr.reshape(shape)
        return obj

    def item(self) -> float:
        if self._arr.size != 1:
            raise DimensionError(f"item() needs exactly one element, tensor has {self._arr.size}")
        return float(self._arr.reshape(-1)[0])

    def tobytes(self) -> bytes:
        return self._arr.astype("<f8", copy=False).tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._arr, other._arr)

    __hash__ = None  # mutable-by-value semantics for equality

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def snapshot_bytes(t: Tensor) -> bytes:
    """Serialize a tensor to snapshot wire format."""
    dims = t.shape
    header = SNAPSHOT_MAGIC + struct.pack("<HH", SNAPSHOT_VERSION, len(dims))
    header += struct.pack(f"<{len(dims)}Q", *dims)
    return header + t.tobytes()


def tensor_from_snapshot_bytes(raw: bytes) -> Tensor:
    """Parse snapshot wire format back into a tensor."""
    return read_snapshot(io.BytesIO(raw))


def write_snapshot(t: Tensor, dest: str | BinaryIO) -> None:
    if hasattr(dest, "write"):
        dest.write(snapshot_bytes(t))
    else:
        with open(dest, "wb") as fh:
            fh.write(snapshot_bytes(t))


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise SnapshotError(f"truncated snapshot while reading {what}")
    return raw


def read_snapshot(src: str | BinaryIO) -> Tensor:
    if hasattr(src, "read"):
        return _read_snapshot_fh(src)
    with open(src, "rb") as fh:
        return _read_snapshot_fh(fh)


def _read_snapshot_fh(fh: BinaryIO) -> Tensor:
    magic = _read_exact(fh, 4, "magic")
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotError(f"bad snapshot magic {magic!r}, expected {SNAPSHOT_MAGIC!r}")
    version, ndim = struct.unpack("<HH", _read_exact(fh, 4, "header"))
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    dims = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim, "dims"))
    count = 1
    for d in dims:
        count *= d
    payload = _read_exact(fh, 8 * count, "payload")
    arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
    return Tensor._wrap(arr)
