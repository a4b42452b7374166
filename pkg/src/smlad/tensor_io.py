"""Dense-array containers and NPY file I/O.

Containers are frozen dataclasses wrapping read-only numpy arrays. Float data
keeps the dtype it was built with (float32 or float64) so that a write/read
cycle is bit-exact; compute code upcasts to float64 on its own.
"""
from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field

import numpy as np
from numpy.lib import format as npy_format

IGNORE = 255

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
INT_DTYPES = (np.dtype(np.uint8), np.dtype(np.uint16), np.dtype(np.int32))


class TensorError(ValueError):
    """Raised for malformed files and container invariant violations."""


class Stage(str, enum.Enum):
    MAX_LOGIT = "MaxLogit"
    SML = "SML"
    POST_BOUNDARY = "PostBoundary"
    POST_SMOOTHING = "PostSmoothing"
    MSP = "MSP"
    ENTROPY = "Entropy"
    ANOMALY = "Anomaly"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True, order="C")
    arr.setflags(write=False)
    return arr


def _as_float(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype not in FLOAT_DTYPES:
        if arr.dtype.kind in "biu":
            arr = arr.astype(np.float64)
        else:
            raise TensorError(f"unsupported float dtype {arr.dtype}")
    if not np.all(np.isfinite(arr)):
        raise TensorError("non-finite values in float data")
    return arr


def _as_int(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype.kind not in "iu":
        raise TensorError(f"expected integer data, got dtype {arr.dtype}")
    if arr.dtype not in INT_DTYPES:
        # Narrow wide ints (e.g. int64 from Python lists) to int32 when lossless.
        if arr.size and (arr.min() < np.iinfo(np.int32).min or arr.max() > np.iinfo(np.int32).max):
            raise TensorError("integer values out of int32 range")
        arr = arr.astype(np.int32)
    return arr


def _check_rank(arr: np.ndarray, rank: int, name: str) -> None:
    if arr.ndim != rank:
        raise TensorError(f"{name} expects rank {rank}, got shape {arr.shape}")
    if any(s < 1 for s in arr.shape):
        raise TensorError(f"{name} expects positive dimensions, got shape {arr.shape}")


@dataclass(frozen=True, eq=False)
class LogitVolume:
    """C x H x W pre-softmax network outputs."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_float(self.data)
        _check_rank(arr, 3, "LogitVolume")
        if arr.shape[0] < 2:
            raise TensorError("LogitVolume needs at least 2 classes")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def class_count(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1:]

    def __eq__(self, other):
        return isinstance(other, LogitVolume) and _array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class LabelMap:
    """H x W class indices. ``allow_ignore`` admits the IGNORE value (ground truth)."""

    data: np.ndarray
    class_count: int
    allow_ignore: bool = False

    def __post_init__(self):
        arr = _as_int(self.data)
        _check_rank(arr, 2, "LabelMap")
        if self.class_count < 1:
            raise TensorError("class_count must be positive")
        valid = (arr >= 0) & (arr < self.class_count)
        if self.allow_ignore:
            valid |= arr == IGNORE
        if not np.all(valid):
            bad = arr[~valid].ravel()[0]
            raise TensorError(f"label {int(bad)} outside [0, {self.class_count - 1}]")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        return (
            isinstance(other, LabelMap)
            and self.class_count == other.class_count
            and _array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """H x W real scores tagged with the pipeline stage that produced them."""

    data: np.ndarray
    stage: Stage = Stage.ANOMALY
    class_count: int | None = field(default=None)

    def __post_init__(self):
        arr = _as_float(self.data)
        _check_rank(arr, 2, "ScoreMap")
        stage = Stage(self.stage)
        if stage is Stage.MSP and (arr.min() < 0.0 or arr.max() > 1.0):
            raise TensorError("MSP scores must lie in [0, 1]")
        if stage is Stage.ENTROPY:
            upper = math.log(self.class_count) if self.class_count else math.inf
            if arr.min() < 0.0 or arr.max() > upper:
                raise TensorError("entropy scores must lie in [0, ln C]")
        object.__setattr__(self, "stage", stage)
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def with_data(self, data, stage: Stage | None = None) -> "ScoreMap":
        return ScoreMap(data, self.stage if stage is None else stage, self.class_count)

    def __eq__(self, other):
        return (
            isinstance(other, ScoreMap)
            and self.stage == other.stage
            and _array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class AnomalyMask:
    """H x W ground truth: 0 in-distribution, 1 anomaly, 255 void."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_int(self.data)
        _check_rank(arr, 2, "AnomalyMask")
        if not np.all((arr == 0) | (arr == 1) | (arr == IGNORE)):
            raise TensorError("AnomalyMask values must be 0, 1 or 255")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, AnomalyMask) and _array_equal(self.data, other.data)


def _array_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


Container = LogitVolume | LabelMap | ScoreMap | AnomalyMask


def write_tensor(t: Container, path: str | os.PathLike) -> None:
    """Write ``t.data`` as an NPY v1.0 file (little-endian, C order)."""
    arr = t.data
    arr = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
    with open(path, "wb") as fh:
        npy_format.write_array(fh, arr, version=(1, 0), allow_pickle=False)


def _read_array(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        try:
            version = npy_format.read_magic(fh)
            if version == (1, 0):
                shape, fortran, dtype = npy_format.read_array_header_1_0(fh)
            elif version == (2, 0):
                shape, fortran, dtype = npy_format.read_array_header_2_0(fh)
            else:
                raise TensorError(f"unsupported NPY version {version}")
        except (ValueError, EOFError) as exc:
            if isinstance(exc, TensorError):
                raise
            raise TensorError(f"malformed NPY header: {exc}") from exc
        if dtype.newbyteorder("=") not in FLOAT_DTYPES + INT_DTYPES:
            raise TensorError(f"unsupported dtype {dtype}")
        if len(shape) not in (2, 3):
            raise TensorError(f"unsupported rank {len(shape)}")
        count = int(np.prod(shape))
        payload = fh.read(count * dtype.itemsize)
        if len(payload) != count * dtype.itemsize:
            raise TensorError("truncated NPY payload")
    arr = np.frombuffer(payload, dtype=dtype)
    arr = arr.reshape(shape[::-1]).T if fortran else arr.reshape(shape)
    return np.ascontiguousarray(arr, dtype=dtype.newbyteorder("="))


def read_tensor(
    path: str | os.PathLike,
    kind: str | None = None,
    class_count: int | None = None,
    stage: Stage = Stage.ANOMALY,
) -> Container:
    """Read an NPY file into the matching container.

    3-D floats become a LogitVolume and 2-D floats a ScoreMap. 2-D integers
    need ``kind`` set to ``"labels"`` or ``"mask"``; labels infer
    ``class_count`` from the data when it is not given.
    """
    arr = _read_array(path)
    is_float = arr.dtype in FLOAT_DTYPES
    if arr.ndim == 3:
        if not is_float or kind not in (None, "logits"):
            raise TensorError("rank-3 files must be float logit volumes")
        return LogitVolume(arr)
    if is_float:
        if kind not in (None, "scores"):
            raise TensorError(f"float 2-D file cannot be read as {kind!r}")
        return ScoreMap(arr, stage, class_count)
    if kind == "mask":
        return AnomalyMask(arr)
    if kind in ("labels", "gt_labels"):
        if class_count is None:
            body = arr[arr != IGNORE]
            class_count = int(body.max()) + 1 if body.size else 1
        return LabelMap(arr, class_count, allow_ignore=kind == "gt_labels")
    raise TensorError("integer 2-D files need kind='labels', 'gt_labels' or 'mask'")
