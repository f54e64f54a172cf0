"""Point-cloud domain types and bit-exact binary interchange.

Three on-disk formats are supported:

* scan (``.bin``): consecutive little-endian float32 quadruples
  ``(x, y, z, reflectance)``, one per point, in scan order;
* labels (``.label``): one little-endian uint32 per point, semantic class in
  the low 16 bits (instance id, when present, occupies the high 16);
* matrix (``SELMATv1``): 8-byte magic, uint32 rows, uint32 cols, then
  ``rows * cols`` little-endian float32 values row-major.  Used for per-point
  feature matrices and for the logit matrix of each stochastic forward pass.

Row ``k`` of any matrix always refers to point ``k`` of its companion scan;
no reader reorders points.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, DataError, FormatError

MATRIX_MAGIC = b"SELMATv1"
POINT_RECORD_BYTES = 16
LABEL_RECORD_BYTES = 4
SEMANTIC_MASK = 0xFFFF


@dataclass(frozen=True)
class Point:
    """A single LiDAR return: position in meters, reflectance in [0, 1]."""

    x: float
    y: float
    z: float
    r: float


@dataclass
class PointCloud:
    """One scan held as an (N, 4) float32 array of x, y, z, reflectance rows."""

    points: np.ndarray
    labels: np.ndarray | None = None
    cloud_id: str = ""

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ValueError(f"points must have shape (N, 4), got {pts.shape}")
        bad = np.flatnonzero(~np.isfinite(pts).all(axis=1))
        if bad.size:
            raise DataError(f"non-finite point at index {int(bad[0])}")
        self.points = pts
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (len(pts),):
                raise ConsistencyError(
                    f"{len(lab)} labels for {len(pts)} points in cloud "
                    f"{self.cloud_id!r}"
                )
            if lab.size and int(lab.min()) < 0:
                raise DataError("negative class id in labels")
            self.labels = lab

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def reflectance(self) -> np.ndarray:
        return self.points[:, 3]

    def point(self, k: int) -> Point:
        x, y, z, r = (float(v) for v in self.points[k])
        return Point(x, y, z, r)


@dataclass
class LogitEnsemble:
    """T stochastic logit passes plus their mean and per-point argmax labels.

    ``hypothetical_labels[k]`` is the argmax class of ``mean_logits[k]``;
    ties resolve to the smallest class index.
    """

    passes: np.ndarray  # (T, N, C)
    mean_logits: np.ndarray  # (N, C)
    hypothetical_labels: np.ndarray  # (N,)

    def __post_init__(self) -> None:
        if self.passes.ndim != 3 or self.passes.shape[0] < 1:
            raise ValueError(f"passes must be (T>=1, N, C), got {self.passes.shape}")
        if self.mean_logits.shape != self.passes.shape[1:]:
            raise ConsistencyError("mean_logits shape does not match passes")
        if self.hypothetical_labels.shape != (self.passes.shape[1],):
            raise ConsistencyError("hypothetical_labels length does not match passes")

    @classmethod
    def from_passes(cls, passes: np.ndarray) -> "LogitEnsemble":
        passes = np.asarray(passes, dtype=np.float64)
        if passes.ndim != 3:
            raise ValueError(f"passes must be (T, N, C), got {passes.shape}")
        mean = passes.mean(axis=0)
        # np.argmax returns the first maximum, i.e. the smallest class index.
        labels = np.argmax(mean, axis=1).astype(np.int64)
        return cls(passes=passes, mean_logits=mean, hypothetical_labels=labels)

    @property
    def num_passes(self) -> int:
        return self.passes.shape[0]

    @property
    def num_points(self) -> int:
        return self.passes.shape[1]

    @property
    def num_classes(self) -> int:
        return self.passes.shape[2]


def read_cloud_bin(path: str | Path, cloud_id: str | None = None) -> PointCloud:
    """Load a raw scan file (little-endian f32 x, y, z, reflectance per point)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % POINT_RECORD_BYTES:
        raise FormatError(
            f"{path}: size {len(raw)} is not a multiple of {POINT_RECORD_BYTES}"
        )
    pts = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    bad = np.flatnonzero(~np.isfinite(pts).all(axis=1))
    if bad.size:
        raise DataError(f"{path}: non-finite value at point index {int(bad[0])}")
    return PointCloud(points=pts.copy(), cloud_id=cloud_id or path.stem)


def write_cloud_bin(cloud: PointCloud, path: str | Path) -> None:
    Path(path).write_bytes(np.ascontiguousarray(cloud.points, dtype="<f4").tobytes())


def read_labels(path: str | Path, mask_low16: bool = True) -> np.ndarray:
    """Load per-point class ids (one little-endian uint32 per point).

    With ``mask_low16`` each value is masked to its low 16 bits, dropping any
    instance id stored in the high half.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % LABEL_RECORD_BYTES:
        raise FormatError(
            f"{path}: size {len(raw)} is not a multiple of {LABEL_RECORD_BYTES}"
        )
    values = np.frombuffer(raw, dtype="<u4")
    if mask_low16:
        values = values & SEMANTIC_MASK
    return values.astype(np.int64)


def write_labels(
    labels: np.ndarray, path: str | Path, upper_bits: np.ndarray | None = None
) -> None:
    """Write class ids as uint32 records, optionally packing ids into the high 16 bits."""
    values = np.asarray(labels, dtype=np.uint32)
    if upper_bits is not None:
        values = values | (np.asarray(upper_bits, dtype=np.uint32) << 16)
    Path(path).write_bytes(values.astype("<u4").tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    """Load a SELMATv1 container into an (rows, cols) float32 array."""
    path = Path(path)
    raw = path.read_bytes()
    header_len = len(MATRIX_MAGIC) + 8
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[: len(MATRIX_MAGIC)] != MATRIX_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:len(MATRIX_MAGIC)]!r}")
    rows, cols = struct.unpack("<II", raw[len(MATRIX_MAGIC) : header_len])
    expected = header_len + 4 * rows * cols
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload is {len(raw) - header_len} bytes, "
            f"expected {4 * rows * cols} for {rows}x{cols}"
        )
    mat = np.frombuffer(raw, dtype="<f4", offset=header_len).reshape(rows, cols)
    if not np.isfinite(mat).all():
        k = int(np.flatnonzero(~np.isfinite(mat).ravel())[0])
        raise DataError(f"{path}: non-finite value at row {k // cols} col {k % cols}")
    return mat.copy()


def write_matrix(mat: np.ndarray, path: str | Path) -> None:
    mat = np.ascontiguousarray(mat, dtype="<f4")
    if mat.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {mat.shape}")
    rows, cols = mat.shape
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<II", rows, cols))
        fh.write(mat.tobytes())


def check_labels_in_range(labels: np.ndarray, num_classes: int) -> None:
    if labels.size and int(labels.max()) >= num_classes:
        raise DataError(
            f"label {int(labels.max())} out of range for {num_classes} classes"
        )


def check_row_count(name: str, rows: int, cloud: PointCloud) -> None:
    """Reject companion matrices whose row count disagrees with the cloud."""
    if rows != len(cloud):
        raise ConsistencyError(
            f"{name} has {rows} rows but cloud {cloud.cloud_id!r} has "
            f"{len(cloud)} points"
        )
