"""Spatial hashing of scans into integer-coordinate voxels.

A point at position ``(x, y, z)`` falls into the cell
``(floor(x / s), floor(y / s), floor(z / s))`` for cell size ``s`` (floor
toward minus infinity, so negative coordinates round down).  Grid
construction first deduplicates near-coincident points at a fine resolution
(keeping the first point in scan order per fine cell), then groups the
survivors into cells at the working resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud
from .errors import ConsistencyError, DataError, DegenerateInputError

Coord = tuple[int, int, int]

DEFAULT_SELECT_SIZE = 0.25
DEFAULT_TRAIN_SIZE = 0.05


@dataclass(frozen=True)
class VoxelGridConfig:
    """Cell sizes in meters for selection, training, and point dedup."""

    lambda_select: float = DEFAULT_SELECT_SIZE
    lambda_train: float = DEFAULT_TRAIN_SIZE
    dedup_lambda: float | None = None  # defaults to lambda_train

    def __post_init__(self) -> None:
        if self.lambda_select <= 0 or self.lambda_train <= 0:
            raise ValueError("cell sizes must be strictly positive")
        if self.dedup_lambda is not None and self.dedup_lambda <= 0:
            raise ValueError("dedup_lambda must be strictly positive")
        if self.dedup > self.lambda_select:
            raise ValueError("dedup_lambda must not exceed lambda_select")

    @property
    def dedup(self) -> float:
        return self.dedup_lambda if self.dedup_lambda is not None else self.lambda_train


@dataclass
class Voxel:
    """One occupied cell: integer coordinate plus member point indices in scan order."""

    coord: Coord
    point_indices: np.ndarray

    def __len__(self) -> int:
        return len(self.point_indices)


@dataclass
class VoxelGrid:
    """All occupied cells of one cloud at a fixed cell size.

    ``voxels`` maps coordinates to voxels in lexicographic coordinate order;
    member indices across voxels partition the surviving (post-dedup) points.
    """

    cell_size: float
    voxels: dict[Coord, Voxel]
    cloud_id: str = ""
    surviving: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def num_voxels(self) -> int:
        return len(self.voxels)

    @property
    def num_points(self) -> int:
        return sum(len(v) for v in self.voxels.values())

    def coords(self) -> list[Coord]:
        return list(self.voxels.keys())


def voxel_coord(xyz, cell_size: float) -> Coord:
    """Cell coordinate of a single position; floors toward minus infinity."""
    if cell_size <= 0:
        raise ValueError("cell_size must be strictly positive")
    arr = np.asarray(xyz, dtype=np.float64)[:3]
    if not np.isfinite(arr).all():
        raise DataError(f"non-finite coordinate {arr}")
    return tuple(int(v) for v in np.floor(arr / cell_size))


def voxel_coords(xyz: np.ndarray, cell_size: float) -> np.ndarray:
    """Vectorized cell coordinates for an (N, 3) position array."""
    if cell_size <= 0:
        raise ValueError("cell_size must be strictly positive")
    return np.floor(np.asarray(xyz, dtype=np.float64) / cell_size).astype(np.int64)


def _group_by_cell(codes: np.ndarray, point_indices: np.ndarray) -> dict[Coord, np.ndarray]:
    """Group point indices by their integer cell codes.

    Keys come out in lexicographic order; within a group the original index
    order (scan order) is preserved.
    """
    if len(codes) == 0:
        return {}
    uniq, inverse = np.unique(codes, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse, minlength=len(uniq))
    groups = np.split(point_indices[order], np.cumsum(counts)[:-1])
    return {
        tuple(int(v) for v in uniq[g]): members for g, members in enumerate(groups)
    }


def dedup_indices(xyz: np.ndarray, dedup_size: float) -> np.ndarray:
    """Indices of points that survive dedup: first in scan order per fine cell."""
    codes = voxel_coords(xyz, dedup_size)
    if len(codes) == 0:
        return np.empty(0, dtype=np.int64)
    _, inverse = np.unique(codes, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    first = np.full(int(inverse.max()) + 1, len(codes), dtype=np.int64)
    np.minimum.at(first, inverse, np.arange(len(codes), dtype=np.int64))
    return np.sort(first)


def build_grid(
    cloud: PointCloud, cell_size: float, dedup_size: float | None = None
) -> VoxelGrid:
    """Deduplicate a cloud at ``dedup_size`` and bucket survivors at ``cell_size``."""
    if cell_size <= 0:
        raise ValueError("cell_size must be strictly positive")
    if dedup_size is None:
        dedup_size = DEFAULT_TRAIN_SIZE
    if dedup_size <= 0:
        raise ValueError("dedup_size must be strictly positive")
    survivors = dedup_indices(cloud.xyz, dedup_size)
    codes = voxel_coords(cloud.xyz[survivors], cell_size)
    groups = _group_by_cell(codes, survivors)
    voxels = {coord: Voxel(coord=coord, point_indices=members) for coord, members in groups.items()}
    return VoxelGrid(
        cell_size=cell_size, voxels=voxels, cloud_id=cloud.cloud_id, surviving=survivors
    )


def cell_members(cloud: PointCloud, cell_size: float) -> dict[Coord, np.ndarray]:
    """All original point indices per cell, with no dedup applied.

    Annotation labels every physical point inside a chosen cell, including
    points the dedup pass filtered out of the grid.
    """
    codes = voxel_coords(cloud.xyz, cell_size)
    return _group_by_cell(codes, np.arange(len(cloud), dtype=np.int64))


def multi_class_fraction(grid: VoxelGrid, labels: np.ndarray) -> float:
    """Fraction of voxels whose member points span two or more distinct labels."""
    if grid.num_voxels == 0:
        raise DegenerateInputError("multi-class fraction is undefined for an empty grid")
    labels = np.asarray(labels)
    mixed = 0
    for voxel in grid.voxels.values():
        if int(voxel.point_indices.max()) >= len(labels):
            raise ConsistencyError(
                f"labels cover {len(labels)} points but voxel {voxel.coord} "
                f"references index {int(voxel.point_indices.max())}"
            )
        member_labels = labels[voxel.point_indices]
        if len(np.unique(member_labels)) >= 2:
            mixed += 1
    return mixed / grid.num_voxels


def grid_summary_records(
    grid: VoxelGrid, labels: np.ndarray | None = None
) -> list[dict]:
    """Per-voxel records (coord, point count, distinct labels) for analytics dumps."""
    records = []
    for coord, voxel in grid.voxels.items():
        rec: dict = {"coord": list(coord), "points": len(voxel)}
        if labels is not None:
            rec["distinct_labels"] = int(len(np.unique(np.asarray(labels)[voxel.point_indices])))
        records.append(rec)
    return records
