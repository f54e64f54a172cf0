"""Model-facing boundary: per-point features and stochastic logit passes.

Two feature sources implement the same ``provide(cloud)`` interface: a
file-backed provider that loads a SELMATv1 matrix written by an external
segmentation model, and a mock geometric provider used by the built-in
prototype classifier.  Uncertainty comes from repeated forward passes with a
dropout-style feature mask, averaged into a :class:`~voxal.cloud.LogitEnsemble`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cloud import LogitEnsemble, PointCloud, check_row_count, read_matrix
from .errors import ConsistencyError, ModelError

UNDEFINED_LOGIT = -1.0e9


@dataclass(frozen=True)
class ModelConfig:
    """Knobs for the stochastic forward passes of the mock classifier."""

    num_passes: int = 5  # T
    dropout_rate: float = 0.1  # p
    feature_dim: int = 16  # D
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_passes < 1:
            raise ValueError("num_passes must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")


class MockFeatureProvider:
    """Deterministic geometric features computed from the points themselves.

    Feature layout: min-max-normalized x, y, z (3 dims), reflectance (1 dim),
    then a seeded random linear projection of the normalized position filling
    the remaining dims.  With ``feature_dim == 4`` the projection is absent.
    """

    def __init__(self, feature_dim: int = 16, seed: int = 0) -> None:
        if feature_dim < 4:
            raise ValueError("mock features need feature_dim >= 4 (xyz + reflectance)")
        self.feature_dim = feature_dim
        self.seed = seed

    def provide(self, cloud: PointCloud) -> np.ndarray:
        xyz = cloud.xyz.astype(np.float64)
        lo = xyz.min(axis=0) if len(xyz) else np.zeros(3)
        span = (xyz.max(axis=0) - lo) if len(xyz) else np.ones(3)
        normed = np.where(span > 0, (xyz - lo) / np.where(span > 0, span, 1.0), 0.5)
        columns = [normed, cloud.reflectance.astype(np.float64)[:, None]]
        extra = self.feature_dim - 4
        if extra > 0:
            rng = np.random.default_rng(self.seed)
            projection = rng.standard_normal((3, extra))
            columns.append(normed @ projection)
        return np.hstack(columns)


class FileFeatureProvider:
    """Features loaded from a SELMATv1 matrix produced by an external model."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)

    def provide(self, cloud: PointCloud) -> np.ndarray:
        mat = read_matrix(self.path)
        check_row_count(f"feature matrix {self.path}", mat.shape[0], cloud)
        return mat


@dataclass
class PrototypeModel:
    """Nearest-prototype classifier over per-point features.

    A class is defined iff at least one labeled point of that class was seen;
    undefined classes score the fixed large-negative sentinel.
    """

    prototypes: np.ndarray  # (C, D)
    counts: np.ndarray  # (C,)

    @property
    def defined(self) -> np.ndarray:
        return self.counts > 0

    @property
    def num_classes(self) -> int:
        return len(self.counts)


def fit_prototypes(
    features: np.ndarray,
    labeled_indices: Iterable[int],
    labels: np.ndarray,
    num_classes: int,
) -> PrototypeModel:
    """Per-class mean feature over the labeled points; empty classes stay undefined."""
    idx = np.asarray(sorted(labeled_indices), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("labeled_indices must be nonempty")
    feats = np.asarray(features, dtype=np.float64)[idx]
    labs = np.asarray(labels, dtype=np.int64)[idx]
    counts = np.bincount(labs, minlength=num_classes).astype(np.int64)
    sums = np.zeros((num_classes, feats.shape[1]))
    np.add.at(sums, labs, feats)
    prototypes = np.zeros_like(sums)
    nonzero = counts > 0
    prototypes[nonzero] = sums[nonzero] / counts[nonzero, None]
    return PrototypeModel(prototypes=prototypes, counts=counts)


def _pass_logits(
    model: PrototypeModel, features: np.ndarray, mask_sq: np.ndarray
) -> np.ndarray:
    """Logits of one pass: negative squared masked distance to each prototype."""
    logits = np.full((len(features), model.num_classes), UNDEFINED_LOGIT)
    for c in np.flatnonzero(model.defined):
        diff = features - model.prototypes[c]
        logits[:, c] = -((diff * diff) @ mask_sq)
    return logits


def _seed_key(seed, extra: int) -> list[int]:
    if isinstance(seed, (int, np.integer)):
        return [int(seed), extra]
    return [int(s) for s in seed] + [extra]


def mc_forward(
    model: PrototypeModel,
    features: np.ndarray,
    config: ModelConfig,
    seed: int | Sequence[int] | None = None,
) -> LogitEnsemble:
    """Run T dropout-masked forward passes and assemble the averaged ensemble.

    Each pass draws one Bernoulli(1 - p) keep mask over the feature dims,
    shared by all points of the pass and rescaled by 1 / (1 - p); the mask
    sequence depends only on (seed, pass index), so results are independent
    of evaluation order.
    """
    if not model.defined.any():
        raise ModelError("no class prototypes are defined")
    feats = np.asarray(features, dtype=np.float64)
    if feats.shape[1] != model.prototypes.shape[1]:
        raise ConsistencyError(
            f"features have dim {feats.shape[1]} but prototypes have "
            f"dim {model.prototypes.shape[1]}"
        )
    base = config.seed if seed is None else seed
    keep_scale = 1.0 / (1.0 - config.dropout_rate)
    passes = np.empty((config.num_passes, len(feats), model.num_classes))
    for t in range(config.num_passes):
        rng = np.random.default_rng(_seed_key(base, t))
        keep = rng.random(feats.shape[1]) >= config.dropout_rate
        mask_sq = (keep * keep_scale) ** 2
        passes[t] = _pass_logits(model, feats, mask_sq)
    return LogitEnsemble.from_passes(passes)


def predict_labels(model: PrototypeModel, features: np.ndarray) -> np.ndarray:
    """Dropout-free argmax prediction, used for held-out evaluation."""
    if not model.defined.any():
        raise ModelError("no class prototypes are defined")
    feats = np.asarray(features, dtype=np.float64)
    logits = _pass_logits(model, feats, np.ones(feats.shape[1]))
    return np.argmax(logits, axis=1).astype(np.int64)


def ensemble_from_files(
    paths: Sequence[str | Path], cloud: PointCloud | None = None
) -> LogitEnsemble:
    """Assemble an ensemble from one SELMATv1 logit matrix per pass."""
    if not paths:
        raise ValueError("at least one logit file is required")
    mats = []
    for path in paths:
        mat = read_matrix(path).astype(np.float64)
        if mats and mat.shape != mats[0].shape:
            raise ConsistencyError(
                f"logit pass {path} has shape {mat.shape}, "
                f"expected {mats[0].shape}"
            )
        if cloud is not None:
            check_row_count(f"logit matrix {path}", mat.shape[0], cloud)
        mats.append(mat)
    return LogitEnsemble.from_passes(np.stack(mats))
