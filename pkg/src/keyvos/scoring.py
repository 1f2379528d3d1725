"""Pairwise association scores between tracked instances and candidates.

Four cues are combined per (instance, candidate) cell: mask overlap, distance
to the instance's predicted box, nearest-neighbour appearance distance and the
appearance score relative to the best instance for that candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .datamodel import BoxVector, CandidateProposal, RleMask, mask_iou
from .errors import EmptyPool

TRAJ_METRICS = ("distance", "dot")


@dataclass(frozen=True)
class ScoreWeights:
    w_iou: float = 0.12
    w_traj: float = 0.575
    w_reid: float = 0.3
    w_rel: float = 0.0065
    alpha_traj: Optional[float] = None  # None: half the frame diagonal
    alpha_reid: float = 1.0

    def __post_init__(self):
        for name in ("w_iou", "w_traj", "w_reid", "w_rel"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be a finite non-negative number, got {value}")
        if self.alpha_traj is not None and not self.alpha_traj > 0:
            raise ValueError(f"alpha_traj must be positive, got {self.alpha_traj}")
        if not self.alpha_reid > 0:
            raise ValueError(f"alpha_reid must be positive, got {self.alpha_reid}")

    @property
    def max_total(self) -> float:
        return self.w_iou + self.w_traj + self.w_reid + self.w_rel

    def resolved(self, frame_size) -> "ScoreWeights":
        """Fill in the default trajectory normalizer for a (width, height) frame."""
        if self.alpha_traj is not None:
            return self
        width, height = frame_size
        return replace(self, alpha_traj=0.5 * math.hypot(width, height))


def _clamped_similarity(distance, alpha):
    return 1.0 - np.minimum(np.maximum(distance, 0.0) / alpha, 1.0)


def score_traj(predicted: BoxVector, candidate: BoxVector, alpha_traj: float, metric: str = "distance") -> float:
    """1 - min(D / alpha_traj, 1) where D compares the two box vectors.

    ``metric="distance"`` uses the Euclidean norm of the difference;
    ``metric="dot"`` uses the raw inner product of the two vectors.
    """
    p, c = predicted.as_array(), candidate.as_array()
    if metric == "distance":
        d = float(np.linalg.norm(p - c))
    elif metric == "dot":
        d = float(p @ c)
    else:
        raise ValueError(f"unknown trajectory metric {metric!r}")
    return float(_clamped_similarity(d, alpha_traj))


def score_reid(descriptor_pool, r_n, alpha_reid: float) -> float:
    pool = np.asarray(descriptor_pool, dtype=float)
    if pool.size == 0:
        raise EmptyPool("instance has no positive descriptors")
    pool = pool.reshape(len(pool), -1)
    nearest = np.linalg.norm(pool - np.asarray(r_n, dtype=float), axis=1).min()
    return float(_clamped_similarity(nearest, alpha_reid))


def score_rel(reid_column) -> np.ndarray:
    """Divide a column of appearance scores by its maximum (0/0 is 0)."""
    col = np.asarray(reid_column, dtype=float)
    peak = col.max() if col.size else 0.0
    if peak <= 0:
        return np.zeros_like(col)
    return col / peak


def score_total(s_iou, s_traj, s_reid, s_rel, weights: ScoreWeights):
    return (
        weights.w_iou * s_iou
        + weights.w_traj * s_traj
        + weights.w_reid * s_reid
        + weights.w_rel * s_rel
    )


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Scores for one frame: rows are instances, columns candidates."""

    instance_ids: tuple
    iou: np.ndarray
    traj: np.ndarray
    reid: np.ndarray
    rel: np.ndarray
    total: np.ndarray

    @property
    def shape(self) -> tuple:
        return self.total.shape

    @classmethod
    def from_totals(cls, total, instance_ids=None) -> "ScoreMatrix":
        """Matrix carrying only totals; handy for exercising assignment alone."""
        total = np.atleast_2d(np.asarray(total, dtype=float))
        if instance_ids is None:
            instance_ids = tuple(range(1, total.shape[0] + 1))
        zeros = np.zeros_like(total)
        return cls(tuple(instance_ids), zeros, zeros, zeros, zeros, total)


def build_score_matrix(
    instances: Sequence,
    candidates: Sequence[CandidateProposal],
    instance_masks: Mapping[int, Optional[RleMask]],
    weights: ScoreWeights,
    frame_index: int,
    traj_metric: str = "distance",
) -> ScoreMatrix:
    """Fill every (instance, candidate) cell for one frame.

    ``instance_masks`` maps instance id to that instance's mask in the current
    frame (its propagated mask); a missing or None entry falls back to the
    instance's last assigned mask.
    """
    from .pool import predict_box

    L, N = len(instances), len(candidates)
    if weights.alpha_traj is None:
        raise ValueError("alpha_traj must be resolved before scoring")
    ids = tuple(inst.id for inst in instances)
    if L == 0 or N == 0:
        empty = np.zeros((L, N))
        return ScoreMatrix(ids, empty, empty.copy(), empty.copy(), empty.copy(), empty.copy())

    iou = np.zeros((L, N))
    for i, inst in enumerate(instances):
        ref = instance_masks.get(inst.id)
        if ref is None:
            ref = inst.last_mask
        for j, cand in enumerate(candidates):
            iou[i, j] = mask_iou(ref, cand.mask)

    predicted = np.array([predict_box(inst, frame_index).as_array() for inst in instances])
    boxes = np.array([c.box_vector.as_array() for c in candidates])
    if traj_metric == "distance":
        dist = np.linalg.norm(predicted[:, None, :] - boxes[None, :, :], axis=2)
    elif traj_metric == "dot":
        dist = predicted @ boxes.T
    else:
        raise ValueError(f"unknown trajectory metric {traj_metric!r}")
    traj = _clamped_similarity(dist, weights.alpha_traj)

    descs = np.array([c.descriptor_array for c in candidates])
    reid = np.zeros((L, N))
    for i, inst in enumerate(instances):
        pool = inst.descriptor_matrix
        if pool.size == 0:
            raise EmptyPool(f"instance {inst.id} has no positive descriptors")
        nearest = np.linalg.norm(pool[:, None, :] - descs[None, :, :], axis=2).min(axis=0)
        reid[i] = _clamped_similarity(nearest, weights.alpha_reid)

    peak = reid.max(axis=0)
    rel = np.divide(reid, peak, out=np.zeros_like(reid), where=peak > 0)
    total = score_total(iou, traj, reid, rel, weights)
    return ScoreMatrix(ids, iou, traj, reid, rel, total)
