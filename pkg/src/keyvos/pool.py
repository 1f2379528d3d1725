"""Object pool: per-frame ID assignment, instance updates and ID spawning."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .datamodel import (
    PROPAGATED,
    BoxVector,
    CandidateProposal,
    RleMask,
    SaliencyMap,
    label_map_masks,
    mask_bbox,
    mask_iou,
    mask_mean_saliency,
    translate_mask,
)
from .scoring import ScoreMatrix, ScoreWeights


class Phase(str, enum.Enum):
    GROWING = "growing"
    LOCKED = "locked"


@dataclass
class TrackedInstance:
    id: int
    descriptor_pool: List[tuple]
    bbox_history: List[tuple]  # (frame_index, BoxVector), strictly increasing frames
    last_mask: RleMask
    frequency: int = 1
    saliency_sum: float = 0.0
    created_at: int = 0
    _descriptor_matrix: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def descriptor_matrix(self) -> np.ndarray:
        if self._descriptor_matrix is None or len(self._descriptor_matrix) != len(self.descriptor_pool):
            self._descriptor_matrix = np.asarray(self.descriptor_pool, dtype=float)
        return self._descriptor_matrix

    @property
    def last_frame(self) -> int:
        return self.bbox_history[-1][0]

    def observe(self, frame_index: int, candidate: CandidateProposal, saliency: float) -> None:
        if frame_index <= self.last_frame:
            raise ValueError(f"instance {self.id} already updated at frame {self.last_frame}")
        self.descriptor_pool.append(candidate.descriptor)
        self.bbox_history.append((frame_index, candidate.box_vector))
        self.last_mask = candidate.mask
        self.frequency += 1
        self.saliency_sum += saliency


@dataclass
class PoolConfig:
    tau1: float = 0.55
    tau2: float = 0.35
    horizon: int = 10  # M: frames during which new IDs may be added
    max_instances: int = 20  # K
    spawn_objectness_min: float = 0.7
    spawn_overlap_max: float = 0.2
    propagated_objectness: float = 0.5
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    traj_metric: str = "distance"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon (M) must be at least 1")
        if self.max_instances < 1:
            raise ValueError("max_instances (K) must be at least 1")
        for name in ("tau1", "tau2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        for name in ("spawn_objectness_min", "spawn_overlap_max", "propagated_objectness"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass
class ObjectPool:
    instances: List[TrackedInstance] = field(default_factory=list)
    next_id: int = 1
    phase: Phase = Phase.GROWING

    @property
    def ids(self) -> List[int]:
        return [inst.id for inst in self.instances]

    def get(self, instance_id: int) -> TrackedInstance:
        for inst in self.instances:
            if inst.id == instance_id:
                return inst
        raise KeyError(instance_id)

    def __len__(self):
        return len(self.instances)

    def spawn(self, frame_index: int, candidate: CandidateProposal, saliency: float) -> TrackedInstance:
        inst = TrackedInstance(
            id=self.next_id,
            descriptor_pool=[candidate.descriptor],
            bbox_history=[(frame_index, candidate.box_vector)],
            last_mask=candidate.mask,
            frequency=1,
            saliency_sum=saliency,
            created_at=frame_index,
        )
        self.next_id += 1
        self.instances.append(inst)
        return inst

    def keep_only(self, keep_ids) -> List[int]:
        """Drop every instance not in ``keep_ids``; returns the removed ids."""
        keep = set(keep_ids)
        removed = [inst.id for inst in self.instances if inst.id not in keep]
        self.instances = [inst for inst in self.instances if inst.id in keep]
        return removed


@dataclass
class AssignmentSet:
    instance_to_candidate: Dict[int, Optional[int]]
    candidate_to_instance: List[Optional[int]]
    scores: Dict[int, float] = field(default_factory=dict)

    def matches(self) -> List[tuple]:
        """(instance_id, candidate_index, total_score), ordered by instance id."""
        return [
            (iid, j, self.scores[iid])
            for iid, j in sorted(self.instance_to_candidate.items())
            if j is not None
        ]

    def merged(self, other: "AssignmentSet") -> "AssignmentSet":
        inst = dict(self.instance_to_candidate)
        cand = list(self.candidate_to_instance)
        scores = dict(self.scores)
        for iid, j, s in other.matches():
            if inst.get(iid) is not None or cand[j] is not None:
                raise ValueError(f"conflicting assignment for instance {iid} / candidate {j}")
            inst[iid], cand[j], scores[iid] = j, iid, s
        return AssignmentSet(inst, cand, scores)


def predict_box(instance: TrackedInstance, target_frame: int) -> BoxVector:
    """Constant-velocity extrapolation of the box center; size from the last entry."""
    t_last, last = instance.bbox_history[-1]
    if len(instance.bbox_history) < 2:
        return last
    t_prev, prev = instance.bbox_history[-2]
    step = (target_frame - t_last) / (t_last - t_prev)
    return BoxVector(
        last.cx + (last.cx - prev.cx) * step,
        last.cy + (last.cy - prev.cy) * step,
        last.w,
        last.h,
    )


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


class TranslatePropagator:
    """Shift the last mask by the predicted motion of the box center."""

    name = "translate"

    def __call__(self, instance: TrackedInstance, target_frame: int, frame_size) -> Optional[RleMask]:
        last = instance.bbox_history[-1][1]
        pred = predict_box(instance, target_frame)
        dx = _round_half_up(pred.cx - last.cx)
        dy = _round_half_up(pred.cy - last.cy)
        if dx == 0 and dy == 0:
            return instance.last_mask
        return translate_mask(instance.last_mask, dx, dy)


class NoPropagator:
    """Never proposes a mask; IoU then falls back to the last assigned mask."""

    name = "none"

    def __call__(self, instance, target_frame, frame_size):
        return None


class GroundTruthPropagator:
    """Test oracle: returns the true current mask of the object the instance last covered best."""

    name = "ground_truth"

    def __init__(self, label_maps: Sequence[np.ndarray]):
        self._frames = [label_map_masks(lab) for lab in label_maps]

    def __call__(self, instance, target_frame, frame_size):
        prev = self._frames[instance.last_frame]
        if not prev:
            return None
        best = max(prev, key=lambda gid: (mask_iou(instance.last_mask, prev[gid]), -gid))
        if mask_iou(instance.last_mask, prev[best]) == 0:
            return None
        return self._frames[target_frame].get(best)


PROPAGATORS = {
    TranslatePropagator.name: TranslatePropagator,
    NoPropagator.name: NoPropagator,
    GroundTruthPropagator.name: GroundTruthPropagator,
}


def make_propagator(name: str, ground_truth=None) -> Callable:
    if name == GroundTruthPropagator.name:
        if ground_truth is None:
            raise ValueError("the ground_truth propagator needs ground-truth label maps")
        return GroundTruthPropagator(ground_truth)
    try:
        return PROPAGATORS[name]()
    except KeyError:
        raise ValueError(f"unknown propagator {name!r}; choose from {sorted(PROPAGATORS)}") from None


def propagate_mask(
    instance: TrackedInstance,
    target_frame: int,
    frame_size,
    propagator: Optional[Callable] = None,
    propagated_objectness: float = 0.5,
) -> Optional[CandidateProposal]:
    """Candidate carrying the instance's mask moved into ``target_frame``.

    Returns None when the propagator offers nothing or the mask left the frame.
    """
    propagator = propagator or TranslatePropagator()
    mask = propagator(instance, target_frame, frame_size)
    if mask is None or mask.area == 0:
        return None
    return CandidateProposal(
        frame_index=target_frame,
        bbox=mask_bbox(mask),
        mask=mask,
        objectness=propagated_objectness,
        descriptor=instance.descriptor_pool[-1],
        source=PROPAGATED,
        source_id=instance.id,
    )


def assign_ids(matrix: ScoreMatrix, tau: float, rows=None, cols=None) -> AssignmentSet:
    """Greedy one-to-one assignment: repeatedly bind the best remaining cell >= tau.

    Ties prefer the lower instance id, then the lower candidate index.
    ``rows``/``cols`` restrict which instance rows and candidate columns take part.
    """
    L, N = matrix.shape
    rows = range(L) if rows is None else rows
    cols = range(N) if cols is None else cols
    total = matrix.total
    ids = matrix.instance_ids
    cells = sorted(
        (-total[i, j], ids[i], j, i) for i in rows for j in cols if total[i, j] >= tau
    )
    inst_to_cand: Dict[int, Optional[int]] = {iid: None for iid in ids}
    cand_to_inst: List[Optional[int]] = [None] * N
    scores: Dict[int, float] = {}
    for neg, iid, j, _ in cells:
        if inst_to_cand[iid] is None and cand_to_inst[j] is None:
            inst_to_cand[iid] = j
            cand_to_inst[j] = iid
            scores[iid] = -neg
    return AssignmentSet(inst_to_cand, cand_to_inst, scores)


def assign_detector_first(
    matrix: ScoreMatrix,
    tau: float,
    candidates: Sequence[CandidateProposal],
    assign: Callable = assign_ids,
) -> AssignmentSet:
    """Bind detector candidates first, then offer propagated ones to still-unmatched instances."""
    detector_cols = [j for j, c in enumerate(candidates) if not c.is_propagated]
    propagated_cols = [j for j, c in enumerate(candidates) if c.is_propagated]
    first = assign(matrix, tau, cols=detector_cols)
    if not propagated_cols:
        return first
    free_rows = [
        i for i, iid in enumerate(matrix.instance_ids) if first.instance_to_candidate[iid] is None
    ]
    second = assign(matrix, tau, rows=free_rows, cols=propagated_cols)
    return first.merged(second)


def apply_assignments(
    pool: ObjectPool,
    assignments: AssignmentSet,
    candidates: Sequence[CandidateProposal],
    saliency_map: SaliencyMap,
    frame_index: int,
) -> ObjectPool:
    for iid, j, _ in assignments.matches():
        cand = candidates[j]
        pool.get(iid).observe(frame_index, cand, mask_mean_saliency(cand.mask, saliency_map))
    return pool


def spawn_new_ids(
    pool: ObjectPool,
    unassigned: Sequence[CandidateProposal],
    frame_index: int,
    config: PoolConfig,
    saliency_map: SaliencyMap,
    assigned_masks: Sequence[RleMask] = (),
) -> List[tuple]:
    """Register new IDs for confident, non-overlapping detector candidates.

    Returns ``(position in unassigned, new instance)`` pairs.

    On frame 0 objectness alone decides. Later, a candidate must also overlap
    every mask already bound this frame (including IDs spawned just before it)
    by less than ``spawn_overlap_max`` IoU.
    """
    if pool.phase is not Phase.GROWING:
        return []
    taken = list(assigned_masks)
    spawned = []
    for pos, cand in enumerate(unassigned):
        if cand.is_propagated or cand.objectness < config.spawn_objectness_min:
            continue
        if frame_index > 0 and any(mask_iou(cand.mask, m) >= config.spawn_overlap_max for m in taken):
            continue
        inst = pool.spawn(frame_index, cand, mask_mean_saliency(cand.mask, saliency_map))
        spawned.append((pos, inst))
        taken.append(cand.mask)
    return spawned
