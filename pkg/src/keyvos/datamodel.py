"""Core value types, the run-length mask codec and mask geometry.

Masks are stored as row-major run lengths that start with a (possibly empty)
background run, e.g. the 1x4 row ``0 1 1 0`` encodes to ``(1, 2, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, MalformedRle

DETECTOR = "detector"
PROPAGATED = "propagated"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixels, (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box extent must be positive, got w={self.w} h={self.h}")

    def to_vector(self) -> "BoxVector":
        return BoxVector(self.x + self.w / 2, self.y + self.h / 2, self.w, self.h)

    def clip(self, width: int, height: int) -> Optional["BoundingBox"]:
        """Intersect with the frame; None if nothing is left."""
        x0, y0 = max(self.x, 0), max(self.y, 0)
        x1, y1 = min(self.x + self.w, width), min(self.y + self.h, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class BoxVector:
    """Center-based box representation (cx, cy, w, h)."""

    cx: float
    cy: float
    w: float
    h: float

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=float)


@dataclass(frozen=True)
class RleMask:
    width: int
    height: int
    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)

    @cached_property
    def array(self) -> np.ndarray:
        """Decoded boolean grid of shape (height, width); read-only."""
        grid = rle_decode(self)
        grid.flags.writeable = False
        return grid

    @cached_property
    def area(self) -> int:
        return int(sum(self.counts[1::2]))

    @cached_property
    def extent(self) -> Optional[tuple]:
        """Inclusive (row0, row1, col0, col1) of the foreground, None if empty."""
        if self.area == 0:
            return None
        rows = np.flatnonzero(self.array.any(axis=1))
        cols = np.flatnonzero(self.array.any(axis=0))
        return int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1])

    def is_canonical(self) -> bool:
        """True when no run other than the leading one is zero."""
        return all(c > 0 for c in self.counts[1:])

    @classmethod
    def empty(cls, width: int, height: int) -> "RleMask":
        return cls(width, height, (width * height,))


def rle_encode(mask) -> RleMask:
    """Encode a 2-D binary grid into row-major run lengths."""
    grid = np.asarray(mask).astype(bool)
    if grid.ndim != 2 or grid.size == 0:
        raise ValueError("mask must be a non-empty 2-D grid")
    height, width = grid.shape
    flat = grid.ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    runs = np.diff(np.concatenate(([0], change, [flat.size])))
    if flat[0]:
        runs = np.concatenate(([0], runs))
    rle = RleMask(width, height, tuple(runs.tolist()))
    cached = grid.copy()
    cached.flags.writeable = False
    rle.__dict__["array"] = cached
    return rle


def rle_decode(rle: RleMask) -> np.ndarray:
    counts = np.asarray(rle.counts, dtype=np.int64)
    if counts.size == 0 or (counts < 0).any():
        raise MalformedRle(f"run lengths must be non-negative and non-empty: {rle.counts[:8]}")
    total = int(counts.sum())
    if total != rle.width * rle.height:
        raise MalformedRle(
            f"run lengths sum to {total}, expected {rle.width}x{rle.height}={rle.width * rle.height}"
        )
    values = (np.arange(counts.size) % 2).astype(bool)
    return np.repeat(values, counts).reshape(rle.height, rle.width)


def _check_same_shape(a: RleMask, b) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"mask sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def _extents_overlap(a: RleMask, b: RleMask) -> bool:
    ea, eb = a.extent, b.extent
    if ea is None or eb is None:
        return False
    return not (ea[1] < eb[0] or eb[1] < ea[0] or ea[3] < eb[2] or eb[3] < ea[2])


def mask_intersection(a: RleMask, b: RleMask) -> int:
    _check_same_shape(a, b)
    if not _extents_overlap(a, b):
        return 0
    r0 = max(a.extent[0], b.extent[0])
    r1 = min(a.extent[1], b.extent[1]) + 1
    c0 = max(a.extent[2], b.extent[2])
    c1 = min(a.extent[3], b.extent[3]) + 1
    return int(np.count_nonzero(a.array[r0:r1, c0:c1] & b.array[r0:r1, c0:c1]))


def mask_iou(a: RleMask, b: RleMask) -> float:
    """Intersection over union; 0.0 when both masks are empty."""
    inter = mask_intersection(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return 0.0
    return inter / union


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(self.height, self.width)
        if values.size and (values.min() < 0.0 or values.max() > 1.0 or not np.isfinite(values).all()):
            raise ValueError("saliency values must lie in [0, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, SaliencyMap):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and np.array_equal(
            self.values, other.values
        )

    __hash__ = None


def mask_mean_saliency(mask: RleMask, sal: SaliencyMap) -> float:
    """Mean saliency over the mask's foreground; 0.0 for an empty mask."""
    _check_same_shape(mask, sal)
    if mask.area == 0:
        return 0.0
    r0, r1, c0, c1 = mask.extent
    window = mask.array[r0 : r1 + 1, c0 : c1 + 1]
    return float(sal.values[r0 : r1 + 1, c0 : c1 + 1][window].sum() / mask.area)


def mask_bbox(mask: RleMask) -> Optional[BoundingBox]:
    """Tight box around the foreground pixels."""
    if mask.extent is None:
        return None
    r0, r1, c0, c1 = mask.extent
    return BoundingBox(float(c0), float(r0), float(c1 - c0 + 1), float(r1 - r0 + 1))


def translate_mask(mask: RleMask, dx: int, dy: int) -> RleMask:
    """Shift the foreground by whole pixels; pixels leaving the frame are dropped."""
    h, w = mask.height, mask.width
    src = mask.array
    out = np.zeros_like(src)
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    if abs(dx) < w and abs(dy) < h:
        out[yd, xd] = src[ys, xs]
    return rle_encode(out)


def box_mask(box: BoundingBox, width: int, height: int) -> RleMask:
    """Rasterize a box; pixel (r, c) is inside when its index lies in [x, x+w) x [y, y+h)."""
    grid = np.zeros((height, width), dtype=bool)
    clipped = box.clip(width, height)
    if clipped is not None:
        c0, r0 = int(round(clipped.x)), int(round(clipped.y))
        c1, r1 = int(round(clipped.x + clipped.w)), int(round(clipped.y + clipped.h))
        grid[r0:r1, c0:c1] = True
    return rle_encode(grid)


@dataclass(frozen=True)
class CandidateProposal:
    """One object hypothesis in one frame."""

    frame_index: int
    bbox: BoundingBox
    mask: RleMask
    objectness: float
    descriptor: tuple
    source: str = DETECTOR
    source_id: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "descriptor", tuple(float(v) for v in self.descriptor))
        if self.source not in (DETECTOR, PROPAGATED):
            raise ValueError(f"unknown candidate source {self.source!r}")
        if (self.source == PROPAGATED) != (self.source_id is not None):
            raise ValueError("propagated candidates must name their source instance")
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness {self.objectness} outside [0, 1]")

    @property
    def is_propagated(self) -> bool:
        return self.source == PROPAGATED

    @cached_property
    def descriptor_array(self) -> np.ndarray:
        return np.asarray(self.descriptor, dtype=float)

    @property
    def box_vector(self) -> BoxVector:
        return self.bbox.to_vector()


def label_map_masks(labels: np.ndarray) -> dict:
    """Split a label map into {instance_id: RleMask}, ids ascending, background 0 skipped."""
    labels = np.asarray(labels)
    return {
        int(i): rle_encode(labels == i) for i in np.unique(labels) if i != 0
    }


def masks_to_label_map(masks: dict, width: int, height: int) -> np.ndarray:
    """Inverse of label_map_masks; masks must be pixel-disjoint."""
    labels = np.zeros((height, width), dtype=np.int64)
    for iid, m in masks.items():
        if (m.width, m.height) != (width, height):
            raise DimensionMismatch(f"mask for id {iid} is {m.width}x{m.height}, expected {width}x{height}")
        if iid <= 0:
            raise ValueError(f"instance ids must be positive, got {iid}")
        if (labels[m.array] != 0).any():
            raise ValueError(f"mask for id {iid} overlaps another instance")
        labels[m.array] = iid
    return labels


@dataclass(frozen=True, eq=False)
class SequenceInput:
    """Everything the tracker consumes for one video."""

    frame_size: tuple  # (width, height)
    descriptor_dim: int
    candidates: tuple  # per frame: tuple of CandidateProposal
    saliency: tuple  # per frame: SaliencyMap
    ground_truth: Optional[tuple] = field(default=None)  # per frame: int label map

    def __post_init__(self):
        object.__setattr__(self, "frame_size", tuple(int(v) for v in self.frame_size))
        object.__setattr__(self, "candidates", tuple(tuple(c) for c in self.candidates))
        object.__setattr__(self, "saliency", tuple(self.saliency))
        if self.ground_truth is not None:
            object.__setattr__(
                self, "ground_truth", tuple(np.asarray(g, dtype=np.int64) for g in self.ground_truth)
            )

    @property
    def frame_count(self) -> int:
        return len(self.candidates)

    @property
    def width(self) -> int:
        return self.frame_size[0]

    @property
    def height(self) -> int:
        return self.frame_size[1]

    def __eq__(self, other):
        if not isinstance(other, SequenceInput):
            return NotImplemented
        if (self.frame_size, self.descriptor_dim, self.candidates, self.saliency) != (
            other.frame_size,
            other.descriptor_dim,
            other.candidates,
            other.saliency,
        ):
            return False
        if (self.ground_truth is None) != (other.ground_truth is None):
            return False
        if self.ground_truth is None:
            return True
        return len(self.ground_truth) == len(other.ground_truth) and all(
            np.array_equal(a, b) for a, b in zip(self.ground_truth, other.ground_truth)
        )

    __hash__ = None
