"""Region Jaccard / boundary F evaluation with identity-free instance matching."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .datamodel import RleMask
from .errors import DimensionMismatch

EXHAUSTIVE_LIMIT = 8
_CROSS = ndimage.generate_binary_structure(2, 1)


def _as_array(mask) -> np.ndarray:
    if isinstance(mask, RleMask):
        return mask.array
    return np.asarray(mask, dtype=bool)


def _pair(pred, gt) -> Tuple[np.ndarray, np.ndarray]:
    p, g = _as_array(pred), _as_array(gt)
    if p.shape != g.shape:
        raise DimensionMismatch(f"mask shapes differ: {p.shape} vs {g.shape}")
    return p, g


def default_tolerance(width: int, height: int) -> int:
    return int(math.ceil(0.008 * math.hypot(width, height)))


def jaccard(pred, gt) -> float:
    """IoU of two masks; two empty masks agree perfectly (1.0)."""
    p, g = _pair(pred, gt)
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


def boundary_pixels(mask) -> np.ndarray:
    """Foreground pixels 4-adjacent to background or to the image border."""
    m = _as_array(mask)
    interior = ndimage.binary_erosion(m, structure=_CROSS, border_value=0)
    return m & ~interior


def _distance_to(boundary: np.ndarray) -> np.ndarray:
    if not boundary.any():
        return np.full(boundary.shape, np.inf)
    return ndimage.distance_transform_edt(~boundary)


def _f_from_counts(hit_p, n_p, hit_r, n_r) -> float:
    if n_p == 0 and n_r == 0:
        return 1.0
    if n_p == 0 or n_r == 0:
        return 0.0
    precision, recall = hit_p / n_p, hit_r / n_r
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def boundary_f(pred, gt, tolerance: float) -> float:
    """F-measure of boundary pixels matched within ``tolerance`` (Euclidean) pixels."""
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    p, g = _pair(pred, gt)
    bp, bg = boundary_pixels(p), boundary_pixels(g)
    n_p, n_g = int(bp.sum()), int(bg.sum())
    if n_p == 0 or n_g == 0:
        return _f_from_counts(0, n_p, 0, n_g)
    hit_p = int(np.count_nonzero(_distance_to(bg)[bp] <= tolerance))
    hit_r = int(np.count_nonzero(_distance_to(bp)[bg] <= tolerance))
    return _f_from_counts(hit_p, n_p, hit_r, n_g)


def sequence_measures(values: Sequence[float]) -> Tuple[float, float, float]:
    """(mean, recall, decay) of a per-frame series.

    Recall counts frames strictly above 0.5. Decay is the mean of the first
    contiguous temporal quarter minus the mean of the last non-empty one
    (earlier quarters absorb the remainder).
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("need at least one value")
    bins = [b for b in np.array_split(v, 4) if b.size]
    return float(v.mean()), float(np.mean(v > 0.5)), float(bins[0].mean() - bins[-1].mean())


def optimal_matching(scores) -> Tuple[List[Tuple[int, int]], float]:
    """One-to-one matching of rows to columns maximizing the summed score.

    Exhaustive up to 8x8, otherwise a linear-assignment solver. Scores are
    assumed non-negative, so a maximum-cardinality matching is always optimal.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 2:
        raise ValueError("scores must be a 2-D table")
    rows, cols = s.shape
    if rows == 0 or cols == 0:
        return [], 0.0
    if rows <= EXHAUSTIVE_LIMIT and cols <= EXHAUSTIVE_LIMIT:
        return _exhaustive_matching(s)
    r, c = linear_sum_assignment(s, maximize=True)
    pairs = sorted(zip(r.tolist(), c.tolist()))
    return pairs, float(s[r, c].sum())


def _exhaustive_matching(s: np.ndarray):
    rows, cols = s.shape
    best_pairs, best = None, -math.inf
    if rows <= cols:
        for perm in itertools.permutations(range(cols), rows):
            total = sum(s[i, perm[i]] for i in range(rows))
            if total > best:
                best, best_pairs = total, [(i, perm[i]) for i in range(rows)]
    else:
        for perm in itertools.permutations(range(rows), cols):
            total = sum(s[perm[j], j] for j in range(cols))
            if total > best:
                best, best_pairs = total, sorted((perm[j], j) for j in range(cols))
    return best_pairs, float(best)


@dataclass(frozen=True)
class InstanceMeasure:
    gt_id: int
    pred_id: Optional[int]
    j: tuple
    f: tuple

    def __post_init__(self):
        for v in self.j + self.f:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"measure {v} outside [0, 1]")


@dataclass(frozen=True)
class SequenceReport:
    j_mean: float
    j_recall: float
    j_decay: float
    f_mean: float
    f_recall: float
    f_decay: float
    global_mean: float
    instances: tuple = field(default=(), compare=False, repr=False)

    KEYS = ("global_mean", "j_mean", "j_recall", "j_decay", "f_mean", "f_recall", "f_decay")

    def as_dict(self) -> Dict[str, float]:
        return {k: getattr(self, k) for k in self.KEYS}

    def format_table(self) -> str:
        header = "  ".join(f"{k:>11}" for k in self.KEYS)
        values = "  ".join(f"{getattr(self, k):>11.4f}" for k in self.KEYS)
        return header + "\n" + values

    def format_keyvalue(self) -> str:
        return "".join(f"{k}: {getattr(self, k)!r}\n" for k in self.KEYS)


class _Entry:
    """One instance in one frame, with lazily computed boundary points."""

    __slots__ = ("mask", "area", "extent", "_points", "_tree")

    def __init__(self, mask, extent):
        self.mask = mask
        self.area = int(np.count_nonzero(mask))
        self.extent = extent
        self._points = None
        self._tree = None

    @property
    def points(self) -> np.ndarray:
        """(row, col) coordinates of the boundary pixels."""
        if self._points is None:
            h, w = self.mask.shape
            r0, r1 = max(self.extent[0] - 1, 0), min(self.extent[1] + 2, h)
            c0, c1 = max(self.extent[2] - 1, 0), min(self.extent[3] + 2, w)
            b = boundary_pixels(self.mask[r0:r1, c0:c1])
            self._points = np.argwhere(b) + (r0, c0)
        return self._points

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    def hits(self, other: "_Entry", tolerance) -> int:
        """How many of ``other``'s boundary points lie within tolerance of this boundary."""
        mine, theirs = self.points, other.points
        if len(mine) * len(theirs) <= 20_000:
            diff = theirs[:, None, :] - mine[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff).min(axis=1)
            return int(np.count_nonzero(d2 <= tolerance * tolerance + 1e-9))
        d, _ = self.tree.query(theirs, k=1, distance_upper_bound=tolerance + 1e-9)
        return int(np.count_nonzero(np.isfinite(d)))


class _FrameMasks:
    """Per-frame, per-id masks."""

    def __init__(self, labels: np.ndarray):
        self.labels = labels
        self._cache: Dict[int, Optional[_Entry]] = {}
        self._slices = ndimage.find_objects(labels) if labels.max(initial=0) > 0 else []
        self.ids = [i + 1 for i, sl in enumerate(self._slices) if sl is not None]

    def get(self, iid: int) -> Optional[_Entry]:
        if iid not in self._cache:
            sl = self._slices[iid - 1] if 0 < iid <= len(self._slices) else None
            if sl is None:
                self._cache[iid] = None
            else:
                extent = (sl[0].start, sl[0].stop - 1, sl[1].start, sl[1].stop - 1)
                self._cache[iid] = _Entry(self.labels == iid, extent)
        return self._cache[iid]


def _frame_jf(p: Optional[_Entry], g: _Entry, tolerance) -> Tuple[float, float]:
    """J and F for one frame; ``g`` is never empty here."""
    if p is None:
        return 0.0, 0.0
    pe, ge = p.extent, g.extent
    gap_r = max(pe[0] - ge[1], ge[0] - pe[1], 0)
    gap_c = max(pe[2] - ge[3], ge[2] - pe[3], 0)
    if gap_r == 0 and gap_c == 0:
        r0, r1 = max(pe[0], ge[0]), min(pe[1], ge[1]) + 1
        c0, c1 = max(pe[2], ge[2]), min(pe[3], ge[3]) + 1
        inter = int(np.count_nonzero(p.mask[r0:r1, c0:c1] & g.mask[r0:r1, c0:c1]))
    else:
        inter = 0
    j = inter / (p.area + g.area - inter)
    if math.hypot(gap_r, gap_c) > tolerance + 2:
        return j, 0.0
    return j, _f_from_counts(g.hits(p, tolerance), len(p.points), p.hits(g, tolerance), len(g.points))


def _check_aligned(pred_maps, gt_maps):
    if len(pred_maps) != len(gt_maps):
        raise DimensionMismatch(f"{len(pred_maps)} predicted frames vs {len(gt_maps)} ground-truth frames")
    for t, (p, g) in enumerate(zip(pred_maps, gt_maps)):
        if np.shape(p) != np.shape(g):
            raise DimensionMismatch(f"frame {t}: shapes {np.shape(p)} vs {np.shape(g)}")


class GroundTruth:
    """Ground-truth label maps indexed once, reusable across many evaluations."""

    def __init__(self, label_maps):
        self.label_maps = [np.asarray(g) for g in label_maps]
        self.frames = [_FrameMasks(g) for g in self.label_maps]
        self.ids = tuple(sorted({i for f in self.frames for i in f.ids}))
        self.lifespans = {g: [t for t, f in enumerate(self.frames) if g in f.ids] for g in self.ids}

    def __len__(self):
        return len(self.label_maps)


@dataclass(frozen=True)
class Matching:
    pred_ids: tuple
    gt_ids: tuple
    scores: np.ndarray  # (pred, gt) pair quality (J mean + F mean) / 2
    pairs: tuple  # (pred_id, gt_id)
    per_pair: dict  # (pred_id, gt_id) -> (j series, f series)
    lifespans: dict  # gt_id -> frame indices


def match_instances(pred_maps, gt_maps, tolerance: Optional[float] = None) -> Matching:
    """Optimal one-to-one pairing of predicted and ground-truth ids."""
    gt = gt_maps if isinstance(gt_maps, GroundTruth) else GroundTruth(gt_maps)
    _check_aligned(pred_maps, gt.label_maps)
    if not len(gt):
        return Matching((), (), np.zeros((0, 0)), (), {}, {})
    if tolerance is None:
        h, w = np.shape(gt.label_maps[0])
        tolerance = default_tolerance(w, h)
    pf = [_FrameMasks(np.asarray(p)) for p in pred_maps]
    gf = gt.frames
    pred_ids = tuple(sorted({i for f in pf for i in f.ids}))
    gt_ids = gt.ids
    lifespans = gt.lifespans

    scores = np.zeros((len(pred_ids), len(gt_ids)))
    per_pair = {}
    for a, pid in enumerate(pred_ids):
        for b, gid in enumerate(gt_ids):
            js, fs = [], []
            for t in lifespans[gid]:
                j, f = _frame_jf(pf[t].get(pid), gf[t].get(gid), tolerance)
                js.append(j)
                fs.append(f)
            per_pair[(pid, gid)] = (tuple(js), tuple(fs))
            scores[a, b] = (np.mean(js) + np.mean(fs)) / 2
    idx_pairs, _ = optimal_matching(scores)
    pairs = tuple((pred_ids[a], gt_ids[b]) for a, b in idx_pairs)
    return Matching(pred_ids, gt_ids, scores, pairs, per_pair, lifespans)


def evaluate(pred_maps, gt_maps, tolerance: Optional[float] = None) -> SequenceReport:
    """Sequence-level J/F statistics averaged over ground-truth instances.

    ``pred_maps`` may be a SequenceResult or a list of per-frame label maps;
    ``gt_maps`` a list of label maps or a prepared GroundTruth.
    Ground-truth instances left unmatched score 0 on every measure.
    """
    if hasattr(pred_maps, "label_maps"):
        pred_maps = pred_maps.label_maps
    pred_maps = list(pred_maps)
    if not isinstance(gt_maps, GroundTruth):
        gt_maps = list(gt_maps)
    matching = match_instances(pred_maps, gt_maps, tolerance)
    if not matching.gt_ids:
        raise ValueError("ground truth contains no instances")
    owner = {gid: pid for pid, gid in matching.pairs}
    stats, measures = [], []
    for gid in matching.gt_ids:
        pid = owner.get(gid)
        n = len(matching.lifespans[gid])
        if pid is None:
            js, fs = (0.0,) * n, (0.0,) * n
        else:
            js, fs = matching.per_pair[(pid, gid)]
        measures.append(InstanceMeasure(gid, pid, js, fs))
        stats.append(sequence_measures(js) + sequence_measures(fs))
    jm, jr, jd, fm, fr, fd = (float(v) for v in np.mean(np.asarray(stats), axis=0))
    return SequenceReport(jm, jr, jd, fm, fr, fd, (jm + fm) / 2, tuple(measures))
