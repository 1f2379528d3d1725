"""Synthetic scenarios with known identities, a brute-force tracker reference,
the key-vs-random selection experiment and a seeded random hyperparameter search.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .datamodel import (
    BoundingBox,
    CandidateProposal,
    SaliencyMap,
    SequenceInput,
    box_mask,
)
from .errors import SizeLimit, SpecError
from .fileio import fmt_float, parse_keyvalue
from .metrics import GroundTruth, evaluate
from .pipeline import PipelineConfig, SequenceResult, SequenceRunner
from .pool import AssignmentSet

# ---------------------------------------------------------------------------
# scenario generation


@dataclass(frozen=True)
class ObjectSpec:
    start: Tuple[float, float]  # box center at frame 0
    size: Tuple[int, int] = (12, 12)
    velocity: Tuple[float, float] = (0.0, 0.0)
    trajectory: str = "linear"  # or "sinusoidal"
    amplitude: Tuple[float, float] = (0.0, 0.0)
    period: float = 20.0
    descriptor_center: Optional[tuple] = None  # sampled when None
    descriptor_sigma: float = 0.05
    saliency: float = 0.5
    objectness: float = 0.9
    visible: Optional[Tuple[Tuple[int, int], ...]] = None  # [start, end) windows; None = always
    annotated: bool = True  # present in the ground truth

    def center(self, t: int) -> Tuple[float, float]:
        cx = self.start[0] + self.velocity[0] * t
        cy = self.start[1] + self.velocity[1] * t
        if self.trajectory == "sinusoidal":
            phase = math.sin(2 * math.pi * t / self.period)
            cx += self.amplitude[0] * phase
            cy += self.amplitude[1] * phase
        return cx, cy

    def box(self, t: int) -> BoundingBox:
        cx, cy = self.center(t)
        w, h = self.size
        return BoundingBox(float(round(cx - w / 2)), float(round(cy - h / 2)), float(w), float(h))

    def is_visible(self, t: int) -> bool:
        return self.visible is None or any(a <= t < b for a, b in self.visible)


@dataclass(frozen=True)
class ScenarioSpec:
    frame_count: int
    frame_size: Tuple[int, int]
    objects: Tuple[ObjectSpec, ...]
    descriptor_dim: int = 8
    jitter: float = 0.0  # sigma of per-coordinate box noise, pixels
    drop_prob: float = 0.0
    clutter_rate: float = 0.0  # mean clutter detections per frame (Poisson)
    clutter_size: Tuple[int, int] = (4, 12)
    clutter_objectness: Tuple[float, float] = (0.2, 0.6)
    seed: int = 0

    def __post_init__(self):
        if self.frame_count < 1:
            raise SpecError("frame_count must be at least 1")
        if min(self.frame_size) < 1 or self.descriptor_dim < 1:
            raise SpecError("frame size and descriptor_dim must be positive")
        if self.jitter < 0 or self.clutter_rate < 0:
            raise SpecError("sigmas and rates must be non-negative")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise SpecError("drop_prob must lie in [0, 1]")
        lo, hi = self.clutter_objectness
        if not 0.0 <= lo <= hi <= 1.0:
            raise SpecError("clutter_objectness must be an ordered range inside [0, 1]")
        if not 1 <= self.clutter_size[0] <= self.clutter_size[1]:
            raise SpecError("clutter_size must be an ordered range of positive sizes")
        for k, obj in enumerate(self.objects):
            if obj.trajectory not in ("linear", "sinusoidal"):
                raise SpecError(f"object {k}: unknown trajectory {obj.trajectory!r}")
            if obj.descriptor_sigma < 0 or not 0.0 <= obj.saliency <= 1.0 or not 0.0 <= obj.objectness <= 1.0:
                raise SpecError(f"object {k}: sigma must be >= 0, saliency and objectness in [0, 1]")
            if min(obj.size) < 1 or obj.period <= 0:
                raise SpecError(f"object {k}: size and period must be positive")
            if obj.descriptor_center is not None and len(obj.descriptor_center) != self.descriptor_dim:
                raise SpecError(f"object {k}: descriptor_center needs {self.descriptor_dim} values")


def generate_scenario(spec: ScenarioSpec) -> Tuple[SequenceInput, List[np.ndarray]]:
    """Render a scenario; returns the sequence (ground truth attached) and the label maps.

    Ground-truth ids number the annotated objects 1, 2, ... in spec order;
    later objects are drawn on top.
    """
    rng = np.random.default_rng(spec.seed)
    W, H = spec.frame_size
    D = spec.descriptor_dim
    centers = []
    for obj in spec.objects:
        c = rng.normal(0.0, 1.0, D)
        centers.append(np.asarray(obj.descriptor_center, dtype=float) if obj.descriptor_center is not None else c)

    gt_ids = {}
    for k, obj in enumerate(spec.objects):
        if obj.annotated:
            gt_ids[k] = len(gt_ids) + 1

    frames, saliency, gt = [], [], []
    for t in range(spec.frame_count):
        labels = np.zeros((H, W), dtype=np.int64)
        sal = np.zeros((H, W))
        cands = []
        for k, obj in enumerate(spec.objects):
            dropped = rng.random() < spec.drop_prob
            noise = rng.normal(0.0, 1.0, 4) * spec.jitter
            desc_noise = rng.normal(0.0, 1.0, D) * obj.descriptor_sigma
            if not obj.is_visible(t):
                continue
            true_box = obj.box(t).clip(W, H)
            if true_box is None:
                continue
            true_mask = box_mask(true_box, W, H).array
            np.maximum(sal, np.where(true_mask, obj.saliency, 0.0), out=sal)
            if obj.annotated:
                labels[true_mask] = gt_ids[k]
            if dropped:
                continue
            b = obj.box(t)
            jittered = BoundingBox(
                float(round(b.x + noise[0])),
                float(round(b.y + noise[1])),
                float(max(1, round(b.w + noise[2]))),
                float(max(1, round(b.h + noise[3]))),
            ).clip(W, H)
            if jittered is None:
                continue
            cands.append(
                CandidateProposal(t, jittered, box_mask(jittered, W, H), obj.objectness, centers[k] + desc_noise)
            )
        for _ in range(rng.poisson(spec.clutter_rate)):
            w, h = rng.integers(spec.clutter_size[0], spec.clutter_size[1] + 1, 2)
            x, y = rng.integers(0, max(W - w, 0) + 1), rng.integers(0, max(H - h, 0) + 1)
            desc = rng.normal(0.0, 1.0, D)
            obj_score = rng.uniform(*spec.clutter_objectness)
            box = BoundingBox(float(x), float(y), float(w), float(h)).clip(W, H)
            cands.append(CandidateProposal(t, box, box_mask(box, W, H), float(obj_score), desc))
        frames.append(cands)
        saliency.append(SaliencyMap(W, H, sal))
        gt.append(labels)
    seq = SequenceInput((W, H), D, frames, saliency, gt)
    return seq, list(seq.ground_truth)


def _grid_positions(frame_size, count, margin, rng):
    """Well-separated cell centers on a coarse grid, in random order."""
    W, H = frame_size
    cols = max(1, int(math.ceil(math.sqrt(count * W / H))))
    rows = int(math.ceil(count / cols)) + 1
    cells = [(c, r) for r in range(rows) for c in range(cols)]
    order = rng.permutation(len(cells))[:count]
    out = []
    for i in order:
        c, r = cells[i]
        cx = margin + (c + 0.5) * (W - 2 * margin) / cols
        cy = margin + (r + 0.5) * (H - 2 * margin) / rows
        out.append((cx, cy))
    return out


def salient_plus_distractors(seed: int, frame_count: int = 40, horizon: int = 10) -> ScenarioSpec:
    """Two salient, persistent, annotated objects plus eight transient low-saliency distractors.

    Distractors appear only within the first ``horizon`` frames and are absent from the ground truth.
    """
    rng = np.random.default_rng(10_000 + seed)
    size = (128, 96)
    spots = _grid_positions(size, 10, 10, rng)
    objects = []
    for k in range(2):
        vx, vy = rng.uniform(-0.4, 0.4, 2)
        objects.append(
            ObjectSpec(start=spots[k], size=(14, 14), velocity=(vx, vy), saliency=float(rng.uniform(0.8, 1.0)))
        )
    for k in range(2, 10):
        start = int(rng.integers(0, max(1, horizon - 4)))
        length = int(rng.integers(3, 6))
        objects.append(
            ObjectSpec(
                start=spots[k],
                size=(9, 9),
                saliency=float(rng.uniform(0.05, 0.2)),
                objectness=0.85,
                visible=((start, min(start + length, horizon)),),
                annotated=False,
            )
        )
    return ScenarioSpec(frame_count, size, tuple(objects), jitter=0.5, seed=seed)


def tracking_suite(seed: int, frame_count: int = 30) -> ScenarioSpec:
    """Moderately hard scene for weight tuning: crossing paths, drops, clutter, wobble."""
    rng = np.random.default_rng(20_000 + seed)
    size = (96, 72)
    objects = []
    for k in range(4):
        start = (float(rng.uniform(15, 81)), float(rng.uniform(15, 57)))
        velocity = tuple(float(v) for v in rng.uniform(-1.2, 1.2, 2))
        objects.append(
            ObjectSpec(
                start=start,
                size=(int(rng.integers(10, 16)), int(rng.integers(10, 16))),
                velocity=velocity,
                trajectory="sinusoidal" if k % 2 else "linear",
                amplitude=(float(rng.uniform(0, 4)), float(rng.uniform(0, 4))),
                period=float(rng.uniform(12, 24)),
                descriptor_sigma=0.12,
                saliency=float(rng.uniform(0.3, 1.0)),
            )
        )
    return ScenarioSpec(
        frame_count, size, tuple(objects), jitter=1.0, drop_prob=0.1, clutter_rate=1.0, seed=seed
    )


def moving_pair(frame_count: int = 5, salient_first: bool = True, seed: int = 0) -> ScenarioSpec:
    """Two separated objects in linear motion; the first is salient, the second faint."""
    sal = (0.9, 0.05) if salient_first else (0.9, 0.9)
    return ScenarioSpec(
        frame_count,
        (64, 48),
        (
            ObjectSpec(start=(14.0, 14.0), size=(10, 10), velocity=(2.0, 1.0), saliency=sal[0]),
            ObjectSpec(start=(48.0, 34.0), size=(10, 10), velocity=(-2.0, 0.0), saliency=sal[1]),
        ),
        seed=seed,
    )


PRESETS = {
    "salient_plus_distractors": salient_plus_distractors,
    "tracking_suite": tracking_suite,
}


def _pair(text: str, kind=float):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise SpecError(f"expected two comma-separated values, got {text!r}")
    return tuple(kind(p) for p in parts)


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes"):
        return True
    if text.lower() in ("0", "false", "no"):
        return False
    raise SpecError(f"expected true/false, got {text!r}")


_OBJECT_FIELDS = {
    "start": lambda v: _pair(v),
    "size": lambda v: _pair(v, int),
    "velocity": lambda v: _pair(v),
    "trajectory": str,
    "amplitude": lambda v: _pair(v),
    "period": float,
    "descriptor_center": lambda v: tuple(float(x) for x in v.split(",")),
    "descriptor_sigma": float,
    "saliency": float,
    "objectness": float,
    "visible": lambda v: tuple(_pair(w.replace("-", ","), int) for w in v.split(";") if w.strip()),
    "annotated": _bool,
}

_SCENARIO_FIELDS = {
    "frame_count": int,
    "width": int,
    "height": int,
    "descriptor_dim": int,
    "jitter": float,
    "drop_prob": float,
    "clutter_rate": float,
    "clutter_size": lambda v: _pair(v, int),
    "clutter_objectness": lambda v: _pair(v),
    "seed": int,
}


def load_scenario_spec(path) -> ScenarioSpec:
    """Parse a flat ``key = value`` scenario file.

    Either ``preset = <name>`` (plus optional ``seed`` / ``frame_count``) or
    explicit scene keys with ``object.<n>.<field>`` entries; windows in
    ``visible`` are written ``start-end; start-end``.
    """
    raw = parse_keyvalue(path, sep="=")
    try:
        if "preset" in raw:
            name = raw.pop("preset")
            if name not in PRESETS:
                raise SpecError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
            extra = set(raw) - {"seed", "frame_count"}
            if extra:
                raise SpecError(f"preset files accept only seed and frame_count, got {sorted(extra)}")
            kwargs = {k: int(v) for k, v in raw.items() if k != "seed"}
            return PRESETS[name](int(raw.get("seed", 0)), **kwargs)
        scene: Dict[str, object] = {}
        objects: Dict[int, dict] = {}
        for key, value in raw.items():
            if key.startswith("object."):
                _, idx, name = (key.split(".") + [None])[:3]
                if name not in _OBJECT_FIELDS or not idx.isdigit():
                    raise SpecError(f"unknown object key {key!r}")
                objects.setdefault(int(idx), {})[name] = _OBJECT_FIELDS[name](value)
            elif key in _SCENARIO_FIELDS:
                scene[key] = _SCENARIO_FIELDS[key](value)
            else:
                raise SpecError(f"unknown scenario key {key!r}")
        if sorted(objects) != list(range(len(objects))):
            raise SpecError("object indices must run 0, 1, 2, ... without gaps")
        for k, fields_ in objects.items():
            if "start" not in fields_:
                raise SpecError(f"object {k} needs a start position")
        missing = {"frame_count", "width", "height"} - set(scene)
        if missing:
            raise SpecError(f"missing scenario keys {sorted(missing)}")
        size = (scene.pop("width"), scene.pop("height"))
        objs = tuple(ObjectSpec(**objects[k]) for k in range(len(objects)))
        return ScenarioSpec(frame_size=size, objects=objs, **scene)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(str(exc)) from None


# ---------------------------------------------------------------------------
# brute-force reference tracker

EXHAUSTIVE_MAX = 6


def exhaustive_assign(matrix, tau: float, rows=None, cols=None) -> AssignmentSet:
    """Reference for the greedy rule, by enumerating every one-to-one partial matching.

    Among matchings that use only cells >= tau, pick the one whose cells,
    sorted best-first under (score desc, instance id asc, candidate asc),
    form the lexicographically greatest sequence.
    """
    L, N = matrix.shape
    rows = list(range(L) if rows is None else rows)
    cols = list(range(N) if cols is None else cols)
    if len(rows) > EXHAUSTIVE_MAX or len(cols) > EXHAUSTIVE_MAX:
        raise SizeLimit(f"exhaustive assignment limited to {EXHAUSTIVE_MAX}x{EXHAUSTIVE_MAX}, got {len(rows)}x{len(cols)}")
    ids = matrix.instance_ids
    total = matrix.total
    allowed = {i: [j for j in cols if total[i, j] >= tau] for i in rows}

    best_key, best = None, ()

    def visit(k, used, chosen):
        nonlocal best_key, best
        if k == len(rows):
            key = sorted(((float(total[i, j]), -ids[i], -j) for i, j in chosen), reverse=True)
            if best_key is None or key > best_key:
                best_key, best = key, tuple(chosen)
            return
        i = rows[k]
        visit(k + 1, used, chosen)
        for j in allowed[i]:
            if j not in used:
                visit(k + 1, used | {j}, chosen + [(i, j)])

    visit(0, frozenset(), [])
    inst = {iid: None for iid in ids}
    cand = [None] * N
    scores = {}
    for i, j in best:
        inst[ids[i]] = j
        cand[j] = ids[i]
        scores[ids[i]] = float(total[i, j])
    return AssignmentSet(inst, cand, scores)


def oracle_track(seq: SequenceInput, config: Optional[PipelineConfig] = None) -> SequenceResult:
    """Same contract as run_sequence, with assignment resolved by exhaustive enumeration."""
    for t, frame in enumerate(seq.candidates):
        if len(frame) > EXHAUSTIVE_MAX:
            raise SizeLimit(f"frame {t} has {len(frame)} candidates; limit is {EXHAUSTIVE_MAX}")
    return SequenceRunner(seq, config or PipelineConfig(), assign=exhaustive_assign).run()


# ---------------------------------------------------------------------------
# key versus random selection


@dataclass
class SelectionTable:
    k_values: tuple
    key: List[float]  # suite mean global_mean per K
    random: List[float]
    per_scenario_key: np.ndarray  # (scenario, K)
    per_scenario_random: np.ndarray  # (scenario, K), averaged over seeds

    @property
    def gaps(self) -> List[float]:
        return [k - r for k, r in zip(self.key, self.random)]

    def format(self) -> str:
        head = f"{'# of IDs':<10}" + "".join(f"{k:>8}" for k in self.k_values)
        rand = f"{'Random':<10}" + "".join(f"{v:>8.3f}" for v in self.random)
        key = f"{'Key':<10}" + "".join(f"{v:>8.3f}" for v in self.key)
        return "\n".join([head, rand, key])


def _scenario_pair(item):
    if isinstance(item, SequenceInput):
        if item.ground_truth is None:
            raise ValueError("scenario has no ground truth")
        return item, list(item.ground_truth)
    seq, gt = item
    return seq, list(gt)


def selection_experiment(
    scenarios: Sequence,
    k_values: Sequence[int],
    seeds: Sequence[int],
    config: Optional[PipelineConfig] = None,
) -> SelectionTable:
    """Global mean of key selection vs random selection (averaged over seeds) per K.

    The growth phase is shared: each scenario is tracked once up to frame M-1,
    then every selection is continued from a fork of that state. Runs that
    keep the same id set are evaluated once.
    """
    config = config or PipelineConfig()
    key_scores = np.zeros((len(scenarios), len(k_values)))
    rand_scores = np.zeros((len(scenarios), len(k_values)))
    for s, item in enumerate(scenarios):
        seq, gt = _scenario_pair(item)
        gt = GroundTruth(gt)
        base = SequenceRunner(seq, config)
        base.run_until(base.selection_frame, select=False)
        cache: Dict[frozenset, float] = {}

        def finish(runner: SequenceRunner) -> float:
            kept = frozenset(runner.pool.ids) if runner.pool.phase.value == "locked" else None
            if kept in cache:
                return cache[kept]
            while not runner.done:
                runner.step()
            score = evaluate(runner.result(), gt, config.boundary_tolerance).global_mean
            cache[kept] = score
            return score

        can_select = base.t > base.selection_frame
        for c, k in enumerate(k_values):
            run = base.fork()
            if can_select:
                run.select("key", k)
            key_scores[s, c] = finish(run)
            vals = []
            for seed in seeds:
                run = base.fork()
                if can_select:
                    run.select("random", k, seed)
                vals.append(finish(run))
            rand_scores[s, c] = float(np.mean(vals))
    return SelectionTable(
        tuple(k_values),
        key_scores.mean(axis=0).tolist(),
        rand_scores.mean(axis=0).tolist(),
        key_scores,
        rand_scores,
    )


# ---------------------------------------------------------------------------
# hyperparameter search

SEARCH_PARAMS = ("w_iou", "w_traj", "w_reid", "w_rel", "tau1", "tau2", "w_sal", "w_freq")


@dataclass(frozen=True)
class SearchSpace:
    ranges: Dict[str, Tuple[float, float]]
    trials: int = 50
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.ranges) - set(SEARCH_PARAMS)
        if unknown:
            raise SpecError(f"cannot search {sorted(unknown)}; searchable: {SEARCH_PARAMS}")
        for name, (lo, hi) in self.ranges.items():
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise SpecError(f"{name}: range must satisfy lo <= hi, got ({lo}, {hi})")
        if self.trials < 1:
            raise SpecError("trial budget must be at least 1")

    def sample(self) -> List[Dict[str, float]]:
        """All trial points, drawn up front in a fixed order."""
        rng = np.random.default_rng(self.seed)
        names = [p for p in SEARCH_PARAMS if p in self.ranges]
        points = []
        for _ in range(self.trials):
            point = {}
            for name in names:
                lo, hi = self.ranges[name]
                point[name] = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
            points.append(point)
        return points


def default_search_space(trials: int = 50, seed: int = 0) -> SearchSpace:
    ranges = {
        "w_iou": (0.0, 1.0),
        "w_traj": (0.0, 1.0),
        "w_reid": (0.0, 1.0),
        "w_rel": (0.0, 0.2),
        "tau1": (0.2, 0.9),
        "tau2": (0.1, 0.8),
        "w_sal": (0.0, 1.0),
        "w_freq": (0.0, 1.0),
    }
    return SearchSpace(ranges, trials, seed)


def load_search_space(path, trials: Optional[int] = None, seed: Optional[int] = None) -> SearchSpace:
    raw = parse_keyvalue(path, sep="=")
    ranges = {}
    try:
        budget = int(raw.pop("trials", 50))
        space_seed = int(raw.pop("seed", 0))
        for key, value in raw.items():
            if key not in SEARCH_PARAMS:
                raise SpecError(f"unknown search key {key!r}")
            ranges[key] = _pair(value)
    except ValueError as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(str(exc)) from None
    return SearchSpace(ranges, budget if trials is None else trials, space_seed if seed is None else seed)


@dataclass(frozen=True)
class TrialRecord:
    index: int
    params: Dict[str, float]
    score: float

    def format(self) -> str:
        items = " ".join(f"{k}={fmt_float(v)}" for k, v in self.params.items())
        return f"{self.index} {fmt_float(self.score)} {items}".rstrip()


@dataclass
class SearchOutcome:
    best_config: PipelineConfig
    best_index: int
    best_score: float
    trials: List[TrialRecord]

    def format_log(self) -> str:
        return "# trial global_mean params\n" + "".join(t.format() + "\n" for t in self.trials)


def score_config(config: PipelineConfig, scenarios: Sequence) -> float:
    """Mean global_mean of the full pipeline over scenarios with ground truth."""
    scores = []
    for item in scenarios:
        seq, gt = _scenario_pair(item)
        result = SequenceRunner(seq, config).run()
        scores.append(evaluate(result, gt, config.boundary_tolerance).global_mean)
    return float(np.mean(scores))


def _run_trial(args):
    base, params, scenarios = args
    return score_config(base.with_params(**params), scenarios)


def search_hyperparams(
    space: SearchSpace,
    scenarios: Sequence,
    base_config: Optional[PipelineConfig] = None,
    workers: int = 1,
) -> SearchOutcome:
    """Seeded uniform random search; the best trial (lowest index on ties) wins."""
    base = base_config or PipelineConfig()
    points = space.sample()
    jobs = [(base, p, list(scenarios)) for p in points]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            scores = list(ex.map(_run_trial, jobs))
    else:
        scores = [_run_trial(j) for j in jobs]
    trials = [TrialRecord(i, p, s) for i, (p, s) in enumerate(zip(points, scores))]
    best = max(trials, key=lambda r: (r.score, -r.index))
    return SearchOutcome(base.with_params(**best.params), best.index, best.score, trials)


def uniform_weights_config(base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Baseline with every association weight equal and both selection weights equal."""
    base = base or PipelineConfig()
    return base.with_params(w_iou=0.25, w_traj=0.25, w_reid=0.25, w_rel=0.25, w_sal=0.5, w_freq=0.5)
