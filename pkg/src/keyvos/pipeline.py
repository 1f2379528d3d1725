"""Per-sequence driver: candidates -> scores -> assignment -> pool update -> key selection."""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from .datamodel import PROPAGATED, CandidateProposal, SequenceInput, mask_bbox
from .errors import ConfigError, InputError, ParseError
from .fileio import fmt_float, parse_keyvalue, write_keyvalue
from .pool import (
    ObjectPool,
    Phase,
    PoolConfig,
    TrackedInstance,
    apply_assignments,
    assign_detector_first,
    assign_ids,
    make_propagator,
    spawn_new_ids,
)
from .scoring import TRAJ_METRICS, ScoreWeights, build_score_matrix
from .selection import SelectionWeights, random_select_instances, select_key_instances

SELECTION_MODES = ("key", "random")

# config key -> (section, attribute, type)
CONFIG_KEYS = {
    "w_iou": ("weights", "w_iou", float),
    "w_traj": ("weights", "w_traj", float),
    "w_reid": ("weights", "w_reid", float),
    "w_rel": ("weights", "w_rel", float),
    "alpha_traj": ("weights", "alpha_traj", "optfloat"),
    "alpha_reid": ("weights", "alpha_reid", float),
    "tau1": ("pool", "tau1", float),
    "tau2": ("pool", "tau2", float),
    "M": ("pool", "horizon", int),
    "K": ("pool", "max_instances", int),
    "spawn_objectness_min": ("pool", "spawn_objectness_min", float),
    "spawn_overlap_max": ("pool", "spawn_overlap_max", float),
    "propagated_objectness": ("pool", "propagated_objectness", float),
    "traj_metric": ("pool", "traj_metric", str),
    "w_sal": ("selection", "w_sal", float),
    "w_freq": ("selection", "w_freq", float),
    "selection_mode": ("top", "selection_mode", str),
    "selection_seed": ("top", "selection_seed", int),
    "boundary_tolerance": ("top", "boundary_tolerance", "optfloat"),
    "propagator": ("top", "propagator", str),
    "output_dir": ("top", "output_dir", "optstr"),
}


@dataclass(frozen=True)
class PipelineConfig:
    pool: PoolConfig = field(default_factory=PoolConfig)
    selection: SelectionWeights = field(default_factory=SelectionWeights)
    selection_mode: str = "key"
    selection_seed: int = 0
    boundary_tolerance: Optional[float] = None
    propagator: str = "translate"
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.selection_mode not in SELECTION_MODES:
            raise ConfigError(f"selection_mode must be one of {SELECTION_MODES}, got {self.selection_mode!r}")
        if self.pool.traj_metric not in TRAJ_METRICS:
            raise ConfigError(f"traj_metric must be one of {TRAJ_METRICS}, got {self.pool.traj_metric!r}")
        if self.boundary_tolerance is not None and self.boundary_tolerance < 0:
            raise ConfigError("boundary_tolerance must be non-negative")

    def to_dict(self) -> Dict[str, object]:
        sections = {"weights": self.pool.weights, "pool": self.pool, "selection": self.selection, "top": self}
        return {key: getattr(sections[sec], attr) for key, (sec, attr, _) in CONFIG_KEYS.items()}

    def with_params(self, **params) -> "PipelineConfig":
        """Copy with flat config keys (as used in config files) overridden."""
        return config_from_dict({**self.to_dict(), **params})


def _coerce(key, kind, value):
    if isinstance(value, str):
        text = value.strip()
        if kind in ("optfloat", "optstr") and text.lower() == "none":
            return None
        try:
            if kind in (float, "optfloat"):
                return float(text)
            if kind is int:
                return int(text)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {value!r}") from None
        return text
    if value is None and kind in ("optfloat", "optstr"):
        return None
    if kind in (float, "optfloat"):
        return float(value)
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    return value


def config_from_dict(values: Dict[str, object]) -> PipelineConfig:
    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    parts: Dict[str, dict] = {"weights": {}, "pool": {}, "selection": {}, "top": {}}
    for key, value in values.items():
        sec, attr, kind = CONFIG_KEYS[key]
        parts[sec][attr] = _coerce(key, kind, value)
    try:
        weights = ScoreWeights(**parts["weights"])
        pool = PoolConfig(weights=weights, **parts["pool"])
        selection = SelectionWeights(**parts["selection"])
        return PipelineConfig(pool=pool, selection=selection, **parts["top"])
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> PipelineConfig:
    try:
        raw = parse_keyvalue(path, sep="=")
    except ParseError as exc:
        raise ConfigError(str(exc)) from None
    return config_from_dict(raw)


def save_config(config: PipelineConfig, path) -> None:
    out = {}
    for key, value in config.to_dict().items():
        out[key] = "none" if value is None else (fmt_float(value) if isinstance(value, float) else value)
    write_keyvalue(out, path, sep="=")


@dataclass(frozen=True)
class ProvenanceRecord:
    frame: int
    instance_id: int
    event: str  # "assign" or "spawn"
    total_score: Optional[float]  # None for spawns
    candidate: Optional[int]  # detector candidate index; None when a propagated mask matched


def format_provenance(r: ProvenanceRecord) -> str:
    score = "-" if r.total_score is None else fmt_float(r.total_score)
    cand = "propagated" if r.candidate is None else str(r.candidate)
    return f"{r.frame} {r.instance_id} {r.event} {score} {cand}"


def parse_provenance(text: str, path=None, line=None) -> ProvenanceRecord:
    parts = text.split()
    if len(parts) != 5 or parts[2] not in ("assign", "spawn"):
        raise ParseError("expected 'frame instance_id assign|spawn score candidate'", path, line)
    try:
        frame, iid = int(parts[0]), int(parts[1])
        score = None if parts[3] == "-" else float(parts[3])
        cand = None if parts[4] == "propagated" else int(parts[4])
    except ValueError as exc:
        raise ParseError(str(exc), path, line) from None
    return ProvenanceRecord(frame, iid, parts[2], score, cand)


@dataclass(eq=False)
class SequenceResult:
    frame_size: tuple  # (width, height)
    label_maps: List[np.ndarray]
    provenance: List[ProvenanceRecord]
    removed_ids: tuple = ()

    def __post_init__(self):
        self.frame_size = tuple(self.frame_size)
        self.label_maps = [np.asarray(m, dtype=np.int64) for m in self.label_maps]
        self.provenance = list(self.provenance)

    def __eq__(self, other):
        if not isinstance(other, SequenceResult):
            return NotImplemented
        return (
            self.frame_size == other.frame_size
            and len(self.label_maps) == len(other.label_maps)
            and all(np.array_equal(a, b) for a, b in zip(self.label_maps, other.label_maps))
            and self.provenance == other.provenance
        )

    __hash__ = None

    @property
    def instance_ids(self) -> List[int]:
        return sorted({int(i) for m in self.label_maps for i in np.unique(m) if i != 0})


def _validate_frame(seq: SequenceInput, t: int):
    w, h = seq.frame_size
    sal = seq.saliency[t]
    if (sal.width, sal.height) != (w, h):
        raise InputError(f"frame {t}: saliency map is {sal.width}x{sal.height}, frame is {w}x{h}")
    for j, c in enumerate(seq.candidates[t]):
        if c.frame_index != t:
            raise InputError(f"frame {t}: candidate {j} claims frame {c.frame_index}")
        if (c.mask.width, c.mask.height) != (w, h):
            raise InputError(f"frame {t}: candidate {j} mask is {c.mask.width}x{c.mask.height}, frame is {w}x{h}")
        if len(c.descriptor) != seq.descriptor_dim:
            raise InputError(f"frame {t}: candidate {j} descriptor length {len(c.descriptor)} != {seq.descriptor_dim}")


class SequenceRunner:
    """Stateful frame-by-frame driver for one sequence.

    ``assign`` is the one-to-one assignment routine (greedy by default); tests
    swap in an exhaustive reference. ``fork`` clones the state so alternative
    selections can be continued from the same growth phase.
    """

    def __init__(self, seq: SequenceInput, config: PipelineConfig, assign: Callable = assign_ids):
        if seq.frame_count < 1 or len(seq.saliency) != seq.frame_count:
            raise InputError("need one candidate list and one saliency map per frame, at least one frame")
        if seq.ground_truth is not None and len(seq.ground_truth) != seq.frame_count:
            raise InputError("ground truth must cover every frame")
        self.seq = seq
        self.config = config
        self.assign = assign
        self.weights = config.pool.weights.resolved(seq.frame_size)
        try:
            self.propagator = make_propagator(config.propagator, seq.ground_truth)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.pool = ObjectPool()
        self.t = 0
        self.layers: List[list] = []  # per frame: (priority, instance_id, mask)
        self.provenance: List[ProvenanceRecord] = []
        self.removed: set = set()

    @property
    def done(self) -> bool:
        return self.t >= self.seq.frame_count

    @property
    def selection_frame(self) -> int:
        return self.config.pool.horizon - 1

    def fork(self) -> "SequenceRunner":
        twin = object.__new__(SequenceRunner)
        twin.__dict__.update(self.__dict__)
        twin.pool = ObjectPool(
            [
                TrackedInstance(
                    i.id,
                    list(i.descriptor_pool),
                    list(i.bbox_history),
                    i.last_mask,
                    i.frequency,
                    i.saliency_sum,
                    i.created_at,
                )
                for i in self.pool.instances
            ],
            self.pool.next_id,
            self.pool.phase,
        )
        twin.layers = [list(layer) for layer in self.layers]
        twin.provenance = list(self.provenance)
        twin.removed = set(self.removed)
        return twin

    def _propagated(self, t: int):
        masks, cands = {}, []
        size = self.seq.frame_size
        for inst in self.pool.instances:
            mask = self.propagator(inst, t, size)
            masks[inst.id] = mask
            if mask is not None and mask.area > 0:
                cands.append(
                    CandidateProposal(
                        t,
                        mask_bbox(mask),
                        mask,
                        self.config.pool.propagated_objectness,
                        inst.descriptor_pool[-1],
                        PROPAGATED,
                        inst.id,
                    )
                )
        return masks, cands

    def step(self, select: bool = True) -> None:
        """Process the next frame; with ``select`` the key selection runs when due."""
        t, seq, cfg = self.t, self.seq, self.config.pool
        _validate_frame(seq, t)
        detections = list(seq.candidates[t])
        inst_masks, propagated = self._propagated(t)
        candidates = detections + propagated
        matrix = build_score_matrix(self.pool.instances, candidates, inst_masks, self.weights, t, cfg.traj_metric)
        tau = cfg.tau1 if self.pool.phase is Phase.GROWING else cfg.tau2
        assignment = assign_detector_first(matrix, tau, candidates, assign=self.assign)
        apply_assignments(self.pool, assignment, candidates, seq.saliency[t], t)

        layer = []
        for iid, j, score in assignment.matches():
            cand = candidates[j]
            self.provenance.append(
                ProvenanceRecord(t, iid, "assign", float(score), None if cand.is_propagated else j)
            )
            layer.append((float(score), iid, cand.mask))

        if self.pool.phase is Phase.GROWING:
            free = [(j, c) for j, c in enumerate(detections) if assignment.candidate_to_instance[j] is None]
            taken = [candidates[j].mask for _, j, _ in assignment.matches()]
            spawned = spawn_new_ids(self.pool, [c for _, c in free], t, cfg, seq.saliency[t], taken)
            for pos, inst in spawned:
                j = free[pos][0]
                self.provenance.append(ProvenanceRecord(t, inst.id, "spawn", None, j))
                layer.append((0.0, inst.id, inst.last_mask))
        self.layers.append(layer)
        self.t += 1
        if select and t == self.selection_frame and self.pool.phase is Phase.GROWING:
            self.select()

    def select(self, mode: Optional[str] = None, k: Optional[int] = None, seed: Optional[int] = None) -> None:
        mode = mode or self.config.selection_mode
        k = self.config.pool.max_instances if k is None else k
        seed = self.config.selection_seed if seed is None else seed
        before = set(self.pool.ids)
        if mode == "key":
            select_key_instances(self.pool, k, self.config.selection, self.config.pool.horizon)
        else:
            random_select_instances(self.pool, k, seed)
        self.removed |= before - set(self.pool.ids)

    def run_until(self, frame: int, select: bool = True) -> None:
        """Process frames up to and including ``frame``."""
        while not self.done and self.t <= frame:
            self.step(select=select)

    def result(self) -> SequenceResult:
        w, h = self.seq.frame_size
        maps = []
        for layer in self.layers:
            labels = np.zeros((h, w), dtype=np.int64)
            for _, iid, mask in sorted((-p, iid, m) for p, iid, m in layer if iid not in self.removed):
                free = labels == 0
                labels[mask.array & free] = iid
            maps.append(labels)
        return SequenceResult((w, h), maps, list(self.provenance), tuple(sorted(self.removed)))

    def run(self) -> SequenceResult:
        while not self.done:
            self.step()
        return self.result()


def run_sequence(seq: SequenceInput, config: Optional[PipelineConfig] = None) -> SequenceResult:
    return SequenceRunner(seq, config or PipelineConfig()).run()


def id_color(instance_id: int) -> tuple:
    """Deterministic saturated RGB color for an instance id."""
    hue = (instance_id * 0.6180339887498949) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 0.95)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


BACKGROUND = (128, 128, 128)


def render_overlay(result: SequenceResult, frame_index: int, out_path) -> Path:
    """Write frame ``frame_index`` of the label maps as a binary PPM image."""
    if not 0 <= frame_index < len(result.label_maps):
        raise IndexError(f"frame {frame_index} outside 0..{len(result.label_maps) - 1}")
    labels = result.label_maps[frame_index]
    img = np.empty(labels.shape + (3,), dtype=np.uint8)
    img[...] = BACKGROUND
    for iid in np.unique(labels):
        if iid != 0:
            img[labels == iid] = id_color(int(iid))
    h, w = labels.shape
    out_path = Path(out_path)
    with open(out_path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return out_path
