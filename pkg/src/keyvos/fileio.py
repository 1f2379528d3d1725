"""Text file formats for sequences, label maps, results and flat key/value files.

Sequence directory::

    manifest.txt        frame_count / width / height / descriptor_dim  ("key: value")
    candidates.txt      one candidate per line:
                        frame x y w h objectness source rle_counts descriptor
                        source is "detector" or "propagated:<id>"; the two
                        list fields are comma-separated
    saliency/frame_NNNN.txt   row-major decimals, one image row per line
    gt/frame_NNNN.txt         optional label files

Label file::

    width: W
    height: H
    <instance id> <rle counts>      (one line per instance, ids ascending)

Result directory: ``result.txt`` (frame_count/width/height), ``labels/`` and
``provenance.txt`` with lines ``frame instance_id event score candidate``.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List

import numpy as np

from .datamodel import (
    DETECTOR,
    PROPAGATED,
    BoundingBox,
    CandidateProposal,
    RleMask,
    SaliencyMap,
    SequenceInput,
    label_map_masks,
    masks_to_label_map,
)
from .errors import MissingFrame, ParseError

CANDIDATE_HEADER = "# frame x y w h objectness source rle_counts descriptor"
PROVENANCE_HEADER = "# frame instance_id event score candidate"


def frame_name(t: int) -> str:
    return f"frame_{t:04d}.txt"


def fmt_float(v: float) -> str:
    return repr(float(v))


def _lines(path: Path):
    """Yield (line_number, stripped_text) for non-blank, non-comment lines."""
    with open(path) as fh:
        for n, raw in enumerate(fh, 1):
            text = raw.strip()
            if text and not text.startswith("#"):
                yield n, text


def parse_keyvalue(path, sep: str = "=") -> Dict[str, str]:
    """Read a flat ``key <sep> value`` file, keeping key order; duplicates are errors."""
    path = Path(path)
    out: Dict[str, str] = {}
    for n, text in _lines(path):
        key, found, value = text.partition(sep)
        key = key.strip()
        if not found or not key:
            raise ParseError(f"expected 'key {sep} value'", path, n)
        if key in out:
            raise ParseError("duplicate key", path, n, key)
        out[key] = value.strip()
    return out


def write_keyvalue(values: Dict[str, object], path, sep: str = "=") -> None:
    pad = " " if sep == "=" else ""
    text = "".join(f"{k}{pad}{sep} {v}\n" for k, v in values.items())
    Path(path).write_text(text)


def _int(value: str, path, line, fieldname) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"expected an integer, got {value!r}", path, line, fieldname) from None


def _float(value: str, path, line, fieldname) -> float:
    try:
        v = float(value)
    except ValueError:
        raise ParseError(f"expected a number, got {value!r}", path, line, fieldname) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {value!r}", path, line, fieldname)
    return v


def _header(path: Path, keys) -> Dict[str, int]:
    raw = parse_keyvalue(path, sep=":")
    missing = [k for k in keys if k not in raw]
    if missing:
        raise ParseError(f"missing header keys {missing}", path)
    extra = [k for k in raw if k not in keys]
    if extra:
        raise ParseError(f"unknown header keys {extra}", path)
    out = {k: _int(raw[k], path, None, k) for k in keys}
    for k, v in out.items():
        if v < 1:
            raise ParseError("must be a positive integer", path, None, k)
    return out


def parse_counts(text: str, width: int, height: int, path=None, line=None) -> RleMask:
    try:
        counts = tuple(int(c) for c in text.split(","))
    except ValueError:
        raise ParseError(f"bad run-length list {text[:40]!r}", path, line, "rle_counts") from None
    rle = RleMask(width, height, counts)
    if any(c < 0 for c in counts):
        raise ParseError("negative run length", path, line, "rle_counts")
    if sum(counts) != width * height:
        raise ParseError(
            f"run lengths sum to {sum(counts)}, frame has {width * height} pixels",
            path,
            line,
            "rle_counts",
        )
    if not rle.is_canonical():
        raise ParseError("zero-length run after the leading background run", path, line, "rle_counts")
    return rle


def format_counts(rle: RleMask) -> str:
    return ",".join(str(c) for c in rle.counts)


# label maps ---------------------------------------------------------------


def load_label_file(path) -> np.ndarray:
    path = Path(path)
    lines = list(_lines(path))
    header: Dict[str, int] = {}
    body = []
    for n, text in lines:
        if ":" in text:
            key, _, value = text.partition(":")
            key = key.strip()
            if key not in ("width", "height") or key in header:
                raise ParseError("unexpected header line", path, n, key)
            header[key] = _int(value.strip(), path, n, key)
        else:
            body.append((n, text))
    if set(header) != {"width", "height"}:
        raise ParseError("label file needs width and height headers", path)
    w, h = header["width"], header["height"]
    masks: Dict[int, RleMask] = {}
    for n, text in body:
        parts = text.split()
        if len(parts) != 2:
            raise ParseError("expected '<id> <rle counts>'", path, n)
        iid = _int(parts[0], path, n, "instance_id")
        if iid <= 0 or iid in masks:
            raise ParseError("instance ids must be positive and unique", path, n, "instance_id")
        masks[iid] = parse_counts(parts[1], w, h, path, n)
    try:
        return masks_to_label_map(masks, w, h)
    except ValueError as exc:
        raise ParseError(str(exc), path) from None


def format_label_map(labels: np.ndarray) -> str:
    labels = np.asarray(labels)
    h, w = labels.shape
    lines = [f"width: {w}", f"height: {h}"]
    lines += [f"{iid} {format_counts(m)}" for iid, m in label_map_masks(labels).items()]
    return "\n".join(lines) + "\n"


def save_label_maps(label_maps, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, labels in enumerate(label_maps):
        (directory / frame_name(t)).write_text(format_label_map(labels))


def _load_frames(directory: Path, frame_count: int, loader):
    frames = []
    for t in range(frame_count):
        p = directory / frame_name(t)
        if not p.exists():
            raise MissingFrame(f"missing {frame_name(t)} (frames must run 0..{frame_count - 1})", directory)
        frames.append(loader(p))
    extra = sorted(p.name for p in directory.glob("frame_*.txt") if p.name not in {frame_name(t) for t in range(frame_count)})
    if extra:
        raise MissingFrame(f"unexpected frame files {extra[:3]}", directory)
    return frames


def load_label_maps(path) -> List[np.ndarray]:
    """Label maps from a result dir (labels/), a sequence dir (gt/) or a bare frame dir."""
    path = Path(path)
    for sub in ("labels", "gt"):
        if (path / sub).is_dir():
            path = path / sub
            break
    count = 0
    while (path / frame_name(count)).exists():
        count += 1
    if count == 0:
        raise MissingFrame("no label frames found", path)
    return _load_frames(path, count, load_label_file)


# sequences ----------------------------------------------------------------


def _parse_candidate(text, n, path, frame_count, width, height, dim) -> CandidateProposal:
    parts = text.split()
    if len(parts) != 9:
        raise ParseError(f"expected 9 fields, found {len(parts)}", path, n)
    t = _int(parts[0], path, n, "frame")
    if not 0 <= t < frame_count:
        raise MissingFrame(f"frame index {t} outside 0..{frame_count - 1}", path, n, "frame")
    x, y, w, h, obj = (_float(v, path, n, k) for v, k in zip(parts[1:6], ("x", "y", "w", "h", "objectness")))
    if w <= 0 or h <= 0:
        raise ParseError("box extent must be positive", path, n, "w/h")
    if not 0.0 <= obj <= 1.0:
        raise ParseError("objectness outside [0, 1]", path, n, "objectness")
    source, source_id = parts[6], None
    if source.startswith(PROPAGATED + ":"):
        source_id = _int(source.split(":", 1)[1], path, n, "source")
        source = PROPAGATED
    elif source != DETECTOR:
        raise ParseError(f"unknown source tag {source!r}", path, n, "source")
    mask = parse_counts(parts[7], width, height, path, n)
    desc = tuple(_float(v, path, n, "descriptor") for v in parts[8].split(","))
    if len(desc) != dim:
        raise ParseError(f"descriptor has {len(desc)} values, expected {dim}", path, n, "descriptor")
    return CandidateProposal(t, BoundingBox(x, y, w, h), mask, obj, desc, source, source_id)


def format_candidate(c: CandidateProposal) -> str:
    source = c.source if c.source_id is None else f"{PROPAGATED}:{c.source_id}"
    b = c.bbox
    fields = [str(c.frame_index)] + [fmt_float(v) for v in (b.x, b.y, b.w, b.h, c.objectness)]
    fields += [source, format_counts(c.mask), ",".join(fmt_float(v) for v in c.descriptor)]
    return " ".join(fields)


def _load_saliency(path: Path, width: int, height: int) -> SaliencyMap:
    values = []
    for n, text in _lines(path):
        values.extend(_float(v, path, n, "saliency") for v in text.split())
    if len(values) != width * height:
        raise ParseError(f"{len(values)} saliency values, expected {width * height}", path)
    try:
        return SaliencyMap(width, height, np.asarray(values))
    except ValueError as exc:
        raise ParseError(str(exc), path) from None


def format_saliency(sal: SaliencyMap) -> str:
    return "".join(" ".join(fmt_float(v) for v in row) + "\n" for row in sal.values)


def load_sequence(path) -> SequenceInput:
    path = Path(path)
    head = _header(path / "manifest.txt", ("frame_count", "width", "height", "descriptor_dim"))
    T, W, H, D = head["frame_count"], head["width"], head["height"], head["descriptor_dim"]
    per_frame: List[list] = [[] for _ in range(T)]
    cand_path = path / "candidates.txt"
    last_t = 0
    for n, text in _lines(cand_path):
        cand = _parse_candidate(text, n, cand_path, T, W, H, D)
        if cand.frame_index < last_t:
            raise ParseError("candidates must be ordered by frame", cand_path, n, "frame")
        last_t = cand.frame_index
        per_frame[cand.frame_index].append(cand)
    saliency = _load_frames(path / "saliency", T, lambda p: _load_saliency(p, W, H))
    gt = None
    if (path / "gt").is_dir():
        gt = _load_frames(path / "gt", T, load_label_file)
        for t, g in enumerate(gt):
            if g.shape != (H, W):
                raise ParseError(f"label map is {g.shape[1]}x{g.shape[0]}, expected {W}x{H}", path / "gt" / frame_name(t))
    return SequenceInput((W, H), D, per_frame, saliency, gt)


def save_sequence(seq: SequenceInput, path) -> None:
    path = Path(path)
    (path / "saliency").mkdir(parents=True, exist_ok=True)
    write_keyvalue(
        {"frame_count": seq.frame_count, "width": seq.width, "height": seq.height, "descriptor_dim": seq.descriptor_dim},
        path / "manifest.txt",
        sep=":",
    )
    lines = [CANDIDATE_HEADER] + [format_candidate(c) for frame in seq.candidates for c in frame]
    (path / "candidates.txt").write_text("\n".join(lines) + "\n")
    for t, sal in enumerate(seq.saliency):
        (path / "saliency" / frame_name(t)).write_text(format_saliency(sal))
    if seq.ground_truth is not None:
        save_label_maps(seq.ground_truth, path / "gt")


# results ------------------------------------------------------------------


def save_result(result, path) -> None:
    from .pipeline import format_provenance

    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    width, height = result.frame_size
    write_keyvalue(
        {"frame_count": len(result.label_maps), "width": width, "height": height}, path / "result.txt", sep=":"
    )
    save_label_maps(result.label_maps, path / "labels")
    lines = [PROVENANCE_HEADER] + [format_provenance(r) for r in result.provenance]
    (path / "provenance.txt").write_text("\n".join(lines) + "\n")


def load_result(path):
    from .pipeline import SequenceResult, parse_provenance

    path = Path(path)
    head = _header(path / "result.txt", ("frame_count", "width", "height"))
    labels = _load_frames(path / "labels", head["frame_count"], load_label_file)
    prov_path = path / "provenance.txt"
    records = [parse_provenance(text, prov_path, n) for n, text in _lines(prov_path)]
    return SequenceResult((head["width"], head["height"]), labels, records)
