"""MOT17 sequence files and per-detection cue sidecars.

All formats are headerless, comma-separated UTF-8 text. Parse errors carry a
1-based line number.
"""

from __future__ import annotations

import configparser
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .detpre import NUM_KEYPOINTS, Detection
from .geometry import BBox

log = logging.getLogger(__name__)

POSE_COLUMNS = 2 + 3 * NUM_KEYPOINTS


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


@dataclass
class SequenceMeta:
    name: str
    frame_rate: float
    seq_length: int
    im_width: int
    im_height: int


@dataclass
class GtRow:
    frame: int
    id: int
    bbox: BBox
    visibility: float = 1.0


@dataclass
class ParsedDetections:
    by_frame: dict[int, list[Detection]] = field(default_factory=dict)
    dropped: int = 0

    @property
    def n_frames(self) -> int:
        return len(self.by_frame)

    @property
    def count(self) -> int:
        return sum(len(v) for v in self.by_frame.values())


_SEQINFO_KEYS = {
    "name": ("name", str),
    "frameRate": ("frame_rate", float),
    "seqLength": ("seq_length", int),
    "imWidth": ("im_width", int),
    "imHeight": ("im_height", int),
}


def parse_seqinfo(text: str) -> SequenceMeta:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ParseError(f"malformed seqinfo: {exc}", getattr(exc, "lineno", None)) from exc
    if not parser.has_section("Sequence"):
        raise ParseError("missing [Sequence] section")
    section = parser["Sequence"]
    lines = text.splitlines()

    def line_of(key: str) -> int | None:
        for no, line in enumerate(lines, 1):
            if line.split("=", 1)[0].strip().lower() == key.lower():
                return no
        return None

    values = {}
    for key, (attr, conv) in _SEQINFO_KEYS.items():
        if key not in section:  # configparser lowercases option names
            raise ParseError(f"missing required key '{key}'")
        raw = section[key].strip()
        try:
            values[attr] = conv(raw)
        except ValueError:
            raise ParseError(f"malformed number for '{key}': {raw!r}", line_of(key)) from None
    meta = SequenceMeta(**values)
    if meta.seq_length < 1 or meta.im_width < 1 or meta.im_height < 1:
        raise ParseError("seqLength and image dimensions must be >= 1")
    return meta


def write_seqinfo(meta: SequenceMeta) -> str:
    rate = int(meta.frame_rate) if float(meta.frame_rate).is_integer() else meta.frame_rate
    return (f"[Sequence]\nname={meta.name}\nimDir=img1\nframeRate={rate}\n"
            f"seqLength={meta.seq_length}\nimWidth={meta.im_width}\nimHeight={meta.im_height}\nimExt=.jpg\n")


def _csv_rows(text: str, source: str | None) -> Iterable[tuple[int, list[float]]]:
    for no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", no, source) from None
        if not all(math.isfinite(v) for v in values):
            raise ParseError(f"non-finite field in {line!r}", no, source)
        yield no, values


def _frame(value: float, no: int, source: str | None) -> int:
    if value < 1 or not float(value).is_integer():
        raise ParseError(f"invalid frame index {value}", no, source)
    return int(value)


def parse_det(text: str, source: str | None = None) -> ParsedDetections:
    """Parse ``frame,id,left,top,width,height,conf,x,y,z`` detection rows.

    Row order within a frame is preserved; that order defines ``det_idx`` for
    the sidecar join.
    """
    out = ParsedDetections()
    for no, v in _csv_rows(text, source):
        if len(v) < 7:
            raise ParseError(f"expected at least 7 columns, got {len(v)}", no, source)
        frame = _frame(v[0], no, source)
        box = BBox(v[2], v[3], v[4], v[5])
        if not box.is_valid():
            out.dropped += 1
            continue
        out.by_frame.setdefault(frame, []).append(Detection(frame, box, v[6]))
    if out.dropped:
        log.warning("%s: dropped %d detections with non-positive size", source or "det", out.dropped)
    return out


def parse_tracks(text: str, source: str | None = None, eval_cfg=None) -> dict[int, list[tuple[int, BBox, float]]]:
    """Parse a tracker output file into ``{frame: [(id, box, conf), ...]}``.

    Rows with exactly 9 columns are in ground-truth layout; they are filtered
    with the same active/category/visibility rules as :func:`parse_gt` so a
    gt file evaluates cleanly as a hypothesis.
    """
    out: dict[int, list[tuple[int, BBox, float]]] = defaultdict(list)
    for no, v in _csv_rows(text, source):
        if len(v) < 6:
            raise ParseError(f"expected at least 6 columns, got {len(v)}", no, source)
        frame = _frame(v[0], no, source)
        if len(v) == 9 and not _gt_keep(v, eval_cfg):
            continue
        box = BBox(v[2], v[3], v[4], v[5])
        if not box.is_valid():
            continue
        out[frame].append((int(v[1]), box, v[6] if len(v) > 6 else 1.0))
    return dict(out)


def _gt_keep(v: Sequence[float], eval_cfg) -> bool:
    categories = eval_cfg.consider_categories if eval_cfg is not None else {1}
    min_vis = eval_cfg.min_visibility if eval_cfg is not None else 0.0
    return int(v[6]) == 1 and int(v[7]) in categories and v[8] >= min_vis


def parse_gt(text: str, eval_cfg=None, source: str | None = None) -> dict[int, list[GtRow]]:
    """Parse ``frame,id,left,top,width,height,active,category,visibility`` rows.

    Only active rows with a considered category and sufficient visibility are
    kept. Returns ``{frame: [GtRow, ...]}``.
    """
    out: dict[int, list[GtRow]] = defaultdict(list)
    seen: set[tuple[int, int]] = set()
    for no, v in _csv_rows(text, source):
        if len(v) < 9:
            raise ParseError(f"expected 9 columns, got {len(v)}", no, source)
        frame = _frame(v[0], no, source)
        key = (frame, int(v[1]))
        if key in seen:
            raise ParseError(f"duplicate (frame, id) {key}", no, source)
        seen.add(key)
        if not _gt_keep(v, eval_cfg):
            continue
        box = BBox(v[2], v[3], v[4], v[5])
        if not box.is_valid():
            continue
        out[frame].append(GtRow(frame, int(v[1]), box, v[8]))
    return dict(out)


@dataclass
class CueRecords:
    embeddings: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    depths: dict[tuple[int, int], float] = field(default_factory=dict)
    poses: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    warnings: int = 0


def _cue_key(v: list[float], no: int, source: str) -> tuple[int, int]:
    det_idx = v[1]
    if det_idx < 0 or not float(det_idx).is_integer():
        raise ParseError(f"invalid det_idx {det_idx}", no, source)
    return _frame(v[0], no, source), int(det_idx)


def parse_sidecars(embed_text: Optional[str] = None, depth_text: Optional[str] = None,
                   pose_text: Optional[str] = None) -> CueRecords:
    cues = CueRecords()
    if embed_text:
        dim = None
        for no, v in _csv_rows(embed_text, "embed"):
            if dim is None:
                dim = len(v) - 2
                if dim < 1:
                    raise ParseError("embedding row has no vector components", no, "embed")
            if len(v) - 2 != dim:
                raise ParseError(f"embedding dimension {len(v) - 2} != {dim}", no, "embed")
            vec = np.array(v[2:])
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise ParseError("zero-norm embedding", no, "embed")
            cues.embeddings[_cue_key(v, no, "embed")] = vec / norm
    if depth_text:
        for no, v in _csv_rows(depth_text, "depth"):
            if len(v) != 3:
                raise ParseError(f"expected 3 columns, got {len(v)}", no, "depth")
            d = v[2]
            if not 0.0 <= d <= 1.0:
                log.warning("depth line %d: rel_depth %g clamped to [0, 1]", no, d)
                cues.warnings += 1
                d = min(max(d, 0.0), 1.0)
            cues.depths[_cue_key(v, no, "depth")] = d
    if pose_text:
        for no, v in _csv_rows(pose_text, "pose"):
            if len(v) != POSE_COLUMNS:
                raise ParseError(f"expected {POSE_COLUMNS} columns, got {len(v)}", no, "pose")
            cues.poses[_cue_key(v, no, "pose")] = np.array(v[2:]).reshape(NUM_KEYPOINTS, 3)
    return cues


def attach_cues(dets: ParsedDetections, cues: CueRecords) -> int:
    """Join cues onto detections by (frame, raw row index). Returns the warning count."""
    warnings = cues.warnings
    for attr, table in (("embedding", cues.embeddings), ("rel_depth", cues.depths),
                        ("keypoints", cues.poses)):
        for (frame, idx), value in table.items():
            frame_dets = dets.by_frame.get(frame, [])
            if idx >= len(frame_dets):
                log.warning("%s cue for frame %d det %d has no matching detection; discarded",
                            attr, frame, idx)
                warnings += 1
                continue
            setattr(frame_dets[idx], attr, value)
    return warnings


def write_tracks(rows: Iterable[tuple[int, int, BBox, float]]) -> str:
    lines = []
    for frame, tid, box, conf in sorted(rows, key=lambda r: (r[0], r[1])):
        lines.append(f"{frame},{tid},{box[0]:.2f},{box[1]:.2f},{box[2]:.2f},{box[3]:.2f},{conf:.4f},-1,-1,-1")
    return "".join(line + "\n" for line in lines)


def write_text(path: Path, text: str) -> None:
    """Write LF-only UTF-8 text atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    tmp.replace(path)


@dataclass
class SequenceInputs:
    meta: SequenceMeta
    detections: ParsedDetections
    gt_text: Optional[str] = None


def load_sequence(seq_dir: Path) -> SequenceInputs:
    """Load a MOT17-style sequence directory with optional sidecars."""
    seq_dir = Path(seq_dir)
    info = seq_dir / "seqinfo.ini"
    if not info.is_file():
        raise ParseError(f"missing seqinfo file {info}")
    meta = parse_seqinfo(info.read_text(encoding="utf-8"))
    det_path = seq_dir / "det" / "det.txt"
    if not det_path.is_file():
        raise ParseError(f"missing detection file {det_path}")
    dets = parse_det(det_path.read_text(encoding="utf-8"), str(det_path))

    def maybe(name: str) -> Optional[str]:
        p = seq_dir / name
        return p.read_text(encoding="utf-8") if p.is_file() else None

    cues = parse_sidecars(maybe("embed.csv"), maybe("depth.csv"), maybe("pose.csv"))
    attach_cues(dets, cues)
    gt_path = seq_dir / "gt" / "gt.txt"
    gt_text = gt_path.read_text(encoding="utf-8") if gt_path.is_file() else None
    return SequenceInputs(meta, dets, gt_text)
