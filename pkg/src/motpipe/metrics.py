"""CLEAR-MOT and identity (IDF1) metrics over MOT-format trajectories."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .assoc import INFEASIBLE, linear_assignment, solve_assignment
from .geometry import BBox, iou_matrix

# frame -> list of (identity, box)
Trajectories = Mapping[int, Sequence[tuple[int, BBox]]]

CSV_COLUMNS = ["sequence", "gt", "tp", "fp", "fn", "idsw", "mota", "idf1", "idp", "idr",
               "precision", "recall"]


@dataclass
class EvalConfig:
    match_iou_min: float = 0.5
    consider_categories: frozenset = frozenset({1})
    min_visibility: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.match_iou_min <= 1.0:
            raise ValueError("match_iou_min must be in (0, 1]")
        self.consider_categories = frozenset(self.consider_categories)


@dataclass
class Counts:
    gt: int = 0
    tp: int = 0
    fp: int = 0
    fn: int = 0
    idsw: int = 0
    idtp: int = 0
    idfp: int = 0
    idfn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(**{k: getattr(self, k) + getattr(other, k) for k in self.__dataclass_fields__})


@dataclass
class FrameResult:
    matches: dict[int, int]  # gt id -> hyp id
    fp: int
    fn: int
    idsw: int


def match_frame(gt: Sequence[tuple[int, BBox]], hyp: Sequence[tuple[int, BBox]],
                prev_matches: Mapping[int, int], iou_min: float = 0.5,
                last_match: Mapping[int, int] | None = None) -> FrameResult:
    """CLEAR matching for one frame.

    Pairs from ``prev_matches`` (previous frame) that are still present and
    overlap by at least ``iou_min`` are kept first; the rest are assigned
    optimally on ``1 - iou``. An identity switch is counted when a gt is
    matched to a different hypothesis than its most recent match
    (``last_match``, defaulting to ``prev_matches``).
    """
    if last_match is None:
        last_match = prev_matches
    gt_ids = [g for g, _ in gt]
    hyp_ids = [h for h, _ in hyp]
    ious = iou_matrix([b for _, b in gt], [b for _, b in hyp])
    gt_pos = {g: i for i, g in enumerate(gt_ids)}
    hyp_pos = {h: j for j, h in enumerate(hyp_ids)}

    matches: dict[int, int] = {}
    used_hyp: set[int] = set()
    for g, h in prev_matches.items():
        if g in gt_pos and h in hyp_pos and h not in used_hyp and ious[gt_pos[g], hyp_pos[h]] >= iou_min:
            matches[g] = h
            used_hyp.add(h)

    rest_g = [i for i, g in enumerate(gt_ids) if g not in matches]
    rest_h = [j for j, h in enumerate(hyp_ids) if h not in used_hyp]
    if rest_g and rest_h:
        sub = ious[np.ix_(rest_g, rest_h)]
        cost = np.where(sub >= iou_min, 1.0 - sub, INFEASIBLE)
        pairs, _, _ = solve_assignment(cost)
        for r, c in pairs:
            matches[gt_ids[rest_g[r]]] = hyp_ids[rest_h[c]]

    idsw = sum(1 for g, h in matches.items() if g in last_match and last_match[g] != h)
    return FrameResult(matches, fp=len(hyp_ids) - len(matches), fn=len(gt_ids) - len(matches), idsw=idsw)


def mota(counts: Counts) -> Optional[float]:
    if counts.gt == 0:
        return None
    return 1.0 - (counts.fn + counts.fp + counts.idsw) / counts.gt


def precision_recall(counts: Counts) -> tuple[float, float]:
    p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 1.0
    r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 1.0
    return p, r


def _identity_overlaps(gt: Trajectories, hyp: Trajectories, iou_min: float):
    gt_ids = sorted({g for rows in gt.values() for g, _ in rows})
    hyp_ids = sorted({h for rows in hyp.values() for h, _ in rows})
    gi = {g: i for i, g in enumerate(gt_ids)}
    hi = {h: j for j, h in enumerate(hyp_ids)}
    overlap = np.zeros((len(gt_ids), len(hyp_ids)), dtype=np.int64)
    gt_len = np.zeros(len(gt_ids), dtype=np.int64)
    hyp_len = np.zeros(len(hyp_ids), dtype=np.int64)
    for rows in gt.values():
        for g, _ in rows:
            gt_len[gi[g]] += 1
    for rows in hyp.values():
        for h, _ in rows:
            hyp_len[hi[h]] += 1
    for frame, grows in gt.items():
        hrows = hyp.get(frame, ())
        if not grows or not hrows:
            continue
        ious = iou_matrix([b for _, b in grows], [b for _, b in hrows])
        for a, b in zip(*np.nonzero(ious >= iou_min)):
            overlap[gi[grows[a][0]], hi[hrows[b][0]]] += 1
    return overlap, gt_len, hyp_len


def id_counts(gt: Trajectories, hyp: Trajectories, iou_min: float = 0.5) -> tuple[int, int, int]:
    """(idtp, idfp, idfn) under the optimal global gt<->hyp identity assignment.

    Minimizing id-mismatched frames is the same as maximizing the number of
    frames where assigned identities overlap, so the assignment is solved on
    the negated overlap-count matrix.
    """
    overlap, gt_len, hyp_len = _identity_overlaps(gt, hyp, iou_min)
    idtp = 0
    if overlap.size:
        rows, cols = linear_assignment(-overlap)
        idtp = int(overlap[rows, cols].sum())
    return idtp, int(hyp_len.sum()) - idtp, int(gt_len.sum()) - idtp


def _idf1_from(idtp: int, idfp: int, idfn: int) -> float:
    denom = 2 * idtp + idfp + idfn
    if denom == 0:
        return 1.0
    return 2 * idtp / denom


def idf1(gt: Trajectories, hyp: Trajectories, iou_min: float = 0.5) -> float:
    return _idf1_from(*id_counts(gt, hyp, iou_min))


@dataclass
class SequenceResult:
    name: str
    counts: Counts

    @property
    def mota(self) -> Optional[float]:
        return mota(self.counts)

    @property
    def idf1(self) -> float:
        c = self.counts
        return _idf1_from(c.idtp, c.idfp, c.idfn)

    @property
    def idp(self) -> float:
        c = self.counts
        return c.idtp / (c.idtp + c.idfp) if c.idtp + c.idfp else 1.0

    @property
    def idr(self) -> float:
        c = self.counts
        return c.idtp / (c.idtp + c.idfn) if c.idtp + c.idfn else 1.0

    @property
    def precision(self) -> float:
        return precision_recall(self.counts)[0]

    @property
    def recall(self) -> float:
        return precision_recall(self.counts)[1]


@dataclass
class EvalReport:
    sequences: list[SequenceResult] = field(default_factory=list)

    @property
    def aggregate(self) -> SequenceResult:
        total = Counts()
        for s in self.sequences:
            total = total + s.counts
        return SequenceResult("AGGREGATE", total)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for res in [*self.sequences, self.aggregate]:
            writer.writerow(_csv_row(res))
        return buf.getvalue()


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def _csv_row(res: SequenceResult) -> list[str]:
    c = res.counts
    return [res.name, str(c.gt), str(c.tp), str(c.fp), str(c.fn), str(c.idsw),
            _fmt(res.mota), _fmt(res.idf1), _fmt(res.idp), _fmt(res.idr),
            _fmt(res.precision), _fmt(res.recall)]


def evaluate_sequence(gt: Trajectories, hyp: Trajectories, cfg: EvalConfig | None = None,
                      name: str = "sequence") -> SequenceResult:
    cfg = cfg or EvalConfig()
    counts = Counts()
    prev: dict[int, int] = {}
    last: dict[int, int] = {}
    for frame in sorted(set(gt) | set(hyp)):
        grows = list(gt.get(frame, ()))
        hrows = list(hyp.get(frame, ()))
        res = match_frame(grows, hrows, prev, cfg.match_iou_min, last)
        counts.gt += len(grows)
        counts.tp += len(res.matches)
        counts.fp += res.fp
        counts.fn += res.fn
        counts.idsw += res.idsw
        prev = res.matches
        last.update(res.matches)
    counts.idtp, counts.idfp, counts.idfn = id_counts(gt, hyp, cfg.match_iou_min)
    return SequenceResult(name, counts)


def gt_trajectories(gt_rows) -> dict[int, list[tuple[int, BBox]]]:
    """Adapt parsed gt rows (``{frame: [GtRow]}``) to trajectories."""
    return {f: [(r.id, r.bbox) for r in rows] for f, rows in gt_rows.items()}


def track_trajectories(track_rows) -> dict[int, list[tuple[int, BBox]]]:
    """Adapt parsed track rows (``{frame: [(id, box, conf)]}``) or flat output rows."""
    if isinstance(track_rows, Mapping):
        return {f: [(tid, box) for tid, box, _ in rows] for f, rows in track_rows.items()}
    out: dict[int, list[tuple[int, BBox]]] = {}
    for frame, tid, box, _ in track_rows:
        out.setdefault(frame, []).append((tid, box))
    return out
