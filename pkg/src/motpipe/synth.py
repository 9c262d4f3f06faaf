"""Deterministic synthetic pedestrian scenes with known ground truth.

Scenes are emitted in exactly the on-disk formats of :mod:`motpipe.dataio`,
so the tracker cannot tell them apart from real sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataio
from .dataio import SequenceMeta

# Independent random streams; adding a signal must never perturb another.
_STREAMS = {"paths": 0, "noise": 1, "clutter": 2, "embeddings": 3, "pose": 4, "order": 5}

PRE_OCCLUSION_FRAMES = 5
ASPECT = 0.41
MAX_EMBED_DOT = 0.35


class SynthConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class SynthConfig:
    seed: int = 0
    n_peds: int = 10
    n_frames: int = 200
    im_width: int = 1920
    im_height: int = 1080
    vel_std: float = 0.1
    det_noise_std: float = 1.0
    miss_rate: float = 0.0
    clutter_rate: float = 0.0
    embed_dim: int = 128
    embed_noise_std: float = 0.01
    occlusions: list[tuple[int, int, int]] = field(default_factory=list)  # (ped id, start, duration)
    depth_lanes: bool = False
    # "random" walkers, or "crossing": pairs walking toward each other on a shared line
    scenario: str = "random"
    identical_embeddings: bool = False
    # blend weight toward the nearest other pedestrian's embedding reached
    # on the last frame before an occlusion
    occlusion_contamination: float = 0.0
    min_height: float = 80.0
    max_height: float = 240.0
    frame_rate: float = 30.0
    name: str = "SYNTH-01"

    def validate(self) -> list[str]:
        problems = []
        if self.n_peds < 1:
            problems.append("n_peds must be >= 1")
        if self.n_frames < 1:
            problems.append("n_frames must be >= 1")
        if self.im_width < 1 or self.im_height < 1:
            problems.append("image dimensions must be >= 1")
        for name in ("miss_rate", "clutter_rate", "occlusion_contamination"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must be in [0, 1]")
        for name in ("vel_std", "det_noise_std", "embed_noise_std"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        if self.embed_dim < 1:
            problems.append("embed_dim must be >= 1")
        if not 0 < self.min_height <= self.max_height < self.im_height:
            problems.append("need 0 < min_height <= max_height < im_height")
        if self.scenario not in ("random", "crossing"):
            problems.append(f"unknown scenario {self.scenario!r}")
        for ped, start, duration in self.occlusions:
            if not 1 <= ped <= self.n_peds:
                problems.append(f"occlusion references unknown pedestrian {ped}")
            if duration < 1:
                problems.append(f"occlusion of pedestrian {ped} has duration < 1")
            if start < 1:
                problems.append(f"occlusion of pedestrian {ped} starts before frame 1")
        return problems


@dataclass
class SynthScene:
    cfg: SynthConfig
    gt_rows: list[tuple]
    det_rows: list[tuple]
    embed_rows: list[tuple]
    depth_rows: list[tuple]
    pose_rows: list[tuple]
    seqinfo: str

    def texts(self) -> dict[str, str]:
        """Relative path -> file content for a sequence directory."""
        return {
            "seqinfo.ini": self.seqinfo,
            "gt/gt.txt": _lines(self.gt_rows, _fmt_gt),
            "det/det.txt": _lines(self.det_rows, _fmt_det),
            "embed.csv": _lines(self.embed_rows, _fmt_cue),
            "depth.csv": _lines(self.depth_rows, _fmt_cue),
            "pose.csv": _lines(self.pose_rows, _fmt_cue),
        }

    def write(self, out_dir: Path) -> None:
        out_dir = Path(out_dir)
        for rel, text in self.texts().items():
            dataio.write_text(out_dir / rel, text)

    def load(self) -> dataio.SequenceInputs:
        """Parse the scene's own file texts, exactly as the CLI would read them."""
        t = self.texts()
        dets = dataio.parse_det(t["det/det.txt"])
        cues = dataio.parse_sidecars(t["embed.csv"], t["depth.csv"], t["pose.csv"])
        dataio.attach_cues(dets, cues)
        return dataio.SequenceInputs(dataio.parse_seqinfo(t["seqinfo.ini"]), dets, t["gt/gt.txt"])


def _lines(rows, fmt) -> str:
    return "".join(fmt(r) + "\n" for r in rows)


def _num(v: float) -> str:
    return f"{v:.3f}"


def _fmt_gt(r) -> str:
    frame, pid, l, t, w, h, vis = r
    return f"{frame},{pid},{_num(l)},{_num(t)},{_num(w)},{_num(h)},1,1,{vis:.2f}"


def _fmt_det(r) -> str:
    frame, l, t, w, h, conf = r
    return f"{frame},-1,{_num(l)},{_num(t)},{_num(w)},{_num(h)},{conf:.4f},-1,-1,-1"


def _fmt_cue(r) -> str:
    frame, idx, values = r
    return f"{frame},{idx}," + ",".join(f"{v:.6f}" for v in values)


def _rng(seed: int, stream: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_STREAMS[stream],))
    return np.random.Generator(np.random.PCG64(ss))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _identity_embeddings(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.identical_embeddings:
        v = _unit(rng.standard_normal(cfg.embed_dim))
        return np.tile(v, (cfg.n_peds, 1))
    vecs: list[np.ndarray] = []
    while len(vecs) < cfg.n_peds:
        cand = _unit(rng.standard_normal(cfg.embed_dim))
        if all(abs(cand @ v) < MAX_EMBED_DOT for v in vecs):
            vecs.append(cand)
    return np.array(vecs)


def _reflect(pos: float, vel: float, lo: float, hi: float) -> tuple[float, float]:
    # fold back into [lo, hi]; loop handles overshoot larger than the range
    while pos < lo or pos > hi:
        if pos < lo:
            pos, vel = 2 * lo - pos, -vel
        if pos > hi:
            pos, vel = 2 * hi - pos, -vel
    return pos, vel


def _simulate_paths(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Box trajectories, shape (n_frames, n_peds, 4) in tlwh."""
    n, W, H = cfg.n_peds, float(cfg.im_width), float(cfg.im_height)
    heights = rng.uniform(cfg.min_height, cfg.max_height, n)
    widths = ASPECT * heights
    if cfg.scenario == "crossing":
        # pairs start at opposite quarters and meet mid-sequence
        lefts = np.empty(n)
        tops = np.empty(n)
        vx = np.empty(n)
        speed = 0.5 * W / max(cfg.n_frames, 1)
        for i in range(n):
            pair, side = divmod(i, 2)
            cy = H * (0.3 + 0.4 * ((pair + 0.5) / max((n + 1) // 2, 1)))
            cx = W * (0.25 if side == 0 else 0.75)
            lefts[i] = cx - widths[i] / 2
            tops[i] = min(max(cy - heights[i] / 2, 0.0), H - heights[i])
            vx[i] = speed if side == 0 else -speed
        vy = np.zeros(n)
    else:
        lefts = rng.uniform(0, W - widths)
        tops = rng.uniform(0, H - heights)
        speed = rng.uniform(0.5, 2.5, n)
        angle = rng.uniform(0, 2 * np.pi, n)
        vx, vy = speed * np.cos(angle), speed * np.sin(angle)

    out = np.empty((cfg.n_frames, n, 4))
    for f in range(cfg.n_frames):
        if f > 0:
            vx = vx + rng.normal(0.0, cfg.vel_std, n) if cfg.vel_std > 0 else vx
            vy = vy + rng.normal(0.0, cfg.vel_std, n) if cfg.vel_std > 0 else vy
            lefts = lefts + vx
            tops = tops + vy
            for i in range(n):
                lefts[i], vx[i] = _reflect(lefts[i], vx[i], 0.0, W - widths[i])
                tops[i], vy[i] = _reflect(tops[i], vy[i], 0.0, H - heights[i])
        out[f, :, 0] = lefts
        out[f, :, 1] = tops
        out[f, :, 2] = widths
        out[f, :, 3] = heights
    # quantize once so in-memory rows and written text agree
    out = np.round(out, 3)
    out[..., 0] = np.clip(out[..., 0], 0.0, W - out[..., 2])
    out[..., 1] = np.clip(out[..., 1], 0.0, H - out[..., 3])
    return out


def generate(cfg: SynthConfig) -> SynthScene:
    problems = cfg.validate()
    if problems:
        raise SynthConfigError(problems)
    paths = _simulate_paths(cfg, _rng(cfg.seed, "paths"))
    noise = _rng(cfg.seed, "noise")
    clutter = _rng(cfg.seed, "clutter")
    emb_rng = _rng(cfg.seed, "embeddings")
    pose_rng = _rng(cfg.seed, "pose")
    order_rng = _rng(cfg.seed, "order")
    identities = _identity_embeddings(cfg, emb_rng)
    W, H = float(cfg.im_width), float(cfg.im_height)

    hidden = np.zeros((cfg.n_frames + 1, cfg.n_peds), dtype=bool)
    pre_occ = np.zeros((cfg.n_frames + 1, cfg.n_peds), dtype=int)  # 1..5, 5 = frame just before
    for ped, start, duration in cfg.occlusions:
        hidden[start:min(start + duration, cfg.n_frames + 1), ped - 1] = True
        for k in range(1, PRE_OCCLUSION_FRAMES + 1):
            f = start - PRE_OCCLUSION_FRAMES - 1 + k
            if 1 <= f <= cfg.n_frames and not hidden[f, ped - 1]:
                pre_occ[f, ped - 1] = max(pre_occ[f, ped - 1], k)

    gt_rows, det_rows, embed_rows, depth_rows, pose_rows = [], [], [], [], []
    for f in range(1, cfg.n_frames + 1):
        boxes = paths[f - 1]
        centers = boxes[:, :2] + boxes[:, 2:] / 2
        frame_dets = []  # (box, conf, embedding, depth, pose_conf)
        for i in range(cfg.n_peds):
            l, t, w, h = boxes[i]
            gt_rows.append((f, i + 1, l, t, w, h, 0.0 if hidden[f, i] else 1.0))
            # draw every random quantity even when unused, keeping streams aligned
            jitter = noise.normal(0.0, 1.0, 4) * cfg.det_noise_std
            missed = noise.random() < cfg.miss_rate
            conf = noise.uniform(0.7, 1.0)
            emb_noise = emb_rng.standard_normal(cfg.embed_dim) * cfg.embed_noise_std
            if hidden[f, i] or missed:
                continue
            box = boxes[i] + jitter if cfg.det_noise_std > 0 else boxes[i].copy()
            box[2:] = np.maximum(box[2:], 1.0)
            emb = identities[i] + emb_noise
            k = pre_occ[f, i]
            if k and cfg.occlusion_contamination > 0 and cfg.n_peds > 1:
                d = np.linalg.norm(centers - centers[i], axis=1)
                d[i] = np.inf
                occluder = int(np.argmin(d))
                w_mix = cfg.occlusion_contamination * k / PRE_OCCLUSION_FRAMES
                emb = (1 - w_mix) * emb + w_mix * identities[occluder]
            if cfg.depth_lanes:
                depth = (i + 0.5) / cfg.n_peds
            else:
                depth = float(np.clip(1.0 - (t + h) / H, 0.0, 1.0))
            frame_dets.append((box, conf, _unit(emb), depth, 0.1 if k else 0.9))
        for _ in range(clutter.poisson(cfg.clutter_rate)):
            h = clutter.uniform(cfg.min_height, cfg.max_height)
            w = ASPECT * h
            box = np.array([clutter.uniform(0, W - w), clutter.uniform(0, H - h), w, h])
            frame_dets.append((box, clutter.uniform(0.3, 1.0),
                               _unit(clutter.standard_normal(cfg.embed_dim)), clutter.uniform(0, 1), 0.9))
        order = order_rng.permutation(len(frame_dets))
        for idx, j in enumerate(order):
            box, conf, emb, depth, kp_conf = frame_dets[j]
            l, t, w, h = box
            det_rows.append((f, l, t, w, h, conf))
            embed_rows.append((f, idx, emb))
            depth_rows.append((f, idx, [depth]))
            xs = pose_rng.uniform(l, l + w, 17)
            ys = pose_rng.uniform(t, t + h, 17)
            kp = np.column_stack([xs, ys, np.full(17, kp_conf)]).ravel()
            pose_rows.append((f, idx, kp))

    meta = SequenceMeta(cfg.name, cfg.frame_rate, cfg.n_frames, cfg.im_width, cfg.im_height)
    return SynthScene(cfg, gt_rows, det_rows, embed_rows, depth_rows, pose_rows, dataio.write_seqinfo(meta))
