"""Command-line entry point: ``motpipe track | eval | synth | report``.

Exit codes: 0 success, 1 usage or configuration error, 2 input parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, config, dataio, metrics, report, synth
from .tracker import TrackerConfig, run_sequence

log = logging.getLogger("motpipe")

EXIT_OK, EXIT_USAGE, EXIT_PARSE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="motpipe", description="Pedestrian tracking pipeline and MOT evaluation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("track", help="track one MOT17-format sequence")
    t.add_argument("--seq", type=Path, help="sequence dir with seqinfo.ini and det/det.txt")
    t.add_argument("--out", type=Path, help="output track file")
    t.add_argument("--config", type=Path, help="flat key=value tracker config")
    t.add_argument("--depth-weight", type=float, help="depth cue weight (overrides config)")
    t.add_argument("--no-smoothing", action="store_true", help="report raw detection boxes")
    t.add_argument("--seed", type=int, default=0, help="reserved; the tracker is deterministic")
    t.add_argument("--manifest", type=Path, help="replay a previous run from its manifest")

    e = sub.add_parser("eval", help="evaluate track files against ground truth")
    e.add_argument("--gt", type=Path, action="append", required=True,
                   help="sequence dir or gt.txt; repeat once per sequence")
    e.add_argument("--hyp", type=Path, action="append", required=True,
                   help="track file; repeat in the same order as --gt")
    e.add_argument("--out", type=Path, required=True, help="report CSV")
    e.add_argument("--svg", type=Path, help="also render the per-sequence bar chart")
    e.add_argument("--iou-min", type=float, default=0.5)
    e.add_argument("--min-visibility", type=float, default=0.0)

    s = sub.add_parser("synth", help="write a synthetic sequence directory")
    s.add_argument("--config", type=Path, help="flat key=value synth config")
    s.add_argument("--out", type=Path, required=True)

    r = sub.add_parser("report", help="render the bar chart from an evaluation CSV")
    r.add_argument("--csv", type=Path, required=True)
    r.add_argument("--out", type=Path, required=True, help="figure path (.svg, .png or .pdf)")
    return p


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise dataio.ParseError(f"cannot read {path}: {exc.strerror}") from None


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def cmd_track(args) -> int:
    if args.manifest is not None:
        recorded = json.loads(_read(args.manifest))
        try:
            seq_dir = Path(recorded["inputs"]["seq"])
            out = args.out or Path(recorded["outputs"]["tracks"])
            snapshot = recorded["config"]
        except KeyError as exc:
            raise dataio.ParseError(f"{args.manifest}: manifest lacks {exc}") from None
        cfg = config.apply_tracker_overrides(
            TrackerConfig(), [(0, k, config.render_value(v)) for k, v in snapshot.items()])
        config_path = recorded["inputs"].get("config")
    else:
        if args.seq is None or args.out is None:
            raise UsageError("track requires --seq and --out (or --manifest)")
        seq_dir, out = args.seq, args.out
        cfg = config.load_tracker_config(_read(args.config)) if args.config else TrackerConfig()
        config_path = str(args.config) if args.config else None
    if args.depth_weight is not None:
        cfg.assoc.depth_weight = args.depth_weight
    if args.no_smoothing:
        cfg.output_smoothing = False
    problems = cfg.validate()
    if problems:
        raise UsageError("; ".join(problems))

    started = time.perf_counter()
    seq = dataio.load_sequence(seq_dir)
    t0 = time.perf_counter()
    rows = run_sequence(seq.detections.by_frame, seq.meta, cfg)
    track_seconds = time.perf_counter() - t0
    n_frames = max(seq.meta.seq_length, max(seq.detections.by_frame, default=0))
    dataio.write_text(out, dataio.write_tracks(rows))

    manifest = {
        "tool": "motpipe",
        "tool_version": __version__,
        "sequence": seq.meta.name,
        "config": config.tracker_config_items(cfg),
        "inputs": {"seq": str(seq_dir), "config": config_path},
        "outputs": {"tracks": str(out), "manifest": str(manifest_path(out))},
        "frames": n_frames,
        "rows": len(rows),
        "throughput_fps": n_frames / track_seconds if track_seconds > 0 else None,
        "duration_s": time.perf_counter() - started,
    }
    dataio.write_text(manifest_path(out), json.dumps(manifest, indent=2) + "\n")
    log.info("%s: %d rows, %.1f frames/s", seq.meta.name, len(rows), manifest["throughput_fps"] or 0)
    return EXIT_OK


def _resolve_gt(path: Path) -> tuple[str, Path, dataio.SequenceMeta | None]:
    """Sequence name, gt file and (if found) sequence header for a --gt argument."""
    if path.is_dir():
        gt_file = path / "gt" / "gt.txt"
        seq_dir = path
    else:
        gt_file = path
        seq_dir = path.parent.parent if path.parent.name == "gt" else None
    meta = None
    if seq_dir is not None and (seq_dir / "seqinfo.ini").is_file():
        meta = dataio.parse_seqinfo(_read(seq_dir / "seqinfo.ini"))
    name = meta.name if meta else (seq_dir.name if seq_dir is not None else path.stem)
    return name, gt_file, meta


def _eval_one(gt_arg: Path, hyp_arg: Path, cfg: metrics.EvalConfig) -> metrics.SequenceResult:
    name, gt_file, meta = _resolve_gt(gt_arg)
    gt = dataio.parse_gt(_read(gt_file), cfg, str(gt_file))
    hyp = dataio.parse_tracks(_read(hyp_arg), str(hyp_arg), cfg)
    if meta is not None and hyp and max(hyp) > meta.seq_length:
        raise dataio.ParseError(
            f"{hyp_arg} has frame {max(hyp)} beyond {name} seqLength {meta.seq_length}; "
            "gt/hyp sequence mismatch")
    return metrics.evaluate_sequence(metrics.gt_trajectories(gt), metrics.track_trajectories(hyp),
                                     cfg, name)


def _threads(n_jobs: int) -> int:
    cap = os.environ.get("MOTPIPE_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise UsageError(f"MOTPIPE_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(limit, n_jobs))


def cmd_eval(args) -> int:
    if len(args.gt) != len(args.hyp):
        raise dataio.ParseError(
            f"gt/hyp sequence mismatch: {len(args.gt)} --gt vs {len(args.hyp)} --hyp")
    try:
        cfg = metrics.EvalConfig(match_iou_min=args.iou_min, min_visibility=args.min_visibility)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    with ThreadPoolExecutor(max_workers=_threads(len(args.gt))) as pool:
        results = list(pool.map(lambda pair: _eval_one(*pair, cfg), zip(args.gt, args.hyp)))
    rep = metrics.EvalReport(results)
    dataio.write_text(args.out, rep.to_csv())
    if args.svg:
        report.save_figure(report.rows_from_report(rep), args.svg)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = config.load_synth_config(_read(args.config)) if args.config else synth.SynthConfig()
    problems = cfg.validate()
    if problems:
        raise UsageError("invalid synth config:\n  " + "\n  ".join(problems))
    synth.generate(cfg).write(args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    report.save_figure(report.rows_from_csv(args.csv), args.out)
    return EXIT_OK


COMMANDS = {"track": cmd_track, "eval": cmd_eval, "synth": cmd_synth, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, config.ConfigError, synth.SynthConfigError) as exc:
        print(f"motpipe {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (dataio.ParseError, json.JSONDecodeError) as exc:
        print(f"motpipe {args.command}: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
