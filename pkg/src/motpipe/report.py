"""Per-sequence metric figures rendered next to the evaluation CSV."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.figure import Figure

from .metrics import EvalReport

BAR_METRICS = ("idf1", "mota", "precision")
BAR_LABELS = {"idf1": "IDF1", "mota": "MOTA", "precision": "Precision"}
BAR_COLORS = {"idf1": "#1f77b4", "mota": "#ff7f0e", "precision": "#2ca02c"}

# 800x400 px at 100 dpi
FIG_SIZE = (8.0, 4.0)
FIG_DPI = 100

_RC = {"svg.hashsalt": "motpipe", "svg.fonttype": "path", "font.size": 9}


def rows_from_report(report: EvalReport) -> list[dict[str, float | None | str]]:
    return [{"sequence": s.name, "idf1": s.idf1, "mota": s.mota, "precision": s.precision}
            for s in report.sequences]


def rows_from_csv(path: Path) -> list[dict[str, float | None | str]]:
    """Read per-sequence rows back from an evaluation CSV (aggregate row skipped)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            if rec["sequence"] == "AGGREGATE":
                continue
            row: dict[str, float | None | str] = {"sequence": rec["sequence"]}
            for key in BAR_METRICS:
                row[key] = float(rec[key]) if rec[key] != "" else None
            rows.append(row)
    return rows


def metrics_figure(rows: Sequence[dict]) -> Figure:
    """Grouped bars: one group per sequence, IDF1 / MOTA / Precision in each."""
    import matplotlib

    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=FIG_SIZE, dpi=FIG_DPI)
        ax = fig.add_subplot(1, 1, 1)
        x = np.arange(len(rows))
        width = 0.26
        for k, key in enumerate(BAR_METRICS):
            values = [r[key] if r[key] is not None else 0.0 for r in rows]
            ax.bar(x + (k - 1) * width, values, width, label=BAR_LABELS[key],
                   color=BAR_COLORS[key], gid=f"bars-{key}")
        ax.set_xticks(x)
        ax.set_xticklabels([str(r["sequence"]) for r in rows], rotation=30, ha="right")
        ax.set_ylim(0.0, 1.0)
        ax.set_ylabel("score")
        ax.legend(loc="upper right", ncol=3, frameon=False)
        ax.grid(axis="y", alpha=0.3)
        fig.tight_layout()
    return fig


def save_figure(rows: Sequence[dict], path: Path) -> None:
    """Write the figure; format follows the file extension (svg, png, pdf)."""
    import matplotlib

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig = metrics_figure(rows)
    fmt = path.suffix.lstrip(".").lower() or "svg"
    metadata = {"Date": None} if fmt in ("svg", "pdf") else None
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format=fmt, metadata=metadata)
