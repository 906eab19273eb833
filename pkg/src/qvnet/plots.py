"""SVG figures for the harness CSVs. Output bytes depend only on the CSV contents."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import QVNetError  # noqa: E402

plt.rcParams["svg.hashsalt"] = "qvnet"


class PlotError(QVNetError, OSError):
    """A summary CSV is missing or has no data rows."""


def _read(path: Path) -> tuple[list[str], list[list[float]]]:
    if not path.is_file():
        raise PlotError(f"{path}: no such file")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = list(reader)
    if not header or not rows:
        raise PlotError(f"{path}: no data rows")

    def num(text: str) -> float:
        try:
            return float(text)
        except ValueError:
            return math.nan

    return header, [[num(v) for v in row] for row in rows]


def _column(header, rows, name):
    i = header.index(name)
    return [r[i] for r in rows]


def _plot_epochs(ax, header, rows) -> None:
    x = _column(header, rows, "epoch")
    for name in header:
        if not name.startswith("median_a"):
            continue
        tag = name[len("median_"):]
        ax.plot(x, _column(header, rows, name), label=f"α = {tag[1:]}")
        ax.fill_between(x, _column(header, rows, f"q25_{tag}"), _column(header, rows, f"q75_{tag}"), alpha=0.2)
    if "oracle_energy" in header:
        ref = _column(header, rows, "oracle_energy")[0]
        if math.isfinite(ref):
            ax.axhline(ref, color="k", linestyle="--", label="oracle ground energy")
    ax.set_xlabel("epoch")


def _plot_sweep(ax, header, rows) -> None:
    x = _column(header, rows, header[0])
    for name in header:
        if name == "greedy" or name.startswith("cvar_a"):
            label = "greedy baseline" if name == "greedy" else f"CVaR-VQE α = {name[len('cvar_a'):]}"
            ax.plot(x, _column(header, rows, name), marker="o", label=label)
    ax.plot(x, _column(header, rows, "optimal"), color="k", linestyle="--", marker="x", label="oracle optimum")
    ax.set_xlabel(header[0])
    ax.set_ylabel("average data rate")


def emit_plot(csv_path: str | Path, out_path: str | Path | None = None) -> Path:
    """Render one CSV to SVG. The CSV is only read, never rewritten."""
    src = Path(csv_path)
    header, rows = _read(src)
    dst = Path(out_path) if out_path else src.with_suffix(".svg")
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        if header[0] == "epoch":
            _plot_epochs(ax, header, rows)
            ax.set_ylabel("ground-state probability" if src.stem.startswith("ground_prob") else "CVaR objective")
        elif "optimal" in header:
            _plot_sweep(ax, header, rows)
        else:
            raise PlotError(f"{src}: unrecognized CSV layout")
        ax.set_title(src.stem)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(dst, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return dst


def emit_plots(csv_paths) -> list[Path]:
    return [emit_plot(p) for p in csv_paths]


def summary_csvs(out_dir: str | Path) -> list[Path]:
    """Aggregate CSVs of a run directory (per-seed traces and run tables excluded)."""
    root = Path(out_dir)
    found = []
    for pattern in ("convergence_p*.csv", "ground_prob_p*.csv", "*_sweep.csv"):
        found += root.rglob(pattern)
    return sorted(found)
