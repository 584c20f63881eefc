"""Render trajectory CSVs into two-panel time-series figures.

Input is the simulation trajectory format: a header row ``t,<node>,...``
followed by one sample per row. The figure has a full-scale panel on top
and a zoomed panel below it, one labeled line per selected node in each.

Standalone script; the only coupling to the simulation package is the CSV
format itself:

    plot trajectory.csv [--nodes A B] [--exclude C] [--zoom-ylim V]
                        [--out fig.svg] [--format svg|png]
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["PlotSpec", "PlotError", "render", "main"]


class PlotError(Exception):
    """Anything that prevents producing the figure."""


@dataclass(frozen=True)
class PlotSpec:
    """One figure request.

    nodes = None means all columns; exclude is applied afterwards. The
    zoom panel's y-limit defaults to 5% of the global maximum.
    """

    input_csv: Path
    output: Path
    nodes: tuple[str, ...] | None = None
    exclude: tuple[str, ...] = ()
    zoom_ylim: float | None = None
    formats: tuple[str, ...] = ("svg",)

    def __post_init__(self):
        if self.zoom_ylim is not None and not self.zoom_ylim > 0:
            raise PlotError(f"zoom y-limit must be positive, got {self.zoom_ylim}")
        for fmt in self.formats:
            if fmt not in ("svg", "png"):
                raise PlotError(f"unsupported format {fmt!r}")


def read_trajectory(path: Path) -> tuple[list[str], list[float], dict[str, list[float]]]:
    """Parse a trajectory CSV into (node ids, times, series per node)."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise PlotError(f"cannot read {path}: {e}") from e
    if not rows or rows[0][:1] != ["t"] or len(rows[0]) < 2:
        raise PlotError(f"{path}: not a trajectory CSV (header must be t,<node>,...)")
    if len(rows) < 2:
        raise PlotError(f"{path}: no samples")
    ids = rows[0][1:]
    times = []
    series: dict[str, list[float]] = {nid: [] for nid in ids}
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(ids) + 1:
            raise PlotError(f"{path}: row {k} has {len(row)} fields, expected {len(ids) + 1}")
        try:
            times.append(float(row[0]))
            for nid, v in zip(ids, row[1:]):
                series[nid].append(float(v))
        except ValueError as e:
            raise PlotError(f"{path}: row {k}: {e}") from e
    return ids, times, series


def select_columns(ids: list[str], spec: PlotSpec) -> list[str]:
    """Columns to draw, in CSV order; legend entries follow this order."""
    for name in (spec.nodes or ()) + spec.exclude:
        if name not in ids:
            raise PlotError(f"unknown column {name!r}; trajectory has {', '.join(ids)}")
    wanted = ids if spec.nodes is None else [nid for nid in ids if nid in spec.nodes]
    selected = [nid for nid in wanted if nid not in spec.exclude]
    if not selected:
        raise PlotError("selection excludes every column; nothing to plot")
    return selected


def render(spec: PlotSpec) -> list[Path]:
    """Write the two-panel figure; returns the files written."""
    ids, times, series = read_trajectory(spec.input_csv)
    selected = select_columns(ids, spec)

    global_max = max((max(series[nid]) for nid in selected), default=0.0)
    zoom = spec.zoom_ylim if spec.zoom_ylim is not None else 0.05 * global_max
    if not zoom > 0:
        zoom = 1.0  # all-zero data: an arbitrary positive window

    # text kept as text (not outline paths) so figures stay diff-able,
    # hashsalt pinned so repeated renders are byte-identical
    with plt.rc_context({"svg.fonttype": "none", "svg.hashsalt": "trajplot"}):
        fig, (ax_full, ax_zoom) = plt.subplots(
            2, 1, figsize=(8, 7), sharex=True,
            gridspec_kw={"height_ratios": [2, 1]},
        )
        for nid in selected:
            ax_full.plot(times, series[nid], label=nid, linewidth=1.2)
            ax_zoom.plot(times, series[nid], label=nid, linewidth=1.2)
        ax_full.set_ylabel("utility")
        ax_full.legend(loc="upper right", fontsize="small", ncol=2)
        ax_zoom.set_ylim(0.0, zoom)
        ax_zoom.set_ylabel(f"utility (zoom to {zoom:g})")
        ax_zoom.set_xlabel("time")
        fig.tight_layout()

        written = []
        for fmt in spec.formats:
            out = spec.output.with_suffix(f".{fmt}")
            fig.savefig(out, format=fmt, metadata=(
                {"Date": None} if fmt == "svg" else None))
            written.append(out)
        plt.close(fig)
    return written


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="plot", description="two-panel time-series figure from a trajectory CSV")
    ap.add_argument("trajectory", type=Path, help="trajectory CSV (t,<node>,... header)")
    ap.add_argument("--nodes", nargs="+", metavar="NODE",
                    help="only these columns (default: all)")
    ap.add_argument("--exclude", nargs="+", default=[], metavar="NODE",
                    help="drop these columns")
    ap.add_argument("--zoom-ylim", type=float, default=None,
                    help="zoom panel y-limit (default: 5%% of global max)")
    ap.add_argument("--out", type=Path, default=Path("fig.svg"), help="output path")
    ap.add_argument("--format", nargs="+", default=None, choices=["svg", "png"],
                    help="output formats (default: from --out suffix, else svg)")
    args = ap.parse_args(argv)

    formats = args.format
    if formats is None:
        suffix = args.out.suffix.lstrip(".").lower()
        formats = [suffix] if suffix in ("svg", "png") else ["svg"]
    try:
        spec = PlotSpec(
            input_csv=args.trajectory,
            output=args.out,
            nodes=tuple(args.nodes) if args.nodes else None,
            exclude=tuple(args.exclude),
            zoom_ylim=args.zoom_ylim,
            formats=tuple(formats),
        )
        for path in render(spec):
            print(f"wrote {path}")
    except PlotError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
