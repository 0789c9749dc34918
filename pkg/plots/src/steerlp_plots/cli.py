"""plot-panels: heatmap panels from a trajectory CSV and its run manifest."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import PlotJob, render_panels


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-panels",
        description="Render measure-evolution heatmaps from a steerlp run",
    )
    parser.add_argument("--traj", required=True, type=Path,
                        help="trajectory CSV (rows = steps, columns = cells)")
    parser.add_argument("--manifest", required=True, type=Path,
                        help="run manifest YAML (grid geometry)")
    parser.add_argument("--times", required=True,
                        help="comma-separated time indices, e.g. 0,2,4,6,8,10")
    parser.add_argument("--out", required=True, type=Path,
                        help="output directory for panel_n<t>.png files")
    parser.add_argument("--scale", choices=("shared", "per-panel"),
                        default="shared", help="color scale mode")
    parser.add_argument("--animate", type=Path, default=None,
                        help="optional GIF path animating every step")
    args = parser.parse_args(argv)

    try:
        times = [int(t) for t in args.times.split(",") if t.strip()]
    except ValueError:
        print(f"bad --times value: {args.times!r}", file=sys.stderr)
        return 2
    if not times:
        print("no time indices requested", file=sys.stderr)
        return 2

    job = PlotJob(trajectory_path=args.traj, manifest_path=args.manifest,
                  times=times, out_dir=args.out, scale=args.scale,
                  animate=args.animate)
    try:
        panels = render_panels(job)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in panels:
        print(f"wrote {p.path} (mass {p.grid.sum():.6f})")
    if args.animate is not None:
        print(f"wrote {args.animate}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
