"""Render measure-evolution heatmap panels from published run artifacts.

Inputs are the trajectory CSV (one row per time step, one cell_<i> column per
cell) and the run manifest (for the grid geometry). This package deliberately
has no dependency on the solver: it consumes files only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import yaml


def load_style() -> dict:
    with resources.files("steerlp_plots").joinpath("style.yaml").open() as fh:
        return yaml.safe_load(fh)


def read_trajectory(path) -> np.ndarray:
    """Parse a trajectory CSV into a (steps, cells) array."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or not all(h == f"cell_{i}" for i, h in enumerate(header)):
            raise ValueError(f"{path}: expected cell_0..cell_N headers")
        rows = [list(map(float, ln.split(","))) for ln in fh if ln.strip()]
    data = np.asarray(rows)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged trajectory rows")
    return data


def read_grid_geometry(manifest_path) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
    with open(manifest_path) as fh:
        manifest = yaml.safe_load(fh)
    try:
        dom = manifest["domain"]
        lower = np.asarray(dom["lower"], dtype=float)
        upper = np.asarray(dom["upper"], dtype=float)
        resolution = tuple(int(r) for r in dom["resolution"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{manifest_path}: missing domain geometry") from exc
    if len(resolution) not in (1, 2):
        raise ValueError("only 1-D and 2-D grids can be rendered")
    return lower, upper, resolution


@dataclass
class PlotJob:
    """One batch of panels to render."""

    trajectory_path: Path
    manifest_path: Path
    times: list
    out_dir: Path
    scale: str = "shared"          # or "per-panel"
    animate: Path | None = None


@dataclass
class Panel:
    time_index: int
    grid: np.ndarray = field(repr=False)
    path: Path


def _cell_grid(row: np.ndarray, resolution) -> np.ndarray:
    # flat cell index has the first axis fastest: index = ix + nx * iy
    if len(resolution) == 1:
        return row[None, :]
    nx, ny = resolution
    return row.reshape(ny, nx)


def render_panels(job: PlotJob) -> list[Panel]:
    """Write one heatmap image per requested time index.

    Returns the rendered panels with their data grids; the sum of each grid
    equals the corresponding CSV row sum exactly (reshaping only).
    """
    data = read_trajectory(job.trajectory_path)
    lower, upper, resolution = read_grid_geometry(job.manifest_path)
    n_cells = int(np.prod(resolution))
    if data.shape[1] != n_cells:
        raise ValueError(
            f"trajectory has {data.shape[1]} columns, manifest grid has {n_cells} cells"
        )
    times = [int(t) for t in job.times]
    for t in times:
        if not 0 <= t < data.shape[0]:
            raise ValueError(f"time index {t} out of range [0, {data.shape[0]})")
    if job.scale not in ("shared", "per-panel"):
        raise ValueError(f"unknown scale mode {job.scale!r}")

    style = load_style()
    job.out_dir.mkdir(parents=True, exist_ok=True)
    vmax_shared = max(float(data[t].max()) for t in times)

    panels = []
    for t in times:
        grid = _cell_grid(data[t], resolution)
        vmax = vmax_shared if job.scale == "shared" else float(grid.max())
        path = job.out_dir / f"panel_n{t}.png"
        _draw(grid, lower, upper, resolution, t, vmax, style, path)
        panels.append(Panel(time_index=t, grid=grid, path=path))

    if job.animate is not None:
        _write_animation(data, lower, upper, resolution, style, job.animate)
    return panels


def _extent(lower, upper, resolution):
    if len(resolution) == 1:
        return (float(lower[0]), float(upper[0]), 0.0, 1.0)
    return (float(lower[0]), float(upper[0]), float(lower[1]), float(upper[1]))


def _draw(grid, lower, upper, resolution, t, vmax, style, path):
    fig, ax = plt.subplots(
        figsize=(style["panel_width_in"], style["panel_height_in"]),
        dpi=style["dpi"],
    )
    im = ax.imshow(grid, origin="lower", extent=_extent(lower, upper, resolution),
                   cmap=style["cmap"], vmin=0.0, vmax=vmax if vmax > 0 else 1.0,
                   aspect="auto", interpolation="nearest")
    ax.set_title(f"n = {t}")
    ax.set_xlabel("x")
    if len(resolution) == 2:
        ax.set_ylabel("y")
    else:
        ax.set_yticks([])
    fig.colorbar(im, ax=ax, label="cell mass")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _write_animation(data, lower, upper, resolution, style, path):
    from matplotlib.animation import PillowWriter

    fig, ax = plt.subplots(
        figsize=(style["panel_width_in"], style["panel_height_in"]),
        dpi=style["dpi"],
    )
    vmax = float(data.max()) or 1.0
    im = ax.imshow(_cell_grid(data[0], resolution), origin="lower",
                   extent=_extent(lower, upper, resolution), cmap=style["cmap"],
                   vmin=0.0, vmax=vmax, aspect="auto", interpolation="nearest")
    title = ax.set_title("n = 0")
    fig.colorbar(im, ax=ax, label="cell mass")
    writer = PillowWriter(fps=2)
    with writer.saving(fig, str(path), dpi=style["dpi"]):
        for t in range(data.shape[0]):
            im.set_data(_cell_grid(data[t], resolution))
            title.set_text(f"n = {t}")
            writer.grab_frame()
    plt.close(fig)
