"""Heatmap panel rendering for steerlp trajectory artifacts."""

__version__ = "0.1.0"

from .render import Panel, PlotJob, read_grid_geometry, read_trajectory, render_panels

__all__ = ["__version__", "PlotJob", "Panel", "render_panels",
           "read_trajectory", "read_grid_geometry"]
