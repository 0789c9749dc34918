"""Deterministic file artifacts: CSV exports and the run manifest.

Floats are written with shortest round-trip formatting so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml


def _fmt(x) -> str:
    return repr(float(x))


def write_measures_csv(path, measures: np.ndarray) -> None:
    """Rows are time steps, columns are cells, headers cell_<i>."""
    measures = np.atleast_2d(measures)
    n_x = measures.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(f"cell_{i}" for i in range(n_x)) + "\n")
        for row in measures:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_measures_csv(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not all(h.startswith("cell_") for h in header):
            raise ValueError(f"{path}: not a measures CSV")
        rows = [list(map(float, line.strip().split(","))) for line in fh if line.strip()]
    out = np.asarray(rows)
    if out.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    return out


def write_feedback_csv(path, law) -> None:
    """Long format: step, cell, control, probability (nonzero rows only)."""
    with open(path, "w", newline="") as fh:
        fh.write("step,cell,control,probability\n")
        for n in range(law.horizon):
            ks, cells = np.nonzero(law.probs[n])
            order = np.lexsort((ks, cells))
            for k, i in zip(ks[order], cells[order]):
                fh.write(f"{n},{i},{k},{_fmt(law.probs[n][k, i])}\n")


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(manifest, fh, default_flow_style=False, sort_keys=True)


def read_manifest(path):
    with open(path) as fh:
        return yaml.safe_load(fh)


def files_identical(a, b) -> bool:
    return Path(a).read_bytes() == Path(b).read_bytes()
