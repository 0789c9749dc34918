import numpy as np
import pytest
import yaml


def write_run_artifacts(tmp_path, resolution, lower, upper, steps, seed=0):
    """Synthesize a trajectory CSV + manifest in the published formats."""
    rng = np.random.default_rng(seed)
    n_cells = int(np.prod(resolution))
    traj = rng.random((steps + 1, n_cells)) ** 4
    traj /= traj.sum(axis=1, keepdims=True)
    csv_path = tmp_path / "trajectory.csv"
    with open(csv_path, "w") as fh:
        fh.write(",".join(f"cell_{i}" for i in range(n_cells)) + "\n")
        for row in traj:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    manifest_path = tmp_path / "manifest.yaml"
    manifest = {
        "domain": {
            "lower": list(lower),
            "upper": list(upper),
            "resolution": list(resolution),
        },
        "status": "ok",
    }
    with open(manifest_path, "w") as fh:
        yaml.safe_dump(manifest, fh)
    return csv_path, manifest_path, traj


@pytest.fixture
def gyre_shaped(tmp_path):
    # the double-gyre runs publish 32x16 grids over [0,2]x[0,1] with 11 rows
    return write_run_artifacts(tmp_path, (32, 16), (0.0, 0.0), (2.0, 1.0), 10)


@pytest.fixture
def integrator_shaped(tmp_path):
    # the double-integrator runs publish 32x32 grids over [0,1]^2, 16 rows
    return write_run_artifacts(tmp_path, (32, 32), (0.0, 0.0), (1.0, 1.0), 15)
