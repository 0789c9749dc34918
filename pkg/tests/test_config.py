import math

import numpy as np
import pytest

from steerlp.config import (COST_FUNCTIONS, Tolerances, load_config,
                            project_measure, quadratic_cost)
from steerlp.errors import ConfigError
from steerlp.grid import build_partition

BASE = """
system: double_integrator
domain:
  lower: [0.0, 0.0]
  upper: [1.0, 1.0]
  resolution: [4, 4]
controls:
  lower: [-0.25]
  upper: [0.25]
  counts: [3]
horizon: 3
initial_measure: {type: dirac, point: [0.0, 0.0]}
target_measure: {type: uniform}
"""


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadConfig:
    def test_minimal_config(self, tmp_path):
        cfg = load_config(write(tmp_path, BASE))
        assert cfg.system == "double_integrator"
        assert cfg.horizon == 3
        assert cfg.cost == "quadratic"
        assert cfg.quadrature == 8
        assert cfg.tolerances == Tolerances()

    def test_unknown_top_key_fails_closed(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown keys"):
            load_config(write(tmp_path, BASE + "\nextra_knob: 3\n"))

    def test_unknown_nested_key_fails_closed(self, tmp_path):
        text = BASE.replace("resolution: [4, 4]", "resolution: [4, 4]\n  shape: round")
        with pytest.raises(ConfigError, match="unknown keys"):
            load_config(write(tmp_path, text))

    def test_unknown_measure_key(self, tmp_path):
        text = BASE.replace("{type: dirac, point: [0.0, 0.0]}",
                            "{type: dirac, point: [0.0, 0.0], fuzz: 1}")
        with pytest.raises(ConfigError, match="unknown keys"):
            load_config(write(tmp_path, text))

    def test_bad_horizon(self, tmp_path):
        with pytest.raises(ConfigError, match="horizon"):
            load_config(write(tmp_path, BASE.replace("horizon: 3", "horizon: 0")))

    def test_unknown_cost(self, tmp_path):
        with pytest.raises(ConfigError, match="cost"):
            load_config(write(tmp_path, BASE + "\ncost: cubic\n"))

    def test_unknown_system(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, BASE.replace("double_integrator", "rocket")))

    def test_gyre_params_roundtrip(self, tmp_path):
        text = BASE.replace("system: double_integrator", """system: gyre_unicycle
system_params:
  amplitude: 0.25
  rk4_steps: 20""").replace("upper: [1.0, 1.0]", "upper: [2.0, 1.0]")
        text = text.replace("controls:\n  lower: [-0.25]\n  upper: [0.25]\n  counts: [3]",
                            f"controls:\n  lower: [-1.0, 0.0]\n  upper: [1.0, {2 * math.pi}]\n  counts: [3, 8]")
        cfg = load_config(write(tmp_path, text))
        sysm = cfg.build_system()
        assert sysm.params.rk4_steps == 20

    def test_builders(self, tmp_path):
        cfg = load_config(write(tmp_path, BASE))
        assert cfg.build_partition().n_x == 16
        assert cfg.build_controls().n_u == 3
        assert cfg.build_system().state_dim == 2

    def test_measure_floor_key(self, tmp_path):
        cfg = load_config(write(tmp_path, BASE + "\nmeasure_floor: 1.0e-9\n"))
        assert cfg.measure_floor == 1e-9
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, BASE + "\nmeasure_floor: 2\n"))


class TestCostRegistry:
    def test_quadratic(self):
        pts = np.array([[1.0, 2.0], [0.0, 0.0]])
        u = np.array([3.0])
        assert np.array_equal(quadratic_cost(pts, u), [14.0, 9.0])

    def test_zero(self):
        assert np.all(COST_FUNCTIONS["zero"](np.ones((4, 2)), np.ones(1)) == 0.0)


class TestProjectMeasure:
    def setup_method(self):
        self.part = build_partition((0, 0), (1, 1), (4, 4))

    def test_dirac_at_origin(self):
        m = project_measure({"type": "dirac", "point": [0.0, 0.0]}, self.part)
        assert m.weights[0] == 1.0
        assert m.weights.sum() == 1.0

    def test_dirac_outside_domain(self):
        with pytest.raises(ConfigError):
            project_measure({"type": "dirac", "point": [2.0, 0.0]}, self.part)

    def test_uniform_whole_domain(self):
        m = project_measure({"type": "uniform"}, self.part)
        assert np.all(m.weights == 1.0 / 16)

    def test_uniform_sub_box(self):
        m = project_measure(
            {"type": "uniform", "box": {"lower": [0.0, 0.0], "upper": [0.5, 0.5]}},
            self.part, q=4)
        assert m.weights[:2].sum() + m.weights[4:6].sum() == pytest.approx(1.0)
        assert m.weights[15] == 0.0

    def test_gaussian_mixture_two_blobs(self):
        part = build_partition((0, 0), (1, 1), (16, 16))
        spec = {"type": "gaussian_mixture",
                "centers": [[0.8, 0.1], [0.8, 0.8]],
                "weights": [0.5, 0.5],
                "sigmas": [0.05, 0.05]}
        m = project_measure(spec, part, q=4)
        assert abs(m.weights.sum() - 1.0) <= 1e-12
        # mass concentrates near the two centers
        top = np.argsort(m.weights)[-2:]
        centers = part.centers()[top]
        dist = np.linalg.norm(centers - np.array([[0.8, 0.1], [0.8, 0.8]]), axis=1)
        dist_swapped = np.linalg.norm(centers - np.array([[0.8, 0.8], [0.8, 0.1]]), axis=1)
        assert min(dist.max(), dist_swapped.max()) < 0.1

    def test_gaussian_mixture_validation(self):
        spec = {"type": "gaussian_mixture", "centers": [[0.5, 0.5]],
                "weights": [0.9], "sigmas": [0.1]}
        with pytest.raises(ConfigError, match="sum"):
            project_measure(spec, self.part)
        spec = {"type": "gaussian_mixture", "centers": [[0.5, 0.5]],
                "weights": [1.0], "sigmas": [-0.1]}
        with pytest.raises(ConfigError, match="positive"):
            project_measure(spec, self.part)

    def test_explicit_inline(self):
        w = [0.0] * 15 + [1.0]
        m = project_measure({"type": "explicit", "weights": w}, self.part)
        assert m.weights[15] == 1.0

    def test_explicit_bad_sum(self):
        w = [0.0] * 15 + [0.5]
        with pytest.raises(ConfigError, match="sum"):
            project_measure({"type": "explicit", "weights": w}, self.part)

    def test_explicit_from_file(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("\n".join(["0.0625"] * 16))
        m = project_measure({"type": "explicit", "path": str(path)}, self.part)
        assert np.allclose(m.weights, 1.0 / 16)

    def test_explicit_wrong_length(self):
        with pytest.raises(ConfigError, match="length"):
            project_measure({"type": "explicit", "weights": [0.5, 0.5]}, self.part)

    def test_floor_drops_trace_weights(self):
        part = build_partition((0, 0), (1, 1), (16, 16))
        spec = {"type": "gaussian_mixture", "centers": [[0.5, 0.5]],
                "weights": [1.0], "sigmas": [0.02]}
        tight = project_measure(spec, part, q=4, floor=1e-6)
        loose = project_measure(spec, part, q=4, floor=0.0)
        assert (tight.weights > 0).sum() < (loose.weights > 0).sum()
        assert abs(tight.weights.sum() - 1.0) <= 1e-12
