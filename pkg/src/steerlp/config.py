"""Run configuration: schema, validation, and measure projection.

Configs are YAML mappings with a fixed schema; unknown keys anywhere are
rejected so that typos fail loudly. See the README for the full schema and
the configs/ directory for working examples.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .grid import (ControlGrid, Measure, Partition, build_partition,
                   discretize_controls, locate, quadrature_points)
from .systems import SystemMap, make_system


def quadratic_cost(points: np.ndarray, u: np.ndarray) -> np.ndarray:
    return (points ** 2).sum(axis=1) + float((u ** 2).sum())


def zero_cost(points: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.zeros(points.shape[0])


COST_FUNCTIONS = {
    "quadratic": quadratic_cost,
    "zero": zero_cost,
}


@dataclass(frozen=True)
class Tolerances:
    solve: float = 1e-9
    terminal: float = 1e-6
    support_eps: float = 1e-12
    eps_mass: float = 0.0
    undefined_mass: float = 1e-9


@dataclass
class RunConfig:
    """Declarative description of one pipeline run."""

    system: str
    system_params: dict
    clamp: bool
    domain_lower: tuple
    domain_upper: tuple
    resolution: tuple
    control_lower: tuple
    control_upper: tuple
    control_counts: tuple
    horizon: int
    cost: str
    cost_scaling: str
    initial_measure: dict
    target_measure: dict
    quadrature: int
    seed: int
    agents: int
    measure_floor: float
    tolerances: Tolerances
    base_dir: Path = field(default_factory=Path)

    def build_partition(self) -> Partition:
        return build_partition(self.domain_lower, self.domain_upper, self.resolution)

    def build_controls(self) -> ControlGrid:
        return discretize_controls(self.control_lower, self.control_upper,
                                   self.control_counts)

    def build_system(self) -> SystemMap:
        return make_system(self.system, self.domain_lower, self.domain_upper,
                           clamp=self.clamp, params=self.system_params)

    def cost_function(self):
        return COST_FUNCTIONS[self.cost]


_TOP_KEYS = {
    "system", "system_params", "clamp", "domain", "controls", "horizon",
    "cost", "cost_scaling", "initial_measure", "target_measure",
    "quadrature", "seed", "agents", "tolerances", "measure_floor",
}
_DOMAIN_KEYS = {"lower", "upper", "resolution"}
_CONTROL_KEYS = {"lower", "upper", "counts"}
_MEASURE_KEYS = {
    "dirac": {"type", "point"},
    "uniform": {"type", "box"},
    "gaussian_mixture": {"type", "centers", "weights", "sigmas"},
    "explicit": {"type", "weights", "path"},
}
_TOL_KEYS = {"solve", "terminal", "support_eps", "eps_mass", "undefined_mass"}


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing key {key!r} in {where}")
    return mapping[key]


def _check_keys(mapping: dict, allowed: set, where: str):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _vector(value, where: str) -> tuple:
    try:
        vec = tuple(float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where} must be a list of numbers") from exc
    if not vec:
        raise ConfigError(f"{where} must be non-empty")
    return vec


def _counts(value, where: str) -> tuple:
    try:
        out = tuple(int(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where} must be a list of integers") from exc
    if not out or any(c < 1 for c in out):
        raise ConfigError(f"{where} entries must be >= 1")
    return out


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run config. Unknown keys are errors."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level")
    _check_keys(raw, _TOP_KEYS, "config")

    system = _require(raw, "system", "config")
    domain = _require(raw, "domain", "config")
    _check_keys(domain, _DOMAIN_KEYS, "domain")
    controls = _require(raw, "controls", "config")
    _check_keys(controls, _CONTROL_KEYS, "controls")

    horizon = raw.get("horizon")
    if not isinstance(horizon, int) or horizon < 1:
        raise ConfigError("horizon must be an integer >= 1")

    cost = raw.get("cost", "quadratic")
    if cost not in COST_FUNCTIONS:
        raise ConfigError(f"unknown cost {cost!r}; known: {sorted(COST_FUNCTIONS)}")
    cost_scaling = raw.get("cost_scaling", "integral")
    if cost_scaling not in ("integral", "average"):
        raise ConfigError("cost_scaling must be 'integral' or 'average'")

    for name in ("initial_measure", "target_measure"):
        spec = _require(raw, name, "config")
        if not isinstance(spec, dict) or "type" not in spec:
            raise ConfigError(f"{name} must be a mapping with a 'type' key")
        mtype = spec["type"]
        if mtype not in _MEASURE_KEYS:
            raise ConfigError(f"{name}: unknown type {mtype!r}")
        _check_keys(spec, _MEASURE_KEYS[mtype], name)

    quadrature = raw.get("quadrature", 8)
    if not isinstance(quadrature, int) or quadrature < 1:
        raise ConfigError("quadrature must be an integer >= 1")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    agents = raw.get("agents", 0)
    if not isinstance(agents, int) or agents < 0:
        raise ConfigError("agents must be a nonnegative integer")
    measure_floor = raw.get("measure_floor", SUPPORT_FLOOR)
    if not isinstance(measure_floor, (int, float)) or not 0 <= measure_floor < 1:
        raise ConfigError("measure_floor must be a number in [0, 1)")

    tol_raw = raw.get("tolerances", {})
    _check_keys(tol_raw, _TOL_KEYS, "tolerances")
    try:
        tolerances = Tolerances(**{k: float(v) for k, v in tol_raw.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad tolerances: {exc}") from exc

    params = raw.get("system_params", {})
    if not isinstance(params, dict):
        raise ConfigError("system_params must be a mapping")

    cfg = RunConfig(
        system=str(system),
        system_params=params,
        clamp=bool(raw.get("clamp", True)),
        domain_lower=_vector(_require(domain, "lower", "domain"), "domain.lower"),
        domain_upper=_vector(_require(domain, "upper", "domain"), "domain.upper"),
        resolution=_counts(_require(domain, "resolution", "domain"), "domain.resolution"),
        control_lower=_vector(_require(controls, "lower", "controls"), "controls.lower"),
        control_upper=_vector(_require(controls, "upper", "controls"), "controls.upper"),
        control_counts=_counts(_require(controls, "counts", "controls"), "controls.counts"),
        horizon=horizon,
        cost=cost,
        cost_scaling=cost_scaling,
        initial_measure=dict(raw["initial_measure"]),
        target_measure=dict(raw["target_measure"]),
        quadrature=quadrature,
        seed=seed,
        agents=agents,
        measure_floor=float(measure_floor),
        tolerances=tolerances,
        base_dir=path.parent,
    )
    try:
        cfg.build_partition()
        cfg.build_controls()
        cfg.build_system()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def config_fingerprint(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


SUPPORT_FLOOR = 1e-12


def _floored(weights: np.ndarray, floor: float) -> Measure:
    w = np.asarray(weights, dtype=np.float64).copy()
    w[w < floor * w.sum()] = 0.0
    total = w.sum()
    if total <= 0:
        raise ConfigError("projected measure has no mass above the support floor")
    return Measure(w / total)


def project_measure(spec: dict, partition: Partition, q: int = 8,
                    base_dir: Path | None = None,
                    floor: float = SUPPORT_FLOOR) -> Measure:
    """Project a measure spec onto the partition's cells.

    dirac: unit mass in the cell containing the point. uniform: mass
    proportional to the sampled overlap of each cell with the box (whole
    domain when no box is given). gaussian_mixture: isotropic mixture density
    sampled on the subgrid, truncated to the domain, renormalized. explicit:
    weights given inline or in a single-column CSV file.

    Relative weights below `floor` are treated as numerical noise of the
    projection and dropped before the final renormalization, so the support
    of the result is meaningful to downstream reachability and terminal pins.
    """
    mtype = spec.get("type")
    n_x = partition.n_x

    if mtype == "dirac":
        point = np.asarray(spec["point"], dtype=np.float64)
        try:
            cell = locate(partition, point)
        except ValueError as exc:
            raise ConfigError(f"dirac point outside the domain: {exc}") from exc
        return Measure.unit(n_x, cell)

    if mtype == "uniform":
        box = spec.get("box")
        if box is None:
            return Measure.uniform(n_x)
        if not isinstance(box, dict) or set(box) != {"lower", "upper"}:
            raise ConfigError("uniform box must have exactly lower/upper keys")
        lo = np.asarray(box["lower"], dtype=np.float64)
        hi = np.asarray(box["upper"], dtype=np.float64)
        if lo.shape != (partition.dim,) or hi.shape != (partition.dim,):
            raise ConfigError("uniform box dimension mismatch")
        w = np.empty(n_x)
        for i in range(n_x):
            pts = quadrature_points(partition, i, q)
            w[i] = np.all((pts >= lo) & (pts <= hi), axis=1).mean()
        if w.sum() <= 0:
            raise ConfigError("uniform box does not overlap the domain grid")
        return _floored(w, floor)

    if mtype == "gaussian_mixture":
        centers = np.atleast_2d(np.asarray(spec["centers"], dtype=np.float64))
        weights = np.asarray(spec["weights"], dtype=np.float64)
        sigmas = np.asarray(spec["sigmas"], dtype=np.float64)
        if centers.shape[1] != partition.dim:
            raise ConfigError("mixture centers dimension mismatch")
        if len(weights) != len(centers) or len(sigmas) != len(centers):
            raise ConfigError("mixture weights/sigmas must match the centers")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ConfigError(f"mixture weights sum to {weights.sum()!r}, expected 1")
        if np.any(sigmas <= 0):
            raise ConfigError("mixture sigmas must be positive")
        w = np.zeros(n_x)
        for i in range(n_x):
            pts = quadrature_points(partition, i, q)
            dens = np.zeros(pts.shape[0])
            for c, wt, sg in zip(centers, weights, sigmas):
                d2 = ((pts - c) ** 2).sum(axis=1)
                dens += wt * np.exp(-0.5 * d2 / sg ** 2) / ((2 * np.pi * sg ** 2) ** (partition.dim / 2))
            w[i] = dens.mean()
        if w.sum() <= 0:
            raise ConfigError("mixture density vanishes on the whole domain")
        return _floored(w, floor)

    if mtype == "explicit":
        if ("weights" in spec) == ("path" in spec):
            raise ConfigError("explicit measure needs exactly one of weights/path")
        if "weights" in spec:
            w = np.asarray(spec["weights"], dtype=np.float64)
        else:
            p = Path(spec["path"])
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            try:
                w = np.loadtxt(p, dtype=np.float64).ravel()
            except OSError as exc:
                raise ConfigError(f"cannot read weights file {p}: {exc}") from exc
        if w.shape != (n_x,):
            raise ConfigError(f"explicit weights have length {w.size}, expected {n_x}")
        if np.any(w < 0):
            raise ConfigError("explicit weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"explicit weights sum to {w.sum()!r}, expected 1")
        return _floored(w, floor)

    raise ConfigError(f"unknown measure type {mtype!r}")
