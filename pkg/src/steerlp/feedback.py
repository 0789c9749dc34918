"""Feedback extraction, closed-loop chain propagation, and particle rollouts.

The transport solution's joint masses disintegrate into per-cell control
distributions: law[n][k, i] is the probability of picking control k in cell i
at step n. Cells whose measure falls below the mass threshold carry an
all-zero row and are marked undefined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox

from .errors import UndefinedLaw
from .grid import ControlGrid, Measure, Partition, locate_batch
from .systems import SystemMap
from .transport import TransportSolution
from .ulam import CostTable, TransitionTensor

EPS_MASS = 0.0
UNDEFINED_MASS_TOL = 1e-9


@dataclass
class FeedbackLaw:
    """Per-step stochastic control tables over cells.

    probs[n] has shape (n_u, n_x); defined[n, i] marks cells with a valid
    distribution. Rows of undefined cells are all zero.
    """

    probs: np.ndarray
    defined: np.ndarray
    eps_mass: float = EPS_MASS

    @property
    def horizon(self) -> int:
        return self.probs.shape[0]

    @property
    def n_u(self) -> int:
        return self.probs.shape[1]

    @property
    def n_x(self) -> int:
        return self.probs.shape[2]


def extract_feedback(solution: TransportSolution, eps_mass: float = EPS_MASS) -> FeedbackLaw:
    """Disintegrate the joint masses into per-cell control distributions.

    On cells with measure above eps_mass and positive joint mass, the row is
    the joint-mass row normalized by its own total, which agrees with
    dividing by the cell measure up to the solution's marginal residual and
    keeps row sums exactly one. All other cells get the zero row. The default
    eps_mass of zero masks exactly the unreached cells, so the closed-loop
    chain never parks mass on an undefined row.
    """
    horizon, n_u, n_x = solution.nu.shape
    probs = np.zeros((horizon, n_u, n_x))
    defined = np.zeros((horizon, n_x), dtype=bool)
    for n in range(horizon):
        totals = solution.nu[n].sum(axis=0)
        mask = (solution.mu[n] > eps_mass) & (totals > 0.0)
        probs[n][:, mask] = solution.nu[n][:, mask] / totals[mask]
        defined[n] = mask
    return FeedbackLaw(probs=probs, defined=defined, eps_mass=eps_mass)


@dataclass
class Trajectory:
    """Closed-loop measure sequence with per-step accumulated cost."""

    measures: np.ndarray
    step_costs: np.ndarray
    total_cost: float

    @property
    def horizon(self) -> int:
        return self.step_costs.shape[0]

    def measure(self, n: int) -> Measure:
        return Measure(np.maximum(self.measures[n], 0.0))


def propagate(tensor: TransitionTensor, law: FeedbackLaw, mu0: Measure,
              horizon: int | None = None, costs: CostTable | None = None,
              undefined_tol: float = UNDEFINED_MASS_TOL) -> Trajectory:
    """Evolve the closed-loop chain from mu0 under the extracted law.

    Raises UndefinedLaw when more than undefined_tol of mass sits on cells
    without a defined control row at some step.
    """
    n = law.horizon if horizon is None else horizon
    if n > law.horizon:
        raise ValueError(f"horizon {n} exceeds the law's range {law.horizon}")
    if mu0.n_x != law.n_x:
        raise ValueError("measure does not match the law's cell count")
    w = mu0.weights.copy()
    out = np.empty((n + 1, law.n_x))
    out[0] = w
    step_costs = np.zeros(n)
    for step in range(n):
        stray = float(w[~law.defined[step]].sum())
        if stray > undefined_tol:
            raise UndefinedLaw(
                f"step {step}: mass {stray:.3e} on cells without a defined law"
            )
        weighted = law.probs[step] * w  # (n_u, n_x) joint masses
        if costs is not None:
            step_costs[step] = float((costs.values.T * weighted).sum())
        nxt = np.zeros(law.n_x)
        for k in range(law.n_u):
            nxt += tensor.apply(weighted[k], k)
        w = nxt
        out[step + 1] = w
    return Trajectory(measures=out, step_costs=step_costs,
                      total_cost=float(step_costs.sum()))


@dataclass
class RolloutResult:
    """Empirical outcome of simulating agents under the law."""

    histogram: np.ndarray
    paths: np.ndarray = field(repr=False)
    flagged: np.ndarray = field(repr=False)

    @property
    def agents(self) -> int:
        return self.paths.shape[0]

    @property
    def flagged_count(self) -> int:
        return int(self.flagged.sum())

    def final_measure(self) -> Measure:
        return Measure(self.histogram / self.histogram.sum())


def dirac_sampler(point):
    """All agents start at one point. Consumes no randomness."""
    pt = np.asarray(point, dtype=np.float64)

    def sample(u: np.ndarray) -> np.ndarray:
        return np.tile(pt, (u.shape[0], 1))

    return sample


def uniform_box_sampler(lower, upper):
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)

    def sample(u: np.ndarray) -> np.ndarray:
        return lo + u[:, 1:1 + lo.shape[0]] * (hi - lo)

    return sample


def measure_sampler(measure: Measure, partition: Partition):
    """Sample a cell from the measure, then uniformly within the cell.

    The first uniform picks the cell by inverse CDF; the next dim uniforms
    place the point inside it.
    """
    cdf = np.cumsum(measure.weights)
    lows = np.array([partition.cell_bounds(i)[0] for i in range(partition.n_x)])
    widths = partition.widths

    def sample(u: np.ndarray) -> np.ndarray:
        cells = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"),
                           partition.n_x - 1)
        return lows[cells] + u[:, 1:1 + partition.dim] * widths

    return sample


def rollout(system: SystemMap, partition: Partition, controls: ControlGrid,
            law: FeedbackLaw, x0_sampler, agents: int, seed: int) -> RolloutResult:
    """Simulate agents on the real dynamics under the extracted law.

    Each agent owns a counter-based random stream keyed by (seed, agent
    index): the first 1 + dim uniforms place the initial state, then one
    uniform per step picks the control by inverse CDF over the cell's law
    row. Agents in cells without a defined row draw uniformly over the
    control grid and are flagged.
    """
    if agents < 1:
        raise ValueError("need at least one agent")
    n, dim, n_u = law.horizon, partition.dim, controls.n_u
    draws = 1 + dim + n
    uniforms = np.empty((agents, draws))
    for a in range(agents):
        uniforms[a] = Generator(Philox(key=[seed, a])).random(draws)

    x = np.asarray(x0_sampler(uniforms[:, :1 + dim]), dtype=np.float64)
    if x.shape != (agents, dim):
        raise ValueError(f"sampler returned shape {x.shape}, expected {(agents, dim)}")
    paths = np.empty((agents, n + 1, dim))
    paths[:, 0] = x
    flagged = np.zeros(agents, dtype=bool)

    for step in range(n):
        cells = locate_batch(partition, x)
        defined = law.defined[step, cells]
        flagged |= ~defined
        r = uniforms[:, 1 + dim + step]
        cdf = np.cumsum(law.probs[step][:, cells], axis=0).T  # (agents, n_u)
        k = (cdf <= r[:, None]).sum(axis=1)
        k[~defined] = np.floor(r[~defined] * n_u).astype(np.int64)
        np.clip(k, 0, n_u - 1, out=k)
        nxt = np.empty_like(x)
        for kk in np.unique(k):
            sel = k == kk
            nxt[sel] = system.step_batch(x[sel], controls.points[kk])
        x = nxt
        paths[:, step + 1] = x

    final_cells = locate_batch(partition, x)
    histogram = np.bincount(final_cells, minlength=partition.n_x).astype(np.float64)
    histogram /= agents
    return RolloutResult(histogram=histogram, paths=paths, flagged=flagged)
