"""Finite transport program over the controlled chain.

Decision variables are the joint state-control masses nu[n, k, i] for each
step and the intermediate measures mu[n] for n = 1..N-1. The terminal measure
is substituted by the target, so the final-step pushforward rows double as
the terminal pin. Constraints per step: the pushforward balance, a
normalization row, and the state marginal tying nu to mu.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import InfeasibleTransport, NumericalFailure
from .grid import Measure
from .ulam import CostTable, TransitionTensor

MASS_FLOOR = -1e-9
MARGINAL_TOL = 1e-8
PUSHFORWARD_TOL = 1e-8
TERMINAL_TOL = 1e-6


@dataclass
class LPProblem:
    """Equality-form linear program: min c'z s.t. A z = b, z >= 0."""

    a_eq: sparse.csr_matrix
    b_eq: np.ndarray
    cost: np.ndarray
    n_x: int
    n_u: int
    horizon: int
    mu0: np.ndarray = field(repr=False)
    muf: np.ndarray = field(repr=False)
    row_labels: list = field(repr=False)

    @property
    def num_nu(self) -> int:
        return self.horizon * self.n_u * self.n_x

    @property
    def num_mu(self) -> int:
        return (self.horizon - 1) * self.n_x

    @property
    def num_columns(self) -> int:
        return self.num_nu + self.num_mu

    def nu_col(self, n: int, k: int, i: int) -> int:
        return (n * self.n_u + k) * self.n_x + i

    def mu_col(self, n: int, i: int) -> int:
        if not 1 <= n <= self.horizon - 1:
            raise ValueError(f"mu[{n}] is not a variable")
        return self.num_nu + (n - 1) * self.n_x + i


def assemble(tensor: TransitionTensor, costs: CostTable, mu0: Measure,
             muf: Measure, horizon: int) -> LPProblem:
    """Build the transport program for the given chain, costs, and endpoints."""
    n_x, n_u = tensor.n_x, tensor.n_u
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if costs.n_x != n_x or costs.n_u != n_u:
        raise ValueError("cost table does not match the tensor dimensions")
    if mu0.n_x != n_x or muf.n_x != n_x:
        raise ValueError("measures do not match the tensor's cell count")

    num_nu = horizon * n_u * n_x
    num_mu = (horizon - 1) * n_x
    ncols = num_nu + num_mu

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    b = []
    labels = []

    def nu_col0(n, k):
        return (n * n_u + k) * n_x

    def mu_col0(n):
        return num_nu + (n - 1) * n_x

    # pushforward rows: mu[n+1][j] = sum_{k,i} p[k][i,j] nu[n][k,i]
    row_base = 0
    coo_cache = [sparse.coo_matrix(tensor.matrix(k)) for k in range(n_u)]
    for n in range(horizon):
        for k in range(n_u):
            pk = coo_cache[k]
            rows.append(row_base + pk.col)
            cols.append(nu_col0(n, k) + pk.row)
            vals.append(pk.data)
        if n < horizon - 1:
            rows.append(row_base + np.arange(n_x))
            cols.append(mu_col0(n + 1) + np.arange(n_x))
            vals.append(np.full(n_x, -1.0))
            b.extend([0.0] * n_x)
            labels.extend(("pushforward", n, j) for j in range(n_x))
        else:
            b.extend(muf.weights.tolist())
            labels.extend(("terminal", n, j) for j in range(n_x))
        row_base += n_x

    # normalization rows: sum_i mu[t][i] = 1 for t = 1..N (t = N is constant)
    for t in range(1, horizon + 1):
        if t <= horizon - 1:
            rows.append(np.full(n_x, row_base))
            cols.append(mu_col0(t) + np.arange(n_x))
            vals.append(np.ones(n_x))
            b.append(1.0)
        else:
            b.append(1.0 - float(muf.weights.sum()))
        labels.append(("normalization", t, -1))
        row_base += 1

    # marginal rows: sum_k nu[n][k,j] = mu[n][j] (mu[0] is data)
    for n in range(horizon):
        for k in range(n_u):
            rows.append(row_base + np.arange(n_x))
            cols.append(nu_col0(n, k) + np.arange(n_x))
            vals.append(np.ones(n_x))
        if n == 0:
            b.extend(mu0.weights.tolist())
        else:
            rows.append(row_base + np.arange(n_x))
            cols.append(mu_col0(n) + np.arange(n_x))
            vals.append(np.full(n_x, -1.0))
            b.extend([0.0] * n_x)
        labels.extend(("marginal", n, j) for j in range(n_x))
        row_base += n_x

    a = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(row_base, ncols),
    ).tocsr()

    cost_vec = np.zeros(ncols)
    flat_cost = costs.values.T.ravel()  # (k, i) blocks
    for n in range(horizon):
        cost_vec[n * n_u * n_x:(n + 1) * n_u * n_x] = flat_cost

    return LPProblem(
        a_eq=a,
        b_eq=np.asarray(b),
        cost=cost_vec,
        n_x=n_x,
        n_u=n_u,
        horizon=horizon,
        mu0=mu0.weights,
        muf=muf.weights,
        row_labels=labels,
    )


@dataclass
class TransportSolution:
    """Optimal measures and joint masses with solver diagnostics.

    mu has shape (N+1, n_x) with mu[0] the input and mu[N] the target; nu has
    shape (N, n_u, n_x). Masses are clipped to zero after a floor check.
    """

    mu: np.ndarray
    nu: np.ndarray
    objective: float
    residuals: dict
    status: str
    iterations: int

    @property
    def horizon(self) -> int:
        return self.nu.shape[0]

    def measure(self, n: int) -> Measure:
        w = np.maximum(self.mu[n], 0.0)
        return Measure(w / w.sum())


def _support_chains(tensor: TransitionTensor, mu0: np.ndarray, muf: np.ndarray,
                    horizon: int):
    """Forward image supports of mu0 and backward pre-image supports of muf."""
    adj = tensor.support_adjacency().astype(np.float64)
    fwd = [mu0 > 0.0]
    for _ in range(horizon):
        fwd.append((fwd[-1].astype(np.float64) @ adj) > 0.0)
    bwd = [None] * (horizon + 1)
    bwd[horizon] = muf > 0.0
    for n in range(horizon, 0, -1):
        bwd[n - 1] = (adj @ bwd[n].astype(np.float64)) > 0.0
    return fwd, bwd


def _repair(problem: LPProblem, tensor: TransitionTensor,
            nu_raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rescale the joint masses into an exactly consistent trajectory.

    Forward sweep: each step's joint rows are scaled to match the running
    measure exactly, then the next measure is recomputed as the chain image.
    Cells carrying measure but no joint mass (degenerate solver leftovers at
    the residual scale) fall back to the uniform control row. The returned
    trajectory satisfies the marginal and pushforward identities to machine
    precision, so it moves from the solver's point by no more than the
    solver's own residuals.
    """
    horizon, n_u, n_x = nu_raw.shape
    mu = np.empty((horizon + 1, n_x))
    mu[0] = problem.mu0
    nu = np.empty_like(nu_raw)
    for n in range(horizon):
        totals = nu_raw[n].sum(axis=0)
        ok = totals > 0.0
        scale = np.zeros(n_x)
        scale[ok] = mu[n][ok] / totals[ok]
        nu[n] = nu_raw[n] * scale
        orphan = (~ok) & (mu[n] > 0.0)
        if orphan.any():
            nu[n][:, orphan] += mu[n][orphan] / n_u
        image = np.zeros(n_x)
        for k in range(n_u):
            image += tensor.apply(nu[n][k], k)
        mu[n + 1] = np.maximum(image, 0.0)
    return mu, nu


def solve(problem: LPProblem, tensor: TransitionTensor,
          tol: float = 1e-9) -> TransportSolution:
    """Solve the assembled program to a certified optimum.

    The terminal pin is handled through exact-penalty slack variables, which
    keeps the solver away from knife-edge infeasibility when the target sits
    on the boundary of the reachable set: the optimal slack measures the
    1-norm distance to that set, and a distance above the terminal tolerance
    raises InfeasibleTransport. Ambiguous solver terminations or residuals
    beyond the solution tolerances raise NumericalFailure.
    """
    n_x, n_u, horizon = problem.n_x, problem.n_u, problem.horizon

    # fast certificates: target mass that no control word can reach, and
    # initial mass that can never hit the target support
    fwd, bwd = _support_chains(tensor, problem.mu0, problem.muf, horizon)
    unreachable_target = float(problem.muf[~fwd[horizon]].sum())
    if unreachable_target > TERMINAL_TOL:
        cells = np.nonzero((problem.muf > 0.0) & ~fwd[horizon])[0]
        raise InfeasibleTransport(
            f"target mass {unreachable_target:.3e} sits on cells unreachable "
            f"in {horizon} steps (e.g. cell {cells[0]})"
        )
    stranded_initial = float(problem.mu0[~bwd[0]].sum())
    if stranded_initial > TERMINAL_TOL:
        cells = np.nonzero((problem.mu0 > 0.0) & ~bwd[0])[0]
        raise InfeasibleTransport(
            f"initial mass {stranded_initial:.3e} cannot reach the target "
            f"support in {horizon} steps (e.g. cell {cells[0]})"
        )

    # columns for cells outside the forward image support are zero in every
    # feasible point; dropping them keeps the solution set intact and takes
    # most of the degenerate bulk out of the solver's way
    keep = []
    for n in range(horizon):
        cells = np.nonzero(fwd[n])[0]
        for k in range(n_u):
            keep.append((n * n_u + k) * n_x + cells)
    for n in range(1, horizon):
        keep.append(problem.num_nu + (n - 1) * n_x + np.nonzero(fwd[n])[0])
    keep = np.concatenate(keep)

    terminal_rows = np.array(
        [r for r, lbl in enumerate(problem.row_labels) if lbl[0] == "terminal"]
    )
    n_rows = problem.a_eq.shape[0]
    slack_cols = sparse.coo_matrix(
        (np.concatenate([np.ones(n_x), -np.ones(n_x)]),
         (np.concatenate([terminal_rows, terminal_rows]),
          np.concatenate([np.arange(n_x), n_x + np.arange(n_x)]))),
        shape=(n_rows, 2 * n_x),
    )
    a_elastic = sparse.hstack(
        [sparse.csc_matrix(problem.a_eq)[:, keep], slack_cols], format="csr"
    )
    penalty = 100.0 * (1.0 + horizon * float(np.abs(problem.cost).max()))
    cost_elastic = np.concatenate([problem.cost[keep], np.full(2 * n_x, penalty)])

    feas_tol = float(min(max(tol, 1e-12), 1e-7))
    options = {
        "primal_feasibility_tolerance": min(1e-9, max(feas_tol, 1e-10)),
        "dual_feasibility_tolerance": max(feas_tol, 1e-9),
    }
    res = linprog(cost_elastic, A_eq=a_elastic, b_eq=problem.b_eq,
                  bounds=(0, None), method="highs-ds", options=options)
    if res.status == 2:
        # the elastic program is feasible by construction; a presolve claim
        # of infeasibility is numerical, so retry without it
        res = linprog(cost_elastic, A_eq=a_elastic, b_eq=problem.b_eq,
                      bounds=(0, None), method="highs-ds",
                      options={**options, "presolve": False})
    if res.status != 0:
        raise NumericalFailure(f"solver terminated abnormally: {res.message}")

    z_red = np.asarray(res.x)
    slack_l1 = float(z_red[len(keep):].sum())
    if slack_l1 > TERMINAL_TOL:
        raise InfeasibleTransport(
            f"no transport within tolerance at horizon {horizon}: the 1-norm "
            f"distance from the target to the reachable set is >= {slack_l1:.3e}"
        )
    z = np.zeros(problem.num_columns)
    z[keep] = z_red[:len(keep)]
    floor = float(z_red[:len(keep)].min()) if len(keep) else 0.0
    if floor < MASS_FLOOR:
        raise NumericalFailure(
            f"solution mass {floor:.3e} below floor {MASS_FLOOR:.1e}",
            residuals={"mass_floor": floor},
        )

    nu_raw = np.maximum(z[:problem.num_nu], 0.0).reshape(horizon, n_u, n_x)
    raw_marg = 0.0
    for n in range(horizon):
        totals = nu_raw[n].sum(axis=0)
        ref = problem.mu0 if n == 0 else z[problem.num_nu + (n - 1) * n_x:
                                           problem.num_nu + n * n_x]
        raw_marg = max(raw_marg, float(np.abs(totals - np.maximum(ref, 0.0)).max()))
    if raw_marg > MARGINAL_TOL:
        raise NumericalFailure("solution violates marginal tolerance",
                               {"marginal_max": raw_marg})

    mu, nu = _repair(problem, tensor, nu_raw)
    terminal_l1 = float(np.abs(mu[horizon] - problem.muf).sum())
    if terminal_l1 > TERMINAL_TOL:
        raise NumericalFailure("terminal measure missed beyond tolerance",
                               {"terminal_l1": terminal_l1})
    objective = float(problem.cost[:problem.num_nu] @ nu.reshape(-1))

    marg = max(float(np.abs(nu[n].sum(axis=0) - mu[n]).max())
               for n in range(horizon))
    push = 0.0
    for n in range(horizon):
        image = np.zeros(n_x)
        for k in range(n_u):
            image += tensor.apply(nu[n][k], k)
        push = max(push, float(np.abs(image - mu[n + 1]).max()))
    residuals = {
        "marginal_max": marg,
        "pushforward_max": push,
        "terminal_l1": terminal_l1,
        "solver_marginal_max": raw_marg,
        "solver_slack_l1": slack_l1,
        "mass_floor": floor,
    }
    return TransportSolution(
        mu=mu,
        nu=nu,
        objective=objective,
        residuals=residuals,
        status="optimal",
        iterations=int(getattr(res, "nit", 0) or 0),
    )


def write_mps(problem: LPProblem, path) -> None:
    """Export the program in free MPS format for external cross-checks."""
    a = sparse.csc_matrix(problem.a_eq)
    with open(path, "w") as fh:
        fh.write("NAME TRANSPORT\n")
        fh.write("ROWS\n")
        fh.write(" N  COST\n")
        for r in range(a.shape[0]):
            fh.write(f" E  R{r}\n")
        fh.write("COLUMNS\n")
        for c in range(a.shape[1]):
            if problem.cost[c] != 0.0:
                fh.write(f"    X{c}  COST  {float(problem.cost[c])!r}\n")
            start, end = a.indptr[c], a.indptr[c + 1]
            for idx in range(start, end):
                fh.write(f"    X{c}  R{a.indices[idx]}  {float(a.data[idx])!r}\n")
        fh.write("RHS\n")
        for r, val in enumerate(problem.b_eq):
            if val != 0.0:
                fh.write(f"    RHS  R{r}  {float(val)!r}\n")
        fh.write("BOUNDS\n")
        for c in range(a.shape[1]):
            fh.write(f" PL BND  X{c}\n")
        fh.write("ENDATA\n")
