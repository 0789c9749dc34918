"""Command-line pipeline: discretize, check, solve, extract, simulate, roll out.

Exit codes: 0 success, 2 config error, 3 infeasible transport, 4 numerical
failure. Every run writes a manifest recording tolerances, residuals, and the
produced artifacts.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (write_feedback_csv, write_manifest, write_measures_csv)
from .config import (RunConfig, config_fingerprint, load_config, project_measure)
from .errors import ConfigError, InfeasibleTransport, NumericalFailure, UndefinedLaw
from .feedback import extract_feedback, measure_sampler, propagate, rollout
from .grid import tv_distance
from .reachability import check_sufficient_condition, reachable_sets
from .transport import assemble, solve, write_mps
from .ulam import build_cost_table, build_tensor, export_tensor_text, load_tensor, save_tensor

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

TENSOR_TEXT_LIMIT = 64


class _Pipeline:
    """Lazily builds and caches the objects a subcommand needs."""

    def __init__(self, cfg: RunConfig, out: Path, threads: int, tol: float | None):
        self.cfg = cfg
        self.out = out
        self.threads = max(1, threads)
        self.tol = cfg.tolerances.solve if tol is None else tol
        self.partition = cfg.build_partition()
        self.controls = cfg.build_controls()
        self.system = cfg.build_system()
        self._tensor = None
        self.timings: dict[str, float] = {}

    def tensor(self):
        if self._tensor is None:
            cached = self.out / "tensor.bin"
            if cached.exists():
                t = load_tensor(cached)
                if (t.partition_fingerprint == self.partition.fingerprint()
                        and t.controls_fingerprint == self.controls.fingerprint()
                        and t.q == self.cfg.quadrature):
                    self._tensor = t
                    return t
            t0 = time.perf_counter()
            self._tensor = build_tensor(self.system, self.partition, self.controls,
                                        q=self.cfg.quadrature, workers=self.threads)
            self.timings["build_tensor_s"] = time.perf_counter() - t0
        return self._tensor

    def measures(self):
        mu0 = project_measure(self.cfg.initial_measure, self.partition,
                              q=self.cfg.quadrature, base_dir=self.cfg.base_dir,
                              floor=self.cfg.measure_floor)
        muf = project_measure(self.cfg.target_measure, self.partition,
                              q=self.cfg.quadrature, base_dir=self.cfg.base_dir,
                              floor=self.cfg.measure_floor)
        return mu0, muf

    def cost_table(self):
        return build_cost_table(self.partition, self.controls,
                                self.cfg.cost_function(), q=self.cfg.quadrature,
                                scaling=self.cfg.cost_scaling)

    def save_tensor_files(self):
        tensor = self.tensor()
        save_tensor(tensor, self.out / "tensor.bin")
        if tensor.n_x <= TENSOR_TEXT_LIMIT:
            export_tensor_text(tensor, self.out / "tensor.txt")


def _write_reachability(path, verdict, horizon):
    with open(path, "w") as fh:
        fh.write(f"verdict: {'Satisfied' if verdict.satisfied else 'Violated'}\n")
        fh.write(f"horizon: {horizon}\n")
        if not verdict.satisfied:
            fh.write(f"witness_pairs: {len(verdict.witnesses)}\n")
            for i, j in verdict.witnesses[:20]:
                fh.write(f"unreachable: {i} -> {j}\n")


def run_pipeline(cfg: RunConfig, out: Path, config_path: Path,
                 threads: int = 1, tol: float | None = None,
                 do_rollout: bool = True) -> dict:
    """Full pipeline. Returns the manifest; raises pipeline errors upward."""
    out.mkdir(parents=True, exist_ok=True)
    pipe = _Pipeline(cfg, out, threads, tol)
    t_start = time.perf_counter()

    manifest: dict = {
        "version": __version__,
        "config_sha256": config_fingerprint(config_path),
        "seed": cfg.seed,
        "system": cfg.system,
        "horizon": cfg.horizon,
        "quadrature": cfg.quadrature,
        "domain": {
            "lower": [float(v) for v in cfg.domain_lower],
            "upper": [float(v) for v in cfg.domain_upper],
            "resolution": [int(r) for r in cfg.resolution],
        },
        "controls": {
            "lower": [float(v) for v in cfg.control_lower],
            "upper": [float(v) for v in cfg.control_upper],
            "counts": [int(c) for c in cfg.control_counts],
        },
        "tolerances": {
            "solve": pipe.tol,
            "terminal_l1": cfg.tolerances.terminal,
            "support_eps": cfg.tolerances.support_eps,
            "eps_mass": cfg.tolerances.eps_mass,
            "undefined_mass": cfg.tolerances.undefined_mass,
            "row_sum": 1e-12,
            "marginal": 1e-8,
            "pushforward": 1e-8,
            "mass_conservation": 1e-12,
            "trajectory_agreement": 1e-9,
            "cost_identity": 1e-8,
        },
        "artifacts": {},
        "status": "ok",
    }

    tensor = pipe.tensor()
    pipe.save_tensor_files()
    manifest["artifacts"]["tensor"] = "tensor.bin"
    row_dev = max(float(np.abs(tensor.row_sums(k) - 1.0).max())
                  for k in range(tensor.n_u))
    manifest["residuals"] = {"row_sum_max_dev": row_dev}

    mu0, muf = pipe.measures()
    write_measures_csv(out / "initial_measure.csv", mu0.weights)
    write_measures_csv(out / "target_measure.csv", muf.weights)

    t0 = time.perf_counter()
    sets = reachable_sets(tensor, cfg.horizon)
    verdict = check_sufficient_condition(sets, mu0, muf, cfg.horizon,
                                         support_eps=cfg.tolerances.support_eps)
    pipe.timings["reachability_s"] = time.perf_counter() - t0
    _write_reachability(out / "reachability.txt", verdict, cfg.horizon)
    manifest["artifacts"]["reachability"] = "reachability.txt"
    manifest["reachability"] = {
        "satisfied": bool(verdict.satisfied),
        "witness_pairs": len(verdict.witnesses),
    }

    costs = pipe.cost_table()
    problem = assemble(tensor, costs, mu0, muf, cfg.horizon)
    t0 = time.perf_counter()
    solution = solve(problem, tensor, tol=pipe.tol)
    pipe.timings["solve_s"] = time.perf_counter() - t0
    np.save(out / "solution_mu.npy", solution.mu)
    np.save(out / "solution_nu.npy", solution.nu)
    manifest["artifacts"]["solution_mu"] = "solution_mu.npy"
    manifest["artifacts"]["solution_nu"] = "solution_nu.npy"
    manifest["objective"] = solution.objective
    manifest["solver"] = {"status": solution.status,
                          "iterations": solution.iterations}
    manifest["residuals"].update(solution.residuals)

    law = extract_feedback(solution, eps_mass=cfg.tolerances.eps_mass)
    write_feedback_csv(out / "feedback.csv", law)
    manifest["artifacts"]["feedback"] = "feedback.csv"

    traj = propagate(tensor, law, mu0, cfg.horizon, costs,
                     undefined_tol=cfg.tolerances.undefined_mass)
    write_measures_csv(out / "trajectory.csv", traj.measures)
    manifest["artifacts"]["trajectory"] = "trajectory.csv"
    drift = float(np.abs(traj.measures - solution.mu).sum(axis=1).max())
    mass_dev = float(np.abs(traj.measures.sum(axis=1) - 1.0).max())
    cost_gap = abs(traj.total_cost - solution.objective)
    manifest["residuals"]["trajectory_l1_drift"] = drift
    manifest["residuals"]["mass_conservation_max_dev"] = mass_dev
    manifest["residuals"]["cost_identity_gap"] = cost_gap
    manifest["propagated_cost"] = traj.total_cost

    if do_rollout and cfg.agents > 0:
        t0 = time.perf_counter()
        sampler = measure_sampler(mu0, pipe.partition)
        result = rollout(pipe.system, pipe.partition, pipe.controls, law,
                         sampler, cfg.agents, cfg.seed)
        pipe.timings["rollout_s"] = time.perf_counter() - t0
        write_measures_csv(out / "rollout.csv", result.histogram)
        manifest["artifacts"]["rollout"] = "rollout.csv"
        manifest["rollout"] = {
            "agents": cfg.agents,
            "flagged": result.flagged_count,
            "flagged_fraction": result.flagged_count / cfg.agents,
            "tv_vs_propagated": tv_distance(result.final_measure(),
                                            traj.measure(cfg.horizon)),
        }

    manifest["timings_s"] = {k: round(v, 3) for k, v in pipe.timings.items()}
    manifest["timings_s"]["total"] = round(time.perf_counter() - t_start, 3)
    write_manifest(out / "manifest.yaml", manifest)
    return manifest


def _fail_manifest(out: Path, exc: Exception, code: int) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out / "manifest.yaml", {
            "status": "error",
            "exit_code": code,
            "error": str(exc),
            "error_type": type(exc).__name__,
        })
    except OSError:
        pass


def _add_common(parser):
    parser.add_argument("--config", required=True, type=Path, help="run config YAML")
    parser.add_argument("--out", type=Path, default=Path("runs/out"),
                        help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker count")
    parser.add_argument("--tol", type=float, default=None,
                        help="override solve tolerance")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="steerlp",
        description="Measure steering over discretized control systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("discretize", "build and store the transition tensor"),
        ("check-reachability", "evaluate the reachability gate"),
        ("solve", "solve the transport program"),
        ("simulate", "extract the law and propagate the closed-loop chain"),
        ("rollout", "Monte-Carlo agents on the real dynamics"),
        ("run", "full pipeline"),
        ("export-lp", "write the program in MPS format"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed

    out = args.out
    try:
        return _dispatch(args, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        _fail_manifest(out, exc, EXIT_CONFIG)
        return EXIT_CONFIG
    except InfeasibleTransport as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        _fail_manifest(out, exc, EXIT_INFEASIBLE)
        return EXIT_INFEASIBLE
    except (NumericalFailure, UndefinedLaw) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        _fail_manifest(out, exc, EXIT_NUMERICAL)
        return EXIT_NUMERICAL


def _dispatch(args, cfg: RunConfig, out: Path) -> int:
    command = args.command
    if command == "run":
        manifest = run_pipeline(cfg, out, args.config,
                                threads=args.threads, tol=args.tol)
        print(f"ok: objective {manifest['objective']!r}, "
              f"terminal residual {manifest['residuals']['terminal_l1']:.3e}")
        return EXIT_OK

    out.mkdir(parents=True, exist_ok=True)
    pipe = _Pipeline(cfg, out, args.threads, args.tol)

    if command == "discretize":
        pipe.save_tensor_files()
        print(f"tensor: {pipe.tensor().n_x} cells, {pipe.tensor().n_u} controls, "
              f"{pipe.tensor().nnz} nonzeros -> {out / 'tensor.bin'}")
        return EXIT_OK

    if command == "check-reachability":
        mu0, muf = pipe.measures()
        sets = reachable_sets(pipe.tensor(), cfg.horizon)
        verdict = check_sufficient_condition(
            sets, mu0, muf, cfg.horizon, support_eps=cfg.tolerances.support_eps)
        _write_reachability(out / "reachability.txt", verdict, cfg.horizon)
        if verdict.satisfied:
            print("Satisfied: every target cell is reachable from every initial cell")
        else:
            print(f"Violated: {len(verdict.witnesses)} unreachable pairs")
            for i, j in verdict.witnesses[:20]:
                print(f"  cell {i} cannot reach cell {j} in {cfg.horizon} steps")
        return EXIT_OK

    if command == "export-lp":
        mu0, muf = pipe.measures()
        problem = assemble(pipe.tensor(), pipe.cost_table(), mu0, muf, cfg.horizon)
        write_mps(problem, out / "transport.mps")
        print(f"wrote {out / 'transport.mps'} "
              f"({problem.a_eq.shape[0]} rows, {problem.num_columns} columns)")
        return EXIT_OK

    # the remaining commands need a solved program
    mu0, muf = pipe.measures()
    costs = pipe.cost_table()
    problem = assemble(pipe.tensor(), costs, mu0, muf, cfg.horizon)
    solution = solve(problem, pipe.tensor(), tol=pipe.tol)
    np.save(out / "solution_mu.npy", solution.mu)
    np.save(out / "solution_nu.npy", solution.nu)

    if command == "solve":
        print(f"optimal objective {solution.objective!r} "
              f"(terminal residual {solution.residuals['terminal_l1']:.3e})")
        return EXIT_OK

    law = extract_feedback(solution, eps_mass=cfg.tolerances.eps_mass)
    write_feedback_csv(out / "feedback.csv", law)

    if command == "simulate":
        traj = propagate(pipe.tensor(), law, mu0, cfg.horizon, costs,
                         undefined_tol=cfg.tolerances.undefined_mass)
        write_measures_csv(out / "trajectory.csv", traj.measures)
        print(f"propagated {cfg.horizon} steps, total cost {traj.total_cost!r}")
        return EXIT_OK

    if command == "rollout":
        agents = cfg.agents if cfg.agents > 0 else 10000
        sampler = measure_sampler(mu0, pipe.partition)
        result = rollout(pipe.system, pipe.partition, pipe.controls, law,
                         sampler, agents, cfg.seed)
        write_measures_csv(out / "rollout.csv", result.histogram)
        print(f"rolled out {agents} agents, flagged {result.flagged_count}")
        return EXIT_OK

    raise ConfigError(f"unknown command {command!r}")


if __name__ == "__main__":
    sys.exit(main())
