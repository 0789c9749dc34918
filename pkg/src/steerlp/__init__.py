"""Measure steering over discretized nonlinear control systems.

Pipeline: partition the state box and control set, approximate the controlled
map by per-control transition matrices, gate on discrete reachability, solve
the finite transport program, extract stochastic feedback laws, and validate
by chain propagation and particle rollouts.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, InfeasibleTransport, NumericalFailure,
                     SteerError, UndefinedLaw)
from .feedback import (FeedbackLaw, RolloutResult, Trajectory, dirac_sampler,
                       extract_feedback, measure_sampler, propagate, rollout,
                       uniform_box_sampler)
from .grid import (ControlGrid, Measure, Partition, build_partition,
                   discretize_controls, locate, locate_batch,
                   quadrature_points, tv_distance)
from .reachability import (ReachabilitySets, Verdict, check_sufficient_condition,
                           control_word, reachable_sets)
from .systems import (DoubleGyreParams, DoubleIntegratorSystem,
                      GyreUnicycleSystem, SystemMap, TranslationSystem,
                      gyre_velocity, make_system)
from .transport import (LPProblem, TransportSolution, assemble, solve, write_mps)
from .ulam import (CostTable, TransitionTensor, build_cost_table, build_tensor,
                   export_tensor_text, load_tensor, save_tensor)

__all__ = [
    "__version__",
    "SteerError", "ConfigError", "InfeasibleTransport", "NumericalFailure",
    "UndefinedLaw",
    "Partition", "ControlGrid", "Measure", "build_partition",
    "discretize_controls", "locate", "locate_batch", "quadrature_points",
    "tv_distance",
    "SystemMap", "TranslationSystem", "DoubleIntegratorSystem",
    "GyreUnicycleSystem", "DoubleGyreParams", "gyre_velocity", "make_system",
    "TransitionTensor", "CostTable", "build_tensor", "build_cost_table",
    "save_tensor", "load_tensor", "export_tensor_text",
    "ReachabilitySets", "Verdict", "reachable_sets",
    "check_sufficient_condition", "control_word",
    "LPProblem", "TransportSolution", "assemble", "solve", "write_mps",
    "FeedbackLaw", "Trajectory", "RolloutResult", "extract_feedback",
    "propagate", "rollout", "dirac_sampler", "uniform_box_sampler",
    "measure_sampler",
]
