"""Multi-start potential-flow solver for generalized Steiner problems.

Find the point minimizing the sum of per-anchor distance potentials in any
dimension: trace overdamped descent curves from a plan of testing points,
collect the rest points into a critical set, and select the lowest-valued
one. Independent oracles (Weiszfeld iteration, closed-form centroid,
brute-force grid scan) validate the flow method at desk scale.
"""

from .core import (AnchorSet, Objective, Point, as_point, finite_difference_gradient,
                   gradient, max_relative_gradient_error, objective_value)
from .critical_set import (CriticalPoint, SteinerResult, TestingPlan, default_domain_box,
                           enumerate_critical_points, generate_testing_points,
                           select_steiner)
from .errors import (ConfigError, InputError, NoCriticalPointError,
                     NonSmoothEvaluationWarning, NumericalError, SteinerError)
from .flow import (CONVERGED, MAX_STEPS, STALLED, FlowConfig, FlowTrace, graph_residual,
                   tangency_residual, trace_flow)
from .oracles import OracleReport, centroid, grid_search, weiszfeld
from .potentials import KINDS, PotentialSpec, potential_gradient, potential_value

__version__ = "0.1.0"

__all__ = [
    "AnchorSet", "CONVERGED", "ConfigError", "CriticalPoint", "FlowConfig", "FlowTrace",
    "InputError", "KINDS", "MAX_STEPS", "NoCriticalPointError", "NonSmoothEvaluationWarning",
    "NumericalError", "Objective", "OracleReport", "Point", "PotentialSpec", "STALLED",
    "SteinerError", "SteinerResult", "TestingPlan", "as_point", "centroid",
    "default_domain_box", "enumerate_critical_points", "finite_difference_gradient",
    "generate_testing_points", "gradient", "graph_residual", "grid_search",
    "max_relative_gradient_error", "objective_value", "potential_gradient",
    "potential_value", "select_steiner", "tangency_residual", "trace_flow", "weiszfeld",
]
