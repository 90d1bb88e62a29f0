"""Accelerated first-order methods with performance-based restarts."""

from .bounds import (BoundsReport, adaptive_bounds, bounds_report, check_trace_against_bounds,
                     fixed_rate_bounds, nbar_rho, phi)
from .engines import (AfomEngine, DualQpEngine, DualQpProblem, FistaEngine, check_engine_rates,
                      dual_qp_engine, fista_engine)
from .errors import (AfomError, CapExceededError, ConfigurationError, DegenerateInputError,
                     InputError, PreconditionError, UnsupportedQueryError)
from .problem import (CompositeObjective, OptimumCertificate, QfgCertificate, evaluate, lasso,
                      level_set_membership, quadratic, verify_qfg)
from .restart import (InnerRun, RestartTrace, SolveSettings, afom_with_exit, restart_adaptive,
                      restart_fixed_rate, restart_heuristic, run_scheme, solve_without_restart)
from .suite import GeneratorSpec, batch, generate

__version__ = "0.1.0"
