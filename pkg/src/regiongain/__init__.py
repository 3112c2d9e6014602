"""regiongain: region-dependent small-gain stability certification.

Numerical toolkit for interconnections of two nonlinear subsystems with
ISS-Lyapunov data: class-K gain algebra, merged Lyapunov functions,
threshold computation, region sampling, divergence/density and planar
flux certificates, and ODE cross-validation.
"""

from ._core import BACKEND
from .certify import (Certificate, CheckReport, DensityFunction,
                      boundary_flux, check_section41_condition,
                      check_theorem1, check_theorem2, divergence)
from .dynamics import (InterconnectedSystem, Trajectory, detect_recurrence,
                       find_equilibria, integrate, integrate_ensemble,
                       verify_global_attraction, verify_shell_attractivity)
from .expr import evaluate, parse
from .gains import (BracketError, GainError, ScalarGain, TableGain,
                    bilimit_ratios, compose, invert, running_max_envelope,
                    scan_small_gain)
from .lyapunov import (MergedLyapunov, StorageFunction, Thresholds,
                       compute_thresholds, construct_sigma, decrease_rate_E,
                       dini_derivative, merged_U, validate_sigma,
                       verify_iss_implication)
from .regions import (RegionSpec, check_inclusion_chain, contains,
                      gap_region, s_set_region, sample, shell_region,
                      sublevel_region, trace_level_curve)
from .specio import BUILTIN_NAMES, SystemSpec, builtin_spec, load_spec, \
    parse_spec

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "__version__",
    # expr
    "parse", "evaluate",
    # gains
    "ScalarGain", "TableGain", "GainError", "BracketError",
    "running_max_envelope", "compose", "invert", "scan_small_gain",
    "bilimit_ratios",
    # lyapunov
    "StorageFunction", "MergedLyapunov", "Thresholds", "construct_sigma",
    "validate_sigma", "merged_U", "compute_thresholds", "dini_derivative",
    "decrease_rate_E", "verify_iss_implication",
    # regions
    "RegionSpec", "s_set_region", "sublevel_region", "shell_region",
    "gap_region", "contains", "sample", "check_inclusion_chain",
    "trace_level_curve",
    # certify
    "Certificate", "CheckReport", "DensityFunction", "divergence",
    "check_theorem1", "check_section41_condition", "check_theorem2",
    "boundary_flux",
    # dynamics
    "InterconnectedSystem", "Trajectory", "integrate", "integrate_ensemble",
    "verify_shell_attractivity", "verify_global_attraction",
    "detect_recurrence", "find_equilibria",
    # specio
    "SystemSpec", "load_spec", "parse_spec", "builtin_spec", "BUILTIN_NAMES",
]
