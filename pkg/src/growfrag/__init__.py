"""Principal eigenproblem of the growth-fragmentation equation.

Truncated Perron eigentriples (lambda, G, phi), checks of their asymptotic
behaviour, the quadratic relative entropy and its spectral gap, and explicit
time evolution on the same discretization.
"""
from .coefficients import (CoefficientSet, ConfigError, FragmentMeasure, GrowthRate, HypothesisReport,
                           TotalFragRate, coefficients_from_config, load_config, mitosis_fragments, moment,
                           power_coefficients, uniform_fragments, validate_hypotheses)
from .meshops import (AsymptoticScalars, GridFunction, Mesh, RatioIntegrals, build_mesh, compute_Lambda,
                      compute_scalars)
from .eigensolver import (AssemblyError, ConvergenceError, Discretization, EigenTriple, TruncationConfig,
                          assemble_operators, estimate_L0, extrapolate, solve_truncated)
from .asymptotics import (AsymptoticReport, check_certificate, verify_G_at_infinity, verify_G_at_zero,
                          verify_moment_lemma, verify_phi_at_infinity, verify_phi_at_zero)
from .entropy import compute_D, compute_D2, compute_H, entropy_report, estimate_gap
from .evolve import Evolver, run

__version__ = "0.1.0"
