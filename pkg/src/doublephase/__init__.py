"""Numerical toolkit for the double-phase integrand t^p + a(x) t^q.

Computes Musielak-Orlicz (Luxemburg) norms, solves the associated first
eigenvalue problem by Rayleigh-quotient minimization on discretized domains,
bounds higher variational eigenvalues from above, and runs desk-scale
experiments for the quantitative spectral properties (exponent stability,
domain monotonicity, the isoperimetric inequality for the first eigenvalue,
the large-exponent limit and Weyl-type growth).
"""

from .errors import (DegenerateExponentError, FallbackRequired, GeometryError,
                     NumericalError)
from .meshes import (Field, GradField, Mesh1D, Mesh2D, Polarizer, disk_mesh,
                     disk_mesh_with_count, field_to_csv, gradient,
                     homothety_rescale, inradius, is_subdomain, polarize,
                     read_field_csv, rectangle, schwarz_symmetrize,
                     write_field_csv)
from .orlicz import (NFunctionParams, NormResult, WeightField,
                     closed_form_norm, embedding_constant, lp_norm,
                     luxemburg_norm, modular, modular_terms, rescaled_norm,
                     sandwich_ratios, sobolev_conjugate_inverse,
                     weight_field_from_descriptor, weighted_q_norm, w_inverse)
from .oracle1d import (PiP, ShootingEigenpair, ode_residual, oracle_table,
                       paper_lambda_formula, pi_p, plap_shooting, sinp_profile)
from .eigensolver import (DerivativeCheck, Eigenpair, Kprime_pairing,
                          SolverOptions, directional_derivative_check,
                          first_eigenpair, kprime_pairing, laplacian_matrices,
                          laplacian_modes, minimax_upper_bound, rayleigh,
                          s_of_u, save_eigenpair, spectrum_counting,
                          weak_residual)
from .experiments import (ExperimentReport, run_domain_monotonicity,
                          run_faber_krahn, run_large_exponents, run_stability,
                          run_symmetry, run_weyl)

__version__ = "0.1.0"
