"""Mixed finite elements and residual a posteriori error estimation for the
2D Monge-Ampere equation ``det(D^2 u) = f``."""
from .adapt import ConvergenceRecord, adaptive_loop, uniform_study
from .estimator import data_oscillation, effectivity, local_indicators, mark_dorfler
from .lagrange import State, build_dofmap, evaluate_field, interpolate, reference_basis
from .mesh import Mesh, bisect, read_mesh, refine_uniform, shape_metrics, unit_square_mesh, write_mesh
from .newton import NewtonOptions, initial_guess, newton_solve
from .problems import builtin_problem, compute_errors

__version__ = "0.1.0"
