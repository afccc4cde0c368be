"""potopt: optimal Schrodinger potentials by discretized dual minimization."""
from .errors import (AllBelowThreshold, BracketingFailure, ConfigError, DegenerateContactSet, GridMismatch,
                     InvalidDomain, NegativePotential, NoConvergence, OverlappingSupports, PotoptError,
                     SignViolation, SingularSystem, UnderResolvedGrid, ZeroMinimizer)
from .grid import Field, Grid, inner, integrate, l2_norm, make_interval, make_radial
from .operators import CLAMP, eigenpairs, energy_of_potential, lambda1, laplacian, solve_linear, torsion
from .functionals import EnergyExp, J1, JInvP, Jp, Lambda1Exp, Lambda1InvP, evaluate, gradient
from .optimize import (SolverOptions, minimize, minimize_on_sphere, minimize_smoothed, minimize_sup_norm,
                       solve_sup_norm_exact)
from .recover import (ConstraintSpec, RecoveredPotential, multiplier_root, recover, recover_exponential,
                      recover_inverse_lp, recover_l1, recover_lp)

__version__ = "0.1.0"
