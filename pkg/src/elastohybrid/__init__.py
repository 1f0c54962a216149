"""Hybrid finite element methods for 2D linear elasticity.

Primal hybrid (PH), augmented (AP) and displacement-multiplier-pressure (HDP)
formulations on triangles and quadrilaterals, with static condensation and
element-local H(div) stress recovery.
"""

__version__ = "0.1.0"

from .cases import Material, ManufacturedCase, case_convergence, case_locking, polynomial_case
from .errors import error_L2, error_multiplier, error_Xnorm, orders
from .exceptions import (
    AssemblyError,
    ElastoHybridError,
    GeometryError,
    InvalidArgumentError,
    RecoveryError,
    SingularSystemError,
    UnsupportedError,
)
from .mesh import (
    Mesh,
    generate_mesh,
    generate_square_mesh,
    generate_trapezoidal_mesh,
    generate_triangular_mesh,
)
from .quadrature import cell_rule, edge_rule
from .recovery import (
    RecoveredStress,
    build_tensor_space,
    check_local_equilibrium,
    check_normal_jump,
    check_weak_symmetry,
    error_Hdiv,
    error_L2_stress,
    project_stress,
    recover_stress,
)
from .solver import HybridSolution, solve
from .spaces import build_hdp_spaces, build_ph_spaces, build_spaces
from .studies import ConvergenceReport, LockingReport, convergence_study, locking_study

__all__ = [name for name in dir() if not name.startswith("_")]
