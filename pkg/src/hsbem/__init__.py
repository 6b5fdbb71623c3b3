"""Time-domain Galerkin boundary elements for the acoustic wave equation in an
absorbing half-space.

The package solves retarded boundary integral equations on triangulated
surfaces lying in the upper half-space x3 >= 0, whose bounding plane carries
an impedance (absorbing) condition with parameter alpha_inf.  Space-time
Galerkin systems are assembled into lower-triangular block-Toeplitz form and
solved by marching-on-in-time; frequency-domain operators provide independent
diagnostics (symbol consistency, coercivity, continuity).
"""

__version__ = "0.1.0"

from .mesh import SurfaceMesh, load_mesh, refine_uniform, panel_geometry
from .kernel import KernelParams, PointPair, eval_G_omega, eval_sigma_smooth, retarded_times
from .discretization import (TimeGrid, SpaceTimeBasis, Density,
                             project_space, project_time, eval_density)
from .assembly import (ToeplitzBlocks, MaterialField, assemble_V_blocks,
                       assemble_acoustic_blocks, assemble_rhs_dirichlet,
                       assemble_rhs_acoustic, dump_blocks, load_blocks)
from .solver import MOTSystem, mot_solve, dense_solve
from .potential import eval_single_layer, eval_double_layer
from .analysis import (NormSpec, weighted_st_norm, energy_norm_acoustic,
                       coercivity_check, continuity_check,
                       transform_consistency, estimate_rate)
