"""Finite element solver for yield-stress pipe flow.

Velocity profiles of Herschel-Bulkley, Bingham and Casson fluids in a
circular pipe are computed by minimizing a Huber-regularized power-law
energy over P1 elements on nested disk triangulations, with preconditioned
descent as the single-level method and multigrid optimization (V-cycles,
optionally full multigrid) on top.
"""

from .analytic import (RadialProfile, err_pf, err_s, plug_flow_numeric,
                       plug_value, profile_for, profile_value)
from .fem import (ModelSpec, NumericError, assemble_load, assemble_mass,
                  assemble_preconditioner, assemble_slant_hessian,
                  assemble_stiffness, eval_energy, eval_gradient,
                  poisson_solve, solve_spd)
from .mesh import (MeshHierarchy, MeshLevel, build_unit_disk_coarse,
                   prolongate, refine, restrict, total_area)
from .mgopt import CycleRecord, MgoptConfig, fmg_solve, mgopt_solve, vcycle
from .smoother import (AscentDirectionError, DescentSolver, IterRecord,
                       LineSearchFailure, SmootherConfig, SolveReport,
                       descent_iterate, line_search, polish_minimizer, smooth)

__version__ = "0.1.0"
