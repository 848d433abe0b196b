"""Delsarte transmutation operators, GLM equations and operator pencils on grids."""
from .numgrid import (GridSpec, GridFunction, FormField, PolylinePath, make_grid, differentiate, integrate_cells,
                      integrate_path, staircase, sample)
from .diffop import DifferentialOperator, apply, formal_adjoint, adjoint_defect
from .concomitant import (bilinear_concomitant, lagrange_residual, closedness_residual, antiderivative)
from .eigenspace import (SpectralGrid, SpectralFamily, FamilyRecipe, spectral_grid, build_kernel_family,
                         adjoint_kernel_family, membership_report)
from .transmutation import (KernelMatrix, DelsarteOperator, kernel_matrices, transform_family, delsarte_assemble,
                            build_delsarte, delsarte_inverse, transformed_operator, intertwining_residual)
from .glm import (FredholmKernel, VolterraKernel, build_pair, fredholm_from_pair, solve_glm,
                  marchenko_recover_potential)
from .pencil import (AffinePencil, SpectrumSample, evaluate_pencil, tau_extend, separated_family,
                     tau_independence_check, pencil_delsarte)
from .estimators import DelsarteTransform, GLMSolver

__version__ = "0.1.0"

__all__ = [
    "GridSpec",
    "GridFunction",
    "FormField",
    "PolylinePath",
    "make_grid",
    "differentiate",
    "integrate_cells",
    "integrate_path",
    "staircase",
    "sample",
    "DifferentialOperator",
    "apply",
    "formal_adjoint",
    "adjoint_defect",
    "bilinear_concomitant",
    "lagrange_residual",
    "closedness_residual",
    "antiderivative",
    "SpectralGrid",
    "SpectralFamily",
    "FamilyRecipe",
    "spectral_grid",
    "build_kernel_family",
    "adjoint_kernel_family",
    "membership_report",
    "KernelMatrix",
    "DelsarteOperator",
    "kernel_matrices",
    "transform_family",
    "delsarte_assemble",
    "build_delsarte",
    "delsarte_inverse",
    "transformed_operator",
    "intertwining_residual",
    "FredholmKernel",
    "VolterraKernel",
    "build_pair",
    "fredholm_from_pair",
    "solve_glm",
    "marchenko_recover_potential",
    "AffinePencil",
    "SpectrumSample",
    "evaluate_pencil",
    "tau_extend",
    "separated_family",
    "tau_independence_check",
    "pencil_delsarte",
    "DelsarteTransform",
    "GLMSolver",
]
