"""Weak Galerkin finite elements for steady incompressible MHD in two dimensions.

The discrete velocity and magnetic field are globally divergence free.
Modules: :mod:`mesh`, :mod:`polybasis`, :mod:`weakops`, :mod:`forms`,
:mod:`system`, :mod:`solver` and :mod:`verify`, plus :mod:`checks` and
:mod:`cli` behind the ``wgmhd`` command.
"""
from .forms import FormContext, PhysicalParams
from .mesh import ElementGeometry, Mesh, build_structured_mesh, element_geometry, neighbor
from .polybasis import PolySpace, mass_matrix, triangle_quadrature
from .solver import (
    ConvergenceError,
    SolutionFields,
    SolverConfig,
    divergence_metrics,
    scheme_residuals,
    solve_mhd,
)
from .system import SingularSystemError, SparseSystem, assemble_oseen, condense, solve_linear
from .verify import (
    ConvergenceTable,
    ErrorReport,
    ManufacturedCase,
    compute_errors,
    convergence_study,
    emit_report,
    manufactured_case,
)
from .weakops import Discretization, LocalWeakOperator, WGScalarField, WGVectorField

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "ConvergenceTable", "Discretization", "ElementGeometry", "ErrorReport",
    "FormContext", "LocalWeakOperator", "ManufacturedCase", "Mesh", "PhysicalParams", "PolySpace",
    "SingularSystemError", "SolutionFields", "SolverConfig", "SparseSystem", "WGScalarField",
    "WGVectorField", "assemble_oseen", "build_structured_mesh", "compute_errors", "condense",
    "convergence_study", "divergence_metrics", "element_geometry", "emit_report",
    "manufactured_case", "mass_matrix", "neighbor", "scheme_residuals", "solve_linear",
    "solve_mhd", "triangle_quadrature",
]
