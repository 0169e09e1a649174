"""
Static condensation of interior unknowns
========================================

Interior dofs are eliminated element by element, leaving a system in the
edge unknowns only. Both routes give the same discrete solution.
"""

import time

import numpy as np

from wgmhd import FormContext, PhysicalParams, WGVectorField, assemble_oseen, build_structured_mesh
from wgmhd import condense, manufactured_case, solve_linear

k, n = 2, 16
params = PhysicalParams(k=k)
mesh = build_structured_mesh(n)
ctx = FormContext(mesh, params)
case = manufactured_case(1, params)
zero = WGVectorField.zeros(mesh, k)

sys = assemble_oseen(ctx, zero, zero, case.f, case.g)
small = condense(sys)
print("full system:", sys.matrix.shape, "nnz", sys.matrix.nnz)
print("condensed system:", small.matrix.shape, "nnz", small.matrix.nnz)

for label, s in (("full", sys), ("condensed", small)):
    t0 = time.perf_counter()
    x = solve_linear(s)
    print(f"{label:9s} solve {time.perf_counter() - t0:.2f}s")
    if label == "full":
        x_full = x
print("max dof difference:", np.abs(x - x_full).max())
