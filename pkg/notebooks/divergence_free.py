"""
Exact divergence of the discrete velocity and magnetic field
============================================================

The WG pair keeps the interior velocity and magnetic field pointwise
divergence free, and normal jumps across interior edges vanish too.
"""

import numpy as np

from wgmhd import SolverConfig, divergence_metrics, solve_mhd

for n in (4, 8, 16):
    sol = solve_mhd(SolverConfig(n=n, k=1, case=1))
    du, ju = divergence_metrics(sol.u)
    dB, jB = divergence_metrics(sol.B)
    print(f"n={n:3d}  div u {du:.1e}  div B {dB:.1e}  jump u {ju:.1e}  jump B {jB:.1e}")

# the Oseen increments shrink quickly from a zero initial guess
sol = solve_mhd(SolverConfig(n=8, k=2, case=2))
print("increments:", np.array2string(np.asarray(sol.increments), precision=2))
