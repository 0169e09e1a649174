"""
Convergence of the WG-MHD scheme on the manufactured examples
=============================================================

Runs a short mesh sequence for both examples and prints the error table
with observed orders between consecutive halved meshes.
"""

import time

from wgmhd import convergence_study
from wgmhd.verify import table_to_markdown

# k=1 on example 1: velocity L2 errors should drop by about 4 per halving
t0 = time.perf_counter()
table = convergence_study(1, 1, [4, 8, 16])
print(table_to_markdown(table))
print(f"example 1, k=1: {time.perf_counter() - t0:.1f}s")

# k=2 gains one order in every column
table = convergence_study(1, 2, [4, 8, 16])
print(table_to_markdown(table))

# example 2 has a nonzero velocity on the boundary, lifted by its edge projection
table = convergence_study(2, 2, [4, 8])
for row in table.rows:
    print(row.n, row.iterations, f"{row.errors.u_l2:.4e}", f"{row.errors.B_l2:.4e}")
