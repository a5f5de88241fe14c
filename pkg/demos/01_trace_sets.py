"""Trace sets, subsets and the LSB transition kernel.

Run with ``python demos/01_trace_sets.py``.
"""
import numpy as np

from covermod.pixel_store import partition_tuples
from covermod.simulate import random_flips, smooth_rows
from covermod.trace_algebra import census, classify_tuple, enumerate_subsets, transition_kernel

# A pair's trace key only sees the values with their LSBs dropped, so LSB
# flips move a tuple between subsets but never out of its trace set.
for pair in [(4, 5), (5, 4), (10, 13)]:
    key, label = classify_tuple(pair)
    print(f"{pair} -> key {key}, subset {label}")

print("\nsubsets of the pair trace set with key (2,):")
print("  " + ", ".join(str(s) for s in enumerate_subsets((2,))))
print("subsets of the triplet trace set with key (0, 1):")
print("  " + ", ".join(str(s) for s in enumerate_subsets((0, 1))))

# The kernel for g samples is the g-fold Kronecker power of the one-sample kernel.
p = 0.1
t2 = transition_kernel(2, p)
print(f"\npair kernel at p = {p}:")
print(np.array2string(t2.matrix, precision=3))
print("column sums:", t2.matrix.sum(axis=0))

# Closure: random flipping leaves every trace-set population unchanged.
rng = np.random.default_rng(0)
grid = smooth_rows(128, 128, rng, scale=1.0).astype(np.uint8)
before = census(partition_tuples(grid, 0, 2))
after = census(partition_tuples(random_flips(grid, 0.3, rng), 0, 2))
print("\n|C_m| before flipping:", before.totals().tolist())
print("|C_m| after flipping: ", after.totals().tolist())

# Expected subset sizes after flipping follow T @ counts.
c = before.get((0,)).astype(float)
print("\nkey 0 subsets:", c.tolist(), "expected after p=0.3:",
      np.round(transition_kernel(2, 0.3).matrix @ c, 1).tolist(),
      "observed:", after.get((0,)).tolist())
