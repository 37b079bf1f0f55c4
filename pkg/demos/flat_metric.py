"""Flat (bounded-Lipschitz) distances between small atomic measures."""

import numpy as np

from flocklab.measures import EmpiricalMeasure, dbl

def atom(p):
    return EmpiricalMeasure(np.asarray(p, float)[None, :], [1.0])

# two unit atoms: distance is |a - b| until the cap at 2 takes over
for gap in (0.3, 1.0, 1.9, 2.5, 10.0):
    d = dbl(atom([0.0]), atom([gap]))
    print(f"point masses {gap:>4g} apart: dbl = {d:.6f}")

# mass can be moved or destroyed, whichever is cheaper
mu = EmpiricalMeasure(np.array([[0.0], [1.0]]), [0.5, 0.5])
nu = EmpiricalMeasure(np.array([[0.05], [4.0]]), [0.5, 0.5])
print(f"\nsplit measure, one atom near, one far: dbl = {dbl(mu, nu):.6f}")
print("(near atom walks 0.05 * 0.5; far atom pays the capped rate 2 * 0.5)")

# weights need not match atom for atom
even = EmpiricalMeasure(np.array([[0.0], [1.0]]), [0.5, 0.5])
lopsided = EmpiricalMeasure(np.array([[0.0], [1.0]]), [0.2, 0.8])
print(f"same atoms, shifted weights:          dbl = {dbl(even, lopsided):.6f}")
