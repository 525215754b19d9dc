"""Negative weak variance between two in-phase Gaussians.

Halfway between the peaks the density has a local minimum without a node.
There ln rho is convex, so V goes negative, the Wigner slice W(p|x) takes
negative values, and the fluid temperature k_B T = V/m and pressure P = rho V/m
follow it below zero.
"""

import numpy as np

from weakvar import states, weakstats, wigner
from weakvar.numerics import Grid

grid = Grid(-16, 16, 1024)
cat = states.build(states.ModelSpec("two_gaussian_superposition", {"separation": 6.0, "sigma": 1.0}), grid)
fs = weakstats.analyze(cat)

j = grid.index_of(0.0)
print(f"min W over phase space   {fs.wigner.W.min():.4f}")
print(f"V at the midpoint (A, B)  {fs.V_logrho[j]:.6f}  {fs.V_conditional[j]:.6f}")
print(f"k_B T, P at the midpoint  {fs.kT[j]:.6f}  {fs.P[j]:.3e}")

sl = wigner.conditional(fs.wigner, 0.0)
print(f"most negative W(p|0)      {sl.values.min():.4f}")

# a variance computed from |W| instead of W no longer matches sqrt|V|,
# and the slice's absolute norm exceeds one
s1, s2, norm = weakstats.pseudo_stddevs(fs.wigner, 0.0, fs.weak_momentum)
print(f"sqrt|V| {s1:.4f}   |W|-weighted spread {s2:.4f}   int |W| dp {norm:.4f}")

# node_divergent counts the far tails where rho underflows, not true nodes
hist = fs.sign_histogram()
print("sign classes:", {k: v for k, v in hist.items() if v})

# conditional cumulants at a few positions, by closed form and by fitting ln M(tau|x)
for x in (-3.0, -1.0, 0.0):
    a = wigner.conditional_cumulants(cat, x, 4, "formula")
    b = wigner.conditional_cumulants(cat, x, 4, "characteristic_function")
    print(f"x={x:+.1f}  kappa formula {np.round(a.kappa, 6) + 0.0}  fit {np.round(b.kappa, 6) + 0.0}")
