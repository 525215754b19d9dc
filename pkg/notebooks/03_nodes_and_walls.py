"""Nodes, walls and the Fisher floor.

At a node R ~ |x - x0|^k the weak variance diverges like k hbar^2 / (2 (x - x0)^2).
Oscillator nodes are linear, k = 1. A profile with a quadratic zero gives k = 2
and twice the coefficient. Inside a box V = E_n csc^2(...) stays positive and
blows up at the walls. Averaged over rho, V always equals hbar^2/4 times the
Fisher information of rho, so it can never be negative on average.
"""

import numpy as np

from weakvar import states, weakstats
from weakvar.numerics import Grid

grid = Grid(-16, 16, 4096)
qho1 = states.build(states.ModelSpec("qho_eigenstate", {"n": 1, "omega": 1.0}), grid)
pol = states.polar_decompose(qho1)
(fit,) = weakstats.node_fits(pol)
print(f"qho n=1 node at {fit.x0:+.3f}: k = {fit.k:.4f}, coefficient {fit.coefficient:.4f}")

g = Grid(-12, 12, 4096)
quad = states.WavefunctionGrid(g, g.x**2 * np.exp(-g.x**2 / 2))
(fit2,) = weakstats.node_fits(states.polar_decompose(quad))
print(f"R ~ x^2 node: k = {fit2.k:.4f}, coefficient {fit2.coefficient:.4f}")

box = Grid(-4, 4, 4096)
spec = states.ModelSpec("box_eigenstate", {"n": 2, "L": 4.0, "x0": -2.0})
bs = states.build(spec, box)
fs = weakstats.analyze(bs, with_wigner=False)
print("box n=2:   x      V (route A)       closed form")
for x in (-1.5, -0.6, 0.7, 1.4):
    j = box.index_of(x)
    print(f"        {box.x[j]:+.3f}  {fs.V_logrho[j]:.12f}  {states.oracle(spec, 'weak_variance', box.x[j]):.12f}")

b = fs.budget
print(f"box budget: total {b.total:.10f}, mean weak {b.mean_weak:.10f}, Fisher form {b.fisher_form:.10f}")
