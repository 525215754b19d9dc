"""Three ways to the weak variance of a coherent state.

A coherent state of the oscillator has a Gaussian density of width
sqrt(hbar / (2 m omega)), so V(x) should be the flat value m hbar omega / 2.
Route A differentiates ln rho, route B takes the second central moment of the
Wigner slice W(p|x), route C combines weak values of p and p^2.
"""

import numpy as np

from weakvar import states, weakstats
from weakvar.numerics import Grid

grid = Grid(-16, 16, 2048)
spec = states.ModelSpec("coherent_state", {"omega": 1.0, "x_mean": 0.5, "p_mean": 0.3})
psi = states.build(spec, grid)

fs = weakstats.analyze(psi)
region = weakstats.resolved_region(fs.polar)

print("route  max |V - 1/2| over the resolved region")
for name, V in (("A", fs.V_logrho), ("B", fs.V_conditional), ("C", fs.V_weakvalues)):
    print(f"  {name}    {np.max(np.abs(V[region] - 0.5)):.2e}")

# the weak value itself: its real part is the boost, the imaginary part the
# log-density slope, -(hbar/2) rho'/rho = (x - x_mean) / (2 sigma^2) hbar
wm = fs.weak_momentum
for x in (-1.0, 0.5, 2.0):
    j = grid.index_of(x)
    print(f"x={x:+.1f}  Re p_w={wm.re[j]:.6f}  Im p_w={wm.im[j]:.6f}")

# the total variance splits into the mean weak variance and the spread of the
# weak value; for a coherent state the weak value is constant
b = fs.budget
print(f"total {b.total:.10f} = mean_weak {b.mean_weak:.10f} + var_w {b.var_of_weak_value:.2e}")
