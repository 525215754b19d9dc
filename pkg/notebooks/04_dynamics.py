"""Split-step evolution and hydrodynamic trajectories.

A displaced coherent state oscillates rigidly in the harmonic well. Its
density keeps its shape, the quantum force vanishes, and each hydrodynamic
trajectory traces the classical orbit x(t) = A cos(omega t).
A free Gaussian spreads instead, and its trajectories fan out without
ever crossing.
"""

import numpy as np

from weakvar import dynamics, states
from weakvar.numerics import Grid

grid = Grid(-16, 16, 512)
psi0 = states.build(states.ModelSpec("coherent_state", {"omega": 1.0, "x_mean": 1.0}), grid)
period = 2 * np.pi
cfg = dynamics.EvolutionConfig(dynamics.harmonic_potential(grid, 1.0), period / 4000, 12000, 40)
print("step bounds:", cfg.bounds(grid, psi0.constants))

snaps = dynamics.evolve(psi0, cfg)
e0 = dynamics.energy(psi0, cfg.potential)
drift = max(abs(dynamics.energy(s.state, cfg.potential) - e0) for s in snaps) / e0
print(f"{len(snaps)} snapshots over three periods, relative energy drift {drift:.1e}")

traj = dynamics.hydrodynamic_trajectories(snaps, [0.0, 1.0, 2.0])
for i, x0 in enumerate(traj.seeds):
    err = np.max(np.abs(traj.x[i] - (x0 - 1.0) - np.cos(traj.t)))
    print(f"seed {x0:+.1f}: max deviation from the classical orbit {err:.1e}")

free = Grid(-40, 40, 1024)
g0 = states.build(states.ModelSpec("gaussian_packet", {"sigma": 1.0}), free)
fsnaps = dynamics.evolve(g0, dynamics.EvolutionConfig(dynamics.free_potential(free), 0.0025, 2000, 25))
ftraj = dynamics.hydrodynamic_trajectories(fsnaps, [-1.0, 1.0])
t = ftraj.t[-1]
print(f"free packet at t={t:.1f}: seeds at {ftraj.x[:, -1].round(6)}, expected +-{np.sqrt(1 + (t / 2) ** 2):.6f}")
print("crossings:", ftraj.crossings())
