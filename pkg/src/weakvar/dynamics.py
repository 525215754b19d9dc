"""Split-step evolution, hydrodynamic trajectories and the classical-limit diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InstabilityError
from .io import write_csv
from .numerics import Grid, fd4_derivative, integrate
from .states import PhysicalConstants, PolarFields, WavefunctionGrid
from .weakstats import (
    RESOLVE_FLOOR,
    WeakMomentumField,
    log_density_derivatives,
    resolved_region,
)

__all__ = [
    "EvolutionConfig",
    "Snapshot",
    "TrajectorySet",
    "ClassicalLimitReport",
    "harmonic_potential",
    "barrier_potential",
    "free_potential",
    "evolve",
    "energy",
    "position_moments",
    "default_seeds",
    "hydrodynamic_trajectories",
    "quantum_force",
    "euler_lagrange_residual",
    "classical_limit_report",
    "export_trajectories",
]

NORM_DRIFT_MAX = 1e-6
TOL_FORCE_REL = 1e-6


# --------------------------------------------------------------- potentials

def free_potential(grid: Grid) -> np.ndarray:
    return np.zeros(grid.n)


def harmonic_potential(grid: Grid, omega: float, mass: float = 1.0, center: float = 0.0) -> np.ndarray:
    return 0.5 * mass * omega**2 * (grid.x - center) ** 2


def barrier_potential(grid: Grid, height: float, width: float, center: float = 0.0) -> np.ndarray:
    """Square barrier of ``height`` on ``|x - center| <= width/2``."""
    return np.where(np.abs(grid.x - center) <= 0.5 * width, float(height), 0.0)


# ---------------------------------------------------------------- evolution

@dataclass(frozen=True, eq=False)
class EvolutionConfig:
    """Time-independent potential and stepping parameters.

    ``dt`` must sit below the phase bound ``pi hbar / max|V|`` and the kinetic
    bound ``2 pi m / (hbar k_max^2)``; :meth:`check` enforces both.
    """

    potential: np.ndarray
    dt: float
    steps: int
    snapshot_every: int = 1

    def __post_init__(self):
        pot = np.array(self.potential, dtype=float)
        if not np.all(np.isfinite(pot)):
            raise ConfigurationError("potential contains non-finite values")
        pot.flags.writeable = False
        object.__setattr__(self, "potential", pot)
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError(f"steps must be a positive integer, got {self.steps}")
        if int(self.snapshot_every) != self.snapshot_every or self.snapshot_every < 1:
            raise ConfigurationError(f"snapshot_every must be a positive integer, got {self.snapshot_every}")

    def bounds(self, grid: Grid, constants: PhysicalConstants) -> dict:
        vmax = float(np.max(np.abs(self.potential)))
        kmax = math.pi / grid.dx
        return {
            "potential": math.inf if vmax == 0 else math.pi * constants.hbar / vmax,
            "kinetic": 2.0 * math.pi * constants.mass / (constants.hbar * kmax**2),
        }

    def check(self, grid: Grid, constants: PhysicalConstants) -> None:
        if self.potential.shape != (grid.n,):
            raise ConfigurationError(f"potential has shape {self.potential.shape}, grid expects ({grid.n},)")
        for name, bound in self.bounds(grid, constants).items():
            if self.dt >= bound:
                raise InstabilityError(f"dt = {self.dt:g} violates the {name} step bound {bound:.6g}")


@dataclass(frozen=True, eq=False)
class Snapshot:
    step: int
    t: float
    state: WavefunctionGrid


def energy(state: WavefunctionGrid, potential: np.ndarray) -> float:
    """``<H>`` with a spectral kinetic term."""
    c = state.constants
    g = state.grid
    phi = np.fft.fft(state.psi)
    kinetic = c.hbar**2 / (2.0 * c.mass) * float(np.sum(g.k**2 * np.abs(phi) ** 2)) / float(np.sum(np.abs(phi) ** 2))
    return kinetic + integrate(potential * state.rho, g)


def position_moments(state: WavefunctionGrid) -> tuple:
    """``(<x>, var x)``."""
    x = state.x
    m1 = integrate(x * state.rho, state.grid)
    return m1, integrate((x - m1) ** 2 * state.rho, state.grid)


def evolve(state: WavefunctionGrid, config: EvolutionConfig) -> list:
    """Strang-split Fourier propagation; snapshot 0 is the initial state.

    Raises :class:`InstabilityError` if a step bound is violated or the norm
    drifts by more than ``1e-6``.
    """
    g = state.grid
    c = state.constants
    config.check(g, c)
    if not state.periodic:
        state.check_decay()
    half_v = np.exp(-0.5j * config.dt * config.potential / c.hbar)
    kin = np.exp(-0.5j * config.dt * c.hbar * g.k**2 / c.mass)
    psi = np.array(state.psi)
    norm0 = float(np.sum(np.abs(psi) ** 2))
    snaps = [Snapshot(0, 0.0, state)]
    for step in range(1, config.steps + 1):
        psi = half_v * np.fft.ifft(kin * np.fft.fft(half_v * psi))
        if step % config.snapshot_every == 0 or step == config.steps:
            drift = abs(float(np.sum(np.abs(psi) ** 2)) / norm0 - 1.0)
            if drift > NORM_DRIFT_MAX:
                raise InstabilityError(f"norm drifted by {drift:.3g} at step {step}")
            snaps.append(Snapshot(step, step * config.dt, _snapshot_state(state, psi)))
    return snaps


def _snapshot_state(like: WavefunctionGrid, psi) -> WavefunctionGrid:
    # psi stays unit-norm to roundoff; rebuilding normalizes again harmlessly
    return WavefunctionGrid(like.grid, psi, like.constants, "spectral", like.periodic)


# ------------------------------------------------------------- trajectories

@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """Paths ``x[s, i]`` of seed ``s`` at time ``t[i]`` with velocities ``p~/m``.

    ``stopped[s]`` is the index after which seed ``s`` was truncated (it
    entered a node neighborhood), or -1.
    """

    seeds: np.ndarray
    t: np.ndarray
    x: np.ndarray
    velocity: np.ndarray
    stopped: np.ndarray

    def crossings(self) -> int:
        """Number of sample times at which the seed ordering is violated."""
        ok = np.isfinite(self.x)
        order = np.argsort(self.seeds)
        path = self.x[order]
        bad = 0
        for i in range(self.t.size):
            col = path[ok[order, i], i]
            bad += int(np.any(np.diff(col) <= 0))
        return bad


def _cell_cdf(state: WavefunctionGrid):
    """Cumulative mass at the cell edges ``x_j -/+ dx/2`` (piecewise-constant rho)."""
    dx = state.grid.dx
    edges = np.concatenate((state.x - 0.5 * dx, [state.x[-1] + 0.5 * dx]))
    return edges, np.concatenate(([0.0], np.cumsum(state.rho) * dx))


def default_seeds(state: WavefunctionGrid, count: int = 16) -> np.ndarray:
    """``count`` equally spaced quantiles of ``rho`` (midpoints of equal-mass bins)."""
    edges, cdf = _cell_cdf(state)
    q = (np.arange(count) + 0.5) / count * cdf[-1]
    return np.interp(q, cdf, edges)


class _VelocityField:
    """``p~(x, t)/m`` from band-limited psi and psi', cubic Lagrange in time."""

    def __init__(self, snapshots):
        self.t = np.array([s.t for s in snapshots])
        st = snapshots[0].state
        self.grid = st.grid
        self.hbar = st.constants.hbar
        self.mass = st.constants.mass
        k = 2.0 * np.pi * np.fft.fftfreq(self.grid.n, self.grid.dx)
        nyq = self.grid.n // 2
        k[nyq] = 0.0  # drop the Nyquist mode so the interpolant of psi' is the derivative of that of psi
        self.k = k
        self.coef = np.array([np.fft.fft(s.state.psi) / self.grid.n for s in snapshots])
        self.coef[:, nyq] = 0.0
        self.threshold = [1e-12 * float(s.state.rho.max()) for s in snapshots]

    def at_snapshot(self, i: int, x: np.ndarray):
        E = np.exp(1j * np.outer(x - self.grid.x_min, self.k))
        psi = E @ self.coef[i]
        dpsi = E @ (1j * self.k * self.coef[i])
        rho = np.abs(psi) ** 2
        v = self.hbar * np.imag(np.conj(psi) * dpsi) / np.where(rho > 0, rho, 1.0) / self.mass
        return v, rho < self.threshold[i]

    def __call__(self, t: float, x: np.ndarray):
        ts = self.t
        i = int(np.clip(np.searchsorted(ts, t) - 1, 0, ts.size - 2))
        lo = min(max(i - 1, 0), max(ts.size - 4, 0))
        idx = list(range(lo, min(lo + 4, ts.size)))
        vs, nodes = [], np.zeros(x.shape, dtype=bool)
        for j in idx:
            v, m = self.at_snapshot(j, x)
            vs.append(v)
            nodes |= m
        out = np.zeros_like(x)
        for a, ja in enumerate(idx):
            w = 1.0
            for jb in idx:
                if jb != ja:
                    w *= (t - ts[jb]) / (ts[ja] - ts[jb])
            out += w * vs[a]
        return out, nodes


def hydrodynamic_trajectories(snapshots, seeds=None, substeps: int = 1) -> TrajectorySet:
    """Integrate ``dx/dt = p~(x, t)/m`` with RK4 through the snapshot times.

    Each snapshot interval is split into ``substeps`` RK4 steps. A seed that
    lands where the density falls below the node threshold is stopped and
    its remaining samples set to NaN.
    """
    if len(snapshots) < 2:
        raise ConfigurationError("need at least two snapshots")
    st0 = snapshots[0].state
    seeds = default_seeds(st0) if seeds is None else np.atleast_1d(np.asarray(seeds, dtype=float))
    field_ = _VelocityField(snapshots)
    v0, bad0 = field_.at_snapshot(0, seeds)
    if np.any(bad0):
        raise ConfigurationError(f"seed(s) {seeds[bad0].tolist()} start on the node mask")
    t = field_.t
    X = np.full((seeds.size, t.size), np.nan)
    Vel = np.full_like(X, np.nan)
    X[:, 0], Vel[:, 0] = seeds, v0
    alive = np.ones(seeds.size, dtype=bool)
    stopped = np.full(seeds.size, -1)
    x = seeds.copy()
    for i in range(t.size - 1):
        h = (t[i + 1] - t[i]) / substeps
        for s in range(substeps):
            t0 = t[i] + s * h
            k1, n1 = field_(t0, x)
            k2, n2 = field_(t0 + h / 2, x + h / 2 * k1)
            k3, n3 = field_(t0 + h / 2, x + h / 2 * k2)
            k4, n4 = field_(t0 + h, x + h * k3)
            x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            hit = alive & (n1 | n2 | n3 | n4)
            stopped[hit] = i
            alive &= ~hit
        v, nodes = field_.at_snapshot(i + 1, x)
        hit = alive & nodes
        stopped[hit] = i
        alive &= ~hit
        X[alive, i + 1] = x[alive]
        Vel[alive, i + 1] = v[alive]
    return TrajectorySet(seeds, t, X, Vel, stopped)


def interseed_mass(snapshots, traj: TrajectorySet) -> np.ndarray:
    """``int rho dx`` between adjacent trajectories at every snapshot (columns)."""
    order = np.argsort(traj.seeds)
    out = np.empty((order.size - 1, traj.t.size))
    for i, snap in enumerate(snapshots):
        edges, cdf = _cell_cdf(snap.state)
        m = np.interp(traj.x[order, i], edges, cdf)
        out[:, i] = np.diff(m)
    return out


def export_trajectories(traj: TrajectorySet, path) -> Path:
    ids, ts, xs, vs = [], [], [], []
    for s in range(traj.seeds.size):
        for i in range(traj.t.size):
            if np.isfinite(traj.x[s, i]):
                ids.append(s)
                ts.append(traj.t[i])
                xs.append(traj.x[s, i])
                vs.append(traj.velocity[s, i])
    return write_csv(path, {"seed_id": np.array(ids, dtype=int), "t": ts, "x": xs, "velocity": vs})


# ------------------------------------------------------------ classical limit

def quantum_force(Q: np.ndarray, grid: Grid) -> np.ndarray:
    """``dQ/dx`` by fd4 stencils, differentiated run by run between masked (NaN) samples."""
    Q = np.asarray(Q, dtype=float)
    out = np.full(Q.shape, np.nan)
    good = np.isfinite(Q)
    edges = np.flatnonzero(np.diff(np.concatenate(([0], good.astype(int), [0]))))
    for a, b in zip(edges[::2], edges[1::2]):
        if b - a >= 6:
            out[a:b] = fd4_derivative(Q[a:b], grid.dx, 1)
    return out


def quantum_force_from_density(polar: PolarFields, floor: float = RESOLVE_FLOOR) -> np.ndarray:
    """``dQ/dx`` from the first three log-density derivatives (no second differentiation of Q)."""
    c = polar.constants
    L = log_density_derivatives(polar, 3, floor)
    dQ = -(c.hbar**2) / (2.0 * c.mass) * (0.5 * L[3] + 0.5 * L[1] * L[2])
    dQ[polar.node_mask] = np.nan
    return dQ


def euler_lagrange_residual(polar: PolarFields, logs: dict | None = None) -> np.ndarray:
    """``rho''/rho - (rho'/rho)^2 / 2``; zero where rho extremizes the mean weak variance."""
    L = logs or log_density_derivatives(polar)
    res = L[2] + 0.5 * L[1] ** 2
    res[polar.node_mask] = np.nan
    return res


@dataclass(frozen=True, eq=False)
class ClassicalLimitReport:
    J: float
    fisher_form: float
    el_residual: np.ndarray
    semiclassical_mask: np.ndarray
    tol_zero: float
    tol_force: float
    quantum_force: np.ndarray = field(repr=False, default=None)

    def semiclassical_fraction(self, where: np.ndarray) -> float:
        return float(np.mean(self.semiclassical_mask[where]))


def classical_limit_report(
    polar: PolarFields,
    V: np.ndarray,
    Q: np.ndarray | None = None,
    wm: WeakMomentumField | None = None,
    tol_zero: float | None = None,
    tol_force: float | None = None,
    floor: float = RESOLVE_FLOOR,
) -> ClassicalLimitReport:
    """Mean weak variance ``J``, the Euler-Lagrange residual and the semiclassical mask.

    A point is semiclassical when ``|V| <= tol_zero`` and ``|dQ/dx| <= tol_force``.
    Defaults are ``1e-6`` of the largest ``|V|`` and ``|dQ/dx|`` over the
    resolved region. ``Q`` and ``wm`` are accepted for symmetry with the
    field set; the force is rebuilt from density derivatives.
    """
    from .weakstats import variance_budget, zero_tolerance

    logs = log_density_derivatives(polar, 3, floor)
    dQ = quantum_force_from_density(polar, floor)
    region = resolved_region(polar, floor)
    if tol_zero is None:
        tol_zero = zero_tolerance(polar, V, floor=floor)
    if tol_force is None:
        vals = np.abs(dQ[region])
        tol_force = TOL_FORCE_REL * float(vals.max()) if vals.size else 0.0
    with np.errstate(invalid="ignore"):
        semi = (np.abs(V) <= tol_zero) & (np.abs(dQ) <= tol_force)
    semi &= ~polar.node_mask
    budget = variance_budget(polar, logs)
    return ClassicalLimitReport(
        J=budget.mean_weak,
        fisher_form=budget.fisher_form,
        el_residual=euler_lagrange_residual(polar, logs),
        semiclassical_mask=semi,
        tol_zero=float(tol_zero),
        tol_force=float(tol_force),
        quantum_force=dQ,
    )
