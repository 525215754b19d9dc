"""Wavefunction construction, polar decomposition, CSV ingestion and closed-form oracles."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateStateError,
    DomainTooSmallError,
    ParseError,
    UnsupportedOracleError,
)
from .io import write_csv
from .numerics import (
    Grid,
    derivative,
    integrate,
    is_power_of_two,
    trig_interpolate,
    unwrap_phase,
)

__all__ = [
    "PhysicalConstants",
    "WavefunctionGrid",
    "PolarFields",
    "ModelSpec",
    "MODEL_KINDS",
    "build",
    "polar_decompose",
    "ingest",
    "export_state",
    "oracle",
    "hermite",
    "hermite_function",
    "laguerre",
    "EPS_NODE",
    "BOUNDARY_DECAY",
]

#: Default node threshold, relative to ``max(rho)``.
EPS_NODE = 1e-12
#: Largest admissible |psi| at the grid ends for decaying states.
BOUNDARY_DECAY = 1e-8


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and math.isfinite(self.hbar)):
            raise ConfigurationError(f"hbar must be positive, got {self.hbar}")
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ConfigurationError(f"mass must be positive, got {self.mass}")


_GREGORY = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])


@dataclass(frozen=True, eq=False)
class WavefunctionGrid:
    """A pure state sampled on a uniform grid, normalized at construction.

    ``method`` is the differentiation scheme suited to the samples: ``spectral``
    for smooth decaying (or periodic) states, ``fd4`` for states with kinks.
    ``periodic`` marks states that are genuinely periodic on the grid
    (commensurate plane waves) rather than decaying. ``walls`` lists positions
    where an fd4 state drops to an exact zero with a kink (box walls, the
    hydrogenic origin); derivatives never reach across them.
    """

    grid: Grid
    psi: np.ndarray
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    method: str = "spectral"
    periodic: bool = False
    walls: tuple = ()

    def __post_init__(self):
        psi = np.array(self.psi, dtype=complex)
        if psi.shape != (self.grid.n,):
            raise ConfigurationError(f"psi has shape {psi.shape}, grid expects ({self.grid.n},)")
        if not np.all(np.isfinite(psi)):
            raise ConfigurationError("psi contains non-finite samples")
        norm = integrate(np.abs(psi) ** 2, self.grid)
        if not norm > 0:
            raise DegenerateStateError("psi vanishes identically")
        psi /= math.sqrt(norm)
        psi.flags.writeable = False
        object.__setattr__(self, "psi", psi)
        if self.method not in ("spectral", "fd4"):
            raise ConfigurationError(f"unknown method {self.method!r}")
        object.__setattr__(self, "walls", tuple(float(w) for w in self.walls))

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def rho(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def _on_wall(self) -> np.ndarray:
        x = self.grid.x
        hit = np.zeros(x.size, dtype=bool)
        for w in self.walls:
            hit |= np.abs(x - w) <= 1e-6 * self.grid.dx
        return hit

    @property
    def support(self):
        """Mask of the smooth pieces for fd4 states that vanish exactly somewhere.

        The nonzero samples plus the samples sitting on a wall, so a wall zero
        belongs to the piece it bounds. Without declared walls every exact zero
        next to a nonzero sample is taken to be a wall. ``None`` when no
        splitting is needed.
        """
        if self.method != "fd4":
            return None
        nz = self.psi != 0
        if nz.all():
            return None
        if self.walls:
            return nz | self._on_wall()
        grown = nz.copy()
        grown[1:] |= nz[:-1]
        grown[:-1] |= nz[1:]
        return grown

    def quadrature_weights(self) -> np.ndarray:
        """Per-sample quadrature weights (in units of dx) for integrands cut off at walls.

        Integrands such as ``|psi'|^2`` are smooth on each piece but jump at a
        wall, so plain ``dx * sum`` is only first order there. Each piece that
        ends on a wall sample gets the fourth-order end weights
        ``3/8, 7/6, 23/24`` at that end. Elsewhere the weight is 1.
        """
        w = np.ones(self.grid.n)
        support = self.support
        if support is None:
            return w
        wall = support & (self.psi == 0)
        edges = np.flatnonzero(np.diff(np.concatenate(([0], support.astype(np.int8), [0]))))
        for a, b in zip(edges[::2], edges[1::2]):
            if b - a < 6:
                continue
            if wall[a]:
                w[a:a + 3] = _GREGORY
            if wall[b - 1]:
                w[b - 3:b] = _GREGORY[::-1]
        return w

    def diff(self, f, order: int = 1) -> np.ndarray:
        """Derivative of any field on this state's grid with the state's scheme."""
        return derivative(f, self.grid, order, self.method, self.support)

    def d(self, order: int = 1) -> np.ndarray:
        """Derivative of psi with the state's own scheme."""
        return self.diff(self.psi, order)

    def replace_psi(self, psi) -> "WavefunctionGrid":
        return WavefunctionGrid(self.grid, psi, self.constants, self.method, self.periodic, self.walls)

    def edge_amplitude(self) -> float:
        return float(max(abs(self.psi[0]), abs(self.psi[-1])))

    def check_decay(self, tol: float = BOUNDARY_DECAY) -> None:
        edge = self.edge_amplitude()
        if edge >= tol:
            raise DomainTooSmallError(
                f"|psi| = {edge:.3g} at the grid boundary (needs < {tol:g}); widen the grid"
            )


@dataclass(frozen=True, eq=False)
class PolarFields:
    """``psi = R exp(iS)`` with a node mask.

    ``S`` is NaN on masked points. ``segment`` labels each unmasked run
    (-1 on the mask); ``independent`` lists segments whose phase offset could
    not be tied to the anchor segment. ``nodes`` holds the estimated positions
    of interior zeros of psi.
    """

    R: np.ndarray
    rho: np.ndarray
    S: np.ndarray
    node_mask: np.ndarray
    segment: np.ndarray
    independent: tuple
    nodes: tuple
    eps_node: float
    state: WavefunctionGrid

    @property
    def grid(self) -> Grid:
        return self.state.grid

    @property
    def constants(self) -> PhysicalConstants:
        return self.state.constants


# --------------------------------------------------------------------------- models

MODEL_KINDS = (
    "plane_wave",
    "gaussian_packet",
    "coherent_state",
    "qho_eigenstate",
    "box_eigenstate",
    "hydrogenic_radial",
    "two_gaussian_superposition",
    "exponential_segment",
)

# kind -> (required, optional defaults)
_PARAMS = {
    "plane_wave": ({"k"}, {}),
    "gaussian_packet": ({"sigma"}, {"mu": 0.0, "p0": 0.0}),
    "coherent_state": ({"omega"}, {"x_mean": 0.0, "p_mean": 0.0}),
    "qho_eigenstate": ({"n", "omega"}, {"x0": 0.0}),
    "box_eigenstate": ({"n", "L"}, {"x0": 0.0}),
    "hydrogenic_radial": ({"n"}, {"alpha": 1.0}),
    "two_gaussian_superposition": (
        {"separation", "sigma"},
        {"mu": 0.0, "p0": 0.0, "weights": (1.0, 1.0), "phase": 0.0},
    ),
    "exponential_segment": ({"a", "L"}, {"x0": 0.0, "sigma": None}),
}


@dataclass(frozen=True)
class ModelSpec:
    """A named analytic state and its parameters.

    >>> ModelSpec("coherent_state", {"omega": 2.0})["x_mean"]
    0.0
    """

    kind: str
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _PARAMS:
            raise ConfigurationError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        required, optional = _PARAMS[self.kind]
        given = dict(self.params)
        unknown = set(given) - required - set(optional)
        if unknown:
            raise ConfigurationError(f"{self.kind}: unknown parameter(s) {sorted(unknown)}")
        missing = required - set(given)
        if missing:
            raise ConfigurationError(f"{self.kind}: missing parameter(s) {sorted(missing)}")
        full = {**optional, **given}
        _validate(self.kind, full)
        object.__setattr__(self, "params", MappingProxyType(full))

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        d = dict(d)
        try:
            kind = d.pop("kind")
        except KeyError:
            raise ConfigurationError("model needs a 'kind'") from None
        return cls(kind, d)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for k, v in self.params.items():
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    def __getitem__(self, key):
        return self.params[key]


def _positive(kind, params, *names):
    for name in names:
        v = params[name]
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ConfigurationError(f"{kind}: {name} must be a positive number, got {v!r}")


def _finite(kind, params, *names):
    for name in names:
        v = params[name]
        if not (isinstance(v, (int, float)) and math.isfinite(v)):
            raise ConfigurationError(f"{kind}: {name} must be a finite number, got {v!r}")


def _quantum_number(kind, params, lowest):
    n = params["n"]
    if isinstance(n, float) and n.is_integer():
        n = int(n)
        params["n"] = n
    if not isinstance(n, int) or isinstance(n, bool) or n < lowest:
        raise ConfigurationError(f"{kind}: n must be an integer >= {lowest}, got {params['n']!r}")


def _validate(kind, p):
    if kind == "plane_wave":
        _finite(kind, p, "k")
    elif kind == "gaussian_packet":
        _positive(kind, p, "sigma")
        _finite(kind, p, "mu", "p0")
    elif kind == "coherent_state":
        _positive(kind, p, "omega")
        _finite(kind, p, "x_mean", "p_mean")
    elif kind == "qho_eigenstate":
        _quantum_number(kind, p, 0)
        _positive(kind, p, "omega")
        _finite(kind, p, "x0")
    elif kind == "box_eigenstate":
        _quantum_number(kind, p, 1)
        _positive(kind, p, "L")
        _finite(kind, p, "x0")
    elif kind == "hydrogenic_radial":
        _quantum_number(kind, p, 1)
        _positive(kind, p, "alpha")
    elif kind == "two_gaussian_superposition":
        _positive(kind, p, "separation", "sigma")
        _finite(kind, p, "mu", "p0", "phase")
        w = tuple(float(v) for v in p["weights"])
        if len(w) != 2 or not all(math.isfinite(v) for v in w) or not any(w):
            raise ConfigurationError(f"{kind}: weights must be two finite numbers, not both zero")
        p["weights"] = w
    elif kind == "exponential_segment":
        _finite(kind, p, "a", "x0")
        _positive(kind, p, "L")
        if p["sigma"] is None:
            p["sigma"] = p["L"] / 4.0
        _positive(kind, p, "sigma")


# --------------------------------------------------------------- special functions

def hermite(n: int, y):
    """Physicists' Hermite polynomial by the three-term recurrence."""
    y = np.asarray(y, dtype=float)
    h0 = np.ones_like(y)
    if n == 0:
        return h0
    h1 = 2.0 * y
    for k in range(1, n):
        h0, h1 = h1, 2.0 * y * h1 - 2.0 * k * h0
    return h1


def hermite_function(n: int, y):
    """Normalized Hermite function ``H_n(y) exp(-y^2/2) / sqrt(2^n n! sqrt(pi))``.

    Uses the normalized recurrence so large ``n`` neither overflows nor loses
    the Gaussian envelope.
    """
    y = np.asarray(y, dtype=float)
    f0 = np.pi ** -0.25 * np.exp(-0.5 * y * y)
    if n == 0:
        return f0
    f1 = math.sqrt(2.0) * y * f0
    for k in range(2, n + 1):
        f0, f1 = f1, math.sqrt(2.0 / k) * y * f1 - math.sqrt((k - 1.0) / k) * f0
    return f1


def laguerre(n: int, alpha: float, y):
    """Generalized Laguerre polynomial ``L_n^(alpha)(y)``; zero for ``n < 0``."""
    y = np.asarray(y, dtype=float)
    if n < 0:
        return np.zeros_like(y)
    l0 = np.ones_like(y)
    if n == 0:
        return l0
    l1 = 1.0 + alpha - y
    for k in range(1, n):
        l0, l1 = l1, ((2 * k + 1 + alpha - y) * l1 - (k + alpha) * l0) / (k + 1)
    return l1


def _d2_log_hermite(n, y):
    """``d^2/dy^2 ln H_n(y)`` from ``H_n' = 2n H_(n-1)``."""
    h = hermite(n, y)
    h1 = 2.0 * n * hermite(n - 1, y) if n >= 1 else 0.0 * y
    h2 = 4.0 * n * (n - 1) * hermite(n - 2, y) if n >= 2 else 0.0 * y
    with np.errstate(divide="ignore", invalid="ignore"):
        return h2 / h - (h1 / h) ** 2, h1 / h, h


def _d2_log_laguerre(k, y):
    """``d^2/dy^2 ln L_k^(1)(y)`` using ``d/dy L_k^(a) = -L_(k-1)^(a+1)``."""
    L = laguerre(k, 1.0, y)
    L1 = -laguerre(k - 1, 2.0, y)
    L2 = laguerre(k - 2, 3.0, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        return L2 / L - (L1 / L) ** 2, L1 / L, L


# -------------------------------------------------------------------------- build

def _gaussian(x, mu, sigma, p0, hbar):
    return (2.0 * np.pi * sigma**2) ** -0.25 * np.exp(-((x - mu) ** 2) / (4.0 * sigma**2) + 1j * p0 * x / hbar)


def _exp_segment_log_amplitude(x, a, x0, L, sigma):
    xb = x0 + L
    out = a * (x - x0)
    left, right = x < x0, x > xb
    out[left] -= (x[left] - x0) ** 2 / (4.0 * sigma**2)
    out[right] -= (x[right] - xb) ** 2 / (4.0 * sigma**2)
    return out


def _hydrogen_radius(n, alpha, c):
    return c.hbar**2 / (c.mass * alpha) * n


def build(spec: ModelSpec, grid: Grid, constants: PhysicalConstants | None = None) -> WavefunctionGrid:
    """Sample the model state on ``grid`` and normalize it."""
    c = constants or PhysicalConstants()
    p = spec.params
    x = grid.x
    hbar, m = c.hbar, c.mass
    method, periodic, walls = "spectral", False, ()

    if spec.kind == "plane_wave":
        turns = p["k"] * grid.length / (2.0 * np.pi)
        if abs(turns - round(turns)) > 1e-8:
            nearest = 2.0 * np.pi * round(turns) / grid.length
            raise ConfigurationError(
                f"plane_wave k={p['k']} is not periodic on the grid; nearest admissible k is {nearest:.17g}"
            )
        psi = np.exp(1j * p["k"] * x)
        periodic = True
    elif spec.kind == "gaussian_packet":
        psi = _gaussian(x, p["mu"], p["sigma"], p["p0"], hbar)
    elif spec.kind == "coherent_state":
        sigma = math.sqrt(hbar / (2.0 * m * p["omega"]))
        psi = _gaussian(x, p["x_mean"], sigma, p["p_mean"], hbar)
    elif spec.kind == "qho_eigenstate":
        y = math.sqrt(m * p["omega"] / hbar) * (x - p["x0"])
        psi = hermite_function(p["n"], y).astype(complex)
    elif spec.kind == "box_eigenstate":
        x0, L = p["x0"], p["L"]
        if not (grid.x_min < x0 and x0 + L < grid.x_max - grid.dx):
            raise DomainTooSmallError(f"grid [{grid.x_min}, {grid.x_max}) must strictly contain the box [{x0}, {x0 + L}]")
        inside = (x > x0) & (x < x0 + L)  # walls are exact zeros
        psi = np.where(inside, np.sin(p["n"] * np.pi * (x - x0) / L), 0.0).astype(complex)
        method = "fd4"
        walls = (x0, x0 + L)
    elif spec.kind == "hydrogenic_radial":
        a = _hydrogen_radius(1, p["alpha"], c)
        n = p["n"]
        if grid.x_min >= 0:
            raise DomainTooSmallError("hydrogenic_radial needs the grid to include x <= 0")
        xp = np.where(x > 0, x, 0.0)
        psi = np.where(
            x > 0, xp * np.exp(-xp / (n * a)) * laguerre(n - 1, 1.0, 2.0 * xp / (n * a)), 0.0
        ).astype(complex)
        method = "fd4"
        walls = (0.0,)
    elif spec.kind == "two_gaussian_superposition":
        d, s, mu = p["separation"], p["sigma"], p["mu"]
        w1, w2 = p["weights"]
        psi = w1 * _gaussian(x, mu - d / 2, s, p["p0"], hbar) + w2 * np.exp(1j * p["phase"]) * _gaussian(
            x, mu + d / 2, s, -p["p0"], hbar
        )
    elif spec.kind == "exponential_segment":
        psi = np.exp(_exp_segment_log_amplitude(x, p["a"], p["x0"], p["L"], p["sigma"])).astype(complex)
        method = "fd4"
    else:  # pragma: no cover - ModelSpec already validated
        raise ConfigurationError(spec.kind)

    state = WavefunctionGrid(grid, psi, c, method=method, periodic=periodic, walls=walls)
    if not periodic:
        state.check_decay()
    return state


# ----------------------------------------------------------------- polar fields

def _runs(mask):
    """(start, stop) pairs of consecutive False entries."""
    good = ~mask
    edges = np.flatnonzero(np.diff(np.concatenate(([0], good.astype(int), [0]))))
    return list(zip(edges[::2], edges[1::2]))


def polar_decompose(state: WavefunctionGrid, eps_node: float | None = None) -> PolarFields:
    """Amplitude, density and unwrapped phase of ``state``.

    ``eps_node`` is an absolute density threshold; by default
    ``EPS_NODE * max(rho)``. A zero of psi that falls between two samples
    (psi turns by more than a quarter turn over one step) masks the sample of
    smaller density as well, so every interior node owns a masked
    neighborhood whatever the grid offset. The phase is unwrapped within each unmasked run,
    anchored at the global maximum of ``R``. Runs on either side of a masked
    gap are tied together by extrapolating the local phase gradient across
    the gap and choosing the nearest 2*pi branch; gaps wider than a tenth of
    the grid leave the far segment flagged independent.
    """
    psi = state.psi
    R = np.abs(psi)
    rho = R * R
    eps = EPS_NODE * rho.max() if eps_node is None else float(eps_node)
    mask = rho < eps
    if mask.all():
        raise DegenerateStateError("every grid point is below the node threshold")
    x = state.grid.x
    nodes = []
    turn = np.real(psi[:-1] * np.conj(psi[1:])) < 0.0
    turn &= ~mask[:-1] & ~mask[1:]
    for j in np.flatnonzero(turn):
        nodes.append(x[j] + state.grid.dx * R[j] / (R[j] + R[j + 1]))
        mask[j if rho[j] <= rho[j + 1] else j + 1] = True
    for a, b in _runs(~mask):
        if a > 0 and b < mask.size and rho[a:b].max() < eps:
            nodes.append(float(x[a:b].mean()))

    theta = np.angle(psi)
    runs = _runs(mask)
    segment = np.full(state.grid.n, -1)
    for i, (a, b) in enumerate(runs):
        segment[a:b] = i

    dpsi = state.d(1)
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = np.imag(dpsi / psi)
    dx = state.grid.dx
    S = np.full(state.grid.n, np.nan)
    anchor = int(np.argmax(R))
    home = segment[anchor]
    a, b = runs[home]
    S[a:b] = unwrap_phase(theta[a:b], anchor - a)
    independent = []
    max_gap = 0.1 * state.grid.n

    def attach(i, prev_edge, first):
        a, b = runs[i]
        raw = unwrap_phase(theta[a:b], 0 if first == a else b - a - 1)
        gap = abs(first - prev_edge)
        if gap > max_gap or not np.isfinite(grad[prev_edge]):
            independent.append(i)
            S[a:b] = raw
            return
        predicted = S[prev_edge] + grad[prev_edge] * (first - prev_edge) * dx
        offset = 2.0 * np.pi * np.round((predicted - raw[first - a]) / (2.0 * np.pi))
        S[a:b] = raw + offset

    for i in range(home + 1, len(runs)):
        attach(i, runs[i - 1][1] - 1, runs[i][0])
    for i in range(home - 1, -1, -1):
        attach(i, runs[i + 1][0], runs[i][1] - 1)

    for arr in (R, rho, S, mask, segment):
        arr.flags.writeable = False
    nodes = tuple(sorted(float(v) for v in nodes))
    return PolarFields(R, rho, S, mask, segment, tuple(sorted(independent)), nodes, eps, state)


# ---------------------------------------------------------------- ingest/export

_SCHEMAS = (("x", "re_psi", "im_psi"), ("x", "rho", "S"))


def export_state(state: WavefunctionGrid, path, extra_columns: Mapping | None = None) -> Path:
    """Write ``x,re_psi,im_psi`` with 17 significant digits."""
    cols = {"x": state.x, "re_psi": state.psi.real, "im_psi": state.psi.imag}
    if extra_columns:
        cols = {**extra_columns, **cols}
    return write_csv(path, cols)


def ingest(path, constants: PhysicalConstants | None = None) -> WavefunctionGrid:
    """Read a state from CSV (``x,re_psi,im_psi`` or ``x,rho,S``).

    Uniform power-of-two data is taken as is. Other uniform data is resampled
    onto the next power-of-two grid spanning the same period by trigonometric
    interpolation; non-uniform abscissae use a cubic spline. The state is
    renormalized. Decaying data is differentiated spectrally, anything else
    with fd4 stencils.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ParseError("empty file", line=1)
    hline, header = rows[0]
    header = tuple(h.strip() for h in header)
    if header not in _SCHEMAS:
        raise ParseError(f"header must be one of {[','.join(s) for s in _SCHEMAS]}, got {','.join(header)}", line=hline)
    data = []
    for line, r in rows[1:]:
        if len(r) != 3:
            raise ParseError(f"expected 3 columns, got {len(r)}", line=line)
        try:
            vals = [float(v) for v in r]
        except ValueError as exc:
            raise ParseError(f"not a number ({exc})", line=line) from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("non-finite sample", line=line)
        if data and vals[0] <= data[-1][1][0]:
            raise ParseError(f"x must increase strictly (x={vals[0]!r} after {data[-1][1][0]!r})", line=line)
        data.append((line, vals))
    if len(data) < 16:
        raise ParseError(f"need at least 16 samples, got {len(data)}", line=rows[-1][0])
    arr = np.array([v for _, v in data])
    x = arr[:, 0]
    if header[1] == "rho":
        bad = np.flatnonzero(arr[:, 1] < 0)
        if bad.size:
            raise ParseError("negative density", line=data[bad[0]][0])
        psi = np.sqrt(arr[:, 1]) * np.exp(1j * arr[:, 2])
    else:
        psi = arr[:, 1] + 1j * arr[:, 2]

    steps = np.diff(x)
    dx = steps.mean()
    uniform = np.max(np.abs(steps - dx)) <= 1e-9 * max(abs(dx), 1e-300) + 1e-12 * np.max(np.abs(x))
    rows_n = x.size
    if uniform and is_power_of_two(rows_n):
        grid = Grid(x[0], x[0] + rows_n * dx, rows_n)
        samples = psi
    else:
        n = 1 << (rows_n - 1).bit_length()
        if uniform:
            grid = Grid(x[0], x[0] + rows_n * dx, n)
            samples = trig_interpolate(psi, x[0], dx, grid.x)
        else:
            from scipy.interpolate import CubicSpline

            span = x[-1] - x[0]
            grid = Grid(x[0], x[0] + span * n / (n - 1), n)
            xs = np.minimum(grid.x, x[-1])
            samples = CubicSpline(x, psi.real)(xs) + 1j * CubicSpline(x, psi.imag)(xs)

    state = WavefunctionGrid(grid, samples, constants or PhysicalConstants())
    if state.edge_amplitude() >= BOUNDARY_DECAY:
        state = WavefunctionGrid(grid, samples, state.constants, method="fd4")
    return state


# ------------------------------------------------------------------------ oracles

ORACLE_QUANTITIES = ("weak_variance", "weak_value_re", "weak_value_im", "quantum_potential")


def oracle(spec: ModelSpec, quantity: str, x: float, constants: PhysicalConstants | None = None) -> float:
    """Closed-form value of ``quantity`` for ``spec`` at position ``x``.

    ``weak_variance`` is ``+inf`` at analytic nodes and wherever the model
    wavefunction vanishes identically; the other quantities are NaN there.
    """
    if quantity not in ORACLE_QUANTITIES:
        raise UnsupportedOracleError(f"unknown quantity {quantity!r}")
    c = constants or PhysicalConstants()
    hbar, m = c.hbar, c.mass
    p = spec.params
    x = float(x)
    kind = spec.kind

    def at_node():
        return math.inf if quantity == "weak_variance" else math.nan

    if kind == "plane_wave":
        return {"weak_variance": 0.0, "weak_value_re": hbar * p["k"], "weak_value_im": 0.0, "quantum_potential": 0.0}[quantity]

    if kind in ("gaussian_packet", "coherent_state"):
        if kind == "coherent_state":
            sigma = math.sqrt(hbar / (2.0 * m * p["omega"]))
            mu, p0 = p["x_mean"], p["p_mean"]
        else:
            sigma, mu, p0 = p["sigma"], p["mu"], p["p0"]
        u = x - mu
        return {
            "weak_variance": hbar**2 / (4.0 * sigma**2),
            "weak_value_re": p0,
            "weak_value_im": hbar * u / (2.0 * sigma**2),
            "quantum_potential": hbar**2 / (4.0 * m * sigma**2) - hbar**2 * u**2 / (8.0 * m * sigma**4),
        }[quantity]

    if kind == "qho_eigenstate":
        n, w = p["n"], p["omega"]
        scale = math.sqrt(m * w / hbar)
        y = scale * (x - p["x0"])
        d2, r1, h = (float(v) for v in _d2_log_hermite(n, y))
        if h == 0.0 or (n > 0 and _near_root(y, np.polynomial.hermite.hermroots([0] * n + [1]))):
            return at_node()
        if quantity == "weak_variance":
            return 0.5 * m * hbar * w * (1.0 - d2)
        if quantity == "weak_value_re":
            return 0.0
        if quantity == "weak_value_im":
            return -hbar * scale * (r1 - y)
        return hbar * w * (n + 0.5) - 0.5 * m * w**2 * (x - p["x0"]) ** 2

    if kind == "box_eigenstate":
        n, L, x0 = p["n"], p["L"], p["x0"]
        t = n * (x - x0) / L
        if x <= x0 or x >= x0 + L or abs(t - round(t)) < 1e-12:
            return at_node()
        kk = n * math.pi / L
        E = (hbar * kk) ** 2 / (2.0 * m)
        s = math.sin(kk * (x - x0))
        return {
            "weak_variance": m * E / s**2,
            "weak_value_re": 0.0,
            "weak_value_im": -hbar * kk * math.cos(kk * (x - x0)) / s,
            "quantum_potential": E,
        }[quantity]

    if kind == "hydrogenic_radial":
        n, alpha = p["n"], p["alpha"]
        if x <= 0:
            return at_node()
        a_n = _hydrogen_radius(n, alpha, c)
        y = 2.0 * x / a_n
        E = -m * alpha**2 / (2.0 * hbar**2 * n**2)
        d2, r1, L = (float(v) for v in _d2_log_laguerre(n - 1, y))
        if L == 0.0 or (n > 1 and _near_root(y, _laguerre_roots(n - 1))):
            return at_node()
        if quantity == "weak_variance":
            # y = 2x/(n a) rescales d^2/dx^2 by 4/(n a)^2, hence the factor 4 on E_n
            return hbar**2 / (2.0 * x**2) + 4.0 * m * E * d2
        if quantity == "weak_value_re":
            return 0.0
        if quantity == "weak_value_im":
            return -hbar * (1.0 / x - 1.0 / a_n + (2.0 / a_n) * r1)
        return E + alpha / x

    if kind == "exponential_segment":
        a, x0, L, s = p["a"], p["x0"], p["L"], p["sigma"]
        if x < x0:
            g, g2 = a - (x - x0) / (2.0 * s**2), -1.0 / (2.0 * s**2)
        elif x > x0 + L:
            g, g2 = a - (x - x0 - L) / (2.0 * s**2), -1.0 / (2.0 * s**2)
        else:
            g, g2 = a, 0.0
        return {
            "weak_variance": -0.5 * hbar**2 * g2,
            "weak_value_re": 0.0,
            "weak_value_im": -hbar * g,
            "quantum_potential": -(hbar**2) / (2.0 * m) * (g2 + g * g),
        }[quantity]

    raise UnsupportedOracleError(f"no closed form for {quantity} of {kind}")


def _near_root(y, roots, rtol=1e-12):
    return bool(np.any(np.abs(roots - y) <= rtol * max(1.0, abs(y))))


def _laguerre_roots(k):
    # L_k^(1)(y) = sum_j C(k+1, k-j) (-y)^j / j!
    coeffs = [math.comb(k + 1, k - j) * (-1) ** j / math.factorial(j) for j in range(k + 1)]
    return np.sort(np.roots(coeffs[::-1]).real)
