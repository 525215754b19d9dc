"""Wigner quasidistribution, its marginals and conditionals, and conditional cumulants.

Conventions: ``W(x, p) = (1/2 pi hbar) int psi*(x - y/2) psi(x + y/2) exp(-i p y / hbar) dy``
and ``M(tau | x) = psi*(x - hbar tau/2) psi(x + hbar tau/2) / rho(x)``, so that
``int W(p|x) exp(i tau p) dp = M(tau|x)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    DomainTooSmallError,
    FitDegradedWarning,
    NodeUndefinedError,
    RangeError,
)
from .io import fmt, write_csv
from .numerics import Grid, fourier_interpolate, momentum_space
from .states import BOUNDARY_DECAY, EPS_NODE, WavefunctionGrid

__all__ = [
    "WignerGrid",
    "ConditionalSlice",
    "CumulantTable",
    "wigner_transform",
    "marginal_x",
    "marginal_p",
    "conditional",
    "conditional_moment",
    "characteristic_function",
    "conditional_cumulants",
    "log_derivatives",
    "export_wigner",
    "momentum_density",
    "expectation_p",
]

#: Largest imaginary residue of the transform tolerated before it is discarded.
IMAG_TOL = 1e-10
FIT_POINTS = 33
FIT_COND_MAX = 1e8
FIT_GUARD = 2


@dataclass(frozen=True, eq=False)
class WignerGrid:
    """``W[j, l]`` at ``(grid_x.x[j], grid_p.x[l])``; units 1/(length*momentum)."""

    grid_x: Grid
    grid_p: Grid
    W: np.ndarray
    state: WavefunctionGrid

    @property
    def x(self):
        return self.grid_x.x

    @property
    def p(self):
        return self.grid_p.x

    @property
    def dp(self):
        return self.grid_p.dx

    def total(self) -> float:
        return float(self.W.sum() * self.grid_x.dx * self.dp)

    def expectation(self, f_xp) -> float:
        """``int int f(x, p) W dx dp`` for a vectorized ``f``."""
        X, P = np.meshgrid(self.x, self.p, indexing="ij")
        return float(np.sum(f_xp(X, P) * self.W) * self.grid_x.dx * self.dp)


@dataclass(frozen=True, eq=False)
class ConditionalSlice:
    x: float
    p: np.ndarray
    values: np.ndarray
    normalized: bool
    dp: float

    def integral(self) -> float:
        return float(self.values.sum() * self.dp)


@dataclass(frozen=True)
class CumulantTable:
    """``kappa[n-1]`` is the n-th conditional cumulant, in momentum**n."""

    x: float
    kappa: tuple
    method: str
    condition_number: float = math.nan

    def __getitem__(self, n: int) -> float:
        if not 1 <= n <= len(self.kappa):
            raise IndexError(f"cumulant order {n} not in table (1..{len(self.kappa)})")
        return self.kappa[n - 1]


# ------------------------------------------------------------------ transform

def _upsample2(psi: np.ndarray) -> np.ndarray:
    """Band-limited values on the half-step lattice, length ``2n``."""
    n = psi.size
    F = np.fft.fft(psi)
    G = np.zeros(2 * n, dtype=complex)
    h = n // 2
    G[:h] = F[:h]
    G[-h:] = F[-h:]
    # split the Nyquist coefficient so the interpolant stays the cosine form
    G[h] = 0.5 * F[h]
    G[-h] = 0.5 * F[h]
    return np.fft.ifft(G) * 2.0


def wigner_transform(state: WavefunctionGrid, chunk: int = 256) -> WignerGrid:
    """Wigner function of ``state`` on an ``n x 2n`` lattice.

    The kernel ``psi*(x - y/2) psi(x + y/2)`` is sampled at ``y = m dx`` for
    ``m`` in ``[-n, n)``, which needs ``psi`` on the half-step lattice; those
    values come from the band-limited interpolant. The momentum lattice is
    ``p_l = l pi hbar / (n dx)`` for ``l`` in ``[-n, n)``, spanning
    ``[-pi hbar/dx, pi hbar/dx)``.
    """
    if not state.periodic:
        edge = state.edge_amplitude()
        if edge >= BOUNDARY_DECAY:
            raise DomainTooSmallError(f"|psi| = {edge:.3g} at the boundary; the transform would wrap around")
    g = state.grid
    n = g.n
    hbar = state.constants.hbar
    fine = _upsample2(state.psi)
    two_n = 2 * n
    if state.periodic:
        fine_ext = np.concatenate((fine, fine, fine))
        offset = two_n
    else:
        fine_ext = np.concatenate((np.zeros(two_n, complex), fine, np.zeros(two_n, complex)))
        offset = two_n
    m = np.arange(-n, n)
    # kernel index in FFT order so that y = 0 is column 0
    m_fft = np.fft.ifftshift(m)
    dp = np.pi * hbar / (n * g.dx)
    grid_p = Grid(-n * dp, n * dp, two_n)
    W = np.empty((n, two_n))
    worst = 0.0
    for s in range(0, n, chunk):
        j = np.arange(s, min(s + chunk, n))
        centre = offset + 2 * j
        K = np.conj(fine_ext[centre[:, None] - m_fft[None, :]]) * fine_ext[centre[:, None] + m_fft[None, :]]
        spec = np.fft.fft(K, axis=1) * g.dx / (2.0 * np.pi * hbar)
        # shift to ascending p: p_l with l = -n..n-1
        spec = np.fft.fftshift(spec, axes=1)
        worst = max(worst, float(np.max(np.abs(spec.imag))))
        W[j] = spec.real
    scale = float(np.max(np.abs(W))) or 1.0
    if worst > IMAG_TOL * max(scale, 1.0):
        raise ConfigurationError(f"Wigner transform left an imaginary residue of {worst:.3g}")
    W.flags.writeable = False
    return WignerGrid(g, grid_p, W, state)


def marginal_x(Wg: WignerGrid) -> np.ndarray:
    return Wg.W.sum(axis=1) * Wg.dp


def marginal_p(Wg: WignerGrid) -> np.ndarray:
    return Wg.W.sum(axis=0) * Wg.grid_x.dx


def momentum_density(state: WavefunctionGrid, p, chunk: int = 512) -> np.ndarray:
    """``|phi(p)|^2`` at arbitrary momenta by direct quadrature of the Fourier integral."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    hbar = state.constants.hbar
    g = state.grid
    out = np.empty(p.size)
    for s in range(0, p.size, chunk):
        phase = np.exp(-1j * np.outer(p[s:s + chunk], g.x) / hbar)
        phi = phase @ state.psi * g.dx / math.sqrt(2.0 * math.pi * hbar)
        out[s:s + chunk] = np.abs(phi) ** 2
    return out


# --------------------------------------------------------------- conditionals

def _row(Wg: WignerGrid, x: float) -> int:
    if not Wg.grid_x.contains(x):
        raise RangeError(f"x = {x!r} lies outside the grid")
    return Wg.grid_x.index_of(x)


def _threshold(rho, eps_node):
    return EPS_NODE * float(rho.max()) if eps_node is None else float(eps_node)


def conditional(Wg: WignerGrid, x: float, eps_node: float | None = None) -> ConditionalSlice:
    """``W(p | x) = W(x, p) / rho(x)`` at the grid point nearest ``x``."""
    j = _row(Wg, x)
    rho = Wg.state.rho
    if rho[j] < _threshold(rho, eps_node):
        raise NodeUndefinedError(f"rho({Wg.x[j]:.6g}) = {rho[j]:.3g} is below the node threshold")
    values = Wg.W[j] / rho[j]
    values.flags.writeable = False
    return ConditionalSlice(float(Wg.x[j]), Wg.p, values, True, Wg.dp)


def conditional_moment(sl: ConditionalSlice, order: int, central: bool = False) -> float:
    """``int p**order W(p|x) dp``, about the conditional mean when ``central``."""
    if not sl.normalized:
        raise ConfigurationError("conditional_moment expects a normalized slice")
    p = sl.p
    if central:
        p = p - float(np.sum(sl.p * sl.values) * sl.dp)
    return float(np.sum(p**order * sl.values) * sl.dp)


def characteristic_function(state: WavefunctionGrid, x: float, tau, eps_node: float | None = None) -> np.ndarray:
    """Conditional characteristic function ``M(tau | x)``; off-grid points by band-limited interpolation."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    g = state.grid
    hbar = state.constants.hbar
    shift = 0.5 * hbar * tau
    if not (g.contains(x + shift) and g.contains(x - shift)):
        raise RangeError(f"x +- hbar*tau/2 leaves [{g.x_min}, {g.x_max - g.dx}] for |tau| up to {np.max(np.abs(tau)):g}")
    psi0 = complex(fourier_interpolate(state.psi, g, x)[0])
    rho0 = abs(psi0) ** 2
    if rho0 < _threshold(state.rho, eps_node):
        raise NodeUndefinedError(f"rho({x:.6g}) = {rho0:.3g} is below the node threshold")
    plus = fourier_interpolate(state.psi, g, x + shift)
    minus = fourier_interpolate(state.psi, g, x - shift)
    M = np.conj(minus) * plus / rho0
    M[tau == 0.0] = 1.0
    return M


# ------------------------------------------------------------------ cumulants

def log_derivatives(a) -> list:
    """Derivatives of ``ln f`` from ratios ``a[k] = f^(k)/f`` for k = 1..len(a).

    Inverts the complete Bell polynomials: ``l_n = a_n - sum_{k<n} C(n-1, k-1) l_k a_(n-k)``.
    """
    a = list(a)
    out = []
    for n in range(1, len(a) + 1):
        v = a[n - 1]
        for k in range(1, n):
            v = v - math.comb(n - 1, k - 1) * out[k - 1] * a[n - k - 1]  # never in place: a may hold arrays
        out.append(v)
    return out


def _formula_cumulants(state: WavefunctionGrid, x: float, N: int) -> list:
    g = state.grid
    hbar = state.constants.hbar
    psi0 = complex(fourier_interpolate(state.psi, g, x)[0]) if state.method == "spectral" else None
    if state.method == "spectral":
        ratios = [complex(fourier_interpolate(state.psi, g, x, order=k)[0]) / psi0 for k in range(1, N + 1)]
    else:
        j = _exact_index(g, x)
        psi0 = state.psi[j]
        ratios = [state.d(k)[j] / psi0 for k in range(1, N + 1)]
    logs = log_derivatives(ratios)
    kappa = []
    for n, l in enumerate(logs, start=1):
        factor = (hbar / 2j) ** n
        # ln M = sum (hbar tau/2)^n / n! * [l_n + (-1)^n conj(l_n)]
        c = 2.0 * l.real if n % 2 == 0 else 2j * l.imag
        kappa.append(float((factor * c).real))
    return kappa


def _exact_index(g: Grid, x: float) -> int:
    j = g.index_of(x)
    if not math.isclose(g.x[j], x, rel_tol=0.0, abs_tol=1e-9 * g.dx):
        raise RangeError(f"x = {x!r} must be a grid point for fd4 states")
    return j


def _slice_width(state: WavefunctionGrid, x: float) -> float:
    """Momentum scale ``sqrt(|kappa_2|) + |kappa_1|`` proxy used to size the tau window."""
    _, k2 = _formula_cumulants(state, x, 2)
    floor = state.constants.hbar / state.grid.length
    return max(math.sqrt(abs(k2)), floor)


def conditional_cumulants(
    state: WavefunctionGrid,
    x: float,
    N: int = 4,
    method: str = "formula",
    eps_node: float | None = None,
    window: float | None = None,
    points: int = FIT_POINTS,
) -> CumulantTable:
    """Conditional cumulants ``kappa_1..kappa_N`` of momentum at position ``x``.

    ``formula``: closed forms in the derivatives of ``ln rho`` (even n) and of
    the phase (odd n), evaluated from band-limited derivatives of psi.
    ``characteristic_function``: least-squares fit of a polynomial in ``i tau``
    to ``ln M(tau|x)`` on ``|tau| <= window``, by default ``0.1 / (2 sigma_p)``
    with ``sigma_p`` the local conditional width. The fit carries
    ``FIT_GUARD`` extra orders so truncation does not leak into ``kappa_N``.
    """
    if method not in ("formula", "characteristic_function"):
        raise ConfigurationError(f"unknown cumulant method {method!r}")
    if N < 1 or (method == "formula" and N > 4) or N > 6:
        raise ConfigurationError(f"order N={N} not supported by method {method}")
    rho = state.rho
    g = state.grid
    rho_x = float(np.abs(fourier_interpolate(state.psi, g, x)[0]) ** 2) if state.method == "spectral" else rho[_exact_index(g, x)]
    if rho_x < _threshold(rho, eps_node):
        raise NodeUndefinedError(f"rho({x:.6g}) = {rho_x:.3g} is below the node threshold")

    if method == "formula":
        return CumulantTable(float(x), tuple(_formula_cumulants(state, x, N)), method)

    if window is None:
        window = 0.1 / (2.0 * _slice_width(state, x))
    tau = np.linspace(-window, window, points)
    M = characteristic_function(state, x, tau, eps_node)
    logm = np.log(np.abs(M)) + 1j * np.unwrap(np.angle(M))
    logm -= logm[points // 2]  # ln M(0) = 0
    s = tau / window
    A = np.stack([(1j * s) ** n / math.factorial(n) for n in range(1, N + FIT_GUARD + 1)], axis=1)
    cond = float(np.linalg.cond(A))
    if cond > FIT_COND_MAX:
        warnings.warn(f"cumulant fit condition number {cond:.3g}", FitDegradedWarning, stacklevel=2)
    coef, *_ = np.linalg.lstsq(A, logm, rcond=None)
    kappa = tuple(float((coef[n - 1] / window**n).real) for n in range(1, N + 1))
    return CumulantTable(float(x), kappa, method, cond)


# ------------------------------------------------------------------- export

def export_wigner(Wg: WignerGrid, path, fmt_: str = "csv") -> Path:
    """Write ``x,p,w`` rows (row-major in x) after ``# key=value`` metadata, or an ``.npz`` archive."""
    path = Path(path)
    c = Wg.state.constants
    meta = {
        "x_min": Wg.grid_x.x_min, "x_max": Wg.grid_x.x_max, "n_x": Wg.grid_x.n,
        "p_min": Wg.grid_p.x_min, "p_max": Wg.grid_p.x_max, "n_p": Wg.grid_p.n,
        "hbar": c.hbar, "mass": c.mass,
    }
    if fmt_ == "npz":
        with path.open("wb") as fh:
            np.savez(fh, W=Wg.W, x=Wg.x, p=Wg.p, **{k: np.asarray(v) for k, v in meta.items()})
        return path
    if fmt_ != "csv":
        raise ConfigurationError(f"unknown Wigner export format {fmt_!r}")
    X, P = np.meshgrid(Wg.x, Wg.p, indexing="ij")
    return write_csv(
        path,
        {"x": X.ravel(), "p": P.ravel(), "w": Wg.W.ravel()},
        comments=[f"{k}={fmt(v)}" for k, v in meta.items()],
    )


def expectation_p(state: WavefunctionGrid, power: int) -> float:
    """Spectral ``<p**power>`` from the momentum-space wavefunction."""
    p, phi = momentum_space(state.psi, state.grid, state.constants.hbar)
    dp = p[1] - p[0]
    return float(np.sum(p**power * np.abs(phi) ** 2) * dp)
