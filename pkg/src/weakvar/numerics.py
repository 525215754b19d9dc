"""Uniform-grid calculus: differentiation, quadrature, Fourier tools, phase unwrapping.

Fields are plain NumPy arrays sampled on a :class:`Grid`. Samples sit at
``x_j = x_min + j*dx`` for ``j = 0..n-1``; ``x_max`` itself is excluded, so the
grid is also the natural periodic lattice used by the FFT routines.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import AmbiguousPhaseWarning, ConfigurationError

__all__ = [
    "Grid",
    "derivative",
    "integrate",
    "unwrap_phase",
    "fourier_interpolate",
    "trig_interpolate",
    "momentum_space",
    "fd_weights",
    "fd4_derivative",
    "is_power_of_two",
]

METHODS = ("spectral", "fd4")


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform 1-D lattice on ``[x_min, x_max)`` with ``n`` samples."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise ConfigurationError("grid bounds must be finite")
        if self.x_max <= self.x_min:
            raise ConfigurationError(f"x_max ({self.x_max}) must exceed x_min ({self.x_min})")
        if int(self.n) != self.n or self.n < 16:
            raise ConfigurationError(f"grid needs an integer n >= 16, got {self.n}")
        if not is_power_of_two(int(self.n)):
            raise ConfigurationError(f"grid size must be a power of two, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @classmethod
    def centered(cls, half_width: float, n: int, center: float = 0.0) -> "Grid":
        return cls(center - half_width, center + half_width, n)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def x(self) -> np.ndarray:
        x = self.x_min + np.arange(self.n) * self.dx
        x.flags.writeable = False
        return x

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, self.dx)

    def index_of(self, x: float) -> int:
        """Index of the sample nearest to ``x`` (clipped to the grid)."""
        j = int(np.rint((x - self.x_min) / self.dx))
        return min(max(j, 0), self.n - 1)

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.x_min) & (x <= self.x_max - self.dx)))


def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative on integer ``offsets``.

    Solves the moment conditions ``sum_j w_j s_j**m / m! = delta(m, order)``.
    Weights are per unit spacing; divide by ``dx**order``.
    """
    s = np.asarray(offsets, dtype=float)
    m = np.arange(s.size)
    A = s[None, :] ** m[:, None]
    b = np.zeros(s.size)
    b[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, b)


@lru_cache(maxsize=None)
def _fd4_stencils(order: int):
    half = (order + 1) // 2 + 1
    centered = fd_weights(range(-half, half + 1), order)
    width = max(2 * half + 1, order + 4)
    return half, centered, width


def _fd4(f: np.ndarray, dx: float, order: int) -> np.ndarray:
    n = f.size
    half, centered, width = _fd4_stencils(order)
    out = np.zeros_like(f)
    for j, w in enumerate(centered):
        out[half:n - half] += w * f[j:n - 2 * half + j]
    # one-sided closures keep fourth-order accuracy up to the boundary
    for i in list(range(half)) + list(range(n - half, n)):
        start = 0 if i < half else n - width
        w = fd_weights(np.arange(start, start + width) - i, order)
        out[i] = w @ f[start:start + width]
    return out / dx**order


def fd4_derivative(values, dx: float, order: int = 1) -> np.ndarray:
    """fd4 derivative of uniformly spaced samples of any length (at least the stencil width)."""
    values = np.asarray(values)
    _, _, width = _fd4_stencils(order)
    if values.size < width:
        raise ConfigurationError(f"need at least {width} samples for an order-{order} fd4 derivative")
    return _fd4(values, dx, order)


def _spectral(f: np.ndarray, grid: Grid, order: int) -> np.ndarray:
    n = f.size
    if np.isrealobj(f):
        k = 2.0 * np.pi * np.fft.rfftfreq(n, grid.dx)
        F = np.fft.rfft(f) * (1j * k) ** order
        if order % 2:
            F[-1] = 0.0
        return np.fft.irfft(F, n)
    k = grid.k
    F = np.fft.fft(f) * (1j * k) ** order
    if order % 2:
        F[n // 2] = 0.0
    return np.fft.ifft(F)


def _fd4_runs(f: np.ndarray, dx: float, order: int, support: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f)
    _, _, width = _fd4_stencils(order)
    edges = np.flatnonzero(np.diff(np.concatenate(([0], support.astype(np.int8), [0]))))
    for a, b in zip(edges[::2], edges[1::2]):
        if b - a >= width:
            out[a:b] = _fd4(f[a:b], dx, order)
    return out


def derivative(f, grid: Grid, order: int = 1, method: str = "spectral", support=None) -> np.ndarray:
    """``order``-th derivative of samples ``f`` on ``grid``.

    ``spectral`` treats ``f`` as periodic (or decaying at both ends) and is exact
    for band-limited data. ``fd4`` uses centered fourth-order stencils with
    fourth-order one-sided closures near the boundaries. Real input gives real
    output.

    ``support`` (fd4 only) is a boolean mask: each contiguous run is
    differentiated on its own with one-sided closures at its ends, so no stencil
    straddles a kink, and the derivative is zero outside. Runs shorter than the
    stencil are left at zero.
    """
    f = np.asarray(f)
    if f.shape != (grid.n,):
        raise ConfigurationError(f"field has shape {f.shape}, grid expects ({grid.n},)")
    if order not in (1, 2, 3, 4):
        raise ConfigurationError(f"derivative order must be 1..4, got {order}")
    if not np.issubdtype(f.dtype, np.complexfloating):
        f = f.astype(float)
    if method == "spectral":
        if not is_power_of_two(grid.n):
            raise ConfigurationError("spectral differentiation needs a power-of-two grid")
        return _spectral(f, grid, order)
    if method == "fd4":
        if support is not None:
            support = np.asarray(support, dtype=bool)
            if support.shape != f.shape:
                raise ConfigurationError("support mask must match the field shape")
            return _fd4_runs(f, grid.dx, order, support)
        return _fd4(f, grid.dx, order)
    raise ConfigurationError(f"unknown differentiation method {method!r}; use one of {METHODS}")


def integrate(f, grid: Grid) -> float:
    """Trapezoidal rule over the periodic lattice (``dx * sum``).

    For integrands that vanish at the ends, or are periodic, this is the
    trapezoidal rule and is spectrally accurate.
    """
    f = np.asarray(f)
    return float(np.sum(f) * grid.dx) if np.isrealobj(f) else complex(np.sum(f) * grid.dx)


def unwrap_phase(theta, anchor: int = 0) -> np.ndarray:
    """Remove 2*pi jumps so adjacent samples differ by at most pi.

    The result equals ``theta[anchor]`` at ``anchor``. A raw increment of
    exactly +-pi is ambiguous; it is kept as is (the smaller of the two
    candidate increments in absolute value is pi either way) and reported with
    :class:`AmbiguousPhaseWarning`.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size == 0:
        raise ConfigurationError("unwrap_phase expects a non-empty 1-D array")
    if not 0 <= anchor < theta.size:
        raise ConfigurationError(f"anchor {anchor} outside 0..{theta.size - 1}")
    d = np.diff(theta)
    step = d - 2.0 * np.pi * np.round(d / (2.0 * np.pi))
    tie = np.abs(np.abs(step) - np.pi) <= 1e-12
    if np.any(tie):
        step[tie] = np.copysign(np.pi, d[tie])
        warnings.warn(
            f"{int(tie.sum())} phase increment(s) of exactly pi; kept raw direction",
            AmbiguousPhaseWarning,
            stacklevel=2,
        )
    c = np.concatenate(([0.0], np.cumsum(step)))
    return theta[anchor] + (c - c[anchor])


def fourier_interpolate(values, grid: Grid, xq, order: int = 0, chunk: int = 512):
    """Evaluate the trigonometric interpolant of ``values`` (or its derivative) at ``xq``.

    The interpolant is periodic with period ``grid.length``; the Nyquist mode is
    split symmetrically so real data stays real.
    """
    return trig_interpolate(values, grid.x_min, grid.dx, xq, order=order, chunk=chunk)


def trig_interpolate(values, x_min: float, dx: float, xq, order: int = 0, chunk: int = 512):
    """:func:`fourier_interpolate` for uniform samples of any length."""
    values = np.asarray(values)
    xq = np.atleast_1d(np.asarray(xq, dtype=float))
    n = values.size
    F = np.fft.fft(values) / n
    k = 2.0 * np.pi * np.fft.fftfreq(n, dx)
    coef = F * (1j * k) ** order
    coef_nyq = 0.0
    if n % 2 == 0:
        nyq = n // 2
        k[nyq] = abs(k[nyq])
        # Nyquist term F_N cos(k_N x): differentiate the cosine, not the exponential
        coef_nyq = F[nyq] * (k[nyq] ** order)
        coef[nyq] = 0.0
    out = np.empty(xq.size, dtype=complex)
    for s in range(0, xq.size, chunk):
        t = xq[s:s + chunk, None] - x_min
        out[s:s + chunk] = np.exp(1j * t * k[None, :]) @ coef
        if n % 2 == 0:
            out[s:s + chunk] += coef_nyq * np.cos(k[n // 2] * t[:, 0] + order * np.pi / 2.0)
    if np.isrealobj(values):
        return out.real
    return out


def momentum_space(psi, grid: Grid, hbar: float = 1.0):
    """Continuous-normalized momentum wavefunction on the FFT lattice.

    Returns ``(p, phi)`` sorted by momentum, with ``p = hbar*k`` and
    ``sum |phi|^2 dp = sum |psi|^2 dx``.
    """
    psi = np.asarray(psi, dtype=complex)
    k = grid.k
    phi = np.fft.fft(psi) * np.exp(-1j * k * grid.x_min) * grid.dx / np.sqrt(2.0 * np.pi * hbar)
    order = np.argsort(k)
    return hbar * k[order], phi[order]
