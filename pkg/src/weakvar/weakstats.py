"""Weak values, weak variance by three routes, and the fields derived from them.

Route A differentiates the density, ``V = -(hbar^2/4) d^2 ln rho``.
Route B takes the second central moment of the conditional Wigner slice.
Route C combines the weak values of ``p`` and ``p^2``.

All fields are NaN on the node mask. Derived quantities that divide by the
density (the imaginary weak value, ``Q``, route A) are assembled from the same
density derivatives, so the algebraic identities between them hold to
roundoff; the routes themselves are numerically independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, NodeUndefinedError
from .io import write_csv
from .numerics import derivative, integrate
from .states import PhysicalConstants, PolarFields, WavefunctionGrid, polar_decompose
from .wigner import WignerGrid, conditional, log_derivatives, wigner_transform

__all__ = [
    "WeakMomentumField",
    "WeakFieldSet",
    "VarianceBudget",
    "NodeFit",
    "SIGN_CLASSES",
    "RESOLVE_FLOOR",
    "weak_momentum",
    "combine_with_eta",
    "density_derivatives",
    "log_density_derivatives",
    "tail_region",
    "weak_variance_logdensity",
    "weak_variance_conditional",
    "weak_variance_weakvalues",
    "quantum_potential",
    "riccati_residual",
    "fisher_information",
    "variance_budget",
    "thermo_fields",
    "node_fits",
    "sign_classification",
    "zero_tolerance",
    "pseudo_stddevs",
    "resolved_region",
    "analyze",
    "export_fields",
]

SIGN_CLASSES = ("positive", "negative", "zero_band", "node_divergent")
#: Relative density below which quotient fields are dominated by FFT roundoff.
RESOLVE_FLOOR = 1e-6
TOL_ZERO_REL = 1e-6
NODE_FIT_POINTS = 5


def _masked(values, mask):
    out = np.array(values, dtype=float)
    out[mask] = np.nan
    out.flags.writeable = False
    return out


def resolved_region(polar: PolarFields, floor: float = RESOLVE_FLOOR) -> np.ndarray:
    """Off-mask points with ``rho >= floor * max(rho)``.

    Below roughly ``1e-7 max(rho)`` quotients such as ``psi''/psi`` carry FFT
    roundoff amplified by ``1/rho``; comparisons between routes are made here.
    """
    return ~polar.node_mask & (polar.rho >= floor * polar.rho.max())


def tail_region(polar: PolarFields, floor: float = RESOLVE_FLOOR) -> np.ndarray:
    """Points outside the span of the resolved region (the decaying tails)."""
    idx = np.flatnonzero(polar.rho >= floor * polar.rho.max())
    tail = np.ones(polar.grid.n, dtype=bool)
    tail[idx[0]:idx[-1] + 1] = False
    return tail


def density_derivatives(polar: PolarFields, orders=(1, 2)) -> dict:
    """Derivatives of ``rho`` with the state's differentiation scheme."""
    st = polar.state
    return {k: st.diff(polar.rho, k) for k in orders}


def log_density_derivatives(polar: PolarFields, top: int = 2, floor: float = RESOLVE_FLOOR) -> dict:
    """``{k: d^k ln rho / dx^k}`` for k = 1..top, unmasked.

    In the core the log-derivatives come from derivatives of ``rho`` divided
    by ``rho`` (accurate through nodes). In the decaying tails, where that
    quotient amplifies roundoff, ``ln rho`` itself is differentiated with fd4
    stencils, which keeps relative accuracy however small ``rho`` gets.
    """
    st = polar.state
    rho = polar.rho
    d = density_derivatives(polar, tuple(range(1, top + 1)))
    safe = np.where(rho > 0, rho, 1.0)
    # quotients overflow only where rho has underflowed; those samples are masked
    with np.errstate(invalid="ignore", over="ignore"):
        ratios = [d[k] / safe for k in range(1, top + 1)]
        logs = log_derivatives(ratios)
    tail = tail_region(polar, floor)
    if tail.any():
        with np.errstate(divide="ignore", invalid="ignore"):
            lnrho = np.log(np.where(rho > 0, rho, np.nan))
            for k in range(1, top + 1):
                lk = derivative(np.nan_to_num(lnrho, nan=0.0), st.grid, k, "fd4")
                # stencils that touch an underflowed sample are unusable
                bad = derivative(np.isnan(lnrho).astype(float), st.grid, k, "fd4") != 0
                lk[bad | np.isnan(lnrho)] = np.nan
                logs[k - 1] = np.where(tail & np.isfinite(lk), lk, logs[k - 1])
    return {k: logs[k - 1] for k in range(1, top + 1)}


# ------------------------------------------------------------- weak momentum

@dataclass(frozen=True, eq=False)
class WeakMomentumField:
    """Real and imaginary parts of the weak value of momentum.

    ``re = hbar dS/dx`` and ``im = -(hbar/2) rho'/rho``; ``d_im`` is the
    gradient of ``im``.
    """

    re: np.ndarray
    im: np.ndarray
    d_im: np.ndarray
    node_mask: np.ndarray


def weak_momentum(polar: PolarFields, logs: dict | None = None) -> WeakMomentumField:
    """Weak value of momentum postselected on position.

    The phase gradient is taken as ``Im(psi'/psi)``, identical to the
    derivative of the unwrapped phase but free of the pi jumps a real
    wavefunction carries across its nodes.
    """
    st = polar.state
    hbar = st.constants.hbar
    mask = polar.node_mask
    safe = np.where(mask, 1.0, polar.rho)
    re = hbar * np.imag(np.conj(st.psi) * st.d(1)) / safe
    L = logs or log_density_derivatives(polar)
    return WeakMomentumField(
        _masked(re, mask), _masked(-0.5 * hbar * L[1], mask), _masked(-0.5 * hbar * L[2], mask), mask
    )


def combine_with_eta(wm: WeakMomentumField, eta: float) -> np.ndarray:
    """``re + eta * im``: the combination a meter with coupling ratio ``eta`` reports."""
    eta = float(eta)
    if not math.isfinite(eta):
        raise ConfigurationError(f"eta must be finite, got {eta}")
    if eta == 0.0:
        return wm.re.copy()
    return wm.re + eta * wm.im


# ------------------------------------------------------------ weak variance

def weak_variance_logdensity(polar: PolarFields, logs: dict | None = None) -> np.ndarray:
    """Route A: ``-(hbar^2/4) d^2/dx^2 ln rho``."""
    L = logs or log_density_derivatives(polar)
    return _masked(-0.25 * polar.constants.hbar**2 * L[2], polar.node_mask)


def weak_variance_conditional(Wg: WignerGrid, polar: PolarFields | None = None) -> np.ndarray:
    """Route B: second central moment of ``W(p|x)`` at every grid point."""
    polar = polar or polar_decompose(Wg.state)
    mask = polar.node_mask
    rho = np.where(mask, 1.0, polar.rho)
    p = Wg.p
    m0 = np.where(mask, 1.0, Wg.W.sum(axis=1) * Wg.dp / rho)
    m1 = (Wg.W @ p) * Wg.dp / rho
    m2 = (Wg.W @ (p * p)) * Wg.dp / rho
    # the slice is normalized by rho(x); m0 differs from 1 only by roundoff
    return _masked(m2 - m1 * m1 / m0, mask)


def weak_variance_weakvalues(polar: PolarFields) -> np.ndarray:
    """Route C: ``(Re <p^2>_w - Re(<p>_w^2)) / 2`` from psi', psi''."""
    st = polar.state
    hbar = st.constants.hbar
    psi = np.where(polar.node_mask, 1.0, st.psi)
    a1 = st.d(1) / psi
    a2 = st.d(2) / psi
    p2_weak = -(hbar**2) * a2.real
    pw = -1j * hbar * a1
    return _masked(0.5 * (p2_weak - (pw * pw).real), polar.node_mask)


def quantum_potential(polar: PolarFields, logs: dict | None = None) -> np.ndarray:
    """``Q = -(hbar^2/2m) R''/R`` with ``R''/R = (ln rho)''/2 + ((ln rho)')^2/4``.

    Working from ``rho`` rather than ``R`` keeps the field smooth across the
    sign changes of a real wavefunction, where ``|psi|`` has a kink.
    """
    c = polar.constants
    L = logs or log_density_derivatives(polar)
    with np.errstate(invalid="ignore", over="ignore"):
        r2 = 0.5 * L[2] + 0.25 * L[1] ** 2
    return _masked(-(c.hbar**2) / (2.0 * c.mass) * r2, polar.node_mask)


def riccati_residual(wm: WeakMomentumField, Q: np.ndarray, constants: PhysicalConstants) -> np.ndarray:
    """``d(im)/dx - im^2/hbar - (2m/hbar) Q``; vanishes for any state."""
    hbar, m = constants.hbar, constants.mass
    return wm.d_im - wm.im**2 / hbar - 2.0 * m / hbar * Q


# ------------------------------------------------------------------- budget

@dataclass(frozen=True)
class VarianceBudget:
    """Law of total variance for momentum postselected on position."""

    total: float
    mean_weak: float
    var_of_weak_value: float
    fisher_form: float
    mean_p: float

    @property
    def residual(self) -> float:
        return self.total - self.mean_weak - self.var_of_weak_value

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "mean_weak": self.mean_weak,
            "var_of_weak_value": self.var_of_weak_value,
            "fisher_form": self.fisher_form,
            "mean_p": self.mean_p,
            "residual": self.residual,
        }


def _budget_integrands(polar: PolarFields, logs: dict):
    """``rho V`` (route A) and ``rho'^2/rho`` with nodal limits below ``eps_node``.

    Where the density has underflowed the quotients are replaced by their
    limits at a node ``R ~ |x - x0|^k``: ``rho'^2/rho -> 2 rho''`` and
    ``rho V -> (hbar^2/4) rho''``, i.e. ``hbar^2 |psi'|^2 / 2`` for k = 1 and zero
    for k > 1, so eigenstate nodes contribute their finite share instead of
    being dropped.
    """
    hbar = polar.constants.hbar
    rho = polar.rho
    under = rho < polar.eps_node
    d2 = polar.state.diff(rho, 2)
    with np.errstate(invalid="ignore", over="ignore"):
        rhoV = np.where(under, 0.25 * hbar**2 * d2, -0.25 * hbar**2 * rho * logs[2])
        fisher = np.where(under, 2.0 * d2, rho * logs[1] ** 2)
    return rhoV, fisher, under


def fisher_information(polar: PolarFields, logs: dict | None = None) -> float:
    """``int rho'^2 / rho dx``."""
    _, fisher, _ = _budget_integrands(polar, logs or log_density_derivatives(polar))
    return integrate(fisher * polar.state.quadrature_weights(), polar.grid)


def variance_budget(polar: PolarFields, logs: dict | None = None) -> VarianceBudget:
    """Split the momentum variance into mean weak variance and variance of the weak value.

    ``total`` is the spectral variance ``hbar^2 int |psi'|^2 - <p>^2``,
    ``mean_weak`` integrates ``rho V`` with route A, and
    ``var_of_weak_value`` integrates ``rho (p~ - <p>)^2``.
    """
    st = polar.state
    hbar = st.constants.hbar
    g = st.grid
    L = logs or log_density_derivatives(polar)
    rhoV, fisher, under = _budget_integrands(polar, L)
    w = st.quadrature_weights()
    rhoV, fisher = rhoV * w, fisher * w
    dpsi = st.d(1)
    flux = np.imag(np.conj(st.psi) * dpsi)
    mean_p = hbar * integrate(flux, g)
    total = hbar**2 * integrate(w * np.abs(dpsi) ** 2, g) - mean_p**2
    safe = np.where(under, 1.0, polar.rho)
    var_w = integrate(np.where(under, 0.0, polar.rho * (hbar * flux / safe - mean_p) ** 2), g)
    return VarianceBudget(
        float(total), float(integrate(rhoV, g)), float(var_w), float(0.25 * hbar**2 * integrate(fisher, g)), float(mean_p)
    )


# --------------------------------------------------------------- thermo, sign

def thermo_fields(rho: np.ndarray, V: np.ndarray, constants: PhysicalConstants):
    """``(k_B T, P)`` with ``k_B T = V/m`` and ``P = rho V / m``."""
    kT = V / constants.mass
    return kT, rho * kT


@dataclass(frozen=True)
class NodeFit:
    """Local power law ``R ~ |x - x0|^k`` at an interior node.

    ``coefficient`` is ``k hbar^2 / 2`` so that ``V ~ coefficient / (x - x0)^2``.
    """

    x0: float
    k: float
    coefficient: float
    left: tuple
    right: tuple

    def asymptote(self, x):
        return self.coefficient / (np.asarray(x) - self.x0) ** 2


def node_fits(polar: PolarFields, points: int = NODE_FIT_POINTS) -> list:
    """Fit the node exponent by log-log regression of R on the nearest off-mask points each side."""
    hbar = polar.constants.hbar
    x = polar.grid.x
    mask = polar.node_mask
    good = np.flatnonzero(~mask)
    fits = []
    for x0 in polar.nodes:
        left = good[x[good] < x0][-points:]
        right = good[x[good] > x0][:points]
        if left.size < 2 or right.size < 2:
            continue
        idx = np.concatenate((left, right))
        dist = np.abs(x[idx] - x0)
        k, _ = np.polyfit(np.log(dist), np.log(polar.R[idx]), 1)
        fits.append(NodeFit(float(x0), float(k), float(k * hbar**2 / 2.0), tuple(x[left]), tuple(x[right])))
    return fits


def zero_tolerance(polar: PolarFields, V: np.ndarray, rel: float = TOL_ZERO_REL, floor: float = RESOLVE_FLOOR) -> float:
    """``rel * max|V|`` over the resolved region."""
    region = resolved_region(polar, floor)
    vals = np.abs(V[region])
    return rel * float(vals.max()) if vals.size else 0.0


def sign_classification(polar: PolarFields, V: np.ndarray, tol_zero: float | None = None) -> np.ndarray:
    """Per-point class from :data:`SIGN_CLASSES`.

    Masked points are ``node_divergent``: the weak variance there is
    ``+inf`` at a true node and unresolvable where the density underflows.
    """
    if tol_zero is None:
        tol_zero = zero_tolerance(polar, V)
    cls = np.full(polar.grid.n, "zero_band", dtype="<U14")
    with np.errstate(invalid="ignore"):
        cls[V > tol_zero] = "positive"
        cls[V < -tol_zero] = "negative"
    cls[polar.node_mask] = "node_divergent"
    return cls


def pseudo_stddevs(Wg: WignerGrid, x: float, wm: WeakMomentumField, eps_node: float | None = None):
    """``(sigma1, sigma2, abs_norm)`` at the grid point nearest ``x``.

    ``sigma1 = sqrt|V_B|``; ``sigma2`` integrates ``|W(p|x)| (p - p~)^2``;
    ``abs_norm = int |W(p|x)| dp`` exceeds one exactly when the slice goes negative.
    """
    sl = conditional(Wg, x, eps_node)
    j = Wg.grid_x.index_of(x)
    if wm.node_mask[j]:
        raise NodeUndefinedError(f"x = {x!r} is on the node mask")
    p = sl.p
    m1 = float(np.sum(p * sl.values) * sl.dp)
    v_b = float(np.sum((p - m1) ** 2 * sl.values) * sl.dp)
    absw = np.abs(sl.values)
    sigma2 = math.sqrt(float(np.sum(absw * (p - wm.re[j]) ** 2) * sl.dp))
    return math.sqrt(abs(v_b)), sigma2, float(absw.sum() * sl.dp)


# ------------------------------------------------------------------ analysis

@dataclass(frozen=True, eq=False)
class WeakFieldSet:
    polar: PolarFields
    weak_momentum: WeakMomentumField
    V_logrho: np.ndarray
    V_conditional: np.ndarray | None
    V_weakvalues: np.ndarray
    Q: np.ndarray
    kT: np.ndarray
    P: np.ndarray
    riccati_residual: np.ndarray
    sign_class: np.ndarray
    tol_zero: float
    budget: VarianceBudget
    wigner: WignerGrid | None = None
    nodes: list = field(default_factory=list)

    @property
    def state(self) -> WavefunctionGrid:
        return self.polar.state

    @property
    def x(self):
        return self.polar.grid.x

    def sign_histogram(self) -> dict:
        return {c: int(np.sum(self.sign_class == c)) for c in SIGN_CLASSES}


def analyze(
    state: WavefunctionGrid,
    eps_node: float | None = None,
    with_wigner: bool = True,
    tol_zero: float | None = None,
) -> WeakFieldSet:
    """Every weak-statistics field of ``state``; route B needs the Wigner transform."""
    polar = polar_decompose(state, eps_node)
    logs = log_density_derivatives(polar)
    wm = weak_momentum(polar, logs)
    VA = weak_variance_logdensity(polar, logs)
    VC = weak_variance_weakvalues(polar)
    Wg = VB = None
    if with_wigner:
        Wg = wigner_transform(state)
        VB = weak_variance_conditional(Wg, polar)
    Q = quantum_potential(polar, logs)
    kT, P = thermo_fields(polar.rho, VA, state.constants)
    tol = zero_tolerance(polar, VA) if tol_zero is None else float(tol_zero)
    return WeakFieldSet(
        polar=polar,
        weak_momentum=wm,
        V_logrho=VA,
        V_conditional=VB,
        V_weakvalues=VC,
        Q=Q,
        kT=kT,
        P=P,
        riccati_residual=riccati_residual(wm, Q, state.constants),
        sign_class=sign_classification(polar, VA, tol),
        tol_zero=tol,
        budget=variance_budget(polar, logs),
        wigner=Wg,
        nodes=node_fits(polar),
    )


FIELD_COLUMNS = (
    "x", "rho", "S", "p_weak_re", "p_weak_im", "V_logrho", "V_conditional",
    "V_weakvalues", "Q", "kT", "P", "riccati_residual", "sign_class",
)


def field_columns(fs: WeakFieldSet) -> dict:
    n = fs.polar.grid.n
    nan = np.full(n, np.nan)
    return {
        "x": fs.x,
        "rho": fs.polar.rho,
        "S": fs.polar.S,
        "p_weak_re": fs.weak_momentum.re,
        "p_weak_im": fs.weak_momentum.im,
        "V_logrho": fs.V_logrho,
        "V_conditional": fs.V_conditional if fs.V_conditional is not None else nan,
        "V_weakvalues": fs.V_weakvalues,
        "Q": fs.Q,
        "kT": fs.kT,
        "P": fs.P,
        "riccati_residual": fs.riccati_residual,
        "sign_class": fs.sign_class,
    }


def export_fields(fs: WeakFieldSet, path, extra: dict | None = None, comments=()) -> Path:
    """Write the per-point field table; ``extra`` columns (e.g. ``t``) go first."""
    cols = field_columns(fs)
    if extra:
        cols = {**extra, **cols}
    c = fs.state.constants
    return write_csv(path, cols, comments=[f"hbar={c.hbar!r}", f"mass={c.mass!r}", *comments])
