import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make
from weakvar import states, wigner
from weakvar.errors import (
    ConfigurationError,
    DomainTooSmallError,
    FitDegradedWarning,
    NodeUndefinedError,
    RangeError,
)
from weakvar.numerics import Grid, momentum_space

G = Grid(-16, 16, 512)


@pytest.fixture(scope="module")
def coh_w(coherent):
    return wigner.wigner_transform(coherent)


@pytest.fixture(scope="module")
def cat_w(cat):
    return wigner.wigner_transform(cat)


def test_coherent_wigner_nonnegative_and_normalized(coh_w):
    assert coh_w.W.min() > -1e-9
    assert coh_w.total() == pytest.approx(1.0, abs=1e-6)
    assert coh_w.W.shape == (1024, 2048)
    assert coh_w.p[0] == pytest.approx(-np.pi / coh_w.grid_x.dx)


def test_boosted_gaussian_is_2d_gaussian():
    mu, sigma, p0 = 0.7, 1.1, -1.4
    s = make("gaussian_packet", G, sigma=sigma, mu=mu, p0=p0)
    Wg = wigner.wigner_transform(s)
    X, P = np.meshgrid(Wg.x, Wg.p, indexing="ij")
    ref = np.exp(-((X - mu) ** 2) / (2 * sigma**2) - 2 * sigma**2 * (P - p0) ** 2) / np.pi
    assert np.max(np.abs(Wg.W - ref)) < 1e-7


def test_cat_state_has_negative_fringes(cat_w):
    assert cat_w.W.min() < -1e-4


def test_marginals(coherent, coh_w):
    var = 0.5
    ref = np.exp(-((coherent.x - 0.5) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)
    assert np.max(np.abs(wigner.marginal_x(coh_w) - ref)) < 1e-7
    mp = wigner.marginal_p(coh_w)
    assert np.max(np.abs(mp - wigner.momentum_density(coherent, coh_w.p))) < 1e-6


def test_box_marginal():
    s = make("box_eigenstate", G, n=2, L=6.0, x0=-3.0)
    Wg = wigner.wigner_transform(s)
    inside = (s.x > -3) & (s.x < 3)
    ref = np.where(inside, np.sin(2 * np.pi * (s.x + 3) / 6.0) ** 2 / 3.0, 0.0)
    assert np.max(np.abs(wigner.marginal_x(Wg) - ref)) < 1e-6
    assert Wg.total() == pytest.approx(1.0, abs=1e-6)


def test_momentum_density_matches_fft_lattice(coherent):
    p, phi = momentum_space(coherent.psi, coherent.grid)
    np.testing.assert_allclose(wigner.momentum_density(coherent, p), np.abs(phi) ** 2, atol=1e-12)


def test_phase_space_averages(coherent, coh_w):
    assert coh_w.expectation(lambda x, p: p) == pytest.approx(wigner.expectation_p(coherent, 1), abs=1e-8)
    assert coh_w.expectation(lambda x, p: p**2) == pytest.approx(wigner.expectation_p(coherent, 2), abs=1e-8)


def test_undecayed_state_rejected():
    # a raw packet too wide for its grid bypasses build's check but not the transform's
    g = Grid(-4, 4, 64)
    s = states.WavefunctionGrid(g, np.exp(-g.x**2 / 8).astype(complex), states.PhysicalConstants())
    with pytest.raises(DomainTooSmallError):
        wigner.wigner_transform(s)


def test_conditional_slices(coh_w, cat_w):
    sl = wigner.conditional(coh_w, 1.25)
    assert sl.normalized and sl.integral() == pytest.approx(1.0, abs=1e-8)
    assert wigner.conditional_moment(sl, 0) == pytest.approx(1.0, abs=1e-8)
    assert wigner.conditional_moment(sl, 1) == pytest.approx(0.3, abs=1e-8)
    assert wigner.conditional_moment(sl, 2, central=True) == pytest.approx(0.5, rel=1e-5)
    ref = np.exp(-((sl.p - 0.3) ** 2)) / np.sqrt(np.pi)
    assert np.max(np.abs(sl.values - ref)) < 1e-6
    assert wigner.conditional(cat_w, 0.0).values.min() < 0


def test_static_ground_state_has_zero_mean_momentum():
    s = make("coherent_state", G, omega=1.0)
    sl = wigner.conditional(wigner.wigner_transform(s), -0.75)
    assert abs(wigner.conditional_moment(sl, 1)) < 1e-10


def test_conditional_errors(qho2):
    Wg = wigner.wigner_transform(make("qho_eigenstate", G, n=1, omega=1.0))
    with pytest.raises(NodeUndefinedError):
        wigner.conditional(Wg, 0.0)
    with pytest.raises(RangeError):
        wigner.conditional(Wg, 40.0)


def test_characteristic_function_examples(coherent):
    tau = np.linspace(-2, 2, 41)
    M = wigner.characteristic_function(coherent, 0.9, tau)
    assert M[20] == 1.0 + 0.0j
    s = make("gaussian_packet", G, sigma=1.0)
    M = wigner.characteristic_function(s, 0.4, tau)
    assert np.max(np.abs(M.imag)) < 1e-12
    np.testing.assert_allclose(M.real, np.exp(-(tau**2) / 8), atol=1e-12)
    k = 2 * np.pi / 32 * 4
    pw = make("plane_wave", G, k=k)
    M = wigner.characteristic_function(pw, 0.3, tau)
    np.testing.assert_allclose(M, np.exp(1j * k * tau), atol=1e-12)
    with pytest.raises(RangeError):
        wigner.characteristic_function(coherent, 0.0, np.array([0.0, 100.0]))


def test_cumulants_boosted_gaussian():
    s = make("gaussian_packet", G, sigma=0.8, mu=0.3, p0=1.7)
    for method in ("formula", "characteristic_function"):
        k = wigner.conditional_cumulants(s, 1.0, 4, method).kappa
        np.testing.assert_allclose(k, [1.7, 1 / (4 * 0.64), 0.0, 0.0], atol=1e-5)


def test_cumulants_coherent_kappa2(coherent):
    for method in ("formula", "characteristic_function"):
        t = wigner.conditional_cumulants(coherent, -0.4, 2, method)
        assert t[2] == pytest.approx(0.5, rel=1e-5)
        assert t.method == method


def test_cumulants_plane_wave():
    k = 2 * np.pi / 32 * 3
    pw = make("plane_wave", G, k=k)
    t = wigner.conditional_cumulants(pw, 0.0, 4)
    np.testing.assert_allclose(t.kappa, [k, 0, 0, 0], atol=1e-10)


def test_cumulant_odd_orders_from_phase():
    # chirped packet: S = c x^3 / 3, so kappa_3 = -(hbar^3/4) S''' = -c/2
    g = Grid(-12, 12, 512)
    c = 0.05
    psi = np.exp(-g.x**2 / 2 + 1j * c * g.x**3 / 3)
    s = states.WavefunctionGrid(g, psi, states.PhysicalConstants())
    t = wigner.conditional_cumulants(s, 0.5, 4)
    assert t[1] == pytest.approx(c * 0.25, abs=1e-10)
    assert t[3] == pytest.approx(-c / 2, abs=1e-10)
    f = wigner.conditional_cumulants(s, 0.5, 4, "characteristic_function")
    np.testing.assert_allclose(f.kappa, t.kappa, atol=1e-6)


def test_cumulant_errors(coherent):
    with pytest.raises(ConfigurationError):
        wigner.conditional_cumulants(coherent, 0.0, 5, "formula")
    with pytest.raises(ConfigurationError):
        wigner.conditional_cumulants(coherent, 0.0, 7, "characteristic_function")
    with pytest.raises(ConfigurationError):
        wigner.conditional_cumulants(coherent, 0.0, 2, "moments")
    with pytest.raises(NodeUndefinedError):
        wigner.conditional_cumulants(make("qho_eigenstate", G, n=1, omega=1.0), 0.0, 2)


def test_ill_conditioned_fit_warns(coherent):
    with pytest.warns(FitDegradedWarning):
        wigner.conditional_cumulants(coherent, 0.0, 6, "characteristic_function", points=7)


def test_log_derivatives_does_not_mutate_input():
    a = [np.array([1.0]), np.array([2.0]), np.array([3.0])]
    out = wigner.log_derivatives(a)
    assert [v[0] for v in a] == [1.0, 2.0, 3.0]
    # f = exp(x) * (1 + x) at x = 0: f'/f = 2, f''/f = 3, f'''/f = 4
    out = wigner.log_derivatives([2.0, 3.0, 4.0])
    assert out == pytest.approx([2.0, -1.0, 2.0])


def test_export_formats(tmp_path):
    s = make("coherent_state", Grid(-8, 8, 64), omega=1.0)
    Wg = wigner.wigner_transform(s)
    path = wigner.export_wigner(Wg, tmp_path / "w.csv")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ") and "x,p,w" in lines
    assert len(lines) == lines.index("x,p,w") + 1 + 64 * 128
    npz = np.load(wigner.export_wigner(Wg, tmp_path / "w.npz", "npz"))
    np.testing.assert_array_equal(npz["W"], Wg.W)
    with pytest.raises(ConfigurationError):
        wigner.export_wigner(Wg, tmp_path / "w.h5", "hdf5")


@settings(max_examples=15, deadline=None)
@given(mu=st.floats(-2, 2), p0=st.floats(-2, 2), sigma=st.floats(0.6, 1.4))
def test_gaussian_wigner_properties(mu, p0, sigma):
    s = make("gaussian_packet", G, sigma=sigma, mu=mu, p0=p0)
    Wg = wigner.wigner_transform(s)
    assert Wg.W.min() > -1e-6
    assert np.max(np.abs(wigner.marginal_x(Wg) - s.rho)) < 1e-6
    assert Wg.expectation(lambda x, p: p) == pytest.approx(p0, abs=1e-8)


@settings(max_examples=15, deadline=None)
@given(x=st.floats(-2.5, 2.5), n=st.integers(0, 3))
def test_cumulant_route_equivalence_qho(x, n):
    s = make("qho_eigenstate", G, n=n, omega=1.0)
    try:
        f = wigner.conditional_cumulants(s, x, 4, "formula")
    except NodeUndefinedError:
        return
    if s.rho[G.index_of(x)] < 1e-3 * s.rho.max():
        return
    c = wigner.conditional_cumulants(s, x, 4, "characteristic_function")
    for a, b in zip(f.kappa, c.kappa):
        assert abs(a - b) < 1e-4 * max(1.0, abs(a))
