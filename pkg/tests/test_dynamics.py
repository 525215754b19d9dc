import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make
from weakvar import dynamics, states, weakstats
from weakvar.errors import ConfigurationError, InstabilityError
from weakvar.numerics import Grid

G = Grid(-16, 16, 512)
PERIOD = 2 * np.pi


@pytest.fixture(scope="module")
def oscillation():
    s = make("coherent_state", G, omega=1.0, x_mean=1.0)
    cfg = dynamics.EvolutionConfig(dynamics.harmonic_potential(G, 1.0), PERIOD / 4000, 12000, 40)
    return s, cfg, dynamics.evolve(s, cfg)


@pytest.fixture(scope="module")
def free_packet():
    g = Grid(-40, 40, 1024)
    s = make("gaussian_packet", g, sigma=1.0, p0=0.5)
    cfg = dynamics.EvolutionConfig(dynamics.free_potential(g), 0.0025, 4000, 100)
    return s, dynamics.evolve(s, cfg)


def test_potentials():
    np.testing.assert_array_equal(dynamics.free_potential(G), 0.0)
    V = dynamics.harmonic_potential(G, 2.0, mass=1.5, center=1.0)
    assert V[G.index_of(1.0)] == 0.0
    assert V[G.index_of(2.0)] == pytest.approx(0.5 * 1.5 * 4.0)
    B = dynamics.barrier_potential(G, 3.0, 1.0)
    assert B.max() == 3.0 and B[0] == 0.0


def test_config_validation():
    with pytest.raises(ConfigurationError):
        dynamics.EvolutionConfig(np.zeros(G.n), -0.1, 10)
    with pytest.raises(ConfigurationError):
        dynamics.EvolutionConfig(np.zeros(G.n), 0.1, 0)
    with pytest.raises(ConfigurationError):
        dynamics.EvolutionConfig(np.full(G.n, np.nan), 0.1, 1)


def test_step_bounds_named():
    s = make("coherent_state", G, omega=1.0)
    kinetic = dynamics.EvolutionConfig(np.zeros(G.n), 0.01, 10)
    with pytest.raises(InstabilityError, match="kinetic"):
        dynamics.evolve(s, kinetic)
    steep = dynamics.EvolutionConfig(np.full(G.n, 2000.0), 0.002, 10)
    with pytest.raises(InstabilityError, match="potential"):
        dynamics.evolve(s, steep)


def test_coherent_state_follows_classical_orbit(oscillation):
    s, cfg, snaps = oscillation
    assert len(snaps) == 12000 // 40 + 1
    err = max(abs(dynamics.position_moments(sn.state)[0] - math.cos(sn.t)) for sn in snaps)
    assert err < 1e-5
    e0 = dynamics.energy(s, cfg.potential)
    assert e0 == pytest.approx(0.5 + 0.5, rel=1e-10)
    assert max(abs(dynamics.energy(sn.state, cfg.potential) - e0) for sn in snaps) / e0 < 1e-6
    assert all(abs(np.sum(sn.state.rho) * G.dx - 1) < 1e-8 for sn in snaps)


def test_coherent_trajectory_matches_classical_path(oscillation):
    _, _, snaps = oscillation
    traj = dynamics.hydrodynamic_trajectories(snaps, [1.0])
    assert traj.stopped[0] == -1
    assert np.max(np.abs(traj.x[0] - np.cos(traj.t))) < 1e-4
    np.testing.assert_allclose(traj.velocity[0], -np.sin(traj.t), atol=1e-4)


def test_free_spreading(free_packet):
    _, snaps = free_packet
    for sn in snaps:
        var = dynamics.position_moments(sn.state)[1]
        assert var == pytest.approx(1.0 + (sn.t / 2) ** 2, rel=1e-5)


def test_free_momentum_conserved():
    g = Grid(-80, 80, 1024)
    s = make("gaussian_packet", g, sigma=8.0, p0=1.0)
    snaps = dynamics.evolve(s, dynamics.EvolutionConfig(dynamics.free_potential(g), 0.01, 1000, 250))
    from weakvar.wigner import expectation_p

    assert max(abs(expectation_p(sn.state, 1) - 1.0) for sn in snaps) < 1e-8


def test_free_seed_at_center_is_static():
    g = Grid(-40, 40, 1024)
    s = make("gaussian_packet", g, sigma=1.0)
    # the velocity is interpolated cubically in time, so the snapshot cadence sets the accuracy
    snaps = dynamics.evolve(s, dynamics.EvolutionConfig(dynamics.free_potential(g), 0.0025, 2000, 25))
    traj = dynamics.hydrodynamic_trajectories(snaps, [0.0, -1.0, 1.0])
    assert np.max(np.abs(traj.x[0])) < 1e-10
    # Gaussian hydrodynamics is self-similar: x(t) = x0 sigma(t) / sigma(0)
    np.testing.assert_allclose(traj.x[2], np.sqrt(1 + (traj.t / 2) ** 2), rtol=1e-6)
    np.testing.assert_allclose(traj.x[1], -traj.x[2], atol=1e-9)
    assert traj.crossings() == 0


def test_interseed_mass_conserved(free_packet):
    _, snaps = free_packet
    traj = dynamics.hydrodynamic_trajectories(snaps)
    assert traj.seeds.size == 16
    m = dynamics.interseed_mass(snaps, traj)
    np.testing.assert_allclose(m[:, 0], 1 / 16, atol=1e-12)
    assert np.max(np.abs(m - m[:, :1])) < 1e-3


def test_seed_on_node_rejected():
    s = make("qho_eigenstate", G, n=1, omega=1.0)
    snaps = dynamics.evolve(s, dynamics.EvolutionConfig(dynamics.harmonic_potential(G, 1.0), 0.001, 4, 2))
    with pytest.raises(ConfigurationError):
        dynamics.hydrodynamic_trajectories(snaps, [0.0])
    with pytest.raises(ConfigurationError):
        dynamics.hydrodynamic_trajectories(snaps[:1])


def test_trajectory_export(tmp_path, oscillation):
    _, _, snaps = oscillation
    traj = dynamics.hydrodynamic_trajectories(snaps[:5], [0.5, 1.5])
    lines = dynamics.export_trajectories(traj, tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "seed_id,t,x,velocity"
    assert len(lines) == 1 + 2 * 5
    assert lines[1].startswith("0,0,0.5,")


# ------------------------------------------------------------- classical limit

def test_gaussian_el_residual_closed_form():
    s = make("gaussian_packet", G, sigma=1.2, mu=0.3)
    pol = states.polar_decompose(s)
    rep = dynamics.classical_limit_report(pol, weakstats.weak_variance_logdensity(pol))
    r = weakstats.resolved_region(pol)
    ref = -1 / 1.44 + (s.x - 0.3) ** 2 / (2 * 1.2**4)
    assert np.max(np.abs(rep.el_residual[r] - ref[r])) < 1e-6
    assert rep.J == pytest.approx(1 / (4 * 1.44), rel=1e-10)
    assert rep.J == pytest.approx(rep.fisher_form, abs=1e-10)


def test_extremal_density_family():
    # rho ~ (x + c)^2 solves the Euler-Lagrange equation; psi is linear on a window
    g = Grid(0.0, 4.0, 256)
    s = states.WavefunctionGrid(g, (g.x + 0.5).astype(complex), states.PhysicalConstants(), method="fd4")
    pol = states.polar_decompose(s)
    res = dynamics.euler_lagrange_residual(pol)
    assert np.max(np.abs(res)) < 1e-8


def test_exponential_segment_is_semiclassical():
    g = Grid(-16, 16, 4096)
    s = make("exponential_segment", g, a=1.0, L=4.0, x0=-2.0)
    pol = states.polar_decompose(s)
    rep = dynamics.classical_limit_report(pol, weakstats.weak_variance_logdensity(pol))
    inner = (s.x >= -2 + 3 * g.dx) & (s.x <= 2 - 3 * g.dx)
    assert rep.semiclassical_fraction(inner) == 1.0
    assert not rep.semiclassical_mask[g.index_of(-6.0)]


def test_quantum_force_examples():
    pw = states.polar_decompose(make("plane_wave", G, k=2 * np.pi / 32 * 3))
    Q = weakstats.quantum_potential(pw)
    assert np.max(np.abs(dynamics.quantum_force(Q, G))) < 1e-10
    pol = states.polar_decompose(make("gaussian_packet", G, sigma=1.0, mu=0.5))
    dQ = dynamics.quantum_force_from_density(pol)
    j = np.array([G.index_of(v) for v in (0.0, 0.5, 1.25)])
    # Q = 1/4 - (x - mu)^2 / 8  =>  dQ/dx = -(x - mu)/4
    np.testing.assert_allclose(dQ[j], -(G.x[j] - 0.5) / 4, atol=1e-8)
    fd = dynamics.quantum_force(weakstats.quantum_potential(pol), G)
    np.testing.assert_allclose(fd[j], dQ[j], atol=1e-6)


@settings(max_examples=15, deadline=None)
@given(tz=st.floats(1e-8, 1e-2), tf=st.floats(1e-8, 1e-2), scale=st.floats(1.0, 10.0))
def test_semiclassical_mask_definition_and_monotonicity(tz, tf, scale):
    s = make("exponential_segment", Grid(-16, 16, 1024), a=1.0, L=4.0, x0=-2.0)
    pol = states.polar_decompose(s)
    V = weakstats.weak_variance_logdensity(pol)
    small = dynamics.classical_limit_report(pol, V, tol_zero=tz, tol_force=tf)
    big = dynamics.classical_limit_report(pol, V, tol_zero=tz * scale, tol_force=tf * scale)
    with np.errstate(invalid="ignore"):
        expected = (np.abs(V) <= tz) & (np.abs(small.quantum_force) <= tf) & ~pol.node_mask
    np.testing.assert_array_equal(small.semiclassical_mask, expected)
    assert np.all(big.semiclassical_mask[small.semiclassical_mask])


@settings(max_examples=6, deadline=None)
@given(x0=st.floats(-2, 2), p0=st.floats(-1, 1))
def test_evolution_snapshots_keep_static_identities(x0, p0):
    s = make("coherent_state", G, omega=1.0, x_mean=x0, p_mean=p0)
    cfg = dynamics.EvolutionConfig(dynamics.harmonic_potential(G, 1.5), 0.002, 300, 100)
    for sn in dynamics.evolve(s, cfg):
        fs = weakstats.analyze(sn.state, with_wigner=False)
        r = weakstats.resolved_region(fs.polar)
        assert abs(fs.budget.residual) < 1e-6
        assert np.max(np.abs(fs.riccati_residual[r])) < 1e-6
        assert np.max(np.abs(fs.V_logrho[r] - fs.V_weakvalues[r]) / np.maximum(1, np.abs(fs.V_logrho[r]))) < 1e-4
