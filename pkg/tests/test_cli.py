import json

import numpy as np
import pytest

from weakvar import cli, states
from weakvar.numerics import Grid

COHERENT = {
    "model": {"kind": "coherent_state", "omega": 1.0, "x_mean": 0.5, "p_mean": 0.3},
    "grid": {"x_min": -16, "x_max": 16, "n": 512},
    "constants": {"hbar": 1.0, "mass": 1.0},
}


def run(tmp_path, command, doc, *extra, name="run"):
    cfg = tmp_path / f"{name}.json"
    cfg.write_text(json.dumps(doc))
    out = tmp_path / "out" / name
    code = cli.main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def load(path):
    return json.loads(path.read_text())


def test_analyze_writes_fields_and_summary(tmp_path):
    code, out = run(tmp_path, "analyze", COHERENT)
    assert code == 0
    header = [l for l in open(f"{out}_fields.csv") if not l.startswith("#")][0].strip()
    assert header.startswith("x,rho,S,p_weak_re")
    summary = load(type(out)(f"{out}_summary.json"))
    assert abs(summary["budget"]["residual"]) < 1e-6
    assert summary["V_logrho"]["max"] == pytest.approx(0.5, rel=1e-6)
    assert set(summary["sign_histogram"]) == {"positive", "negative", "zero_band", "node_divergent"}
    assert load(type(out)(f"{out}_config.json")) == COHERENT


def test_analyze_json_format(tmp_path):
    code, out = run(tmp_path, "analyze", {**COHERENT, "format": "json", "wigner": False})
    assert code == 0
    fields = load(type(out)(f"{out}_fields.json"))
    assert len(fields["x"]) == 512
    assert all(v is None for v in fields["V_conditional"])


def test_analyze_cat_has_negative_band(tmp_path):
    doc = {"model": {"kind": "two_gaussian_superposition", "separation": 6.0, "sigma": 1.0}, "grid": {"x_min": -16, "x_max": 16, "n": 512}}
    code, out = run(tmp_path, "analyze", doc)
    assert code == 0
    assert load(type(out)(f"{out}_summary.json"))["sign_histogram"]["negative"] > 0


def test_missing_model_is_usage_error(tmp_path, capsys):
    code, _ = run(tmp_path, "analyze", {"grid": COHERENT["grid"]})
    assert code == 2
    err = capsys.readouterr().err
    assert "usage: weakvar" in err and "model" in err


@pytest.mark.parametrize(
    "doc, extra",
    [
        ({**COHERENT, "grid": {"x_min": -16, "x_max": 16}}, ()),
        ({**COHERENT, "tolerances": {"route": -1}}, ()),
        ({**COHERENT, "tolerances": {"speed": 1}}, ()),
        ({**COHERENT, "format": "xml"}, ()),
        ({**COHERENT, "model": {"kind": "qho_eigenstate", "n": -2, "omega": 1}}, ()),
        (COHERENT, ("--set", "novalue")),
    ],
)
def test_configuration_errors_exit_2(tmp_path, doc, extra):
    code, _ = run(tmp_path, "analyze", doc, *extra)
    assert code == 2


def test_malformed_json_and_unknown_command(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["analyze", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["frobnicate", "--config", str(bad)]) == 2
    assert cli.main(["analyze", "--config", str(tmp_path / "missing.json"), "--out", "x"]) == 2


def test_domain_error_exit_3(tmp_path, capsys):
    doc = {**COHERENT, "grid": {"x_min": -2, "x_max": 2, "n": 64}}
    code, _ = run(tmp_path, "analyze", doc)
    assert code == 3
    assert "DomainTooSmallError" in capsys.readouterr().err


def test_set_overrides():
    doc = cli.apply_overrides(COHERENT, ["model.p_mean=1.5", "tolerances.route=1e-15", "output=abc"])
    assert doc["model"]["p_mean"] == 1.5
    assert doc["tolerances"]["route"] == 1e-15
    assert doc["output"] == "abc"
    assert COHERENT["model"]["p_mean"] == 0.3


def test_verify_coherent_passes(tmp_path):
    code, out = run(tmp_path, "verify", COHERENT)
    report = load(type(out)(f"{out}_verify.json"))
    assert code == 0 and report["overall"] == "pass"
    names = {c["name"] for c in report["checks"]}
    assert {
        "route_equivalence_A_B",
        "route_equivalence_A_C",
        "budget_closure",
        "riccati_residual",
        "divergence_identity",
        "potential_identity",
        "marginal_consistency",
        "cumulant_cross_method",
    } <= names


def test_verify_qho3_passes(tmp_path):
    doc = {"model": {"kind": "qho_eigenstate", "n": 3, "omega": 1.0}, "grid": {"x_min": -16, "x_max": 16, "n": 1024}}
    code, out = run(tmp_path, "verify", doc)
    assert code == 0, load(type(out)(f"{out}_verify.json"))


def test_verify_impossible_tolerance_fails(tmp_path):
    code, out = run(tmp_path, "verify", COHERENT, "--set", "tolerances.route=1e-15")
    assert code == 1
    report = load(type(out)(f"{out}_verify.json"))
    status = {c["name"]: c["status"] for c in report["checks"]}
    assert status["route_equivalence_A_B"] == "fail" and report["overall"] == "fail"


def test_budget_and_cumulants(tmp_path):
    code, out = run(tmp_path, "budget", COHERENT)
    assert code == 0
    b = load(type(out)(f"{out}_budget.json"))["budget"]
    assert b["total"] == pytest.approx(0.5, rel=1e-10)
    code, out = run(tmp_path, "cumulants", {**COHERENT, "cumulants": {"x": [0.0, 1.0], "order": 4}}, name="cum")
    assert code == 0
    rows = [l.strip().split(",") for l in open(f"{out}_cumulants.csv")]
    assert rows[0] == ["x", "method", "kappa_1", "kappa_2", "kappa_3", "kappa_4"]
    assert len(rows) == 5
    for r in rows[1:]:
        assert float(r[2]) == pytest.approx(0.3, abs=1e-6)
        assert float(r[3]) == pytest.approx(0.5, rel=1e-5)
    code, _ = run(tmp_path, "cumulants", {**COHERENT, "cumulants": {"order": 6}}, name="cum6")
    assert code == 2


def test_wigner_command(tmp_path):
    doc = {**COHERENT, "grid": {"x_min": -8, "x_max": 8, "n": 64}, "wigner_export": "npz"}
    code, out = run(tmp_path, "wigner", doc)
    assert code == 0
    data = np.load(f"{out}_wigner.npz")
    assert data["W"].shape == (64, 128)
    summary = load(type(out)(f"{out}_wigner_summary.json"))
    assert summary["total"] == pytest.approx(1.0, abs=1e-6)
    assert summary["marginal_x_error"] < 1e-6


def test_input_file_config(tmp_path):
    s = states.build(states.ModelSpec("coherent_state", {"omega": 1.0}), Grid(-12, 12, 256))
    states.export_state(s, tmp_path / "psi.csv")
    code, out = run(tmp_path, "budget", {"input": str(tmp_path / "psi.csv")})
    assert code == 0
    assert load(type(out)(f"{out}_budget.json"))["budget"]["mean_weak"] == pytest.approx(0.5, rel=1e-8)
    code, _ = run(tmp_path, "budget", {"input": str(tmp_path / "psi.csv"), "model": COHERENT["model"]}, name="both")
    assert code == 2


def test_output_is_deterministic(tmp_path):
    _, a = run(tmp_path, "analyze", COHERENT, name="a")
    _, b = run(tmp_path, "analyze", COHERENT, name="b")
    for suffix in ("fields.csv", "summary.json"):
        assert open(f"{a}_{suffix}", "rb").read() == open(f"{b}_{suffix}", "rb").read()


EVOLVE = {
    "model": {"kind": "coherent_state", "omega": 1.0, "x_mean": 1.0},
    "grid": {"x_min": -16, "x_max": 16, "n": 512},
    "evolve": {
        "potential": {"kind": "harmonic", "omega": 1.0},
        "dt": 2 * np.pi / 4000,
        "steps": 12000,
        "snapshot_every": 40,
        "export_every": 100,
        "seeds": [1.0],
    },
}


def test_evolve_coherent_orbit(tmp_path):
    code, out = run(tmp_path, "evolve", EVOLVE)
    assert code == 0
    rows = np.loadtxt(f"{out}_trajectories.csv", delimiter=",", skiprows=1)
    assert np.max(np.abs(rows[:, 2] - np.cos(rows[:, 1]))) < 1e-4
    summary = load(type(out)(f"{out}_evolve_summary.json"))
    assert len(summary["snapshots"]) == 301
    assert all(set(s["checks"].values()) == {"pass"} for s in summary["snapshots"])
    snap = open(f"{out}_snapshot_0004000.csv").read().splitlines()
    header = next(l for l in snap if not l.startswith("#"))
    assert header.startswith("t,x,rho")


def test_evolve_free_spreading(tmp_path):
    doc = {
        "model": {"kind": "gaussian_packet", "sigma": 1.0, "p0": 0.5},
        "grid": {"x_min": -40, "x_max": 40, "n": 1024},
        "evolve": {"potential": {"kind": "none"}, "dt": 0.0025, "steps": 4000, "snapshot_every": 400, "export_every": 10},
    }
    code, out = run(tmp_path, "evolve", doc)
    assert code == 0
    for s in load(type(out)(f"{out}_evolve_summary.json"))["snapshots"]:
        assert np.sqrt(s["var_x"]) == pytest.approx(np.sqrt(1 + (s["t"] / 2) ** 2), rel=1e-5)


def test_evolve_barrier_and_file_potentials(tmp_path):
    pot = tmp_path / "v.csv"
    x = np.linspace(-16, 16, 33)
    pot.write_text("x,V\n" + "\n".join(f"{a},{0.5 * a * a}" for a in x) + "\n")
    base = {**EVOLVE, "evolve": {**EVOLVE["evolve"], "steps": 40, "snapshot_every": 20, "seeds": 4}}
    for potential in ({"kind": "barrier", "height": 1.0, "width": 0.5}, {"kind": "file", "path": str(pot)}):
        doc = {**base, "evolve": {**base["evolve"], "potential": potential}}
        code, _ = run(tmp_path, "evolve", doc, name=potential["kind"])
        assert code == 0
    doc = {**base, "evolve": {**base["evolve"], "potential": {"kind": "morse"}}}
    assert run(tmp_path, "evolve", doc, name="morse")[0] == 2


def test_evolve_step_above_bound(tmp_path, capsys):
    code, _ = run(tmp_path, "evolve", EVOLVE, "--set", "evolve.dt=0.01")
    assert code != 0
    assert "kinetic step bound" in capsys.readouterr().err
