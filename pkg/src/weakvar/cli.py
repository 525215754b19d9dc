"""Command-line front end: ``weakvar <command> --config FILE [--set key=value ...] --out PREFIX``.

Exit codes: 0 success, 1 verification failure, 2 configuration or parse
error, 3 numerical failure (domain too small, unstable step, degenerate state).
"""

from __future__ import annotations

import os

_THREADS = os.environ.get("WEAKVAR_THREADS")
if _THREADS:
    # must happen before numpy loads its BLAS/FFT backends
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

import argparse  # noqa: E402
import copy  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
from dataclasses import dataclass, field  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import dynamics, states, weakstats, wigner  # noqa: E402
from .errors import ConfigurationError, ParseError, WeakVarError  # noqa: E402
from .io import write_csv, write_json  # noqa: E402
from .numerics import Grid  # noqa: E402

COMMANDS = ("analyze", "wigner", "cumulants", "budget", "verify", "evolve")
EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULT_TOLERANCES = {
    "route": 1e-4,
    "budget": 1e-6,
    "identity": 1e-8,
    "riccati": 1e-6,
    "marginal": 1e-6,
    "cumulant": 1e-4,
    "resolve_floor": weakstats.RESOLVE_FLOOR,
}


# ------------------------------------------------------------------ config

@dataclass
class RunConfig:
    command: str
    model: states.ModelSpec | None
    input: Path | None
    grid: Grid | None
    constants: states.PhysicalConstants
    tolerances: dict
    output: str
    format: str = "csv"
    eps_node: float | None = None
    wigner: bool = True
    eta: float = 0.0
    cumulants: dict = field(default_factory=dict)
    evolve: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, items) -> dict:
    """Apply ``key.sub=value`` overrides; values are JSON where they parse, else strings."""
    doc = copy.deepcopy(doc)
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigurationError(f"--set {key}: {p!r} is not a section")
            node = nxt
        node[parts[-1]] = _parse_value(value)
    return doc


def build_config(command: str, doc: dict, out: str | None = None, fmt: str | None = None) -> RunConfig:
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}")
    has_model, has_input = doc.get("model") is not None, doc.get("input") is not None
    if has_model == has_input:
        raise ConfigurationError("config needs exactly one of 'model' or 'input'")
    model = states.ModelSpec.from_dict(doc["model"]) if has_model else None
    grid = None
    if has_model:
        g = doc.get("grid")
        if not isinstance(g, dict):
            raise ConfigurationError("a model config needs a 'grid' section with x_min, x_max, n")
        try:
            grid = Grid(float(g["x_min"]), float(g["x_max"]), int(g["n"]))
        except KeyError as exc:
            raise ConfigurationError(f"grid is missing {exc.args[0]!r}") from None
    consts = doc.get("constants") or {}
    constants = states.PhysicalConstants(float(consts.get("hbar", 1.0)), float(consts.get("mass", 1.0)))
    tol = dict(DEFAULT_TOLERANCES)
    for k, v in (doc.get("tolerances") or {}).items():
        if k not in DEFAULT_TOLERANCES:
            raise ConfigurationError(f"unknown tolerance {k!r}; expected one of {sorted(DEFAULT_TOLERANCES)}")
        if not (isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 and math.isfinite(v)):
            raise ConfigurationError(f"tolerance {k} must be a positive number, got {v!r}")
        tol[k] = float(v)
    output = out or doc.get("output")
    if not output:
        raise ConfigurationError("no output prefix: pass --out or set 'output'")
    fmt = fmt or doc.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigurationError(f"format must be csv or json, got {fmt!r}")
    eps = doc.get("eps_node")
    if eps is not None and not (isinstance(eps, (int, float)) and eps > 0):
        raise ConfigurationError(f"eps_node must be positive, got {eps!r}")
    return RunConfig(
        command=command,
        model=model,
        input=Path(doc["input"]) if has_input else None,
        grid=grid,
        constants=constants,
        tolerances=tol,
        output=str(output),
        format=fmt,
        eps_node=eps,
        wigner=bool(doc.get("wigner", True)),
        eta=float(doc.get("eta", 0.0)),
        cumulants=dict(doc.get("cumulants") or {}),
        evolve=dict(doc.get("evolve") or {}),
        raw=doc,
    )


def load_state(cfg: RunConfig) -> states.WavefunctionGrid:
    if cfg.model is not None:
        return states.build(cfg.model, cfg.grid, cfg.constants)
    return states.ingest(cfg.input, cfg.constants)


def _out(cfg: RunConfig, suffix: str) -> Path:
    return Path(f"{cfg.output}_{suffix}")


def _meta(cfg: RunConfig, state: states.WavefunctionGrid) -> dict:
    g = state.grid
    return {
        "command": cfg.command,
        "constants": {"hbar": cfg.constants.hbar, "mass": cfg.constants.mass},
        "grid": {"x_min": g.x_min, "x_max": g.x_max, "n": g.n},
        "method": state.method,
        "source": cfg.model.to_dict() if cfg.model else str(cfg.input),
        "tolerances": cfg.tolerances,
    }


# ---------------------------------------------------------------- summaries

def _route_gap(a, b, region) -> float:
    """``max |a - b| / max(1, |a|)`` over ``region``: absolute below unit scale, relative above."""
    if not region.any():
        return math.nan
    return float(np.max(np.abs(a[region] - b[region]) / np.maximum(1.0, np.abs(a[region]))))


def summarize(fs: weakstats.WeakFieldSet, floor: float) -> dict:
    region = weakstats.resolved_region(fs.polar, floor)
    VA = fs.V_logrho
    out = {
        "budget": fs.budget.as_dict(),
        "V_logrho": {
            "min": float(np.min(VA[region])),
            "max": float(np.max(VA[region])),
            "mean_resolved": float(np.mean(VA[region])),
            "argmin": float(fs.x[region][np.argmin(VA[region])]),
            "argmax": float(fs.x[region][np.argmax(VA[region])]),
        },
        "sign_histogram": fs.sign_histogram(),
        "tol_zero": fs.tol_zero,
        "resolved_points": int(region.sum()),
        "masked_points": int(fs.polar.node_mask.sum()),
        "nodes": [{"x0": f.x0, "k": f.k, "coefficient": f.coefficient} for f in fs.nodes],
        "route_gap": {
            "A_C": _route_gap(VA, fs.V_weakvalues, region),
        },
    }
    if fs.V_conditional is not None:
        out["route_gap"]["A_B"] = _route_gap(VA, fs.V_conditional, region)
    return out


def probe_points(polar: states.PolarFields, count: int = 10, floor: float = 1e-2) -> np.ndarray:
    """Grid points at equally spaced density quantiles, kept where ``rho >= floor * max`` and off the mask."""
    st = polar.state
    seeds = dynamics.default_seeds(st, count)
    idx = np.unique([st.grid.index_of(s) for s in seeds])
    ok = ~polar.node_mask[idx] & (polar.rho[idx] >= floor * polar.rho.max())
    return st.x[idx[ok]]


def cumulant_rows(state, xs, order: int) -> list:
    rows = []
    for x in xs:
        f = wigner.conditional_cumulants(state, float(x), order, "formula")
        c = wigner.conditional_cumulants(state, float(x), order, "characteristic_function")
        rows.append((float(x), f.kappa, c.kappa))
    return rows


def run_checks(state, fs: weakstats.WeakFieldSet, tol: dict, cumulants: bool = True) -> list:
    """The invariant suite; each entry is ``{name, status, residual, tolerance}``."""
    floor = tol["resolve_floor"]
    region = weakstats.resolved_region(fs.polar, floor)
    c = state.constants
    VA = fs.V_logrho
    wm = fs.weak_momentum
    checks = []

    def add(name, residual, tolerance):
        ok = bool(np.isfinite(residual) and residual <= tolerance)
        checks.append({"name": name, "status": "pass" if ok else "fail", "residual": float(residual), "tolerance": tolerance})

    if fs.V_conditional is not None:
        add("route_equivalence_A_B", _route_gap(VA, fs.V_conditional, region), tol["route"])
    add("route_equivalence_A_C", _route_gap(VA, fs.V_weakvalues, region), tol["route"])
    add("budget_closure", abs(fs.budget.residual), tol["budget"])
    add("fisher_floor", abs(fs.budget.mean_weak - fs.budget.fisher_form), tol["budget"])
    add("riccati_residual", float(np.max(np.abs(fs.riccati_residual[region]))), tol["riccati"])
    div = 0.5 * c.hbar * wm.d_im
    add("divergence_identity", _route_gap(VA, div, region), tol["identity"])
    eq = 0.5 * wm.im**2 + c.mass * fs.Q
    add("potential_identity", _route_gap(VA, eq, region), tol["identity"])
    if fs.wigner is not None:
        add("marginal_consistency", float(np.max(np.abs(wigner.marginal_x(fs.wigner) - fs.polar.rho))), tol["marginal"])
    if not cumulants:
        return checks
    xs = probe_points(fs.polar)
    worst = 0.0
    for _, kf, kc in cumulant_rows(state, xs, 4):
        for a, b in zip(kf, kc):
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    add("cumulant_cross_method", worst if xs.size else math.nan, tol["cumulant"])
    return checks


# ----------------------------------------------------------------- commands

def cmd_analyze(cfg: RunConfig) -> int:
    state = load_state(cfg)
    fs = weakstats.analyze(state, cfg.eps_node, with_wigner=cfg.wigner)
    floor = cfg.tolerances["resolve_floor"]
    if cfg.format == "csv":
        weakstats.export_fields(fs, _out(cfg, "fields.csv"))
    else:
        write_json(_out(cfg, "fields.json"), weakstats.field_columns(fs))
    summary = {**_meta(cfg, state), **summarize(fs, floor), "eta": cfg.eta}
    write_json(_out(cfg, "summary.json"), summary)
    return EXIT_OK


def cmd_wigner(cfg: RunConfig) -> int:
    state = load_state(cfg)
    Wg = wigner.wigner_transform(state)
    if cfg.raw.get("wigner_export", "csv") == "npz":
        wigner.export_wigner(Wg, _out(cfg, "wigner.npz"), "npz")
    else:
        wigner.export_wigner(Wg, _out(cfg, "wigner.csv"))
    mp = wigner.marginal_p(Wg)
    summary = {
        **_meta(cfg, state),
        "p_grid": {"p_min": Wg.grid_p.x_min, "p_max": Wg.grid_p.x_max, "n": Wg.grid_p.n},
        "total": Wg.total(),
        "min_W": float(Wg.W.min()),
        "max_W": float(Wg.W.max()),
        "marginal_x_error": float(np.max(np.abs(wigner.marginal_x(Wg) - state.rho))),
        "marginal_p_error": float(np.max(np.abs(mp - wigner.momentum_density(state, Wg.p)))),
    }
    write_json(_out(cfg, "wigner_summary.json"), summary)
    return EXIT_OK


def cmd_cumulants(cfg: RunConfig) -> int:
    state = load_state(cfg)
    order = int(cfg.cumulants.get("order", 4))
    if not 1 <= order <= 4:
        raise ConfigurationError("cumulants.order must be 1..4 (the formula method caps the order)")
    xs = cfg.cumulants.get("x")
    polar = states.polar_decompose(state, cfg.eps_node)
    xs = probe_points(polar) if xs is None else np.atleast_1d(np.asarray(xs, dtype=float))
    rows = cumulant_rows(state, xs, order)
    if cfg.format == "csv":
        cols = {"x": [], "method": []}
        for n in range(1, order + 1):
            cols[f"kappa_{n}"] = []
        for x, kf, kc in rows:
            for name, k in (("formula", kf), ("characteristic_function", kc)):
                cols["x"].append(x)
                cols["method"].append(name)
                for n in range(order):
                    cols[f"kappa_{n + 1}"].append(k[n])
        write_csv(_out(cfg, "cumulants.csv"), cols)
    else:
        write_json(
            _out(cfg, "cumulants.json"),
            {**_meta(cfg, state), "rows": [{"x": x, "formula": list(kf), "characteristic_function": list(kc)} for x, kf, kc in rows]},
        )
    return EXIT_OK


def cmd_budget(cfg: RunConfig) -> int:
    state = load_state(cfg)
    polar = states.polar_decompose(state, cfg.eps_node)
    b = weakstats.variance_budget(polar)
    write_json(_out(cfg, "budget.json"), {**_meta(cfg, state), "budget": b.as_dict()})
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    state = load_state(cfg)
    fs = weakstats.analyze(state, cfg.eps_node, with_wigner=cfg.wigner)
    checks = run_checks(state, fs, cfg.tolerances)
    overall = all(c["status"] == "pass" for c in checks)
    write_json(_out(cfg, "verify.json"), {**_meta(cfg, state), "checks": checks, "overall": "pass" if overall else "fail"})
    return EXIT_OK if overall else EXIT_VERIFY


def potential_from(spec: dict, grid: Grid, constants: states.PhysicalConstants) -> np.ndarray:
    kind = spec.get("kind", "none")
    if kind == "none":
        return dynamics.free_potential(grid)
    if kind == "harmonic":
        return dynamics.harmonic_potential(grid, float(spec["omega"]), constants.mass, float(spec.get("center", 0.0)))
    if kind == "barrier":
        return dynamics.barrier_potential(grid, float(spec["height"]), float(spec["width"]), float(spec.get("center", 0.0)))
    if kind == "file":
        data = np.loadtxt(spec["path"], delimiter=",", comments="#", ndmin=2, skiprows=1)
        if data.shape[1] < 2:
            raise ParseError("potential file needs columns x,V", line=2)
        return np.interp(grid.x, data[:, 0], data[:, 1])
    raise ConfigurationError(f"unknown potential kind {kind!r}; use none, harmonic, barrier or file")


def cmd_evolve(cfg: RunConfig) -> int:
    state = load_state(cfg)
    ev = cfg.evolve
    for key in ("dt", "steps"):
        if key not in ev:
            raise ConfigurationError(f"evolve section needs {key!r}")
    pot = potential_from(ev.get("potential", {"kind": "none"}), state.grid, state.constants)
    ec = dynamics.EvolutionConfig(pot, float(ev["dt"]), int(ev["steps"]), int(ev.get("snapshot_every", 1)))
    snaps = dynamics.evolve(state, ec)
    seeds = ev.get("seeds")
    if isinstance(seeds, int):
        seeds = dynamics.default_seeds(state, seeds)
    traj = dynamics.hydrodynamic_trajectories(snaps, seeds, int(ev.get("substeps", 1)))
    dynamics.export_trajectories(traj, _out(cfg, "trajectories.csv"))
    export_every = int(ev.get("export_every", 1))
    e0 = dynamics.energy(state, pot)
    per = []
    for i, snap in enumerate(snaps):
        fs = weakstats.analyze(snap.state, cfg.eps_node, with_wigner=False)
        if i % export_every == 0 or i == len(snaps) - 1:
            weakstats.export_fields(
                fs, _out(cfg, f"snapshot_{snap.step:07d}.csv"), extra={"t": np.full(snap.state.grid.n, snap.t)}
            )
        mean_x, var_x = dynamics.position_moments(snap.state)
        checks = run_checks(snap.state, fs, cfg.tolerances, cumulants=False)
        per.append({
            "step": snap.step,
            "t": snap.t,
            "mean_x": mean_x,
            "var_x": var_x,
            "energy_drift": dynamics.energy(snap.state, pot) - e0,
            "checks": {c["name"]: c["status"] for c in checks},
        })
    write_json(
        _out(cfg, "evolve_summary.json"),
        {**_meta(cfg, state), "bounds": ec.bounds(state.grid, state.constants), "dt": ec.dt, "snapshots": per,
         "crossings": traj.crossings(), "stopped": traj.stopped.tolist()},
    )
    return EXIT_OK


HANDLERS = {
    "analyze": cmd_analyze,
    "wigner": cmd_wigner,
    "cumulants": cmd_cumulants,
    "budget": cmd_budget,
    "verify": cmd_verify,
    "evolve": cmd_evolve,
}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weakvar", description="Weak values and weak variances of momentum.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON configuration document")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field (dotted key)")
    p.add_argument("--out", help="output path prefix (overrides 'output')")
    p.add_argument("--format", choices=("csv", "json"))
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"config is not valid JSON: {exc.msg}", line=exc.lineno) from None
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        doc = apply_overrides(doc, args.set)
        cfg = build_config(args.command, doc, args.out, args.format)
        Path(cfg.output).parent.mkdir(parents=True, exist_ok=True)
        write_json(_out(cfg, "config.json"), doc)
        return HANDLERS[cfg.command](cfg)
    except (ConfigurationError, ParseError) as exc:
        parser.print_usage(sys.stderr)
        print(f"weakvar: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WeakVarError as exc:
        print(f"weakvar: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
