"""Command-line front end.

Every command writes plot-ready CSV and/or JSON into ``--out``.  A JSON file
given with ``--config`` may set any flag (keys use underscores) and takes
precedence over the command line:

    {"command": "chern", "parameters": {"flux": "2/5", "grid": 80},
     "output_dir": "runs/chern", "seed": 0}

Exit codes: 0 success, 2 configuration, 3 degeneracy, 4 admissibility,
5 numerics.  HOFSC_THREADS caps BLAS threads and the butterfly worker pool.
"""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import band_geometry as bg
from . import io
from .errors import ConfigError, HofscError, NumericError
from .lattice_model import FluxRational, bloch_matrix, farey_fractions

log = logging.getLogger("hofsc")

COMMANDS = ("butterfly", "bands", "curvature", "moment", "chern", "trajectory", "pressure",
            "magnetization", "hall", "verify-equilibrium", "verify-egorov", "verify-identities")

# flag name -> (type, default, help); JSON keys are the names with '-' -> '_'
FLAGS = {
    "flux": (str, "1/3", "background flux p/q"),
    "epsilon": (float, 0.0, "scale parameter eps"),
    "b": (float, 0.0, "field increment, B = B0 + eps*b"),
    "beta": (float, 5.0, "inverse temperature"),
    "mu": (str, "0.0", "chemical potential, or a comma-separated list"),
    "grid": (int, None, "grid size N (command default if omitted)"),
    "band": (int, 1, "band index j (1-based, from the bottom)"),
    "t-final": (float, 10.0, "final time"),
    "dt": (float, 0.01, "time step"),
    "seed": (int, 0, "seed for randomized checks"),
    "qmax": (int, 8, "largest denominator in the butterfly sweep"),
    "filled": (int, 1, "number of filled bands for the Hall current"),
    "field": (str, "1,0", "electric field E1,E2"),
    "r0": (str, "0,0", "initial position r1,r2"),
    "kappa0": (str, "0.3,0.2", "initial kinetic momentum"),
    "mode": (str, "exact", "vector field: exact or paper_truncated"),
    "scheme": (str, "rk4", "integrator: rk4 or implicit_midpoint"),
    "sizes": (str, None, "lattice sizes L for verify commands, comma-separated"),
}
JSON_TYPES = {str: "string", float: "number", int: "integer"}


def config_schema():
    params = {}
    for name, (typ, _, _) in FLAGS.items():
        key = name.replace("-", "_")
        params[key] = {"type": JSON_TYPES[typ]}
        if typ is str:
            params[key] = {"type": ["string", "number", "array"]}
    params["scenario"] = {"type": "object"}
    return {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "command": {"enum": list(COMMANDS)},
            "parameters": {"type": "object", "additionalProperties": False, "properties": params},
            "output_dir": {"type": "string"},
            "seed": {"type": "integer"},
        },
    }


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, config_schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(prog="hofsc", description="Semiclassical Hofstadter band toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    for name, (typ, default, help_) in FLAGS.items():
        common.add_argument(f"--{name}", type=typ, default=default, help=help_)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--config", default=None, help="JSON config; its values override flags")
    for cmd in COMMANDS:
        sub.add_parser(cmd, parents=[common])
    return parser


def _vec(text, n=2):
    if isinstance(text, (list, tuple)):
        vals = [float(x) for x in text]
    else:
        vals = [float(x) for x in str(text).split(",")]
    if len(vals) != n:
        raise ConfigError(f"expected {n} comma-separated numbers, got {text!r}")
    return np.array(vals)


def _list(text, conv=float):
    if isinstance(text, (list, tuple)):
        return [conv(x) for x in text]
    return [conv(x) for x in str(text).split(",") if x.strip()]


def _grid(args, default):
    return default if args.grid is None else args.grid


# -- commands -----------------------------------------------------------------

def _butterfly_row(pq, grid):
    p, q = pq
    flux = FluxRational(p, q)
    ks = np.arange(grid) * (2 * np.pi / q) / grid
    K = np.stack(np.meshgrid(ks, ks, indexing="ij"), axis=-1).reshape(-1, 2)
    return np.sort(np.linalg.eigvalsh(bloch_matrix(flux, K)).ravel())


def cmd_butterfly(args, out):
    fracs = farey_fractions(args.qmax)
    grid = _grid(args, 8)
    workers = _threads()
    if workers > 1 and len(fracs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            spectra = list(pool.map(_butterfly_row, fracs, [grid] * len(fracs)))
    else:
        spectra = [_butterfly_row(pq, grid) for pq in fracs]
    rows = []
    for (p, q), ev in zip(fracs, spectra):
        B = 2 * np.pi * p / q
        rows += [(B, p, q, float(e)) for e in ev]
    return [io.write_csv(out / "butterfly.csv", ("B", "p", "q", "eigenvalue"), rows)]


def cmd_bands(args, out):
    flux = FluxRational.parse(args.flux)
    N = _grid(args, 64)
    k = bg.torus_grid(flux, N).reshape(-1, 2)
    e = np.linalg.eigvalsh(bloch_matrix(flux, k))
    header = ("k1", "k2") + tuple(f"e{j}" for j in range(1, flux.q + 1))
    rows = [tuple(k[i]) + tuple(e[i]) for i in range(len(k))]
    ranges = bg.band_ranges(flux)
    gaps = bg.gap_check(flux)
    summary = {"flux": str(flux), "grid": N, "band_ranges": ranges,
               "min_gaps": gaps.gaps, "touching": list(gaps.flagged)}
    return [io.write_csv(out / "bands.csv", header, rows), io.write_json(out / "bands.json", summary)]


def _band_field(args, out, name, attr):
    flux = FluxRational.parse(args.flux)
    N = _grid(args, 64)
    bd = bg.band_data(flux, args.band, N)
    k = bd.k.reshape(-1, 2)
    vals = getattr(bd, attr).ravel()
    rows = [(k[i, 0], k[i, 1], vals[i]) for i in range(len(k))]
    return [io.write_csv(out / f"{name}.csv", ("k1", "k2", name), rows)]


def cmd_curvature(args, out):
    return _band_field(args, out, "curvature", "omega")


def cmd_moment(args, out):
    return _band_field(args, out, "moment", "moment")


def cmd_chern(args, out):
    flux = FluxRational.parse(args.flux)
    N = _grid(args, 60)
    res = [bg.chern_number(flux, j, N) for j in range(1, flux.q + 1)]
    summary = {"flux": str(flux), "grid": N, "chern": [r.chern for r in res],
               "sum": sum(r.chern for r in res), "residual": [r.residual for r in res]}
    return [io.write_json(out / "chern.json", summary)]


def cmd_trajectory(args, out):
    from .classical_core import ClassicalSystem
    from .flow import integrate

    flux = FluxRational.parse(args.flux)
    sys_ = ClassicalSystem(flux, args.band, args.epsilon, args.b, N=_grid(args, 64))
    z0 = np.concatenate([_vec(args.r0), _vec(args.kappa0)])
    tr = integrate(sys_, z0, args.t_final, args.dt, args.scheme, args.mode)
    rows = [(t,) + tuple(z) + (h,) for t, z, h in zip(tr.times, tr.states, tr.energy)]
    header = ("t", "r1", "r2", "kappa1", "kappa2", "h")
    summary = {"flux": str(flux), "band": args.band, "epsilon": args.epsilon, "b": args.b,
               "scheme": tr.scheme, "mode": args.mode, "dt": tr.dt, "energy_drift": tr.energy_drift()}
    return [io.write_csv(out / "trajectory.csv", header, rows),
            io.write_json(out / "trajectory.json", summary)]


def _thermo_rows(args):
    from . import thermo

    flux = FluxRational.parse(args.flux)
    N = _grid(args, 64)
    rows = []
    for mu in _list(args.mu):
        P = thermo.ThermoParams(args.beta, mu, args.epsilon, args.b, N)
        rows.append((flux.B0 + args.epsilon * args.b, args.beta, mu, thermo.pressure(flux, P),
                     thermo.density(flux, P), thermo.magnetization(flux, P)))
    return flux, N, rows


THERMO_HEADER = ("B", "beta", "mu", "pressure", "density", "magnetization")


def cmd_pressure(args, out):
    _, _, rows = _thermo_rows(args)
    return [io.write_csv(out / "thermo.csv", THERMO_HEADER, rows)]


def cmd_magnetization(args, out):
    from . import thermo

    flux, N, rows = _thermo_rows(args)
    checks = []
    for mu in _list(args.mu):
        P = thermo.ThermoParams(args.beta, mu, args.epsilon, args.b, N)
        a = thermo.magnetization(flux, P, "formula")
        b = thermo.magnetization(flux, P, "finite_difference")
        checks.append({"mu": mu, "formula": a, "finite_difference": b, "difference": abs(a - b)})
    return [io.write_csv(out / "thermo.csv", THERMO_HEADER, rows),
            io.write_json(out / "magnetization.json", {"flux": str(flux), "beta": args.beta, "rows": checks})]


def cmd_hall(args, out):
    from . import thermo

    flux = FluxRational.parse(args.flux)
    E = _vec(args.field)
    j = thermo.hall_current(flux, args.filled, E, _grid(args, 60))
    cherns = [bg.chern_number(flux, k, _grid(args, 60)).chern for k in range(1, args.filled + 1)]
    summary = {"flux": str(flux), "filled": args.filled, "field": E, "chern": cherns,
               "sigma_xy": sum(cherns) / (2 * np.pi), "current": j}
    return [io.write_json(out / "hall.json", summary)]


def _scenario(args, default_sizes):
    from .quantum_oracle import Scenario

    data = dict(getattr(args, "scenario", None) or {})
    data.setdefault("flux0", args.flux)
    data.setdefault("band", args.band)
    if args.b:
        data.setdefault("b", int(args.b) if float(args.b).is_integer() else args.b)
    if args.sizes is not None:
        data.setdefault("sizes", _list(args.sizes, int))
    data.setdefault("sizes", default_sizes)
    if args.grid is not None:
        data.setdefault("grid", args.grid)
    return Scenario.from_dict(data)


def _write_comparison(out, name, scenario, comp):
    cols, rows = comp.table()
    summary = {"scenario": json.loads(scenario.to_json()),
               "slope": comp.fit.slope, "intercept": comp.fit.intercept, "r2": comp.fit.r2,
               "ablation": {"slope": comp.ablation_fit.slope, "intercept": comp.ablation_fit.intercept,
                            "r2": comp.ablation_fit.r2}}
    return [io.write_csv(out / f"{name}.csv", cols, rows), io.write_json(out / f"{name}.json", summary)]


def cmd_verify_equilibrium(args, out):
    from .quantum_oracle import equilibrium_compare

    sc = _scenario(args, (24, 48, 96))
    return _write_comparison(out, "equilibrium", sc, equilibrium_compare(sc))


def cmd_verify_egorov(args, out):
    from .quantum_oracle import egorov_compare

    sc = _scenario(args, (48, 96, 192))
    return _write_comparison(out, "egorov", sc, egorov_compare(sc))


def identity_checks(seed, n_points=100, n_defect=20):
    """Randomized residuals of the band-geometry and symbol identities."""
    from .classical_core import ClassicalSystem, closedness_residual, divergence_residual, pfaffian4
    from .symbol_calculus import hsc_defect_order1

    rng = np.random.default_rng(seed)
    report = {}
    worst = 0.0
    for text in ("1/3", "2/5"):
        flux = FluxRational.parse(text)
        k = rng.uniform(0, 2 * np.pi, (n_points, 2))
        vals = np.array([bg.magnetic_moment(flux, 1, k, form) for form in bg.MOMENT_FORMS])
        worst = max(worst, float(np.max(np.ptp(vals, axis=0))))
    report["moment_forms"] = {"residual": worst, "tol": 1e-10}
    flux = FluxRational(1, 3)
    sys_ = ClassicalSystem(flux, 1, 0.05, 1.0)
    z = rng.uniform(-np.pi, np.pi, (n_points, 4))
    pf = np.max(np.abs(np.abs(pfaffian4(sys_.symplectic_form(z))) - sys_.liouville_density(z[:, 2:])))
    report["pfaffian"] = {"residual": float(pf), "tol": 1e-13}
    report["closedness"] = {"residual": max(closedness_residual(sys_, zi, 1e-4) for zi in z[:10]),
                            "tol": 1e-6}
    report["divergence"] = {"residual": float(np.max(divergence_residual(sys_, z[:20]))), "tol": 1e-6}
    zd = rng.uniform(-np.pi, np.pi, (n_defect, 4))
    defect = max(float(np.max(np.abs(hsc_defect_order1(flux, 1, zi)))) for zi in zd)
    mutated = min(float(np.max(np.abs(hsc_defect_order1(flux, 1, zi, moment_scale=1.1)))) for zi in zd)
    report["defect"] = {"residual": defect, "tol": 1e-8}
    report["defect_mutation"] = {"residual": mutated, "min": 1e-3}
    for name, entry in report.items():
        entry["pass"] = (entry["residual"] >= entry["min"]) if "min" in entry else (entry["residual"] <= entry["tol"])
    return report


def cmd_verify_identities(args, out):
    report = identity_checks(args.seed)
    path = io.write_json(out / "identities.json", {"seed": args.seed, "checks": report})
    failed = [k for k, v in report.items() if not v["pass"]]
    if failed:
        raise NumericError(f"identity checks failed: {', '.join(failed)} (report in {path})")
    return [path]


HANDLERS = {name: globals()["cmd_" + name.replace("-", "_")] for name in COMMANDS}


def _threads(default=1):
    """Thread cap from HOFSC_THREADS, or ``default`` when it is unset."""
    if "HOFSC_THREADS" not in os.environ:
        return default
    try:
        return max(1, int(os.environ["HOFSC_THREADS"]))
    except ValueError as exc:
        raise ConfigError("HOFSC_THREADS must be an integer") from exc


def resolve(argv=None):
    """Parsed flags with config overrides applied."""
    args = build_parser().parse_args(argv)
    if args.config:
        cfg = load_config(args.config)
        if cfg.get("command", args.command) != args.command:
            raise ConfigError(f"config is for {cfg['command']!r}, not {args.command!r}")
        for key, val in cfg.get("parameters", {}).items():
            setattr(args, key, val)
        if "output_dir" in cfg:
            args.out = cfg["output_dir"]
        if "seed" in cfg:
            args.seed = cfg["seed"]
    return args


def run(argv=None):
    args = resolve(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=_threads(None)):
        return HANDLERS[args.command](args, out)


def main(argv=None):
    try:
        paths = run(argv)
    except HofscError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
