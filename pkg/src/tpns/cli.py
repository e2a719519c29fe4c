"""Command-line entry point: ``tpns <command> [--config file.yaml] [--set key=value ...]``.

Configs are YAML documents with the blocks ``grid``, ``solver`` and
``experiment`` plus top-level ``seed`` and ``output``. Nested blocks are
addressed by dotted key paths (``grid.N``, ``experiment.delta``), which is
also the syntax of ``--set`` overrides and of sweep axes.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import BlowupDetected, EmptyBlockRange, NoContraction, TpnsError
from .littlewood_paley import NormSpec, besov_report, make_partition, lp_norm_physical
from .spectral import Grid, SpectralField, random_field, read_snapshot, write_snapshot

COMMANDS = ("norms", "solve-ivp", "solve-periodic", "stability", "counterexample", "estimates", "sweep")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_BLOWUP, EXIT_NOCONTRACTION, EXIT_EMPTYRANGE = 0, 1, 2, 3, 4, 5


class ConfigError(Exception):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


# ---------------------------------------------------------------------------
# schema

_PI_RE = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*$")


def _real(v):
    if isinstance(v, bool):
        raise ValueError("expected a number")
    if isinstance(v, str):
        s = v.strip().lower()
        m = _PI_RE.match(s)
        if m:
            return (float(m.group(1)) if m.group(1) else 1.0) * math.pi
        if s in ("inf", "infinity"):
            return math.inf
        return float(s)
    return float(v)


def _int(v):
    if isinstance(v, bool) or float(v) != int(float(v)):
        raise ValueError("expected an integer")
    return int(float(v))


def _bool(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("true", "false", "yes", "no"):
        return v.lower() in ("true", "yes")
    raise ValueError("expected a boolean")


def _opt(conv):
    return lambda v: None if v is None or v == "null" else conv(v)


def _str(v):
    return str(v)


def _list(v):
    if isinstance(v, str):
        v = [x.strip() for x in v.split(",") if x.strip()]
    if not isinstance(v, (list, tuple)):
        raise ValueError("expected a list")
    return list(v)


BASE_SCHEMA = {
    "command": (_str, None),
    "seed": (_int, 0),
    "output": (_str, "tpns_out"),
    "grid.dim": (_int, 2),
    "grid.L": (_real, 2 * math.pi),
    "grid.N": (_int, 64),
    "grid.dealias_fraction": (_real, 2.0 / 3.0),
    "solver.dt": (_real, 0.01),
    "solver.scheme": (_str, "ETD2"),
    "solver.picard_tol": (_real, 1e-10),
    "solver.picard_max_iter": (_int, 60),
    "solver.T": (_real, 1.0),
    "solver.samples_per_period": (_int, 16),
    "solver.norm_p": (_real, 2.0),
    "solver.norm_sigma": (_real, 1.0),
    "solver.sample_every": (_int, 1),
}

EXPERIMENT_SCHEMA = {
    "norms": {
        "input": (_opt(_str), None), "p": (_real, 2.0), "sigma": (_real, 1.0), "s": (_opt(_real), None),
        "sharp": (_bool, False), "k_max": (_opt(_real), None), "rms": (_real, 1.0),
    },
    "solve-ivp": {
        "amplitude": (_real, 0.1), "k_max": (_opt(_real), None), "force_amplitude": (_real, 0.0),
        "horizon": (_real, 1.0), "nonlinear": (_bool, True),
    },
    "solve-periodic": {
        "force_amplitude": (_real, 0.05), "force_k_max": (_opt(_real), None), "harmonic": (_bool, True),
    },
    "stability": {
        "force_amplitude": (_real, 0.05), "force_k_max": (_opt(_real), 4.0), "harmonic": (_bool, True),
        "w0_amplitude": (_real, 0.02), "w0_k_max": (_opt(_real), 8.0), "horizon": (_real, 50.0),
        "q": (_real, 2.0), "sigma": (_real, 1.0),
    },
    "counterexample": {
        "delta": (_real, 0.5), "eta": (_real, 0.25), "M": (_real, 8.0), "t0": (_real, 0.0),
        "delta_max": (_real, 0.6), "h_seed": (_opt(_int), None),
        "h_samples": (_int, 16), "a_amplitude": (_real, 0.0), "sample_every": (_opt(_int), None),
        "require_lower_bound": (_bool, True),
    },
    "estimates": {
        "checks": (_list, ["max_reg", "bilinear", "triple", "uniqueness", "paraproduct"]),
        "trials": (_int, 30), "refinement": (_bool, False), "p": (_real, 2.0), "q": (_real, 2.0),
        "r": (_real, math.inf), "r1": (_opt(_real), None), "sigma": (_real, 1.0), "s": (_real, 0.0),
        "delta": (_real, 0.25),
    },
}

THRESHOLD_SCHEMA = {
    "counterexample": {"thresholds.epsilon0": (_real, 0.1)},
}

SWEEP_SCHEMA = {
    "sweep.command": (_str, "counterexample"), "sweep.axes": (dict, {}), "sweep.cap": (_int, 64),
    "sweep.jobs": (_int, 1),
}

COMMAND_DEFAULTS = {
    "counterexample": {"grid.L": 16 * math.pi, "grid.N": 384, "solver.dt": 0.05},
    "stability": {"grid.dim": 3, "grid.N": 32, "solver.dt": 0.0625, "solver.sample_every": 16},
    "solve-periodic": {"solver.dt": 1.0 / 16},
    "estimates": {"grid.N": 32},
}


def flatten(doc, prefix: str = "") -> dict:
    out = {}
    for k, v in (doc or {}).items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and key != "sweep.axes":
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def resolve_config(doc: dict, overrides: dict, command: str | None = None) -> dict:
    """Merge defaults, the config document and overrides into a flat, validated dict."""
    flat = flatten(doc)
    flat.update(overrides)
    command = command or flat.get("command")
    if command not in COMMANDS:
        raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}")
    schema = dict(BASE_SCHEMA)
    inner = command
    if command == "sweep":
        schema.update(SWEEP_SCHEMA)
        inner = str(flat.get("sweep.command", SWEEP_SCHEMA["sweep.command"][1]))
        if inner not in BUILDERS:
            raise ConfigError("sweep.command", f"cannot sweep command {inner!r}")
    schema.update({f"experiment.{k}": v for k, v in EXPERIMENT_SCHEMA[inner].items()})
    schema.update(THRESHOLD_SCHEMA.get(inner, {}))
    resolved = {k: d for k, (_, d) in schema.items()}
    resolved.update(COMMAND_DEFAULTS.get(inner, {}))
    for key, value in flat.items():
        if key not in schema:
            raise ConfigError(key, f"unknown key for command {command!r}")
        conv = schema[key][0]
        try:
            resolved[key] = conv(value) if conv is not dict else _axes(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, str(exc)) from None
    resolved["command"] = command
    return resolved


def _axes(v):
    if not isinstance(v, dict):
        raise ValueError("expected a mapping of key path to list of values")
    return {str(k): list(vals) if isinstance(vals, (list, tuple)) else [vals] for k, vals in v.items()}


def parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def _sub(cfg: dict, prefix: str) -> dict:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in cfg.items() if k.startswith(prefix + ".")}


# ---------------------------------------------------------------------------
# building module objects (validation happens here, before any compute)


def _wrap(path: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (TpnsError, ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def build_grid(cfg: dict) -> Grid:
    g = _sub(cfg, "grid")
    return _wrap("grid", Grid, g["dim"], g["L"], g["N"], g["dealias_fraction"])


def build_solver(cfg: dict):
    from .mild import SolverConfig

    return _wrap("solver", SolverConfig, **_sub(cfg, "solver"))


def _field(grid: Grid, seed: int, amplitude: float, k_max, path: str) -> SpectralField:
    if amplitude == 0:
        return SpectralField.zeros(grid)
    return _wrap(path, random_field, grid, seed, k_max=k_max, rms=abs(amplitude))


def _force(grid: Grid, cfg: dict, seed: int):
    from .mild import PeriodicForce

    e = _sub(cfg, "experiment")
    T = cfg["solver.T"]
    M_t = cfg["solver.samples_per_period"]
    f = _field(grid, seed, e["force_amplitude"], e["force_k_max"], "experiment.force_k_max")
    if e.get("harmonic", True):
        return PeriodicForce.from_function(grid, T, M_t, lambda t: f * math.cos(2 * math.pi * t / T))
    return PeriodicForce(grid, T, [f] * M_t)


# ---------------------------------------------------------------------------
# commands; each returns (report, summary scalars, writer of extra artifacts)


def _series_rows(times, values, kind):
    return [(float(t), kind, float(v)) for t, v in zip(times, values)]


def _norm_kind(grid: Grid, p: float, sigma: float) -> str:
    return f"besov_s{grid.dim / p - 1:g}_p{p:g}_sigma{sigma:g}"


def cmd_norms(cfg, grid, solver):
    e = _sub(cfg, "experiment")
    if e["input"]:
        path = Path(e["input"])
        if not path.exists():
            raise ConfigError("experiment.input", f"file {path} does not exist")
        u = _wrap("experiment.input", read_snapshot, path, grid.dealias_fraction)
        grid = u.grid
    else:
        u = _field(grid, cfg["seed"], e["rms"], e["k_max"], "experiment.k_max")

    part = _wrap("grid", make_partition, grid, e["sharp"])
    s = grid.dim / e["p"] - 1 if e["s"] is None else e["s"]
    spec = _wrap("experiment", NormSpec, e["p"], e["sigma"], s)

    def run():
        rep = besov_report(u, spec, part).to_dict()
        lp = lp_norm_physical(u, e["p"])
        report = {"norms": [rep], "lp_physical": lp, "partition_residual": part.residual()}
        return report, {"value": rep["value"], "lp_physical": lp}, {}

    return run


def cmd_solve_ivp(cfg, grid, solver):
    from .mild import solve_ivp

    e = _sub(cfg, "experiment")
    a = _field(grid, cfg["seed"], e["amplitude"], e["k_max"], "experiment.k_max")
    f = _field(grid, cfg["seed"] + 1, e["force_amplitude"], e["k_max"], "experiment.k_max") if e["force_amplitude"] else None
    if not e["horizon"] > 0:
        raise ConfigError("experiment.horizon", "must be positive")

    def run():
        traj = solve_ivp(a, f, (0.0, e["horizon"]), solver, nonlinear=e["nonlinear"])
        part = make_partition(grid)
        spec = NormSpec.critical(grid.dim, solver.norm_p, solver.norm_sigma)
        vals = [besov_report(s, spec, part).value for s in traj.samples]
        kind = _norm_kind(grid, solver.norm_p, solver.norm_sigma)
        report = {"scheme": solver.scheme, "dt": solver.dt, "iterations": None, "contraction_ratios": [],
                  "apriori_ratio": None, "norm_series": [[float(t), v] for t, v in zip(traj.times, vals)],
                  "status": "ok"}
        return report, {"start": vals[0], "end": vals[-1]}, {
            "series": _series_rows(traj.times, vals, kind), "snapshot": traj.samples[-1]}

    return run


def cmd_solve_periodic(cfg, grid, solver):
    from .mild import solve_periodic

    f = _force(grid, cfg, cfg["seed"])
    if not solver.period_consistent():
        raise ConfigError("solver.dt", "dt * samples_per_period must equal T")

    def run():
        sol = solve_periodic(f, solver)
        part = make_partition(grid)
        spec = NormSpec.critical(grid.dim, solver.norm_p, solver.norm_sigma)
        vals = [besov_report(s, spec, part).value for s in sol.trajectory.samples]
        kind = _norm_kind(grid, solver.norm_p, solver.norm_sigma)
        report = {"scheme": "periodic_duhamel", "dt": solver.dt, **sol.to_dict(),
                  "norm_series": [[float(t), v] for t, v in zip(sol.trajectory.times, vals)]}
        return report, {"iterations": sol.iterations, "apriori_ratio": sol.apriori_ratio,
                        "residual": sol.residual}, {
            "series": _series_rows(sol.trajectory.times, vals, kind), "snapshot": sol.trajectory.samples[0]}

    return run


def cmd_stability(cfg, grid, solver):
    from .mild import SolverConfig, solve_perturbation, solve_periodic

    e = _sub(cfg, "experiment")
    T, M_t = cfg["solver.T"], cfg["solver.samples_per_period"]
    f = _force(grid, cfg, cfg["seed"])
    w0 = _field(grid, cfg["seed"] + 1, e["w0_amplitude"], e["w0_k_max"], "experiment.w0_k_max")
    per_cfg = _wrap("solver", SolverConfig.for_period, T, M_t, picard_tol=solver.picard_tol,
                    picard_max_iter=solver.picard_max_iter, norm_p=solver.norm_p, norm_sigma=solver.norm_sigma)
    _wrap("experiment.q", NormSpec, e["q"], e["sigma"])

    def run():
        sol = solve_periodic(f, per_cfg)
        res = solve_perturbation(w0, sol.trajectory, solver, e["horizon"], e["q"], e["sigma"])
        n0 = float(res.norms[0])
        ratio = float(res.norms[-1] / n0) if n0 > 0 else 0.0
        kind = f"besov_s{grid.dim / e['q'] - 1:g}_p{e['q']:g}_sigma{e['sigma']:g}"
        report = {"scheme": solver.scheme, "dt": solver.dt, "iterations": sol.iterations,
                  "contraction_ratios": sol.contraction_ratios, "apriori_ratio": sol.apriori_ratio,
                  "norm_series": res.series(), "decay_ratio": ratio, "status": "ok"}
        return report, {"decay_ratio": ratio, "iterations": sol.iterations}, {
            "series": _series_rows(res.times, res.norms, kind)}

    return run


def cmd_counterexample(cfg, grid, solver):
    from .counterexample import CounterexampleParams, build_force, run_growth_experiment, single_harmonic_h

    e = _sub(cfg, "experiment")
    h = None
    if e["h_seed"] is not None:
        h = _wrap("experiment.h_seed", single_harmonic_h, grid, cfg["solver.T"], e["h_seed"], e["h_samples"])
    params = _wrap("experiment", CounterexampleParams, e["delta"], e["eta"], e["M"], cfg["solver.T"], e["t0"],
                   cfg["thresholds.epsilon0"], e["delta_max"], h)
    _wrap("experiment.M", build_force, params, grid)
    a = _field(grid, cfg["seed"], e["a_amplitude"], None, "experiment.a_amplitude")

    def run():
        rep = run_growth_experiment(params, a, solver, sample_every=e["sample_every"],
                                    require_lower_bound=e["require_lower_bound"])
        d = rep.to_dict()
        summary = {"k": rep.k, "start": rep.start_norm, "end": rep.end_norm, "ratio": d["ratio"],
                   "u1_sup": rep.u1_sup_norm, "u21_end": rep.u21_end_norm, "exceeds_floor": rep.exceeds_floor,
                   "non_periodic": rep.non_periodic}
        d["series_file"] = "series.csv"
        return d, summary, {"series": _series_rows(rep.times, rep.series, "besov_s0_p2_sigma1"),
                            "snapshot": rep.final}

    return run


def cmd_estimates(cfg, grid, solver):
    from . import estimates as est

    e = _sub(cfg, "experiment")
    known = {"max_reg", "bilinear", "triple", "uniqueness", "paraproduct"}
    bad = [c for c in e["checks"] if c not in known]
    if bad:
        raise ConfigError("experiment.checks", f"unknown checks {bad}")
    if e["trials"] < est.MIN_TRIALS:
        raise ConfigError("experiment.trials", f"need at least {est.MIN_TRIALS}")
    seed, trials = cfg["seed"], e["trials"]
    if "bilinear" in e["checks"]:
        adm = est.bilinear_admissible(grid.dim, e["p"], e["q"], e["r"], e["r1"], e["sigma"])
        if not adm.ok:
            raise ConfigError("experiment", "inadmissible exponents: " + "; ".join(adm.failed))
    if "max_reg" in e["checks"]:
        r1 = e["r"] if e["r1"] is None else e["r1"]
        adm = est.max_reg_admissible(e["p"], e["sigma"], e["r"], r1)
        if not adm.ok:
            raise ConfigError("experiment", "inadmissible exponents: " + "; ".join(adm.failed))
    if "triple" in e["checks"] and not 0 < e["delta"] <= 0.25:
        raise ConfigError("experiment.delta", "the triple norm needs 0 < delta <= 1/4")
    if grid.dim != 2 and any(c in e["checks"] for c in ("triple", "uniqueness")):
        raise ConfigError("grid.dim", "triple and uniqueness checks need a 2D grid")

    def one(g):
        out = []
        for c in e["checks"]:
            if c == "max_reg":
                out.append(est.check_max_reg(NormSpec(e["p"], e["sigma"], e["s"], e["r"]), trials, seed, g, r1=e["r1"]))
            elif c == "bilinear":
                out.append(est.check_bilinear(g.dim, e["p"], e["q"], e["r"], e["sigma"], trials, seed, g, r1=e["r1"]))
            elif c == "triple":
                out.append(est.check_triple_norm_bilinear(e["delta"], trials, seed, g))
            elif c == "uniqueness":
                out.extend(est.check_uniqueness_bilinears(trials, seed, g))
            elif c == "paraproduct":
                out.append(est.paraproduct_ratios("T", max(trials, 100), seed, g if g.dim == 2 else None))
        return out

    def run():
        reports = one(grid)
        extra = {"ratios": {r.inequality_id: r for r in reports}}
        summary = {f"{r.inequality_id}_max": r.max_ratio for r in reports}
        report = {"reports": [r.to_dict() for r in reports]}
        if e["refinement"]:
            fine = Grid(grid.dim, grid.L, 2 * grid.N, grid.dealias_fraction)
            fine_reports = one(fine)
            report["refinement"] = {
                r.inequality_id: {"coarse": r.max_ratio, "fine": f.max_ratio,
                                  "quotient": f.max_ratio / r.max_ratio if r.max_ratio > 0 else None}
                for r, f in zip(reports, fine_reports)}
        return report, summary, extra

    return run


BUILDERS = {
    "norms": cmd_norms, "solve-ivp": cmd_solve_ivp, "solve-periodic": cmd_solve_periodic,
    "stability": cmd_stability, "counterexample": cmd_counterexample, "estimates": cmd_estimates,
}


# ---------------------------------------------------------------------------
# running and writing


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def _config_record(cfg: dict) -> dict:
    return {k: cfg[k] for k in sorted(cfg)}


def _error_code(exc: BaseException) -> int:
    if isinstance(exc, BlowupDetected):
        return EXIT_BLOWUP
    if isinstance(exc, NoContraction):
        return EXIT_NOCONTRACTION
    if isinstance(exc, EmptyBlockRange):
        return EXIT_EMPTYRANGE
    return EXIT_OTHER


def _error_record(exc: BaseException, cfg: dict) -> dict:
    rec = {"status": "error", "error": type(exc).__name__, "message": str(exc), "exit_code": _error_code(exc),
           "config": _config_record(cfg), "version": __version__}
    if isinstance(exc, BlowupDetected):
        rec["t"] = exc.t
    if isinstance(exc, NoContraction):
        rec["ratios"] = list(exc.ratios)
    if isinstance(exc, EmptyBlockRange):
        rec["required_box_length"] = exc.required_box_length
    return rec


def prepare(cfg: dict):
    """Validate everything and return a zero-argument compute closure."""
    grid = build_grid(cfg)
    solver = build_solver(cfg)
    return BUILDERS[cfg["command"]](cfg, grid, solver)


def execute(cfg: dict, out: Path, run=None) -> tuple[int, dict]:
    """Run one validated job, writing ``report.json`` (or ``error.json``) and artifacts into ``out``."""
    run = run or prepare(cfg)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report, summary, extra = run()
    except (BlowupDetected, NoContraction, EmptyBlockRange, TpnsError, ArithmeticError, RuntimeError) as exc:
        rec = _error_record(exc, cfg)
        dump_json(out / "error.json", rec)
        return rec["exit_code"], {"status": "error", "error": type(exc).__name__}
    doc = {"command": cfg["command"], "config": _config_record(cfg), "version": __version__,
           "status": "ok", "result": report}
    dump_json(out / "report.json", doc)
    if "series" in extra:
        with open(out / "series.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "norm_kind", "value"])
            for t, k, v in extra["series"]:
                w.writerow([repr(t), k, repr(v)])
    if "snapshot" in extra:
        write_snapshot(out / "final.bnsf", extra["snapshot"])
    for name, rep in extra.get("ratios", {}).items():
        rep.write_csv(out / f"ratios_{name}.csv")
    return EXIT_OK, {"status": "ok", **summary}


def _sweep_job(args):
    cfg, out = args
    try:
        code, summary = execute(cfg, Path(out))
    except ConfigError as exc:
        return EXIT_CONFIG, {"status": "config_error", "error": str(exc)}
    return code, summary


def plan_sweep(cfg: dict) -> tuple[list[str], list[tuple], str]:
    sw = _sub(cfg, "sweep")
    axes = sw["axes"]
    keys = sorted(axes)
    seen, tuples = set(), []
    for combo in itertools.product(*(axes[k] for k in keys)) if keys else []:
        marker = json.dumps(_jsonable(list(combo)))
        if marker not in seen:
            seen.add(marker)
            tuples.append(combo)
    if len(tuples) > sw["cap"]:
        raise ConfigError("sweep.cap", f"sweep has {len(tuples)} jobs; raise the cap to at least {len(tuples)}")
    return keys, tuples, sw["command"]


def run_sweep(cfg: dict, base_doc: dict, overrides: dict, out: Path) -> int:
    """One report directory per deduplicated tuple plus ``summary.csv``; all jobs validate first."""
    keys, tuples, inner = plan_sweep(cfg)
    inner_doc = {k: v for k, v in flatten(base_doc).items() if not k.startswith("sweep.") and k != "command"}
    inner_over = {k: v for k, v in overrides.items() if not k.startswith("sweep.")}
    jobs = []
    for i, combo in enumerate(tuples):
        sub_cfg = resolve_config(inner_doc, {**inner_over, **dict(zip(keys, combo))}, inner)
        prepare(sub_cfg)
        jobs.append((sub_cfg, str(out / f"run_{i:03d}")))
    out.mkdir(parents=True, exist_ok=True)
    n_jobs = max(1, cfg["sweep.jobs"])
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    scalar_keys = sorted({k for _, s in results for k in s if k != "status"})
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", *keys, "exit_code", "status", *scalar_keys])
        for i, (combo, (code, s)) in enumerate(zip(tuples, results)):
            w.writerow([f"run_{i:03d}", *combo, code, s.get("status"), *[_cell(s.get(k)) for k in scalar_keys]])
    dump_json(out / "sweep.json", {"config": _config_record(cfg), "version": __version__, "axes": keys,
                                   "runs": [{"run": f"run_{i:03d}", "params": dict(zip(keys, c)), "exit_code": r[0]}
                                            for i, (c, r) in enumerate(zip(tuples, results))]})
    return EXIT_OK if all(code == EXIT_OK for code, _ in results) else max(code for code, _ in results)


def _cell(v):
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tpns", description="Periodic Navier-Stokes experiments and diagnostics.")
    ap.add_argument("--version", action="version", version=f"tpns {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", "-c", help="YAML config file")
    ap.add_argument("--set", "-s", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    ap.add_argument("--output", "-o", help="output directory (overrides the output key)")
    ap.add_argument("--seed", type=int, help="random seed (overrides the seed key)")
    ap.add_argument("--jobs", "-j", type=int, help="parallel jobs for sweeps")
    return ap


def _load_doc(path) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError("--config", f"file {p} does not exist")
    try:
        doc = yaml.safe_load(p.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"invalid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("--config", "top level must be a mapping")
    return doc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = {k: v for k, v in _load_doc(args.config).items() if k != "command"}
        overrides = parse_overrides(args.set)
        if args.output:
            overrides["output"] = args.output
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.jobs is not None:
            overrides["sweep.jobs"] = args.jobs
        cfg = resolve_config(doc, overrides, args.command)
        out = Path(cfg["output"])
        if args.command == "sweep":
            inner_over = {k: v for k, v in overrides.items() if k != "output"}
            code = run_sweep(cfg, doc, inner_over, out)
            print(json.dumps({"status": "ok" if code == EXIT_OK else "error", "exit_code": code}, sort_keys=True))
            return code
        run = prepare(cfg)
    except ConfigError as exc:
        print(json.dumps({"status": "config_error", "path": exc.path, "message": exc.message}, sort_keys=True),
              file=sys.stderr)
        return EXIT_CONFIG
    code, summary = execute(cfg, out, run)
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
