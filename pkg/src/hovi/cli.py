"""Command-line experiment runner.

Each experiment is one JSON document::

    {
      "mode": "run" | "sweep" | "verify" | "continuous" | "compare",
      "problem": {"name": "modified_forsaken", "alpha": null},
      "z0": [0.5, 0.5],
      "seed": 0,
      "solver": {"algorithm": "hoeg_plus_l2", "s": 1, "K": 1000},
      "solvers": [...],          # compare: solver dicts with "label", optional "problem"
      "sweep": {"grid": {...}},  # sweep: lists of solver-field values, base in "solver"
      "verify": {...},           # verify: condition, q, p, region, samples, s, L
      "continuous": {...},       # continuous: s, t_end, dt, record_every, ...
      "outputs": {"dir": "out", "prefix": "run"}
    }
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import rate_fit, theorem_rho_bound, verify_comonotone, verify_monotone, verify_weak_mvi
from .continuous import ContinuousConfig, integrate_re_ds, min_norm_rate
from .errors import (
    CatalogError,
    ConfigError,
    DomainError,
    HoviError,
    InputError,
    IntegrationError,
    PreconditionError,
    SubproblemError,
)
from .geometry import dual_norm
from .problems import PROBLEM_NAMES, make_problem
from .solvers import SolverConfig, Trace, run
from .subproblems import SubproblemSettings

log = logging.getLogger("hovi")

MODES = ("run", "sweep", "verify", "continuous", "compare")
TRACE_HEADER = "k,lambda,norm_F_half,norm_F_full,displacement,best_so_far"
CONT_HEADER = "t,norm_F,min_norm"
_SOLVER_KEYS = {"algorithm", "s", "p", "L", "nu", "K", "target_eps", "lambda_rule", "safety_factor",
                "subproblem", "label", "problem"}
_TOP_KEYS = {"mode", "problem", "z0", "seed", "solver", "solvers", "sweep", "verify", "continuous",
             "outputs", "description", "reference_point", "converged_tol"}
# running-min |F|^2 below this counts as converged to round-off for the rate fit
RATE_FLOOR = 1e-24

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


class SolverFailure(HoviError):
    pass


def fmt(x) -> str:
    return f"{float(x):.17g}"


@dataclass
class ExperimentConfig:
    mode: str
    problem: dict
    z0: list | None
    seed: int = 0
    solver: dict | None = None
    solvers: list = field(default_factory=list)
    sweep: dict | None = None
    verify: dict | None = None
    continuous: dict | None = None
    outputs: dict = field(default_factory=dict)
    reference_point: list | None = None
    converged_tol: float = 1e-3
    raw: dict = field(default_factory=dict, repr=False)


def _need(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _check_problem(spec, where="problem"):
    _need(isinstance(spec, dict) and "name" in spec, f"{where}: expected an object with a 'name'")
    _need(spec["name"] in PROBLEM_NAMES, f"{where}: unknown problem {spec['name']!r}")
    extra = set(spec) - {"name", "alpha", "matrix", "dim"}
    _need(not extra, f"{where}: unknown keys {sorted(extra)}")


def _check_solver(spec, where):
    _need(isinstance(spec, dict), f"{where}: expected an object")
    extra = set(spec) - _SOLVER_KEYS
    _need(not extra, f"{where}: unknown keys {sorted(extra)}")
    _need("algorithm" in spec, f"{where}: 'algorithm' is required")
    if "problem" in spec:
        _check_problem(spec["problem"], f"{where}.problem")
    build_solver(spec)  # runs the SolverConfig invariants


def validate(doc: dict) -> ExperimentConfig:
    """Schema and invariant check; raises ConfigError."""
    _need(isinstance(doc, dict), "config must be a JSON object")
    extra = set(doc) - _TOP_KEYS
    _need(not extra, f"unknown top-level keys {sorted(extra)}")
    mode = doc.get("mode")
    _need(mode in MODES, f"mode must be one of {MODES}")
    _check_problem(doc.get("problem"))
    z0 = doc.get("z0")
    if z0 is not None:
        _need(isinstance(z0, list) and all(isinstance(v, (int, float)) for v in z0), "z0 must be a list of numbers")
    _need(mode == "verify" or z0 is not None, "z0 is required")
    seed = doc.get("seed", 0)
    _need(isinstance(seed, int), "seed must be an integer")
    if mode in ("run", "sweep"):
        _check_solver(doc.get("solver"), "solver")
    if mode == "sweep":
        grid = (doc.get("sweep") or {}).get("grid")
        _need(isinstance(grid, dict) and grid, "sweep.grid must be a non-empty object")
        for key, values in grid.items():
            _need(key in _SOLVER_KEYS - {"label", "problem", "subproblem"}, f"sweep.grid: unknown field {key!r}")
            _need(isinstance(values, list) and values, f"sweep.grid.{key} must be a non-empty list")
        for combo in _grid(grid):
            _check_solver({**doc["solver"], **combo}, f"sweep point {combo}")
    if mode == "compare":
        solvers = doc.get("solvers")
        _need(isinstance(solvers, list) and solvers, "compare needs a non-empty 'solvers' list")
        labels = [_label(sv, i) for i, sv in enumerate(solvers)]
        _need(len(set(labels)) == len(labels), "solver labels must be unique")
        for i, sv in enumerate(solvers):
            _check_solver(sv, f"solvers[{i}]")
    if mode == "verify":
        v = doc.get("verify") or {}
        _need(v.get("condition", "weak_mvi") in ("weak_mvi", "monotone", "comonotone"),
              "verify.condition must be weak_mvi, monotone or comonotone")
        _need(int(v.get("samples", 2)) >= 2, "verify.samples must be >= 2")
    if mode == "continuous":
        c = doc.get("continuous") or {}
        try:
            ContinuousConfig(**{k: c[k] for k in c if k in ContinuousConfig.__dataclass_fields__})
        except (TypeError, InputError) as err:
            raise ConfigError(f"continuous: {err}") from None
        extra = set(c) - set(ContinuousConfig.__dataclass_fields__)
        _need(not extra, f"continuous: unknown keys {sorted(extra)}")
    out = doc.get("outputs", {})
    _need(isinstance(out, dict), "outputs must be an object")
    return ExperimentConfig(
        mode=mode, problem=doc["problem"], z0=z0, seed=seed, solver=doc.get("solver"),
        solvers=doc.get("solvers") or [], sweep=doc.get("sweep"), verify=doc.get("verify"),
        continuous=doc.get("continuous"), outputs=out, reference_point=doc.get("reference_point"),
        converged_tol=float(doc.get("converged_tol", 1e-3)), raw=doc,
    )


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed JSON: {err}") from None
    return validate(doc)


def build_solver(spec: dict, seed: int = 0) -> SolverConfig:
    kw = {k: v for k, v in spec.items() if k not in ("label", "problem", "subproblem")}
    sub = spec.get("subproblem") or {}
    try:
        settings = SubproblemSettings(**sub)
        return SolverConfig(subproblem=settings, seed=seed, **kw)
    except (TypeError, DomainError) as err:
        raise ConfigError(f"solver: {err}") from None


def build_problem(spec: dict):
    matrix = spec.get("matrix")
    return make_problem(spec["name"], alpha=spec.get("alpha"), matrix=matrix, dim=int(spec.get("dim", 2)))


def _label(spec, i):
    return spec.get("label") or f"{spec['algorithm']}_s{spec.get('s', 1)}_{i}"


def _grid(grid):
    keys = sorted(grid)
    for values in itertools.product(*(grid[k] for k in keys)):
        yield dict(zip(keys, values))


# ---------------------------------------------------------------------------
# writers

def write_trace_csv(trace: Trace, path: Path):
    lines = [TRACE_HEADER]
    best = math.inf
    for r in trace.records:
        best = min(best, r.norm_half)
        lines.append(",".join([str(r.k), fmt(r.lam), fmt(r.norm_half), fmt(r.norm_full),
                               fmt(r.displacement), fmt(best)]))
    path.write_text("\n".join(lines) + "\n")


def trace_summary(trace: Trace, oracle) -> dict:
    p = trace.config.p
    final = trace.final_point
    final_norm = dual_norm(oracle.eval(final), p) if np.all(np.isfinite(final)) else math.inf
    series = [(r.k, r.norm_half**2) for r in trace.records]
    try:
        slope = rate_fit(series, floor=RATE_FLOOR)
    except InputError:
        slope = None
    if slope is not None and not math.isfinite(slope):
        slope = None if math.isnan(slope) else "-inf"
    return {
        "algorithm": trace.algorithm,
        "s": trace.config.s,
        "p": trace.config.p,
        "L": trace.L,
        "nu": trace.config.nu,
        "final_norm": _json_num(final_norm),
        "best_norm": _json_num(trace.best_norm),
        "iterations": trace.iterations,
        "stop_reason": trace.stop_reason,
        "rate_slope": slope,
        "output": [_json_num(v) for v in trace.output],
        "outside_box": trace.outside_box,
    }


def _json_num(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _write_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(cfg: ExperimentConfig, override):
    d = Path(override or cfg.outputs.get("dir", "out"))
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ConfigError(f"output directory not writable: {err}") from None
    return d


def _prefix(cfg):
    return cfg.outputs.get("prefix", cfg.mode)


def _solve(spec, cfg, seed):
    entry = build_problem(spec.get("problem", cfg.problem))
    z0 = np.asarray(cfg.z0, dtype=float)
    if z0.size != entry.oracle.dim:
        raise ConfigError(f"z0 has dimension {z0.size}, problem {entry.name} has {entry.oracle.dim}")
    trace = run(entry.oracle, z0, build_solver(spec, seed), box=entry.box)
    return entry, trace


# ---------------------------------------------------------------------------
# commands

def cmd_run(cfg: ExperimentConfig, out=None, seed=None) -> int:
    """Single solver run: TraceCSV plus a JSON summary."""
    seed = cfg.seed if seed is None else seed
    d = _out_dir(cfg, out)
    entry, trace = _solve(cfg.solver, cfg, seed)
    write_trace_csv(trace, d / f"{_prefix(cfg)}.csv")
    summary = trace_summary(trace, entry.oracle)
    _write_json(summary, d / f"{_prefix(cfg)}.json")
    log.info("%s: best |F| %.3e after %d iterations (%s)", trace.algorithm, trace.best_norm,
             trace.iterations, trace.stop_reason)
    if trace.stop_reason == "diverged":
        raise SolverFailure("iterates diverged")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, out=None, seed=None) -> int:
    seed = cfg.seed if seed is None else seed
    d = _out_dir(cfg, out)
    rows, failed = [], False
    for combo in _grid(cfg.sweep["grid"]):
        spec = {**cfg.solver, **combo}
        tag = "_".join(f"{k}{v:g}" if isinstance(v, (int, float)) else f"{k}{v}" for k, v in combo.items())
        entry, trace = _solve(spec, cfg, seed)
        write_trace_csv(trace, d / f"{_prefix(cfg)}_{tag}.csv")
        rows.append({"params": combo, **trace_summary(trace, entry.oracle)})
        failed |= trace.stop_reason == "diverged"
    _write_json({"runs": rows}, d / f"{_prefix(cfg)}.json")
    if failed:
        raise SolverFailure("at least one sweep point diverged")
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, out=None, seed=None) -> int:
    seed = cfg.seed if seed is None else seed
    d = _out_dir(cfg, out)
    results = []
    for i, spec in enumerate(cfg.solvers):
        entry, trace = _solve(spec, cfg, seed)
        label = _label(spec, i)
        write_trace_csv(trace, d / f"{_prefix(cfg)}_{label}.csv")
        results.append((label, entry, trace))
    matched = min(t.iterations for _, _, t in results)
    table = []
    for label, entry, trace in results:
        row = {"label": label, **trace_summary(trace, entry.oracle),
               "best_norm_matched": _json_num(trace.half_norms[:matched].min()) if matched else None,
               "converged": bool(trace.best_norm <= cfg.converged_tol)}
        if cfg.reference_point is not None:
            row["distance_to_reference"] = float(np.linalg.norm(trace.output - np.asarray(cfg.reference_point)))
        table.append(row)
    ranked = sorted(table, key=lambda r: float(r["best_norm_matched"]))
    _write_json({"matched_iterations": matched, "solvers": table, "worst": ranked[-1]["label"]},
                d / f"{_prefix(cfg)}.json")
    if any(t.stop_reason == "diverged" for _, _, t in results):
        raise SolverFailure("a compared solver diverged")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out=None, seed=None) -> int:
    seed = cfg.seed if seed is None else seed
    d = _out_dir(cfg, out)
    v = cfg.verify or {}
    entry = build_problem(cfg.problem)
    condition = v.get("condition", "weak_mvi")
    s, p = int(v.get("s", 1)), float(v.get("p", 2.0))
    region = v.get("region")
    region = (np.asarray(region[0], float), np.asarray(region[1], float)) if region else entry.box
    samples = int(v.get("samples", 10_000))
    if region is None:
        raise ConfigError("verify needs a region (the problem has no reference box)")
    if condition == "weak_mvi":
        z_star = v.get("z_star")
        if z_star is None:
            z_star = entry.z_star
        if z_star is None:
            raise PreconditionError(f"{entry.name} has no known solution; supply verify.z_star")
        report = verify_weak_mvi(entry.oracle, z_star, v.get("q"), p, region, samples, seed, s=s)
    elif condition == "monotone":
        report = verify_monotone(entry.oracle, region, samples, seed)
    else:
        report = verify_comonotone(entry.oracle, region, samples, seed, p=p)
    doc = report.to_dict()
    doc["problem"] = entry.name
    if condition == "weak_mvi":
        L = float(v["L"]) if "L" in v else entry.declared_L(s, p)
        algorithm = "hoeg_plus_l2" if p == 2.0 else "lp_hoeg_plus"
        bounds = theorem_rho_bound(s, p, L, algorithm)
        rho_max = bounds.rho_max_balanced if p == 2.0 else bounds.rho_max_lp
        report.verdict_against_bound = bool(report.estimated_rho < rho_max)
        doc["verdict_against_bound"] = report.verdict_against_bound
        doc["theorem_bounds"] = bounds.to_dict()
        doc["rho_max"] = rho_max
    _write_json(doc, d / f"{_prefix(cfg)}.json")
    log.info("%s on %s: estimated rho %.6g", condition, entry.name, report.estimated_rho)
    return EXIT_OK


def cmd_continuous(cfg: ExperimentConfig, out=None, seed=None) -> int:
    d = _out_dir(cfg, out)
    entry = build_problem(cfg.problem)
    ccfg = ContinuousConfig(**(cfg.continuous or {}))
    traj = integrate_re_ds(entry.oracle, np.asarray(cfg.z0, dtype=float), ccfg)
    lines = [CONT_HEADER]
    for smp, (_, m) in zip(traj.samples, traj.running_min_norm):
        lines.append(f"{fmt(smp.t)},{fmt(smp.norm_F)},{fmt(m)}")
    (d / f"{_prefix(cfg)}.csv").write_text("\n".join(lines) + "\n")
    try:
        slope = min_norm_rate(traj)
    except InputError:
        slope = None
    _write_json({"problem": entry.name, "s": ccfg.s, "rate_slope": slope, "stop_reason": traj.stop_reason,
                 "final_t": traj.samples[-1].t, "final_norm": traj.samples[-1].norm_F},
                d / f"{_prefix(cfg)}.json")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare,
            "verify": cmd_verify, "continuous": cmd_continuous}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hovi", description="Higher-order VI solvers: experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in MODES:
        sp = sub.add_parser(name, help=f"{name} an experiment config")
        sp.add_argument("--config", required=True, help="path to a JSON experiment config")
        sp.add_argument("--out", help="output directory (overrides outputs.dir)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--quiet", action="store_true", help="suppress progress messages")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.command == "compare" and cfg.mode == "run":
            cfg.solvers = [cfg.solver]
        elif args.command != cfg.mode:
            raise ConfigError(f"config mode is {cfg.mode!r}, not {args.command!r}")
        return COMMANDS[args.command](cfg, args.out, args.seed)
    except (ConfigError, CatalogError, InputError, PreconditionError, DomainError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SubproblemError, IntegrationError, SolverFailure) as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
