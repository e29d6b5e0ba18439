"""Benchmark command line: solve single instances, run seeded trial sets,
compare against the truncated Rayleigh-flow baseline, export instances.

All randomness flows from explicit seeds; re-running a spec with the same
seeds reproduces every numeric output except the elapsed-time fields.
Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baseline import TrfmConfig, trfm_solve
from .core import BlockVector, problem_to_json
from .diagnostics import (
    TooFewPoints,
    fit_rate,
    iterate_distances,
    sparsity_level,
    summarize_trial_set,
)
from .instances import PRESETS, InstanceSpec, generate_sfda, sparse_uniform_x0
from .solver import SolverConfig, check_descent, solve, write_trace_csv

__all__ = ["main", "RunSpec"]

TRIAL_HEADER = ("method", "seed", "status", "iterations", "objective",
                "sparsity", "cpu_seconds", "residual")
PAIR_HEADER = ("seed", "objective_alg", "objective_base", "objective_delta",
               "sparsity_alg", "sparsity_base", "sparsity_delta",
               "iterations_alg", "iterations_base", "iterations_delta")

_SOLVER_KEYS = ("delta", "nu_bar", "inertia_scale", "nu_rule", "tau_rule",
                "max_iter", "step_tol", "seed", "w_convention")


class ConfigError(ValueError):
    """Bad flags or config file contents; maps to exit code 2."""


@dataclass
class RunSpec:
    """Resolved run description: command, instance, parameters, outputs."""

    command: str
    instance: str
    params: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    trials: int = 1
    seeds: list = field(default_factory=lambda: [0])
    out: str = "runs"
    fmt: str = "csv"
    baseline: str | None = None

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(**self.solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _parse_float_list(text: str) -> list:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}") from exc


def _parse_int_list(text: str) -> list:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sumratios",
        description="Sum-of-ratios solver benchmarks: solve, bench, compare, export.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("solve", "solve one instance and emit trace/summary/distances"),
        ("bench", "run seeded trials and aggregate a benchmark table"),
        ("compare", "paired per-seed comparison against a baseline"),
        ("export", "serialize an instance (and SFDA data) to files"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON file mirroring the run spec; flags override")
        p.add_argument("--instance", choices=("ep", "gep", "geps", "fqp"))
        p.add_argument("--preset", choices=tuple(PRESETS))
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--seeds", help="comma-separated seed list, one per trial")
        p.add_argument("--out")
        p.add_argument("--format", dest="fmt", choices=("csv", "json"))
        # instance parameters
        p.add_argument("--m", type=int, help="block count (ep)")
        p.add_argument("--gamma", type=float, help="ratio weight (ep)")
        p.add_argument("--x0", help="comma-separated start point (ep)")
        p.add_argument("--d", type=int, help="ambient dimension (gep/geps)")
        p.add_argument("--r", type=int, help="sparsity level (geps, trfm)")
        p.add_argument("--p1", type=int, help="class-1 sample count")
        p.add_argument("--p2", type=int, help="class-2 sample count")
        p.add_argument("--lam", type=float, help="cardinality penalty (gep)")
        p.add_argument("--dims", help="comma-separated block dims (fqp)")
        # solver parameters
        p.add_argument("--delta", type=float)
        p.add_argument("--nu-bar", dest="nu_bar", type=float)
        p.add_argument("--inertia", dest="inertia_scale", type=float)
        p.add_argument("--nu-rule", dest="nu_rule", choices=("scale", "cap"))
        p.add_argument("--tau-rule", dest="tau_rule",
                       help="'auto', 'sfda', or a fixed numeric value")
        p.add_argument("--max-iter", dest="max_iter", type=int)
        p.add_argument("--step-tol", dest="step_tol", type=float)
        p.add_argument("--w-convention", dest="w_convention",
                       choices=("step1", "section6"))
        p.add_argument("--baseline", choices=("trfm", "self"))
        if name == "export":
            p.add_argument("--data-out", dest="data_out",
                           help="directory for V_w.csv / V_b.csv matrix files")
    return parser


_INSTANCE_KEYS = ("m", "gamma", "x0", "d", "r", "p1", "p2", "lam", "dims", "preset")


def resolve_spec(ns: argparse.Namespace) -> RunSpec:
    """Merge defaults, config file and explicit flags into a RunSpec."""
    file_doc = {}
    if ns.config:
        try:
            file_doc = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc

    def pick(flag, key, default=None):
        if flag is not None:
            return flag
        return file_doc.get(key, default)

    instance = pick(ns.instance, "instance")
    if instance is None:
        raise ConfigError("--instance is required (or set it in the config file)")

    params = dict(file_doc.get("params", {}))
    for key in _INSTANCE_KEYS:
        val = getattr(ns, key, None)
        if val is not None:
            params[key] = val
    if isinstance(params.get("x0"), str):
        params["x0"] = _parse_float_list(params["x0"])
    if isinstance(params.get("dims"), str):
        params["dims"] = _parse_int_list(params["dims"])

    solver = dict(file_doc.get("solver", {}))
    for key in _SOLVER_KEYS:
        val = getattr(ns, key, None)
        if val is not None:
            solver[key] = val
    if isinstance(solver.get("tau_rule"), str):
        try:
            solver["tau_rule"] = float(solver["tau_rule"])
        except ValueError:
            pass  # named rule

    trials = pick(ns.trials, "trials", 1)
    if trials < 1:
        raise ConfigError("--trials must be >= 1")
    if ns.seeds is not None:
        seeds = _parse_int_list(ns.seeds)
    elif "seeds" in file_doc:
        seeds = list(file_doc["seeds"])
    else:
        base = pick(ns.seed, "seed", 0)
        seeds = [base + i for i in range(trials)]
    if len(seeds) != trials:
        raise ConfigError(f"{len(seeds)} seeds given for {trials} trials")

    return RunSpec(
        command=ns.command,
        instance=instance,
        params=params,
        solver=solver,
        trials=trials,
        seeds=seeds,
        out=pick(ns.out, "out", "runs"),
        fmt=pick(ns.fmt, "format", "csv"),
        baseline=pick(getattr(ns, "baseline", None), "baseline"),
    )


def _apply_preset(spec: RunSpec) -> dict:
    params = dict(spec.params)
    preset = params.pop("preset", None)
    if preset is not None and spec.instance in ("gep", "geps"):
        pr = PRESETS[preset]
        params.setdefault("d", pr.d)
        params.setdefault("r", pr.r)
        params.setdefault("p1", pr.p1)
        params.setdefault("p2", pr.p2)
        params.setdefault("lam", pr.lam)
    return params


def _sfda_defaults(spec: RunSpec, params: dict) -> dict:
    if spec.instance in ("gep", "geps"):
        missing = [k for k in ("d", "r", "p1", "p2") if k not in params]
        if missing:
            raise ConfigError(
                f"instance {spec.instance!r} needs --preset or explicit {missing}")
        if spec.instance == "gep" and "lam" not in params:
            raise ConfigError("instance 'gep' needs --lam or a preset")
        if not 1 <= params["r"] <= params["d"]:
            raise ConfigError(f"sparsity r={params['r']} incompatible with d={params['d']}")
    return params


def _default_solver(spec: RunSpec) -> dict:
    solver = dict(spec.solver)
    if spec.instance in ("gep", "geps"):
        # quadratic-ratio defaults: capped extrapolation, shortcut step rule
        solver.setdefault("nu_bar", 0.4999)
        solver.setdefault("nu_rule", "cap")
        solver.setdefault("tau_rule", "sfda")
    return solver


def _build_trial(spec: RunSpec, params: dict, seed: int):
    """Problem, start point, known solution and TRFM data for one trial."""
    if spec.instance == "ep":
        problem = InstanceSpec("ep", params).build()
        m = problem.m
        if params.get("x0") is not None:
            vals = params["x0"]
            if len(vals) != m:
                raise ConfigError(f"--x0 has {len(vals)} entries for m={m}")
            x0 = BlockVector([[v] for v in vals])
        else:
            rng = np.random.Generator(np.random.Philox(seed))
            x0 = BlockVector([[v] for v in rng.uniform(0.0, 10.0, size=m)])
        known = BlockVector([[1.0]] * m)
        return problem, x0, known, None
    if spec.instance in ("gep", "geps"):
        data = generate_sfda(params["d"], params["p1"], params["p2"], seed)
        if spec.instance == "gep":
            problem = InstanceSpec("gep", {"A": data.V_b, "B": data.V_w,
                                           "lam": params["lam"]}).build()
        else:
            problem = InstanceSpec("geps", {"A": data.V_b, "B": data.V_w,
                                            "r": params["r"]}).build()
        x0 = sparse_uniform_x0(params["d"], params["r"])
        return problem, x0, None, data
    if spec.instance == "fqp":
        dims = tuple(params.get("dims", (5, 5)))
        problem = InstanceSpec("fqp", {"dims": dims, "seed": seed}).build()
        rng = np.random.Generator(np.random.Philox(seed + 1))
        x0 = BlockVector([s.sample(rng) for s in problem.sets])
        return problem, x0, None, None
    raise ConfigError(f"unknown instance {spec.instance!r}")


def _result_entry(method: str, seed: int, res, config, known=None, rate=None) -> dict:
    entry = {
        "method": method,
        "seed": seed,
        "status": res.status,
        "iterations": int(res.iterations),
        "objective": float(res.objective),
        "sparsity": sparsity_level(res.x_final),
        "cpu_seconds": float(res.trace[-1].elapsed),
        "residual": float(res.residual),
        "rate": rate,
    }
    if known is not None:
        entry["distance_to_known"] = float(res.x_final.distance(known))
    if config is not None:
        report = check_descent(res.trace, config.delta, config.nu_bar_effective)
        entry["descent_ok"] = bool(report.ok)
    return entry


def _write_summary(spec: RunSpec, params: dict, solver: dict, results: list,
                   aggregate=None, verdict=None) -> Path:
    out_dir = Path(spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": spec.command,
        "instance": spec.instance,
        "params": {k: v for k, v in params.items() if not isinstance(v, np.ndarray)},
        "solver": solver,
        "seeds": [int(s) for s in spec.seeds],
        "results": results,
        "aggregate": aggregate,
        "verdict": verdict,
    }
    path = out_dir / "summary.json"
    path.write_text(json.dumps(doc, indent=2, default=float))
    return path


def _rate_or_none(res):
    try:
        fit = fit_rate(iterate_distances(res))
    except TooFewPoints:
        return None
    slope = None if math.isnan(fit.slope) else fit.slope
    r2 = None if math.isnan(fit.r_squared) else fit.r_squared
    return {"classification": fit.classification, "slope": slope,
            "r_squared": r2, "tail_start": fit.tail_start}


def run_solve(spec: RunSpec) -> int:
    params = _sfda_defaults(spec, _apply_preset(spec))
    solver = _default_solver(spec)
    spec = RunSpec(**{**spec.__dict__, "solver": solver})
    config = spec.solver_config()
    seed = spec.seeds[0]
    problem, x0, known, _ = _build_trial(spec, params, seed)
    res = solve(problem, x0, config, keep_iterates=True)
    out_dir = Path(spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trace_csv(res.trace, out_dir / "trace.csv")
    dists = iterate_distances(res)
    known_d = iterate_distances(res, known.flatten()) if known is not None else None
    with open(out_dir / "distances.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        if known_d is None:
            writer.writerow(("n", "dist_to_final"))
            writer.writerows(zip(range(len(dists)), dists))
        else:
            writer.writerow(("n", "dist_to_final", "dist_to_known"))
            writer.writerows(zip(range(len(dists)), dists, known_d))
    entry = _result_entry("algorithm", seed, res, config, known, _rate_or_none(res))
    _write_summary(spec, params, solver, [entry])
    print(f"{spec.instance}: {res.status} after {res.iterations} iterations, "
          f"objective {res.objective:.6g}, residual {res.residual:.2e}")
    return 0


def _bench_rows(spec: RunSpec, params: dict, config) -> tuple[list, dict, dict]:
    rows, per_method_results = [], {}
    for seed in spec.seeds:
        problem, x0, known, data = _build_trial(spec, params, seed)
        res = solve(problem, x0, config)
        rows.append(_result_entry("algorithm", seed, res, config, known))
        per_method_results.setdefault("algorithm", []).append(res)
        if spec.baseline == "trfm":
            if spec.instance != "geps":
                raise ConfigError("baseline 'trfm' applies to the geps instance only")
            tcfg = TrfmConfig(r=params["r"], max_iter=config.max_iter,
                              step_tol=config.step_tol)
            tres = trfm_solve(data.V_b, data.V_w, x0.blocks[0], tcfg)
            rows.append(_result_entry("trfm", seed, tres, None))
            per_method_results.setdefault("trfm", []).append(tres)
        elif spec.baseline == "self":
            res2 = solve(problem, x0, config)
            rows.append(_result_entry("self", seed, res2, config, known))
            per_method_results.setdefault("self", []).append(res2)
    aggregate = {method: summarize_trial_set(results)
                 for method, results in per_method_results.items()}
    return rows, per_method_results, aggregate


def run_bench(spec: RunSpec) -> int:
    if spec.instance not in ("gep", "geps"):
        raise ConfigError("bench supports the gep and geps instances")
    params = _sfda_defaults(spec, _apply_preset(spec))
    solver = _default_solver(spec)
    spec = RunSpec(**{**spec.__dict__, "solver": solver})
    config = spec.solver_config()
    rows, _, aggregate = _bench_rows(spec, params, config)
    out_dir = Path(spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "trials.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRIAL_HEADER)
        for row in rows:
            writer.writerow([row[k] for k in TRIAL_HEADER])
    with open(out_dir / "aggregate.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("method", "sparsity", "objective", "cpu_seconds",
                         "iterations", "trials"))
        for method, agg in aggregate.items():
            writer.writerow((method, agg["sparsity"], agg["objective"],
                             agg["cpu_seconds"], agg["iterations"], agg["trials"]))
    _write_summary(spec, params, solver, rows, aggregate=aggregate)
    for method, agg in aggregate.items():
        print(f"{method}: sparsity {agg['sparsity']}, objective {agg['objective']:.4f}, "
              f"cpu {agg['cpu_seconds']:.4f}s, iterations {agg['iterations']}")
    return 0


def run_compare(spec: RunSpec) -> int:
    if spec.instance != "geps":
        raise ConfigError("compare supports the geps instance")
    if spec.baseline is None:
        raise ConfigError("compare needs --baseline trfm or --baseline self")
    params = _sfda_defaults(spec, _apply_preset(spec))
    solver = _default_solver(spec)
    spec = RunSpec(**{**spec.__dict__, "solver": solver})
    config = spec.solver_config()
    rows, per_method, aggregate = _bench_rows(spec, params, config)
    base_name = spec.baseline
    alg = [r for r in rows if r["method"] == "algorithm"]
    base = [r for r in rows if r["method"] == base_name]
    pairs = []
    for a, b in zip(alg, base):
        pairs.append({
            "seed": a["seed"],
            "objective_alg": a["objective"], "objective_base": b["objective"],
            "objective_delta": a["objective"] - b["objective"],
            "sparsity_alg": a["sparsity"], "sparsity_base": b["sparsity"],
            "sparsity_delta": a["sparsity"] - b["sparsity"],
            "iterations_alg": a["iterations"], "iterations_base": b["iterations"],
            "iterations_delta": a["iterations"] - b["iterations"],
        })
    verdict = {
        "baseline": base_name,
        "mean_objective_delta": float(np.mean([p["objective_delta"] for p in pairs])),
        "mean_sparsity_delta": float(np.mean([p["sparsity_delta"] for p in pairs])),
        "mean_iterations_delta": float(np.mean([p["iterations_delta"] for p in pairs])),
    }
    verdict["objective_sign"] = ("algorithm" if verdict["mean_objective_delta"] > 0
                                 else "baseline" if verdict["mean_objective_delta"] < 0
                                 else "tie")
    out_dir = Path(spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "pairs.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PAIR_HEADER)
        for p in pairs:
            writer.writerow([p[k] for k in PAIR_HEADER])
    _write_summary(spec, params, solver, rows, aggregate=aggregate, verdict=verdict)
    print(f"mean objective delta (algorithm - {base_name}): "
          f"{verdict['mean_objective_delta']:+.6f} -> favors {verdict['objective_sign']}")
    return 0


def run_export(spec: RunSpec, data_out: str | None) -> int:
    params = _sfda_defaults(spec, _apply_preset(spec))
    seed = spec.seeds[0]
    problem, _, _, data = _build_trial(spec, params, seed)
    out = Path(spec.out)
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "problem.json"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(problem_to_json(problem), indent=2))
    if data_out is not None:
        if data is None:
            raise ConfigError("--data-out applies to gep/geps instances only")
        ddir = Path(data_out)
        ddir.mkdir(parents=True, exist_ok=True)
        np.savetxt(ddir / "V_w.csv", data.V_w, delimiter=",")
        np.savetxt(ddir / "V_b.csv", data.V_b, delimiter=",")
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        spec = resolve_spec(ns)
        if ns.command == "solve":
            return run_solve(spec)
        if ns.command == "bench":
            return run_bench(spec)
        if ns.command == "compare":
            return run_compare(spec)
        if ns.command == "export":
            return run_export(spec, getattr(ns, "data_out", None))
        raise ConfigError(f"unknown command {ns.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 1
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
