"""Command-line front end: ``cccp solve | validate | beamform``.

Exit codes: 0 success, 1 bad input, 2 infeasible (or validation below
target), 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import logging
import math
import os
import sys
from importlib import resources

from . import __version__
from .beamform import BeamformScenario, run_experiment, run_joint_vs_individual
from .errors import CCCPError, SolverFailure
from .io import (SchemaError, dumps, finite_or_none, load_problem, result_header,
                 solution_dict, solution_z, write_atomic)
from .reformulate import (IndividualCCCP, JointCCCP, solve_individual, solve_joint_bounds,
                          solve_joint_grid, solve_joint_lower, solve_joint_upper)
from .socp import OPTIMAL, PRIMAL_INFEASIBLE
from .validate import estimate_individual, estimate_joint

log = logging.getLogger("cccp")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3
METHODS = ("individual", "joint-lower", "joint-upper", "joint-bounds", "joint-grid")
SEED_ENV = "CCCP_SEED"


def resolve_seed(default=0):
    """``CCCP_SEED`` when set, otherwise ``default``."""
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return int(default)
    try:
        return int(env)
    except ValueError:
        raise SchemaError(SEED_ENV, f"not an integer: {env!r}") from None


def _status_code(statuses):
    if all(s == OPTIMAL for s in statuses):
        return EXIT_OK
    if any(s == PRIMAL_INFEASIBLE for s in statuses):
        return EXIT_INFEASIBLE
    return EXIT_SOLVER


def _diag(res):
    if res is None:
        return None
    pres, dres, gap = res.residuals
    return {"status": res.status, "iterations": int(res.iterations),
            "primal_residual": finite_or_none(pres), "dual_residual": finite_or_none(dres),
            "gap": finite_or_none(gap)}


def _solution_block(sol):
    return {"solution": solution_dict(sol.z, sol.y), "objective": finite_or_none(sol.objective)
            if sol.z is not None else None, "diagnostics": _diag(sol.result)}


def run_solve(prob, method, tangents=10, grid_step=0.05):
    """Solve ``prob`` with ``method``; returns ``(result document, exit code)``."""
    joint = isinstance(prob, JointCCCP)
    if method == "individual":
        if joint:
            raise SchemaError("kind", "method 'individual' needs an individual problem")
        sol = solve_individual(prob)
        doc = _solution_block(sol)
        return doc, _status_code([sol.status])
    if not joint:
        raise SchemaError("kind", f"method {method!r} needs a joint problem")
    if method == "joint-grid":
        sol = solve_joint_grid(prob, grid_step)
        doc = _solution_block(sol)
        doc["grid_step"] = grid_step
        if sol.z is None:
            return doc, EXIT_INFEASIBLE if sol.status in (OPTIMAL, PRIMAL_INFEASIBLE) else EXIT_SOLVER
        return doc, _status_code([sol.status])
    if method in ("joint-lower", "joint-upper"):
        fn = solve_joint_lower if method == "joint-lower" else solve_joint_upper
        sol = fn(prob, tangents)
        doc = _solution_block(sol)
        doc["tangents"] = tangents
        return doc, _status_code([sol.status])
    br = solve_joint_bounds(prob, tangents)
    doc = _solution_block(br.upper)
    doc["bounds"] = {
        "N": br.N,
        "lower": finite_or_none(br.lower.result.objective) if br.lower.z is not None else None,
        "upper": finite_or_none(br.upper.result.objective) if br.upper.z is not None else None,
        "gap": finite_or_none(br.gap),
        "upper_valid": bool(br.upper_valid),
        "upper_literal": bool(br.upper_literal),
        "lower_solution": solution_dict(br.lower.z, br.lower.y),
        "lower_diagnostics": _diag(br.lower.result),
    }
    return doc, _status_code([br.lower.status, br.upper.status])


def cmd_solve(args) -> int:
    prob, doc = load_problem(args.file)
    seed = resolve_seed(doc.get("seed", 0))
    if args.tangents < 2:
        raise SchemaError("--tangents", "need at least 2 approximation points")
    out, code = run_solve(prob, args.method, args.tangents, args.grid_step)
    result = result_header(args.method, seed)
    result["kind"] = doc["kind"]
    result.update(out)
    result["validation"] = None
    if args.validate_samples and result["solution"] is not None:
        rep = _validate(prob, solution_z(result["solution"]), args.validate_samples, seed)
        result["validation"] = rep.to_dict()
    text = dumps(result)
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return code


def _validate(prob, z, samples, seed):
    if isinstance(prob, IndividualCCCP):
        return estimate_individual(prob, z, samples, seed)
    return estimate_joint(prob, z, samples, seed)


def cmd_validate(args) -> int:
    prob, doc = load_problem(args.file)
    try:
        with open(args.solution, encoding="utf-8") as fh:
            res = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError("--solution", str(exc)) from exc
    sol = res.get("solution") if isinstance(res, dict) else None
    if not sol:
        raise SchemaError("solution", "result file holds no solution")
    z = solution_z(sol)
    if z.shape != (prob.n,):
        raise SchemaError("solution.z_re", f"length {z.shape[0]} does not match n={prob.n}")
    seed = resolve_seed(args.seed if args.seed is not None else res.get("seed", 0))
    rep = _validate(prob, z, args.samples, seed)
    sys.stdout.write(dumps(rep.to_dict()))
    return EXIT_OK if rep.passed else EXIT_INFEASIBLE


# -- beamforming ------------------------------------------------------------------

CSV_COLUMNS = ("snr_db", "method", "mean_sinr_db", "std_sinr_db", "runs", "failures")


def default_config(experiment: str) -> dict:
    text = resources.files("cccp").joinpath("data", f"{experiment}.json").read_text(encoding="utf-8")
    return json.loads(text)


def _num(x):
    return "nan" if not math.isfinite(x) else repr(float(x))


def experiment_csv(result) -> str:
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for snr, method, st in result.rows():
        w.writerow([_num(snr), method, _num(st.mean_sinr_db), _num(st.std_sinr_db), st.runs, st.failures])
    return buf.getvalue()


def run_beamform(config: dict, experiment: str, out_dir, runs=None):
    """Run one experiment per INR in ``config``; returns the written file names."""
    cfg = dict(config)
    cfg.pop("experiment", None)
    inrs = cfg.pop("inr_db", None)
    if runs is not None:
        cfg["runs"] = int(runs)
    cfg["seed"] = resolve_seed(cfg.get("seed", 0))
    try:
        base = BeamformScenario.from_config(cfg)
    except (CCCPError, KeyError, TypeError) as exc:
        raise SchemaError("config", str(exc)) from exc
    if inrs is None:
        inrs = sorted({inr for _, inr in base.interferers})
    if isinstance(inrs, (int, float)):
        inrs = [inrs]
    if experiment == "fig2" and base.alpha is None:
        raise SchemaError("config.alpha", "the joint experiment needs alpha")
    files = []
    scenarios = []
    for inr in inrs:
        sc = base.with_inr(float(inr))
        res = run_experiment(sc) if experiment == "fig1" else run_joint_vs_individual(sc)
        name = f"{experiment}_inr{float(inr):g}db.csv"
        write_atomic(os.path.join(out_dir, name), experiment_csv(res))
        files.append(name)
        scenarios.append(sc.to_config())
    manifest = {"tool": "cccp", "version": __version__, "experiment": experiment,
                "seed": base.seed, "seed_from_env": os.environ.get(SEED_ENV) not in (None, ""),
                "inr_db": [float(v) for v in inrs], "files": files, "scenarios": scenarios,
                "columns": list(CSV_COLUMNS)}
    write_atomic(os.path.join(out_dir, f"{experiment}_manifest.json"), dumps(manifest))
    return files


def cmd_beamform(args) -> int:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError("--config", str(exc)) from exc
        if not isinstance(config, dict):
            raise SchemaError("config", "expected a JSON object")
    else:
        config = default_config(args.experiment)
    files = run_beamform(config, args.experiment, args.out, args.runs)
    for name in files:
        print(os.path.join(args.out, name))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cccp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"cccp {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve a problem file")
    sp.add_argument("file")
    sp.add_argument("--method", choices=METHODS, default=None,
                    help="default: individual for individual problems, joint-bounds otherwise")
    sp.add_argument("--tangents", type=int, default=10, help="approximation points N")
    sp.add_argument("--grid-step", type=float, default=0.05)
    sp.add_argument("--validate-samples", type=int, default=0,
                    help="attach a Monte-Carlo validation report with this many samples")
    sp.add_argument("--out", help="result file (default: standard output)")
    sp.set_defaults(func=cmd_solve)

    vp = sub.add_parser("validate", help="Monte-Carlo check of a solution")
    vp.add_argument("file")
    vp.add_argument("--solution", required=True)
    vp.add_argument("--samples", type=int, default=100_000)
    vp.add_argument("--seed", type=int, default=None)
    vp.set_defaults(func=cmd_validate)

    bp = sub.add_parser("beamform", help="run a beamforming experiment")
    bp.add_argument("--config")
    bp.add_argument("--experiment", choices=("fig1", "fig2"), default="fig1")
    bp.add_argument("--out", default=".")
    bp.add_argument("--runs", type=int, default=None, help="override the number of runs")
    bp.set_defaults(func=cmd_beamform)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve" and args.method is None:
            _, doc = load_problem(args.file)
            args.method = "individual" if doc["kind"] == "individual" else "joint-bounds"
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (CCCPError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
