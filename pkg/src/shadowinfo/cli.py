"""Command-line front end.

Every command prints exactly one JSON report on stdout, also on failure, and
writes human-readable detail to stderr.  Exit codes:

    0 success, 1 primal infeasible, 2 unbounded, 3 invalid input,
    4 verification failure, 5 numerical failure
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import lpcore
from .dynprog import dual_recursion, primal_recursion, verify_dual_dp, verify_primal_dp
from .errors import (
    ImproperFunction,
    ImproperRecursion,
    LpNumericalFailure,
    NotInDomain,
    ParseError,
    SampleEvaluationFailure,
    ShadowInfoError,
    ValidationError,
)
from .lpcore import LpStatus
from .polycalc import conjugate, evaluate
from .problemfile import load_pair, load_problem
from .shadow import solve_dual, solve_primal, subgradient_inequality_sample, verify_shadow_price

log = logging.getLogger("shadowinfo")

EXIT_OK, EXIT_INFEASIBLE, EXIT_UNBOUNDED, EXIT_INVALID, EXIT_VERIFY, EXIT_NUMERICAL = range(6)
COMMANDS = ("validate", "solve", "shadow", "dp", "dual-dp", "verify", "conj")
_STATUS_EXIT = {
    LpStatus.OPTIMAL: EXIT_OK,
    LpStatus.INFEASIBLE: EXIT_INFEASIBLE,
    LpStatus.UNBOUNDED: EXIT_UNBOUNDED,
    LpStatus.NUMERICAL_FAILURE: EXIT_NUMERICAL,
}


class _Stop(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def jsonable(obj):
    """Plain JSON types only; infinities become the strings "inf" / "-inf"."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def bundled_instances() -> list[str]:
    return sorted(p.name for p in resources.files("shadowinfo").joinpath("data").iterdir() if p.name.endswith(".json"))


def resolve_path(name: str) -> Path:
    """A file on disk, or the name of a bundled instance (with or without .json)."""
    path = Path(name)
    if path.exists():
        return path
    data = resources.files("shadowinfo").joinpath("data")
    for candidate in (name, f"{name}.json"):
        p = data.joinpath(candidate)
        if p.is_file():
            return Path(str(p))
    return path


def sidecar_path(path: Path) -> Path:
    """Default (x, v) sidecar of a problem file: INST-A.json -> INST-A.pair.json."""
    return path.with_name(path.name.removesuffix(".json") + ".pair.json")


def _load(args, report):
    path = resolve_path(args.problem)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ParseError(str(exc), str(path)) from exc
    report["instance"] = {"path": str(path), "digest": "sha256:" + hashlib.sha256(raw).hexdigest()}
    data = load_problem(path)
    program = data.to_program()
    report["instance"].update(
        name=data.name,
        stages=program.T + 1,
        dims=list(program.dims),
        scenarios=program.space.num_scenarios,
    )
    return data, program


def _primal_or_stop(program, report):
    pr = solve_primal(program)
    report["primal"] = pr.to_dict()
    report["phi0"] = pr.value
    if pr.status is not LpStatus.OPTIMAL:
        code = _STATUS_EXIT[pr.status]
        raise _Stop(code, f"primal problem is {pr.status.value}")
    return pr


def _check_gap(dr, args):
    if dr.status is not LpStatus.OPTIMAL:
        raise _Stop(_STATUS_EXIT[dr.status], f"dual problem is {dr.status.value}")
    if not dr.gap <= args.tol_gap:
        raise _Stop(EXIT_VERIFY, f"duality gap {dr.gap:.3e} exceeds {args.tol_gap:g}")


def cmd_validate(args, report):
    _, program = _load(args, report)
    for s, h in enumerate(program.integrands):
        ok, why = h.properness
        if not ok:
            raise ValidationError(f"integrand of scenario {program.space.ids[s]} is improper: {why}")
    report["valid"] = True


def cmd_solve(args, report):
    _, program = _load(args, report)
    pr = solve_primal(program)
    report["primal"] = pr.to_dict()
    report["phi0"] = pr.value
    if pr.certificate_check is not None and not pr.certificate_check["ok"]:
        raise _Stop(EXIT_NUMERICAL, "solver certificate failed independent verification")
    if pr.status is not LpStatus.OPTIMAL:
        raise _Stop(_STATUS_EXIT[pr.status], f"primal problem is {pr.status.value}")
    report["x"] = pr.x.flat().tolist()


def cmd_shadow(args, report):
    _, program = _load(args, report)
    pr = _primal_or_stop(program, report)
    dr = solve_dual(program, pr.value)
    report.update(dual_value=dr.value, gap=dr.gap, dual=dr.to_dict())
    _check_gap(dr, args)
    report["shadow_price"] = dr.v.flat().tolist()
    cert = verify_shadow_price(program, pr.x, dr.v, tol=args.tol_gap)
    sample = subgradient_inequality_sample(program, dr.v, samples=args.samples, seed=args.seed)
    report["certificate"] = cert.to_dict()
    report["subgradient_sample"] = sample.to_dict()
    if not cert.passed:
        raise _Stop(EXIT_VERIFY, "shadow-price certificate failed")
    if not sample.passed:
        raise _Stop(EXIT_VERIFY, f"subgradient inequality violated (worst margin {sample.worst_margin:.3e})")


def cmd_dp(args, report):
    _, program = _load(args, report)
    table = primal_recursion(program, strict_lineality=args.strict_lineality)
    report["lineality"] = table.lineality.to_dict() if table.lineality else None
    report["recursion_value"] = table.value
    pr = _primal_or_stop(program, report)
    rep = verify_primal_dp(table, pr.x, phi0=pr.value)
    report["primal_dp"] = rep.to_dict()
    if abs(table.value - pr.value) > args.tol_gap or not rep.optimal:
        raise _Stop(EXIT_VERIFY, "primal recursion does not certify the LP optimum")


def cmd_dual_dp(args, report):
    _, program = _load(args, report)
    table = dual_recursion(program)
    pr = _primal_or_stop(program, report)
    dr = solve_dual(program, pr.value)
    report.update(dual_value=dr.value, gap=dr.gap)
    _check_gap(dr, args)
    report["shadow_price"] = dr.v.flat().tolist()
    rep = verify_dual_dp(table, pr.x, dr.v, pr.value)
    report["dual_dp"] = rep.to_dict()
    if not (rep.dual_optimal and rep.jointly_optimal):
        raise _Stop(EXIT_VERIFY, "dual recursion does not certify the LP optima")


def cmd_verify(args, report):
    _, program = _load(args, report)
    pair = Path(args.pair) if args.pair else sidecar_path(resolve_path(args.problem))
    report["pair"] = str(pair)
    x, v = load_pair(pair, program.dims, program.space.num_scenarios)
    phi0 = solve_primal(program).value
    report["phi0"] = phi0
    cert = verify_shadow_price(program, x, v, tol=args.tol_gap)
    report["certificate"] = cert.to_dict()
    report["primal_dp"] = verify_primal_dp(primal_recursion(program, strict_lineality=args.strict_lineality), x, phi0=phi0).to_dict()
    report["dual_dp"] = verify_dual_dp(dual_recursion(program), x, v, phi0).to_dict()
    ok = cert.passed and report["primal_dp"]["optimal"] and report["dual_dp"]["jointly_optimal"]
    report["verified"] = bool(ok)
    if not ok:
        raise _Stop(EXIT_VERIFY, "supplied pair is not an optimal primal/dual pair")


def cmd_conj(args, report):
    _, program = _load(args, report)
    sid = args.scenario if args.scenario is not None else program.space.ids[0]
    try:
        s = program.space.index(sid)
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"unknown scenario {sid!r}") from exc
    try:
        points = json.loads(args.points) if args.points else [[0.0] * program.n]
        pts = np.asarray(points, dtype=float).reshape(-1, program.n)
    except (json.JSONDecodeError, ValueError) as exc:
        raise ParseError(f"expected a JSON list of {program.n}-vectors: {exc}", "--points") from exc
    h = program.integrands[s]
    h.check_proper(f"integrand of scenario {sid}")
    hstar = conjugate(h)
    report["scenario"] = sid
    report["points"] = pts.tolist()
    report["values"] = [evaluate(hstar, p) for p in pts]


HANDLERS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "shadow": cmd_shadow,
    "dp": cmd_dp,
    "dual-dp": cmd_dual_dp,
    "verify": cmd_verify,
    "conj": cmd_conj,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shadowinfo", description="Exact shadow prices of information on scenario trees.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("problem", help="problem file, or the name of a bundled instance such as INST-A")
    parser.add_argument("--tol-feas", type=float, default=lpcore.DEFAULT_TOLERANCES.feas, help="LP feasibility tolerance")
    parser.add_argument("--tol-gap", type=float, default=1e-7, help="duality-gap and verification tolerance")
    parser.add_argument("--samples", type=int, default=50, help="shadow: random perturbations for the subgradient check")
    parser.add_argument("--seed", type=int, default=0, help="seed for sampled checks")
    parser.add_argument("--strict-lineality", action="store_true", help="dp: fail when the recession cone is not a linear space")
    parser.add_argument("--format", choices=["json"], default="json")
    parser.add_argument("--pair", help="verify: JSON file with x and v (default: <problem>.pair.json)")
    parser.add_argument("--scenario", help="conj: scenario id (default: the first scenario)")
    parser.add_argument("--points", help="conj: JSON list of points (default: the origin)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def run(argv=None) -> tuple[int, dict]:
    args = build_parser().parse_args(argv)
    report = {"command": args.command, "instance": None}
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        with lpcore.tolerances(feas=args.tol_feas, gap=args.tol_gap):
            HANDLERS[args.command](args, report)
    except _Stop as stop:
        code = stop.code
        report["error"] = {"type": "stop", "message": str(stop)}
    except (ParseError, ValidationError) as exc:
        code = EXIT_INVALID
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    except (ImproperRecursion, SampleEvaluationFailure) as exc:
        code = EXIT_VERIFY
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ImproperRecursion):
            report["error"]["stage"] = exc.stage
    except ImproperFunction as exc:
        code = EXIT_INVALID
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    except (LpNumericalFailure, NotInDomain, ShadowInfoError) as exc:
        code = EXIT_NUMERICAL if isinstance(exc, LpNumericalFailure) else EXIT_VERIFY
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    report["exit_code"] = code
    report["wall_time"] = time.perf_counter() - t0
    if "error" in report:
        log.error("%s: %s", args.command, report["error"]["message"])
    return code, jsonable(report)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO if "-v" in (argv or sys.argv) or "--verbose" in (argv or sys.argv) else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    code, report = run(argv)
    sys.stdout.write(json.dumps(report, indent=2) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
