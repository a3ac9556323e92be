"""Command-line front end: ``sorpwla {gen,solve,export,bounds,sweep}``.

Exit codes: 0 success (or optimal), 2 a search limit was hit, 3 infeasible,
4 the instance could not be parsed, 5 a model or algorithm precondition
failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

from . import serialize
from .apps import ApInstance, McpInstance, generate, instance_to_sor, parse_preset
from .bounds import compute_C, interval_psi, required_K, saa_sizes
from .errors import ParseError, SorError
from .model_ir import (
    build_bilinear,
    build_exp_bilinear,
    build_milp,
    build_misocp1,
    build_misocp2,
    export_lp_text,
    export_mps_text,
)
from .oracle import brute_force_solve
from .pwla import discretize
from .solver import BnbConfig, bb_solve, oa_solve

EXIT_OK, EXIT_LIMIT, EXIT_INFEASIBLE, EXIT_PARSE, EXIT_PRECONDITION = 0, 2, 3, 4, 5
SWEEP_HEADER = ("seed", "K", "f_K", "f_ref", "gap_percent")
FORMS = ("milp", "misocp1", "misocp2", "bilinear", "exp-bilinear")
ALGORITHMS = ("bb", "oa", "oracle")


@dataclass
class RunRecord:
    """Summary of one solve; non-finite numbers are written as ``null``."""

    instance: str
    algorithm: str
    K: int
    status: str
    objective: float | None
    bound: float | None
    gap_percent: float | None
    nodes: int
    cuts: int
    iterations: int
    wall_time_seconds: float
    seed: int | None
    y: list | None
    level: list | None
    x: list | None


def _finite(v):
    return v if v is not None and math.isfinite(v) else None


def gap_percent(objective: float, bound: float) -> float | None:
    """``100 (bound - objective) / max(1, |objective|)``; ``None`` if undefined."""
    if not (math.isfinite(objective) and math.isfinite(bound)):
        return None
    return 100.0 * (bound - objective) / max(1.0, abs(objective))


def _write(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _config(args) -> BnbConfig:
    return BnbConfig(node_limit=args.node_limit, time_limit_seconds=args.time_limit)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _gen_instance(args):
    if args.preset:
        family, T, m, C, M = parse_preset(args.preset)
    else:
        missing = [f for f in ("family", "T", "m", "C", "M") if getattr(args, f) is None]
        if missing:
            raise SorError(f"missing option(s): {', '.join('--' + f for f in missing)} (or use --preset)")
        family, T, m, C, M = args.family, args.T, args.m, args.C, args.M
    return generate(family, T, m, C, M, args.seed)


def cmd_gen(args) -> int:
    inst = _gen_instance(args)
    _write(serialize.dumps(instance_to_sor(inst), inst), args.out)
    return EXIT_OK


def solve_problem(problem, K: int, algorithm: str, config: BnbConfig, epsilon: float = 1e-7, seed=None) -> RunRecord:
    disc = discretize(problem, K)
    start = time.perf_counter()
    if algorithm == "bb":
        sol = bb_solve(problem, disc, config)
    elif algorithm == "oa":
        sol = oa_solve(problem, disc, epsilon=epsilon, config=config)
    elif algorithm == "oracle":
        sol = brute_force_solve(problem, disc)
    else:
        raise SorError(f"unknown algorithm {algorithm!r}")
    elapsed = time.perf_counter() - start
    return RunRecord(
        instance=problem.name, algorithm=algorithm, K=K, status=sol.status,
        objective=_finite(sol.objective), bound=_finite(sol.upper_bound),
        gap_percent=gap_percent(sol.objective, sol.upper_bound),
        nodes=sol.nodes_explored, cuts=sol.cuts_added, iterations=sol.iterations,
        wall_time_seconds=elapsed, seed=seed,
        y=None if sol.y is None else list(sol.y),
        level=None if sol.level is None else list(sol.level),
        x=None if sol.x is None else list(sol.x),
    )


def cmd_solve(args) -> int:
    problem, _ = serialize.load(args.instance)
    rec = solve_problem(problem, args.k, args.algorithm, _config(args), args.epsilon, args.seed)
    _write(_json(asdict(rec)), args.out)
    if rec.status == "optimal":
        return EXIT_OK
    if rec.status == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_LIMIT


def build_model(problem, family, form: str, K: int):
    """ModelIR of ``form`` for ``problem``; ``family`` is the generating instance or ``None``."""
    if form == "exp-bilinear":
        if isinstance(family, McpInstance):
            return build_exp_bilinear("mcp", family)
        if isinstance(family, ApInstance):
            return build_exp_bilinear("ap", family)
        raise SorError("exp-bilinear export needs an instance with a 'family' block")
    disc = discretize(problem, K)
    if form == "milp":
        tag = "mcp" if isinstance(family, McpInstance) else "ap" if isinstance(family, ApInstance) else "generic"
        return build_milp(problem, disc, tag)
    builders = {"misocp1": build_misocp1, "misocp2": build_misocp2, "bilinear": build_bilinear}
    if form not in builders:
        raise SorError(f"unknown form {form!r}")
    return builders[form](problem, disc)


def cmd_export(args) -> int:
    problem, family = serialize.load(args.instance)
    model = build_model(problem, family, args.form, args.k)
    text = export_mps_text(model) if args.format == "mps" else export_lp_text(model, general_constraints=args.form == "exp-bilinear")
    _write(text, args.out)
    summary = {"form": args.form, "K": args.k, **model.counts()}
    # keep stdout clean when the model itself goes there
    stream = sys.stderr if args.out in (None, "-") else sys.stdout
    stream.write(_json(summary))
    return EXIT_OK


def bounds_report(problem, K: int, epsilon: float | None, gamma: float | None, psi: float | None, c_star: float | None) -> dict:
    rep = compute_C(problem, K)
    out = {"error_bound": rep.to_dict()}
    if epsilon is not None:
        out["required_K"] = required_K(rep.C, rep.max_range, epsilon)
    if gamma is not None:
        if epsilon is None:
            raise SorError("--gamma needs --epsilon")
        if psi is None:
            psi = interval_psi(problem)
        if c_star is None:
            # largest single-ratio contribution to C
            c_star = max((p.lip_g_sum + p.ratio_upper * p.lip_h_sum) / p.denom_lower for p in rep.per_t)
        out["saa"] = saa_sizes(epsilon, gamma, psi, c_star, rep.max_range).to_dict()
    return out


def cmd_bounds(args) -> int:
    problem, _ = serialize.load(args.instance)
    _write(_json(bounds_report(problem, args.k, args.epsilon, args.gamma, args.psi, args.c_star)), args.out)
    return EXIT_OK


def _sweep_job(job):
    seed, problem, K_list, K_ref = job
    rows = []
    try:
        ref = bb_solve(problem, discretize(problem, K_ref))
        f_ref = ref.objective if ref.status == "optimal" else math.nan
    except SorError:
        f_ref = math.nan
    for K in K_list:
        try:
            sol = bb_solve(problem, discretize(problem, K))
            if sol.status != "optimal" or not math.isfinite(f_ref):
                raise SorError(sol.status)
            # grid points are interpolation nodes, so this is the exact objective there
            f_K = sol.objective
            rows.append((seed, K, repr(f_K), repr(f_ref), repr(100.0 * (f_ref - f_K) / f_ref)))
        except SorError:
            rows.append((seed, K, "", "" if not math.isfinite(f_ref) else repr(f_ref), "failed"))
    return rows


def sweep_rows(problems, K_list, K_ref: int, jobs: int = 1) -> list[tuple]:
    """CSV rows for ``problems`` given as ``(seed, problem)`` pairs, in (seed, K) order."""
    work = [(seed, p, tuple(K_list), K_ref) for seed, p in problems]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_job, work))
    else:
        results = [_sweep_job(w) for w in work]
    return [row for rows in results for row in rows]


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    w.writerows(rows)
    return buf.getvalue()


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def cmd_sweep(args) -> int:
    if args.instance:
        problem, _ = serialize.load(args.instance)
        problems = [(args.seed, problem)]
    else:
        seeds = args.seeds or [args.seed]
        problems = []
        for s in seeds:
            args.seed = s
            problems.append((s, instance_to_sor(_gen_instance(args))))
    _write(sweep_csv(sweep_rows(problems, args.k_list, args.k_ref, args.jobs)), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_gen_options(p):
    p.add_argument("--preset", help="named (T, m, C, M) group such as mcp-T5-m50-C20-M16")
    p.add_argument("--family", choices=("mcp", "ap"))
    p.add_argument("--T", type=int, help="number of customer segments or samples")
    p.add_argument("--m", type=int, help="number of items")
    p.add_argument("--C", type=float, help="budget")
    p.add_argument("--M", type=float, help="cardinality limit")


def _add_search_options(p):
    p.add_argument("--time-limit", type=float, default=None, help="seconds")
    p.add_argument("--node-limit", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sorpwla", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random instance")
    _add_gen_options(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve the K-grid problem")
    p.add_argument("instance")
    p.add_argument("--k", type=int, default=10, help="grid pieces per item")
    p.add_argument("--algorithm", choices=ALGORITHMS, default="bb")
    p.add_argument("--epsilon", type=float, default=1e-7, help="cut tolerance for oa")
    p.add_argument("--seed", type=int, default=None, help="recorded in the output")
    p.add_argument("--out")
    _add_search_options(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("export", help="write a mixed-integer reformulation")
    p.add_argument("instance")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--form", choices=FORMS, default="milp")
    p.add_argument("--format", choices=("lp", "mps"), default="lp")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("bounds", help="approximation error and sample-size report")
    p.add_argument("instance")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--psi", type=float, default=None, help="ratio value spread (default from interval bounds)")
    p.add_argument("--c-star", type=float, default=None, help="per-sample constant (default largest per-ratio term)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", help="optimality loss of coarse grids against a fine reference grid")
    p.add_argument("instance", nargs="?")
    _add_gen_options(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=_int_list, default=None, help="comma-separated seeds for generated instances")
    p.add_argument("--k-list", type=_int_list, default=[5, 10, 25])
    p.add_argument("--k-ref", type=int, default=50)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SorError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
