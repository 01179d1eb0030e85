"""Command-line front end: ``swivel {gen,verify,sweep,trotter}``.

Exit codes of ``verify``: 0 when every instance HOLDS, 2 when some inequality
is violated beyond tolerance, 3 when some check is inconclusive (optimizer gap,
quadrature underflow), 1 for usage or input errors.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import NonScalarCommutant, SwivelError
from .instgen import (
    GenSpec,
    KINDS,
    TripartiteInstance,
    atomic_write,
    curve_csv,
    generate,
    instance_from_json,
    instance_to_json,
    load_instance,
    same_instance,
    save_instance,
    save_report,
)
from .interp import (
    HOLDS,
    INCONCLUSIVE,
    VIOLATED,
    QuadratureConfig,
    VerificationReport,
    classify,
    gt_lhs,
    lie_trotter_convergence,
    verify_gt,
    verify_hirschman,
)
from .commutant import commutant_structure
from .config import TOL
from .swivelopt import (
    DEFAULT_P_GRID,
    ChainInstance,
    OptimizerConfig,
    brute_force_phase_grid,
    marginal_chain_maximize,
    marginal_phase_grid,
    marginals,
    structures_of,
    sweep_p,
)

log = logging.getLogger("swivel")

EXIT_OK, EXIT_USAGE, EXIT_VIOLATED, EXIT_INCONCLUSIVE = 0, 1, 2, 3
STATUS_EXIT = {HOLDS: EXIT_OK, VIOLATED: EXIT_VIOLATED, INCONCLUSIVE: EXIT_INCONCLUSIVE}
# curve comparisons are relative to max(1, |value|)
MONOTONE_CURVE_TOL = 1e-6
MARGINAL_P_GRID = (2.0, 3.0, 4.0, 6.0)
TROTTER_P_LIST = tuple(float(2**k) for k in range(1, 11))
ORACLE_MAX_DIM = 3
ORACLE_MAX_LENGTH = 3


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def num_threads() -> int:
    raw = os.environ.get("SWIVEL_NUM_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


# --------------------------------------------------------------------------
# verification core (shared by the CLI and report re-runs)


def resolved_config(args: argparse.Namespace | dict) -> dict:
    a = vars(args) if isinstance(args, argparse.Namespace) else dict(args)
    opt = OptimizerConfig(
        restarts=a.get("restarts", 8), max_iters=a.get("max_iters", 500), step_init=a.get("step_init", 0.1),
        conv_tol_rel=a.get("conv_tol", 1e-9), seed=a.get("seed", 0),
    )
    quad = QuadratureConfig(
        half_width=a.get("half_width"), panel_split=a.get("panel_split", 1),
        nodes_per_panel=a.get("nodes", 32), tail_eps=a.get("tail_eps", 1e-10),
    )
    return {
        "inequality": a.get("inequality"),
        "p": a.get("p"),
        "q": a.get("q"),
        "pGrid": a.get("p_grid"),
        "tol": a.get("tol") if a.get("tol") is not None else TOL.verify_tol,
        "withOracle": bool(a.get("with_oracle", False)),
        "gridPoints": a.get("grid_points", 720),
        "optimizer": asdict(opt),
        "quadrature": asdict(quad),
        "seed": a.get("seed", 0),
    }


def _optimizer(config: dict) -> OptimizerConfig:
    return OptimizerConfig(**config["optimizer"])


def _quadrature(config: dict) -> QuadratureConfig:
    return QuadratureConfig(**config["quadrature"])


def oracle_available(inst: ChainInstance) -> bool:
    return (
        inst.dim <= ORACLE_MAX_DIM
        and inst.length <= ORACLE_MAX_LENGTH
        and all(S.is_scalar for S in structures_of(inst))
    )


def _curve_report(name, params, ps, values, tol, oracle, diagnostics) -> VerificationReport:
    """Report the largest relative increase along a curve that should be non-increasing."""
    rises = [(b - a) / max(1.0, abs(a)) for a, b in zip(values, values[1:])]
    lhs = max(rises) if rises else 0.0
    slack = -lhs
    diag = dict(diagnostics, curve=[[p, v] for p, v in zip(ps, values)], curveTolerance=MONOTONE_CURVE_TOL)
    if oracle is not None:
        o_rises = [(b - a) / max(1.0, abs(a)) for a, b in zip(oracle, oracle[1:])]
        o_slack = -(max(o_rises) if o_rises else 0.0)
        diag["oracleCurve"] = [[p, v] for p, v in zip(ps, oracle)]
        diag["oracleSlack"] = o_slack
        # the oracle decides; the optimizer curve only adds diagnostics
        status = classify(o_slack, tol, MONOTONE_CURVE_TOL)
    else:
        status = classify(slack, tol, MONOTONE_CURVE_TOL, inconclusive=True)
    return VerificationReport(name, dict(params, tol=tol), lhs, 0.0, slack, status, diag)


def verify_monotone(inst, config: dict) -> VerificationReport:
    tol = config["tol"]
    cfg = _optimizer(config)
    if isinstance(inst, TripartiteInstance):
        ps = list(config["pGrid"] or MARGINAL_P_GRID)
        results = [marginal_chain_maximize(inst.rho, inst.shape, p, cfg) for p in ps]
        values = [r.value for r in results]
        m = marginals(inst.rho, inst.shape)
        oracle = None
        if config["withOracle"] and commutant_structure(m.rho_c).is_scalar and inst.shape.factor_dims[2] <= 3:
            oracle = [marginal_phase_grid(inst.rho, inst.shape, p, config["gridPoints"], refine=True) for p in ps]
        diag = {
            "assumption": "maximum searched over the full block-unitary commutant",
            "outsideStatedRange": [p for p in ps if p < 2],
            "restartSpread": [r.restart_spread for r in results],
            "converged": all(r.converged for r in results),
        }
        return _curve_report("monotone-marginal", {"pGrid": ps}, ps, values, tol, oracle, diag)
    ps = list(config["pGrid"] or DEFAULT_P_GRID)
    sweep = sweep_p(inst, ps, cfg)
    values = [r.value for _, r in sweep]
    oracle = None
    if config["withOracle"]:
        if not oracle_available(inst):
            raise NonScalarCommutant("grid oracle needs scalar commutants with n <= 3 and L <= 3")
        oracle = [brute_force_phase_grid(inst, p, config["gridPoints"], refine=True) for p in ps]
    elif oracle_available(inst) and inst.length <= 2:
        # no free swivels: the oracle is a single evaluation
        oracle = [brute_force_phase_grid(inst, p, 1) for p in ps]
    diag = {
        "assumption": "maximum searched over the full block-unitary commutant",
        "restartSpread": [r.restart_spread for _, r in sweep],
        "converged": all(r.converged for _, r in sweep),
    }
    return _curve_report("monotone", {"pGrid": ps}, ps, values, tol, oracle, diag)


def run_verification(inst, config: dict) -> VerificationReport:
    ineq = config["inequality"]
    if ineq == "monotone":
        return verify_monotone(inst, config)
    if isinstance(inst, TripartiteInstance):
        raise UsageError(f"inequality {ineq!r} needs a chain instance, got a tripartite state")
    if ineq == "hirschman":
        if config["p"] is None or config["q"] is None:
            raise UsageError("hirschman needs --p and --q")
        return verify_hirschman(inst, config["p"], config["q"], _quadrature(config), config["tol"])
    if ineq == "gt":
        if config["q"] is None:
            raise UsageError("gt needs --q")
        return verify_gt(inst, config["q"], _quadrature(config), config["tol"])
    raise UsageError(f"unknown inequality {ineq!r}")


def rerun_report(doc: dict) -> VerificationReport:
    """Recompute a saved report from its embedded instance and configuration."""
    inst = instance_from_json(doc["instance"])
    spec = getattr(inst, "spec", None)
    if spec is not None:
        if not same_instance(generate(spec), inst):
            raise SwivelError("embedded instance does not match its generator spec")
    return run_verification(inst, doc["config"])


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    spec_kw = dict(kind=args.kind, length=args.length, rank=args.rank, condition_cap=args.condition_cap)
    if args.kind == "tripartiteDensity":
        spec_kw["factor_dims"] = tuple(args.dims or (2, 2, 2))
    else:
        spec_kw["dim"] = args.dim
    out = Path(args.out)
    single = args.count == 1 and out.suffix == ".json"
    for i in range(args.count):
        spec = GenSpec(seed=args.seed + i, **spec_kw)
        path = out if single else out / f"{args.kind}-seed{spec.seed}.json"
        save_instance(path, generate(spec))
        print(path)
    return EXIT_OK


def _verify_one(path: str, config: dict, out_dir: Path | None):
    inst = load_instance(path)
    report = run_verification(inst, config)
    report_path = None
    if out_dir is not None:
        report_path = out_dir / (Path(path).stem + f".{config['inequality']}.report.json")
        save_report(report_path, report, instance_to_json(inst), config)
    return path, report, report_path


def cmd_verify(args) -> int:
    config = resolved_config(args)
    out_dir = Path(args.out) if args.out else None
    workers = min(num_threads(), len(args.instances))
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_verify_one, p, config, out_dir) for p in args.instances]
        results = [f.result() for f in futures]  # input order, deterministic
    for path, report, report_path in results:
        print(f"{report.status:28s} slack={report.slack: .3e} lhs={report.lhs: .12g} rhs={report.rhs: .12g}  {path}")
        if args.emit in ("csv", "both") and "curve" in report.diagnostics and out_dir is not None:
            oracle = dict((p, v) for p, v in report.diagnostics.get("oracleCurve", []))
            rows = [(p, v, oracle.get(p), 0.0) for p, v in report.diagnostics["curve"]]
            atomic_write(out_dir / (Path(path).stem + ".curve.csv"), curve_csv(rows))
    slacks = [r.slack for _, r, _ in results if not math.isnan(r.slack)]
    worst = min(results, key=lambda x: x[1].slack if not math.isnan(x[1].slack) else -math.inf)
    summary = {
        "toolVersion": __version__,
        "config": config,
        "count": len(results),
        "statusCounts": {s: sum(r.status == s for _, r, _ in results) for s in (HOLDS, VIOLATED, INCONCLUSIVE)},
        "minSlack": min(slacks) if slacks else None,
        "meanSlack": float(np.mean(slacks)) if slacks else None,
        "worstInstance": worst[0],
    }
    if len(results) > 1:
        print(
            f"summary: {len(results)} instances, min slack {summary['minSlack']:.3e}, "
            f"mean slack {summary['meanSlack']:.3e}, worst {summary['worstInstance']}"
        )
        if out_dir is not None:
            atomic_write(out_dir / f"summary.{config['inequality']}.json", json.dumps(summary, indent=1) + "\n")
    statuses = {r.status for _, r, _ in results}
    if VIOLATED in statuses:
        return EXIT_VIOLATED
    if INCONCLUSIVE in statuses:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_sweep(args) -> int:
    inst = load_instance(args.instance)
    config = resolved_config(args)
    cfg = _optimizer(config)
    if isinstance(inst, TripartiteInstance):
        ps = args.p_grid or list(MARGINAL_P_GRID)
        res = [marginal_chain_maximize(inst.rho, inst.shape, p, cfg) for p in ps]
        oracle = [marginal_phase_grid(inst.rho, inst.shape, p, args.grid_points, refine=True) for p in ps] if args.with_oracle else None
        rows = [(p, r.value, None if oracle is None else oracle[k], r.restart_spread) for k, (p, r) in enumerate(zip(ps, res))]
    else:
        ps = args.p_grid or list(DEFAULT_P_GRID)
        if args.with_oracle and not oracle_available(inst):
            raise NonScalarCommutant("grid oracle needs scalar commutants (distinct spectra) with n <= 3 and L <= 3")
        sweep = sweep_p(inst, ps, cfg)
        oracle = [brute_force_phase_grid(inst, p, args.grid_points, refine=True) for p in ps] if args.with_oracle else None
        rows = [(p, r.value, None if oracle is None else oracle[k], r.restart_spread) for k, (p, r) in enumerate(sweep)]
    text = curve_csv(rows)
    if args.out:
        atomic_write(args.out, text)
        meta = {"toolVersion": __version__, "config": config, "instance": str(args.instance)}
        atomic_write(str(args.out) + ".meta.json", json.dumps(meta, indent=1) + "\n")
        print(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_trotter(args) -> int:
    inst = load_instance(args.instance)
    if isinstance(inst, TripartiteInstance):
        raise UsageError("trotter needs a chain instance")
    rows = lie_trotter_convergence(inst, args.p_list or list(TROTTER_P_LIST))
    ref = math.exp(gt_lhs(inst))
    lines = ["p,value,absError,relError"] + [f"{p!r},{v!r},{e!r},{e / ref!r}" for p, v, e in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write(args.out, text)
        meta = {"toolVersion": __version__, "reference": ref, "instance": str(args.instance)}
        atomic_write(str(args.out) + ".meta.json", json.dumps(meta, indent=1) + "\n")
        print(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=None, help="HOLDS iff slack >= -(tol + error estimate)")
    p.add_argument("--out", default=None)
    p.add_argument("--emit", choices=("report", "csv", "both"), default="report")


def _optimizer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--step-init", type=float, default=0.1)
    p.add_argument("--conv-tol", type=float, default=1e-9)
    p.add_argument("--grid-points", type=int, default=720)
    p.add_argument("--with-oracle", action="store_true", help="also run the phase-grid oracle")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swivel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate seeded random instances")
    g.add_argument("--kind", choices=KINDS, required=True)
    g.add_argument("--dim", type=int)
    g.add_argument("--dims", type=_ints, help="factor dimensions, e.g. 2,2,2")
    g.add_argument("--length", "-L", type=int, default=2)
    g.add_argument("--rank", type=int)
    g.add_argument("--condition-cap", type=float, default=1e4)
    g.add_argument("--count", type=int, default=1)
    _common(g)
    g.set_defaults(func=cmd_gen, out=".")

    v = sub.add_parser("verify", help="check an inequality on instance files")
    v.add_argument("inequality", choices=("monotone", "hirschman", "gt"))
    v.add_argument("instances", nargs="+")
    v.add_argument("--p", type=float)
    v.add_argument("--q", type=float)
    v.add_argument("--p-grid", type=_floats)
    v.add_argument("--panel-split", type=int, default=1)
    v.add_argument("--nodes", type=int, default=32)
    v.add_argument("--tail-eps", type=float, default=1e-10)
    v.add_argument("--half-width", type=float, default=None)
    _common(v)
    _optimizer_flags(v)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="maximized chain norm over a p grid, as CSV")
    s.add_argument("instance")
    s.add_argument("--p-grid", type=_floats)
    _common(s)
    _optimizer_flags(s)
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("trotter", help="Lie-Trotter convergence table")
    t.add_argument("instance")
    t.add_argument("--p-list", type=_floats)
    _common(t)
    t.set_defaults(func=cmd_trotter)
    return parser


def _validate(args) -> None:
    if args.command == "gen":
        if args.count < 1:
            raise UsageError("--count must be >= 1")
        if args.kind != "tripartiteDensity" and args.dim is None:
            raise UsageError(f"--dim is required for --kind {args.kind}")
    p_grid = getattr(args, "p_grid", None)
    if p_grid is not None and any(b < a for a, b in zip(p_grid, p_grid[1:])):
        raise UsageError("--p-grid must be ascending")
    if getattr(args, "command", None) == "verify" and args.inequality == "hirschman":
        if args.p is None or args.q is None or not (1 <= args.q < args.p):
            raise UsageError("hirschman needs 1 <= q < p (--p, --q)")
    if getattr(args, "command", None) == "verify" and args.inequality == "gt":
        if args.q is None or args.q < 1:
            raise UsageError("gt needs --q >= 1")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _validate(args)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"swivel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SwivelError, OSError) as exc:
        print(f"swivel: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
