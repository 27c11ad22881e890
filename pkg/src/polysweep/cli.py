"""Command line front end ``sweepctl``.

Every subcommand writes into ``--out`` using a fixed layout:
``trajectory.csv``, ``certificate.csv``, ``report.json`` and ``trace.csv``
(files that do not apply to a subcommand are not written).  Errors are
printed as one JSON object and mapped to exit codes: 2 infeasible or
degenerate input, 3 stalled solver, 4 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import optimality as opt
from .discrete_ocp import DiscreteTriple, Scenario, cost_Jk, solve_reduced
from .errors import ConfigError, SolverStalled, SweepError
from .scenarios import ScenarioRegistryEntry, load_scenario, lookup, registry
from .sweeping import catch_up, convergence_study, read_trajectory, verify_feasible, write_trajectory
from .variational import CoderivQuery, dstar_F

log = logging.getLogger("polysweep")

SUBCOMMANDS = ("simulate", "optimize", "certify", "coderiv", "convergence", "examples")
FILES = {"trajectory": "trajectory.csv", "certificate": "certificate.csv",
         "report": "report.json", "trace": "trace.csv"}


@dataclass
class RunReport:
    """Summary of one run; ``gap`` is cost - reference when both exist."""

    id: str
    subcommand: str
    k: Optional[int]
    cost: Optional[float] = None
    reference: Optional[float] = None
    gap: Optional[float] = None
    verdict: Optional[object] = None
    wall_time: float = 0.0
    paths: Dict[str, str] = field(default_factory=dict)
    error: Optional[dict] = None
    exit_code: int = 0
    details: Dict = field(default_factory=dict)

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return d


# ----------------------------------------------------------------------
# helpers


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else format(float(v), ".17g")


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def resolve(scenario: Optional[str] = None, scenario_id: Optional[str] = None,
            k: Optional[int] = None, tau: Optional[float] = None, seed: Optional[int] = None,
            params: Optional[dict] = None):
    """Scenario object and registry entry (None for files) from the options."""
    params = dict(params or {})
    if (scenario is None) == (scenario_id is None):
        raise ConfigError("give exactly one of --scenario and --id")
    entry = None
    if scenario_id is not None:
        entry = lookup(scenario_id)
        if entry is None:
            raise ConfigError(f"unknown scenario id {scenario_id!r}")
        if k is not None:
            params["k"] = k
        try:
            sc = entry.build(**params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for {scenario_id}: {exc}")
    else:
        if params:
            raise ConfigError("--param applies to registry scenarios only")
        sc = load_scenario(scenario)
        if k is not None:
            sc = sc.with_params(k=k)
    if tau is not None:
        sc = sc.with_params(tau=float(tau))
    if seed is not None:
        sc = sc.with_params(solver=replace(sc.solver, seed=int(seed)))
    return sc, entry


def _candidate(sc: Scenario, entry: Optional[ScenarioRegistryEntry], k: int,
               for_certificate: bool = False):
    """Control path driving simulate (and certify without a trajectory)."""
    b_fn = None
    if entry is not None:
        if for_certificate and entry.reference.b is not None:
            b_fn = entry.reference.b
        elif entry.simulate_b is not None:
            b_fn = entry.simulate_b
    return sc.controls(k, b_path=b_fn)


def _reference_sup(entry, triple: DiscreteTriple) -> Dict[str, float]:
    out = {}
    if entry is None:
        return out
    t = triple.mesh.nodes
    if entry.reference.x is not None:
        xr = np.asarray(entry.reference.x(t), dtype=float).reshape(t.size, -1)
        out["sup_x"] = float(np.abs(triple.x - xr).max())
    if entry.reference.b is not None:
        br = np.asarray(entry.reference.b(t), dtype=float).reshape(t.size, -1)
        out["sup_b"] = float(np.abs(triple.b - br).max())
    return out


# ----------------------------------------------------------------------
# subcommands


def _simulate(sc, entry, k, out: Path, opts) -> RunReport:
    ctrl = _candidate(sc, entry, k)
    state = catch_up(sc.x0, ctrl, jump_guard=opts.get("jump_guard", 10.0))
    rep = verify_feasible(state, ctrl)
    write_trajectory(out / FILES["trajectory"], state, ctrl)
    rows = []
    for j in range(k + 1):
        comp = rep.complementarity[j] if j < k else None
        rows.append((j, ctrl.mesh.nodes[j], rep.margins[j].min(), comp))
    _write_rows(out / FILES["trace"], ("j", "t", "min_margin", "complementarity"), rows)
    triple = DiscreteTriple.from_paths(state, ctrl)
    return RunReport(sc.id, "simulate", k, cost=cost_Jk(triple, sc), verdict=rep.verdict,
                     paths={"trajectory": FILES["trajectory"], "trace": FILES["trace"]},
                     details={"max_violation": rep.max_violation,
                              "max_residual": rep.max_residual,
                              **_reference_sup(entry, triple)})


def _optimize(sc, entry, k, out: Path, opts) -> RunReport:
    try:
        res = solve_reduced(sc, k)
    except SolverStalled as exc:
        if exc.best is None:
            raise
        res = exc.best
        log.warning("solver stalled; reporting the best point")
    write_trajectory(out / FILES["trajectory"], res.state, res.controls)
    _write_rows(out / FILES["trace"], ("iteration", "cost", "method"), res.trace)
    ref = entry.reference.cost if entry is not None else None
    return RunReport(sc.id, "optimize", k, cost=res.cost, reference=ref,
                     gap=None if ref is None else res.cost - ref,
                     paths={"trajectory": FILES["trajectory"], "trace": FILES["trace"]},
                     details={"method": res.method, "evaluations": res.evaluations,
                              "grad_norm": res.grad_norm,
                              **_reference_sup(entry, res.triple)})


def _certify(sc, entry, k, out: Path, opts) -> RunReport:
    side = opts.get("side", "implicit")
    if opts.get("trajectory"):
        state, ctrl = read_trajectory(opts["trajectory"], sc.tau)
        k = ctrl.mesh.k
    else:
        ctrl = _candidate(sc, entry, k, for_certificate=True)
        state = catch_up(sc.x0, ctrl, jump_guard=None)
    z = DiscreteTriple.from_paths(state, ctrl)
    write_trajectory(out / FILES["trajectory"], state, ctrl)
    details = {"side": side}
    if opts.get("certificate"):
        with open(opts["certificate"], newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array([[float(v) if v != "" else np.nan for v in r] for r in rows[1:]])
        cert = opt.DualCertificate.from_table(rows[0], data, sc.m, sc.n, side)
        label = "given"
    else:
        cert = opt.solve_certificate(z, sc, opts.get("lambda_mode", "free"), side)
        if not cert:
            details.update(cert.to_dict())
            report = {"verdict": "infeasible", **cert.to_dict()}
            return RunReport(sc.id, "certify", k, cost=cost_Jk(z, sc),
                             reference=entry.reference.cost if entry is not None else None,
                             verdict=report, paths={"trajectory": FILES["trajectory"]},
                             details=details)
        label = cert.verdict
        details["stats"] = cert.stats
    res = opt.residuals_thm52(z, cert, sc)
    names, table = cert.node_table(z.mesh)
    _write_rows(out / FILES["certificate"], names, table)
    _write_rows(out / FILES["trace"], ("condition", "residual"), res.rows())
    verdict = {**res.verdict(), "verdict": label}
    return RunReport(sc.id, "certify", k, cost=cost_Jk(z, sc),
                     reference=entry.reference.cost if entry is not None else None,
                     verdict=verdict,
                     paths={"trajectory": FILES["trajectory"], "certificate": FILES["certificate"],
                            "trace": FILES["trace"]},
                     details=details)


def _coderiv(sc, entry, k, out: Path, opts) -> RunReport:
    rng = np.random.default_rng(sc.solver.seed)
    if opts.get("query"):
        with open(opts["query"]) as fh:
            q = json.load(fh)
        try:
            query = CoderivQuery(q["x"], q["A"], q["b"], q["v"], q["u"])
        except KeyError as exc:
            raise ConfigError(f"query file misses {exc}")
        except ValueError as exc:
            raise ConfigError(str(exc))
        node = None
    else:
        ctrl = _candidate(sc, entry, k)
        state = catch_up(sc.x0, ctrl, jump_guard=None)
        node = int(opts.get("node", k // 2))
        if not 0 <= node < k:
            raise ConfigError(f"node must lie in [0, {k - 1}]")
        vel = state.velocities()[node]
        A = ctrl.u_nodes[node + 1]
        # directions outside the span of the pushing faces give an empty set
        eta = state.eta_nodes[node] if state.eta_nodes is not None else np.zeros(sc.m)
        pushing = A[eta > 0]
        direction = rng.normal(size=sc.n)
        if pushing.size:
            Q = np.linalg.qr(pushing.T)[0]
            direction = direction - Q @ (Q.T @ direction)
        query = CoderivQuery(state.x_nodes[node + 1], A, ctrl.b_nodes[node + 1], vel, direction)
    res = dstar_F(query)
    rows = [(i, json.dumps(piece.p.tolist()), json.dumps(list(piece.pattern.zero)),
             json.dumps(list(piece.pattern.nonneg)), json.dumps(list(piece.pattern.free)))
            for i, piece in enumerate(res.pieces)]
    _write_rows(out / FILES["trace"], ("piece", "p", "zero", "nonneg", "free"), rows)
    details = {"node": node, "exact": res.exact, "active": list(query.active),
               "licq": query.licq(), "direction": query.u.tolist(),
               "pieces": [p.to_dict() for p in res.pieces]}
    return RunReport(sc.id, "coderiv", k, verdict={"empty": res.empty, "exact": res.exact},
                     paths={"trace": FILES["trace"]}, details=details)


def _convergence(sc, entry, k, out: Path, opts) -> RunReport:
    base = int(opts.get("k_base") or 50)
    k_list = [base * 2 ** i for i in range(int(opts.get("levels", 4)))]
    b_fn = entry.simulate_b if entry is not None else None
    exact = entry.reference.x if (entry is not None and b_fn is not None) else None
    tab = convergence_study(sc.x0, lambda kk: sc.controls(kk, b_path=b_fn), k_list,
                            exact=exact, k_ref=8 * k_list[-1], jump_guard=None)
    _write_rows(out / FILES["trace"], ("k", "error", "order"), list(tab.rows()))
    decreasing = all(b < a for a, b in zip(tab.errors, tab.errors[1:]))
    order = min(tab.orders) if tab.orders else float("nan")
    return RunReport(sc.id, "convergence", k_list[-1],
                     verdict={"decreasing": decreasing, "min_order": order},
                     paths={"trace": FILES["trace"]},
                     details={"k": tab.k, "errors": tab.errors, "orders": tab.orders,
                              "reference": tab.reference})


_DISPATCH = {"simulate": _simulate, "optimize": _optimize, "certify": _certify,
             "coderiv": _coderiv, "convergence": _convergence}


def run(target, subcommand: str, k: Optional[int] = None, out=None, tau=None, seed=None,
        params: Optional[dict] = None, **opts) -> RunReport:
    """Run one subcommand on a registry entry, an id or a scenario file.

    Package errors do not propagate: they are stored in the report
    together with their exit code.  ``report.json`` omits the wall time so
    that repeated runs produce identical files.
    """
    t0 = time.perf_counter()
    if subcommand not in _DISPATCH:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    out = Path(out) if out is not None else None
    label = getattr(target, "id", str(target))
    try:
        if isinstance(target, ScenarioRegistryEntry):
            sc, entry = resolve(scenario_id=target.id, k=k, tau=tau, seed=seed, params=params)
        elif isinstance(target, str) and lookup(target) is not None:
            sc, entry = resolve(scenario_id=target, k=k, tau=tau, seed=seed, params=params)
        else:
            sc, entry = resolve(scenario=target, k=k, tau=tau, seed=seed, params=params)
        label = sc.id
        kk = int(k or sc.k)
        if out is None:
            import tempfile
            out = Path(tempfile.mkdtemp(prefix=f"sweepctl-{sc.id}-"))
        out.mkdir(parents=True, exist_ok=True)
        report = _DISPATCH[subcommand](sc, entry, kk, out, opts)
    except SweepError as exc:
        report = RunReport(label, subcommand, k, error=exc.to_dict(), exit_code=exc.exit_code)
    if report.cost is not None and report.reference is not None:
        report.gap = report.cost - report.reference
    report.wall_time = time.perf_counter() - t0
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        report.paths["report"] = FILES["report"]
        with open(out / FILES["report"], "w") as fh:
            json.dump(_jsonable(report.to_dict(timing=False)), fh, indent=2, sort_keys=True)
    log.info("%s %s finished in %.3f s", label, subcommand, report.wall_time)
    return report


def _run_default(args):
    entry_id, out = args
    entry = lookup(entry_id)
    return run(entry, entry.default_subcommand, out=out).to_dict()


def examples(run_all: bool = False, out=None, workers: Optional[int] = None) -> List[dict]:
    """Registry listing; with ``run_all`` each entry runs its default subcommand."""
    listing = [{"id": e.id, "default_subcommand": e.default_subcommand,
                "description": e.description, "reference_cost": e.reference.cost,
                "reference_source": e.reference.source} for e in registry()]
    if not run_all:
        return listing
    base = Path(out or "sweepctl-examples")
    jobs = [(e["id"], str(base / e["id"])) for e in listing]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        reports = list(pool.map(_run_default, jobs))
    for item, rep in zip(listing, reports):
        item["report"] = rep
    return listing


# ----------------------------------------------------------------------
# argument parsing


def _parse_params(items: Sequence[str]) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _lambda_mode(text: str):
    if text == "free":
        return "free"
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"--lambda expects 'free' or a number, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sweepctl",
                                 description="Controlled sweeping over polyhedral sets.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--scenario", help="scenario file (JSON or TOML)")
    src.add_argument("--id", dest="scenario_id", help="registry id")
    ap.add_argument("--k", type=int, help="number of mesh intervals")
    ap.add_argument("--tau", type=float, help="relaxation margin")
    ap.add_argument("--seed", type=int, help="random seed")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--param", action="append", default=[],
                    help="builder parameter key=value (registry scenarios)")
    ap.add_argument("--trajectory", help="certify: candidate trajectory CSV")
    ap.add_argument("--certificate", help="certify: certificate CSV to check")
    ap.add_argument("--lambda", dest="lambda_mode", default="free",
                    help="certify: 'free' or a fixed cost multiplier")
    ap.add_argument("--side", default="implicit", choices=opt.SIDES,
                    help="certify: node carrying each sweeping step")
    ap.add_argument("--query", help="coderiv: JSON file with x, A, b, v, u")
    ap.add_argument("--node", type=int, help="coderiv: step index of the base point")
    ap.add_argument("--levels", type=int, default=4, help="convergence: number of meshes")
    ap.add_argument("--run", action="store_true",
                    help="examples: run every entry's default subcommand")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("SWEEPCTL_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.subcommand == "examples":
            listing = examples(args.run, args.out)
            print(json.dumps(_jsonable(listing), indent=2))
            bad = [item["report"]["exit_code"] for item in listing
                   if item.get("report", {}).get("exit_code", 0) not in (0, 2)]
            return max(bad, default=0)
        target = args.scenario_id if args.scenario_id is not None else args.scenario
        if target is None:
            raise ConfigError("give --scenario or --id")
        opts = {"side": args.side, "lambda_mode": _lambda_mode(args.lambda_mode),
                "levels": args.levels}
        for key in ("trajectory", "certificate", "query", "node"):
            if getattr(args, key) is not None:
                opts[key] = getattr(args, key)
        if args.subcommand == "convergence" and args.k is not None:
            opts["k_base"] = args.k
        k = None if args.subcommand == "convergence" else args.k
        if args.scenario_id is None and args.param:
            raise ConfigError("--param applies to registry scenarios only")
        report = run(target, args.subcommand, k=k, out=args.out, tau=args.tau,
                     seed=args.seed, params=_parse_params(args.param), **opts)
    except SweepError as exc:
        print(json.dumps(exc.to_dict()))
        return exc.exit_code
    if report.error is not None:
        print(json.dumps(report.error))
        return report.exit_code
    print(json.dumps(_jsonable(report.to_dict()), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
