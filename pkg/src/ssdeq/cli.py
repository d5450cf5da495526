"""Command line front door: run scenario configs and emit JSON-lines reports.

    ssdeq run CONFIG [--out PATH] [--seed N] [--res R] [--workers N]
    ssdeq list
    ssdeq reproduce-paper [--out PATH] [--workers N]

Exit codes: 0 when every scenario meets its ``expect`` block, 2 on a mismatch,
1 on a configuration error. Config schema: see ``configs/reproduce_paper.toml``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import coercive, dense_sets, economy, games, kkm
from .config import DEFAULT_SEED, DEFAULTS
from .geometry import Ball, GeometryError, Polytope, make_grid
from .intervals import _jsonable, potential_gap, squared_norm, squared_norm_rows, upper_ray
from .solvers import EquilibriumProblem, Kind, SolverConfig, counterexample_suite, solve_compact

log = logging.getLogger("ssdeq")

KINDS = ("equilibrium", "coercive", "dgn", "nash", "dense_check", "counterexample")


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    kind: str
    builtin: str
    params: dict = field(default_factory=dict)
    res: Optional[float] = None
    tolerances: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    expect: dict = field(default_factory=dict)


@dataclass
class Builtin:
    kind: str
    anchor: str
    run: Callable  # (Scenario, SolverConfig) -> dict with verdict, residuals, witnesses, details
    default_res: float


# ---------------------------------------------------------------------------
# runners


def _hyp_summary(hyps: dict) -> dict:
    return {k: v.status.value for k, v in hyps.items()}


def _run_counterexample(sc: Scenario, cfg: SolverConfig) -> dict:
    n = int(sc.params.get("n", 3))
    reports = counterexample_suite(n, sc.res, sc.params.get("D", "sphere"), cfg)
    all_refuted = all(r.status == "no_solution_on_grid" and r.universal_witness is not None
                      and np.allclose(r.universal_witness, 0.0) for r in reports)
    hyps_ok = all(v.passed for r in reports for v in r.hypotheses.values())
    return {
        "verdict": "no_solution_on_grid" if all_refuted else "mixed",
        "hypotheses": "pass" if hyps_ok else "fail",
        "residuals": {r.name: r.residual for r in reports},
        "witnesses": {r.name: r.universal_witness for r in reports},
        "details": {r.name: {"status": r.status, "hypotheses": _hyp_summary(r.hypotheses),
                             "universal_value": r.universal_value} for r in reports},
        "grids": reports[0].grids,
    }


def _quadratic_problem(params: dict) -> EquilibriumProblem:
    lo = params.get("lo", [-1.0, -1.0])
    hi = params.get("hi", [1.0, 1.0])
    K = Polytope.from_box(lo, hi)
    phi, batch = potential_gap(squared_norm, squared_norm_rows)
    return EquilibriumProblem(K, dense_sets.full(K), upper_ray(phi, batch, "potential gap"), Kind.STRONG_GEQ,
                              "quadratic potential")


def _run_equilibrium(sc: Scenario, cfg: SolverConfig) -> dict:
    p = _quadratic_problem(sc.params)
    rep = solve_compact(p, sc.res, cfg=cfg)
    out = {"verdict": rep.status, "x0": rep.x0, "hypotheses": _hyp_summary(rep.hypotheses),
           "residuals": {"post_extension": rep.residual, "on_D": rep.d_residual},
           "witnesses": {"extension": rep.extension_witness}, "grids": rep.grids}
    if sc.params.get("kkm", True):
        grid = make_grid(p.K, sc.res)
        cert = kkm.kkm_certificate(p.F, "geq_zero", grid, grid, p.D, samples=200, seed=sc.seed)
        out["kkm"] = cert.to_record()
    return out


def _run_coercive(sc: Scenario, cfg: SolverConfig) -> dict:
    K = coercive.ConeSet.orthant(int(sc.params.get("n", 2)))
    phi, batch = potential_gap(squared_norm, squared_norm_rows)
    p = EquilibriumProblem(K, dense_sets.full(K), upper_ray(phi, batch, "potential gap"), Kind.STRONG_GEQ,
                           "quadratic potential on the orthant")
    spec = coercive.CoercivitySpec(sc.params.get("mode", "zero_witness"), float(sc.params.get("r", 1.0)),
                                   float(sc.params.get("r1", 2.0)), sc.params.get("y0", [0.0] * K.dim))
    check = coercive.check_coercivity(p.F, K, p.D, spec, p.kind, seed=sc.seed)
    rep, cert = coercive.solve_noncompact(p, spec, sc.res, cfg=cfg)
    recheck = max((max(coercive.recheck_line(p, rep.x0, cert.z0, line)) for line in cert.checks), default=0.0)
    bounds = [c.implied_bound for c in cert.checks]
    return {"verdict": rep.status, "x0": rep.x0, "coercivity": check.status.value,
            "hypotheses": _hyp_summary(rep.hypotheses),
            "residuals": {"truncation": rep.residual, "min_implied_bound": min(bounds) if bounds else None,
                          "recheck_error": recheck},
            "witnesses": {"extension": rep.extension_witness, "z0": cert.z0},
            "certificate_lines": len(cert.checks), "grids": rep.grids}


def _run_dgn(sc: Scenario, cfg: SolverConfig) -> dict:
    which = sc.builtin
    D = None
    if which == "dgn-skew":
        C = economy.skew_linear(sc.params.get("A", [[0.0, 1.0], [-1.0, 0.0]]))
    elif which == "dgn-dense-walras":
        C, D = economy.dense_walras(q=int(sc.params.get("q", 8)))
    else:
        C = economy.violating(int(sc.params.get("n", 2)))
    rep = economy.solve_dgn(C, D, sc.res, cfg=cfg)
    return {"verdict": rep.status, "x0": rep.x0, "z": rep.z,
            "walras": rep.walras.status.value, "upper_hemi": rep.upper_hemi.status.value,
            "residuals": {"sigma": rep.sigma_residual, "z_negativity": rep.z_negativity,
                          "walras_max_abs": rep.walras.stats.get("max_abs")},
            "witnesses": {"walras": rep.walras.witness}, "z_in_hull": rep.z_in_hull,
            "grids": rep.solve.grids if rep.solve else None}


def _run_nash(sc: Scenario, cfg: SolverConfig) -> dict:
    if sc.builtin == "matching-pennies":
        g = games.matching_pennies()
    elif sc.builtin == "prisoners-dilemma":
        g = games.prisoners_dilemma()
    else:
        g = games.matrix_game(sc.params["losses"], sc.name)
    rep = games.solve_nash(g, sc.res, cfg.tol, int(sc.params.get("max_rounds", 200)))
    hyps = games.validate_nash_hypotheses(g, max(sc.res, 0.1), seed=sc.seed, with_phi=False)
    return {"verdict": "found" if rep.certified else "not_certified", "x0": rep.x,
            "hypotheses": {f"{k[0]}:{k[1]}": v.status.value for k, v in hyps.items()},
            "residuals": {"V": rep.V}, "witnesses": {"worst_y": rep.worst_y},
            "rounds": rep.rounds, "restarts": rep.restarts, "grids": {"res": sc.res}}


def _run_dense_check(sc: Scenario, cfg: SolverConfig) -> dict:
    eps = float(sc.params.get("eps", 0.05))
    if sc.builtin == "ssd-rational-grid":
        parent = Polytope.from_box([0.0, 0.0], [1.0, 1.0])
        U = dense_sets.rational_grid(parent, int(sc.params.get("q", 1000)))
        forced, hull = None, None
    elif sc.builtin == "punctured-ball":
        parent = Ball.unit(3)
        U = dense_sets.punctured(parent, dense_sets.INSCRIBED_SQUARE)
        forced, hull = [dense_sets.SQUARE_CROSSING_PAIR], dense_sets.SQUARE_CROSSING_PAIR
    else:
        parent = Ball.unit(int(sc.params.get("n", 3)))
        U = dense_sets.sphere_in_ball(parent.dim)
        forced, hull = None, None
    grid = make_grid(parent, sc.res)
    rep = dense_sets.check_self_segment_dense(U, int(sc.params.get("pairs", 50)), 20, eps, sc.seed, forced, grid)
    replay = dense_sets.replay_witness(U, rep.witness) if rep.witness else None
    if hull is None:
        rng = np.random.default_rng([sc.seed, 3])
        configs = int(sc.params.get("hull_configs", 10))
        hull_ok = True
        if U.kind != "sphere_in_ball":
            for c in range(configs):
                pts = U.sample(rng, 2 + c % 3)
                if not dense_sets.check_hull_trace_dense(U, pts, 0.1, eps, seed=sc.seed + c):
                    hull_ok = False
                    break
        else:
            hull_ok = None  # two sphere points span a chord that leaves the sphere; nothing to test
    else:
        hull_ok = dense_sets.check_hull_trace_dense(U, hull, 0.1, eps, seed=sc.seed)
    return {"verdict": "pass" if rep.segment_ok else "fail", "dense": rep.dense_ok, "hull_trace": hull_ok,
            "witnesses": {"segment": rep.witness, "replays": replay}, "residuals": {},
            "samples_used": rep.samples_used, "grids": {"res": sc.res, "points": len(grid)}}


BUILTINS: dict[str, Builtin] = {
    "ssd-rational-grid": Builtin("dense_check", "points of the unit square with rational coordinates "
                                 "(denominators <= q): dense and self segment-dense", _run_dense_check, 0.1),
    "punctured-ball": Builtin("dense_check", "unit 3-ball minus an open inscribed square: dense but the segment "
                              "between (3/5,3/5,0) and (-3/5,-3/5,0) misses it", _run_dense_check, 0.25),
    "sphere-in-ball": Builtin("dense_check", "unit sphere inside the unit ball: not self segment-dense",
                              _run_dense_check, 0.25),
    "counterexample-ball": Builtin("counterexample", "phi(x, y) = <x, y> - 1 on the ball with D the sphere: "
                                   "hypotheses hold on D yet y = 0 refutes every x", _run_counterexample, 0.25),
    "quadratic-potential": Builtin("equilibrium", "F(x, y) = [|y|^2 - |x|^2, inf) on [-1, 1]^2: "
                                   "strong solution at the origin", _run_equilibrium, 0.1),
    "coercive-orthant": Builtin("coercive", "same potential gap on the nonnegative quadrant, truncated "
                                "and extended with a zero witness", _run_coercive, 0.25),
    "dgn-skew": Builtin("dgn", "excess demand {Ax} with A skew-symmetric: equilibrium price (0, 1)",
                        _run_dgn, 0.05),
    "dgn-dense-walras": Builtin("dgn", "Walras' law only on rational prices of small denominator",
                                _run_dgn, 0.05),
    "dgn-violating": Builtin("dgn", "excess demand {-x}: Walras' law fails, no equilibrium price",
                             _run_dgn, 0.05),
    "matching-pennies": Builtin("nash", "mixed extension of matching pennies: uniform equilibrium",
                                _run_nash, 0.05),
    "prisoners-dilemma": Builtin("nash", "prisoner's dilemma: both players defect", _run_nash, 0.05),
    "matrix-game": Builtin("nash", "mixed extension of a finite game given by loss tensors", _run_nash, 0.05),
}


def list_builtins() -> dict[str, str]:
    return {name: f"[{b.kind}] {b.anchor}" for name, b in BUILTINS.items()}


# ---------------------------------------------------------------------------
# config handling


def parse_config(data: dict) -> list[Scenario]:
    defaults = data.get("defaults", {})
    if not isinstance(defaults, dict):
        raise ConfigError("defaults: expected a table")
    raw = data.get("scenario", [])
    if not isinstance(raw, list):
        raise ConfigError("scenario: expected an array of tables ([[scenario]])")
    out = []
    for k, s in enumerate(raw):
        where = f"scenario[{k}]"
        if not isinstance(s, dict):
            raise ConfigError(f"{where}: expected a table")
        name = s.get("name") or where
        kind = s.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"{name}: kind: unknown kind {kind!r} (expected one of {', '.join(KINDS)})")
        inst = s.get("instance", {})
        if not isinstance(inst, dict) or "builtin" not in inst:
            raise ConfigError(f"{name}: instance.builtin: missing")
        builtin = inst["builtin"]
        if builtin not in BUILTINS:
            raise ConfigError(f"{name}: instance.builtin: unknown built-in {builtin!r}")
        if BUILTINS[builtin].kind != kind:
            raise ConfigError(f"{name}: instance.builtin: {builtin!r} is a {BUILTINS[builtin].kind} instance, "
                              f"not {kind}")
        params = {key: v for key, v in inst.items() if key != "builtin"}
        grids = s.get("grids", {})
        res = grids.get("res", defaults.get("res", BUILTINS[builtin].default_res))
        if not isinstance(res, (int, float)) or not res > 0:
            raise ConfigError(f"{name}: grids.res: expected a positive number")
        tols = {**defaults.get("tolerances", {}), **s.get("tolerances", {})}
        unknown = set(tols) - set(DEFAULTS.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"{name}: tolerances: unknown keys {sorted(unknown)}")
        seed = s.get("seed", defaults.get("seed", DEFAULT_SEED))
        if not isinstance(seed, int):
            raise ConfigError(f"{name}: seed: expected an integer")
        out.append(Scenario(name, kind, builtin, params, float(res), tols, seed, s.get("expect", {})))
    return out


def load_config(path) -> list[Scenario]:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)


def _matches(expected, got) -> bool:
    if isinstance(expected, (list, tuple)) and got is not None:
        g = np.asarray(got, dtype=float).ravel()
        e = np.asarray(expected, dtype=float).ravel()
        return g.shape == e.shape and bool(np.allclose(g, e, atol=1e-9))
    if isinstance(expected, float) and isinstance(got, (int, float)):
        return abs(expected - got) <= 1e-9
    return expected == got


def run_scenario(sc: Scenario, workers: int = 1) -> dict:
    tol = DEFAULTS.with_overrides(**sc.tolerances) if sc.tolerances else DEFAULTS
    cfg = SolverConfig.from_tolerances(tol, seed=sc.seed)
    cfg.workers = workers
    body = BUILTINS[sc.builtin].run(sc, cfg)
    mismatches = {k: {"expected": v, "got": _jsonable(body.get(k))}
                  for k, v in sc.expect.items() if not _matches(v, _jsonable(body.get(k)))}
    record = {"scenario": sc.name, "kind": sc.kind, "builtin": sc.builtin, "anchor": BUILTINS[sc.builtin].anchor,
              "seed": sc.seed, "res": sc.res, "tolerances": {k: getattr(tol, k) for k in ("solve", "certificate")},
              **body, "expect": sc.expect, "expectation_met": not mismatches, "mismatches": mismatches,
              "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    return _jsonable(record)


def run_scenarios(scenarios: list[Scenario], stream, workers: int = 1, summary=None) -> int:
    failed = 0
    for sc in scenarios:
        try:
            rec = run_scenario(sc, workers)
        except (GeometryError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{sc.name}: {exc}") from exc
        stream.write(json.dumps(rec, sort_keys=True) + "\n")
        stream.flush()
        if summary is not None:
            mark = "ok  " if rec["expectation_met"] else "MISS"
            summary.write(f"{mark} {sc.name:<28} {rec['verdict']}\n")
        failed += not rec["expectation_met"]
    return 2 if failed else 0


def bundled_config(name: str):
    return resources.files("ssdeq") / "configs" / name


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="ssdeq", description="Equilibrium problems on densely defined domains.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the scenarios of a config file")
    run.add_argument("config")
    rep = sub.add_parser("reproduce-paper", help="run the full bundled scenario suite")
    for p in (run, rep):
        p.add_argument("--out", help="write the JSON-lines report here instead of stdout")
        p.add_argument("--seed", type=int, help="override every scenario's seed")
        p.add_argument("--res", type=float, help="override every scenario's grid resolution")
        p.add_argument("--workers", type=int, default=1, help="threads for bifunction evaluation")
        p.add_argument("--quiet", action="store_true", help="no summary on stderr")
    sub.add_parser("list", help="list built-in instances")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "list":
        for name, text in list_builtins().items():
            print(f"{name:<22} {text}")
        return 0

    try:
        if args.command == "run":
            scenarios = load_config(args.config)
        else:
            with bundled_config("reproduce_paper.toml").open("rb") as fh:
                scenarios = parse_config(tomllib.load(fh))
        for sc in scenarios:
            if args.seed is not None:
                sc.seed = args.seed
            if args.res is not None:
                if not args.res > 0:
                    raise ConfigError("--res: expected a positive number")
                sc.res = args.res
        summary = None if args.quiet else sys.stderr
        if args.out:
            with open(args.out, "w") as fh:
                return run_scenarios(scenarios, fh, args.workers, summary)
        return run_scenarios(scenarios, sys.stdout, args.workers, summary)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
