"""Command-line pipeline: solve / certify / simulate / verify / report.

Configuration is a single YAML file (schema in the README, examples
under configs/).  Exit status: 0 when every verdict passes, 2 on verdict
failures, 1 on configuration or runtime errors.  Reports are JSON with
stable key order; pass --no-timestamp for byte-identical reruns.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml
from filelock import FileLock, Timeout

from . import systems
from .certificates import (YFunction, check_detectability, check_stabilizability,
                           check_uniform_margins, check_value_decrease, choose_route)
from .core import InputBox
from .dp import (DiscountedSolution, InputGrid, StateGrid, TerminalRule,
                 solve_discounted, solve_time_varying, stationary_discount,
                 stationary_stage_scale)
from .errors import ClockDPError, ConfigurationError, ConvergenceError
from .reporting import write_json
from .simulate import (GreedyController, PolicyController, annotate_bound, annotate_y,
                       default_horizon, rollout, trajectory_from_csv, verify_bound)
from .weights import check_envelope, weight_from_spec

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERDICT = 2

_PROBLEMS = ("harmonic-scalar", "nonholonomic-integrator", "pendulum-tracking", "inline-linear")


@dataclass
class RunConfig:
    """Validated run configuration; ``raw`` is the normalized dict."""

    problem_name: str
    problem_params: dict
    weight: Optional[object]
    grid: Optional[StateGrid]
    inputs: Optional[InputGrid]
    solver: dict
    certification: dict
    rollout: dict
    output_dir: str
    raw: dict = field(repr=False, default_factory=dict)


def _need(section: dict, key: str, kind, path: str, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigurationError(f"field '{path}.{key}': missing")
        return default
    val = section[key]
    try:
        if kind is float:
            out = float(val)
        elif kind is int:
            out = int(val)
            if out != float(val):
                raise ValueError
        elif kind is str:
            if not isinstance(val, str):
                raise ValueError
            out = val
        elif kind is list:
            if not isinstance(val, list):
                raise ValueError
            out = val
        elif kind is dict:
            if not isinstance(val, dict):
                raise ValueError
            out = val
        else:
            out = val
    except (TypeError, ValueError):
        raise ConfigurationError(f"field '{path}.{key}': expected {kind.__name__}, got {val!r}")
    return out


def validate_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a mapping")
    prob = _need(data, "problem", dict, "config", required=True)
    name = _need(prob, "name", str, "problem", required=True)
    if name not in _PROBLEMS:
        raise ConfigurationError(f"field 'problem.name': unknown problem {name!r}; "
                                 f"choose from {_PROBLEMS}")
    params = _need(prob, "params", dict, "problem", default={})

    weight = None
    if "weight" in data:
        wsec = _need(data, "weight", dict, "config")
        variant = _need(wsec, "variant", str, "weight", required=True)
        weight = weight_from_spec(variant, _need(wsec, "params", dict, "weight", default={}))

    grid = None
    if "grid" in data:
        gsec = _need(data, "grid", dict, "config")
        lo = _need(gsec, "lo", list, "grid", required=True)
        hi = _need(gsec, "hi", list, "grid", required=True)
        counts = _need(gsec, "counts", list, "grid", required=True)
        grid = StateGrid(lo=tuple(float(v) for v in lo), hi=tuple(float(v) for v in hi),
                         counts=tuple(int(c) for c in counts))

    inputs = None
    if "inputs" in data:
        isec = _need(data, "inputs", dict, "config")
        lo = _need(isec, "lo", list, "inputs", required=True)
        hi = _need(isec, "hi", list, "inputs", required=True)
        counts = _need(isec, "counts", list, "inputs", required=True)
        inputs = InputGrid(box=InputBox(np.asarray(lo, float), np.asarray(hi, float)),
                           counts=tuple(int(c) for c in counts))

    solver = _need(data, "solver", dict, "config", default={})
    kind = _need(solver, "kind", str, "solver", default="discounted")
    if kind not in ("discounted", "time-varying"):
        raise ConfigurationError(f"field 'solver.kind': expected 'discounted' or "
                                 f"'time-varying', got {kind!r}")
    tol = _need(solver, "tol", float, "solver", default=1e-7)
    if tol <= 0:
        raise ConfigurationError("field 'solver.tol': expected positive number")
    solver_norm = {
        "kind": kind,
        "tol": tol,
        "max_iterations": _need(solver, "max_iterations", int, "solver", default=100_000),
        "clock_horizon": _need(solver, "clock_horizon", int, "solver", default=20),
        "terminal_rule": _need(solver, "terminal_rule", str, "solver", default="zero"),
    }
    if solver_norm["terminal_rule"] not in ("zero", "vbar"):
        raise ConfigurationError("field 'solver.terminal_rule': expected 'zero' or 'vbar'")

    cert = _need(data, "certification", dict, "config", default={})
    cert_norm = {
        "samples": _need(cert, "samples", int, "certification", default=200),
        "seed": _need(cert, "seed", int, "certification", default=0),
        "eta": _need(cert, "eta", float, "certification", default=1e-9),
        "decrease_samples": _need(cert, "decrease_samples", int, "certification", default=32),
        "envelope_k_max": _need(cert, "envelope_k_max", int, "certification", default=10_000),
        "violation_cap": _need(cert, "violation_cap", int, "certification", default=20),
        "sigma_floor": _need(cert, "sigma_floor", float, "certification", default=0.0),
        "decrease_slack": _need(cert, "decrease_slack", float, "certification", default=0.0),
    }

    roll = _need(data, "rollout", dict, "config", default={})
    roll_norm = {
        "initial_states": _need(roll, "initial_states", list, "rollout", default=[]),
        "horizon": _need(roll, "horizon", int, "rollout", default=0),
        "controller": _need(roll, "controller", str, "rollout", default="policy"),
        "start_clock": _need(roll, "start_clock", int, "rollout", default=0),
    }
    if roll_norm["controller"] not in ("policy", "greedy", "analytic"):
        raise ConfigurationError("field 'rollout.controller': expected policy|greedy|analytic")

    out_dir = _need(data, "output_dir", str, "config", default="out")

    raw = {
        "problem": {"name": name, "params": params},
        "solver": solver_norm,
        "certification": cert_norm,
        "rollout": roll_norm,
        "output_dir": out_dir,
    }
    if "weight" in data:
        raw["weight"] = data["weight"]
    if grid is not None:
        raw["grid"] = {"lo": [float(v) for v in grid.lo], "hi": [float(v) for v in grid.hi],
                       "counts": [int(c) for c in grid.counts]}
    if inputs is not None:
        raw["inputs"] = {"lo": [float(v) for v in inputs.box.lo],
                         "hi": [float(v) for v in inputs.box.hi],
                         "counts": [int(c) for c in inputs.counts]}
    return RunConfig(problem_name=name, problem_params=params, weight=weight, grid=grid,
                     inputs=inputs, solver=solver_norm, certification=cert_norm,
                     rollout=roll_norm, output_dir=out_dir, raw=raw)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return validate_config(data)


def build_problem(cfg: RunConfig) -> systems.ExampleProblem:
    name = cfg.problem_name
    params = dict(cfg.problem_params)
    if name == "harmonic-scalar":
        prob = systems.harmonic_scalar(**params)
    elif name == "nonholonomic-integrator":
        if cfg.weight is None:
            raise ConfigurationError("nonholonomic-integrator needs a 'weight' section")
        prob = systems.nonholonomic_integrator(cfg.weight, grid=cfg.grid, input_grid=cfg.inputs)
    elif name == "pendulum-tracking":
        if cfg.weight is not None:
            params.setdefault("weight_band", cfg.weight)
        prob = systems.pendulum_tracking(**params)
    elif name == "inline-linear":
        if cfg.weight is None or cfg.grid is None or cfg.inputs is None:
            raise ConfigurationError("inline-linear needs weight, grid and inputs sections")
        prob = systems.linear_quadratic_problem(
            params.get("A"), params.get("B"), params.get("Q"), params.get("G"),
            cfg.weight, cfg.grid, cfg.inputs)
    else:  # pragma: no cover - guarded by validate_config
        raise ConfigurationError(f"unknown problem {name}")
    if cfg.grid is not None or cfg.inputs is not None:
        prob = _with_grids(prob, cfg.grid, cfg.inputs)
    return prob


def _with_grids(prob, grid, inputs):
    import dataclasses
    changes = {}
    if grid is not None:
        changes["grid"] = grid
    if inputs is not None:
        changes["input_grid"] = inputs
    return dataclasses.replace(prob, **changes)


def _solve(cfg: RunConfig, prob, threads: int):
    s = cfg.solver
    if s["kind"] == "discounted":
        gamma = stationary_discount(prob.aug)
        scale = stationary_stage_scale(prob.aug)
        ell1 = prob.stage.ell1
        if scale != 1.0:
            ell1 = lambda x, u, _e=prob.stage.ell1, _s=scale: _s * np.asarray(_e(x, u))
        return solve_discounted(prob.dynamics, ell1, gamma, prob.grid,
                                prob.input_grid, tol=s["tol"],
                                max_iterations=s["max_iterations"], threads=threads)
    if s["terminal_rule"] == "vbar":
        if prob.bundle.v_upper is None:
            raise ConfigurationError("terminal_rule 'vbar' needs a bundle with v_upper")
        rule = TerminalRule.from_vbar(prob.bundle.v_upper, prob.sigma)
    else:
        rule = TerminalRule.zero()
    return solve_time_varying(prob.aug, prob.grid, prob.input_grid,
                              clock_horizon=s["clock_horizon"], terminal_rule=rule,
                              tol=s["tol"], threads=threads)


def _write_solution(out: str, solution) -> None:
    solution.value.to_csv(os.path.join(out, "value.csv"))
    solution.policy.to_csv(os.path.join(out, "policy.csv"))
    mask = solution.value.contaminated
    np.savetxt(os.path.join(out, "contamination.csv"),
               np.atleast_2d(mask.astype(int)), fmt="%d", delimiter=",")


def _load_solution(cfg: RunConfig, prob, out: str):
    """Rebuild a solution from solve artifacts in ``out``; None if absent."""
    import json
    from .dp import Policy, TimeVaryingSolution, ValueTable, stationary_discount
    paths = {name: os.path.join(out, name + ".csv")
             for name in ("value", "policy", "contamination")}
    if not all(os.path.exists(p) for p in paths.values()):
        return None
    table = ValueTable.from_csv(paths["value"])
    policy = Policy.from_csv(paths["policy"], prob.input_grid)
    mask = np.loadtxt(paths["contamination"], delimiter=",", dtype=int).astype(bool)
    report = {}
    report_path = os.path.join(out, "solve_report.json")
    if os.path.exists(report_path):
        with open(report_path) as fh:
            report = json.load(fh)
    table.approximation = report.get("approximation", table.approximation)
    tol = cfg.solver["tol"]
    if table.is_time_varying:
        table.contaminated = mask.reshape(table.values.shape)
        rule = (TerminalRule.zero() if report.get("terminal_rule", "zero") == "zero"
                else TerminalRule.from_vbar(prob.bundle.v_upper, prob.sigma))
        return TimeVaryingSolution(value=table, policy=policy,
                                   clock_horizon=table.clock_horizon, terminal=rule, tol=tol)
    table.contaminated = mask.reshape(-1)
    gamma = stationary_discount(prob.aug)
    return DiscountedSolution(
        value=table, policy=policy, gamma=gamma, tol=tol,
        iterations=int(report.get("iterations", -1)),
        residual=float(report.get("residual", float("nan"))),
        error_bound=report.get("error_bound"),
        converged=bool(report.get("converged", True)))


def run_solve(cfg: RunConfig, out: str, threads: int, timestamp: bool) -> int:
    prob = build_problem(cfg)
    try:
        solution = _solve(cfg, prob, threads)
    except ConvergenceError as exc:
        report = {"problem": cfg.problem_name, "converged": False,
                  "residual": exc.residual, "iterations": exc.iterations,
                  "error": str(exc)}
        if exc.solution is not None:
            _write_solution(out, exc.solution)
            report.update(exc.solution.report_dict())
            report["converged"] = False
        write_json(os.path.join(out, "solve_report.json"), report, timestamp)
        print(f"solve: NOT CONVERGED (residual {exc.residual:g})", file=sys.stderr)
        return EXIT_ERROR
    _write_solution(out, solution)
    report = {"problem": cfg.problem_name, **solution.report_dict(), "threads": threads}
    write_json(os.path.join(out, "solve_report.json"), report, timestamp)
    print(f"solve: ok ({report.get('iterations', cfg.solver['clock_horizon'])} sweeps, "
          f"contaminated {solution.contaminated_fraction:.1%})")
    return EXIT_OK


def _sample_states(prob, n: int, rng) -> np.ndarray:
    lo = np.asarray(prob.grid.lo)
    hi = np.asarray(prob.grid.hi)
    return rng.uniform(lo, hi, size=(n, prob.grid.ndim))


def run_certify(cfg: RunConfig, out: str, threads: int, timestamp: bool) -> int:
    prob = build_problem(cfg)
    cert = cfg.certification
    rng = np.random.default_rng(cert["seed"])
    eta = cert["eta"]
    cap = cert["violation_cap"]
    n = cert["samples"]
    horizon = cfg.solver["clock_horizon"]

    states = _sample_states(prob, n, rng)
    taus = rng.integers(0, horizon + 1, n)
    u_lo = np.asarray(prob.input_grid.box.lo)
    u_hi = np.asarray(prob.input_grid.box.hi)
    us = rng.uniform(u_lo, u_hi, size=(n, prob.input_grid.box.n_u))

    checks = []
    payload = {"problem": cfg.problem_name, "seed": cert["seed"], "eta": eta}

    if prob.weight is not None:
        env_rep = check_envelope(prob.weight, cert["envelope_k_max"], cap=cap)
        payload["envelope"] = env_rep.to_dict()
        checks.append(env_rep)

    det = check_detectability(prob.bundle, prob.aug,
                              list(zip(states, taus, us)), eta=eta, cap=cap)
    payload["detectability"] = det.to_dict()
    checks.append(det)

    separable_weight = prob.weight if prob.stage.is_separable else None
    if (prob.bundle.ua_ell is not None and prob.bundle.oa_V is not None) or \
            (prob.bundle.ua is not None and prob.bundle.oa is not None):
        s1s = rng.uniform(0.0, 10.0, n)
        margins = check_uniform_margins(prob.bundle, list(zip(s1s, taus)),
                                        weight=separable_weight, eta=eta, cap=cap)
        payload["uniform_margins"] = margins.to_dict()
        checks.append(margins)

    route = choose_route(prob.bundle, separable_weight)
    payload["route"] = route.to_dict()

    solution = None
    if prob.bundle.v_upper is not None:
        value_source = prob.analytic_value
        if value_source is None and prob.value_upper_estimate is not None:
            value_source = prob.value_upper_estimate
            payload.setdefault("notes", []).append(
                "stabilizability checked against a constructive upper estimate "
                "of the value; passing is sufficient")
        if value_source is None:
            solution = _load_solution(cfg, prob, out)
            if solution is None:
                solution = _solve(cfg, prob, threads)
                payload.setdefault("notes", []).append(
                    "no solve artifacts in the output directory; solved in memory")
            gamma = solution.gamma if isinstance(solution, DiscountedSolution) else None
            table = solution.value
            if table.is_time_varying:
                value_source = lambda x, tau: float(table(x, tau=min(tau, table.clock_horizon)))
            else:
                value_source = YFunction.from_table(table, prob.bundle, gamma=gamma).value
            payload.setdefault("notes", []).append(
                f"stabilizability checked against a solved {table.approximation} "
                "approximation (necessary but not sufficient when 'lower')")
        floor = cert["sigma_floor"]
        stab_samples = [(x, t) for x, t in zip(states, taus)
                        if float(prob.sigma(x)) >= floor]
        stab = check_stabilizability(prob.bundle, value_source, stab_samples,
                                     eta=eta, cap=cap)
        if floor > 0.0:
            stab.notes.append(
                f"samples restricted to sigma >= {floor}: below the input-grid "
                "stall scale a quantized-input table is not a lower bound")
        payload["stabilizability"] = stab.to_dict()
        checks.append(stab)

    if route.accepted and route.route == "uniform-kl":
        if solution is None:
            solution = _load_solution(cfg, prob, out) or _solve(cfg, prob, threads)
        node_sample = rng.choice(prob.grid.n_nodes, size=min(cert["decrease_samples"],
                                                             prob.grid.n_nodes), replace=False)
        slack = max(2.0 * cfg.solver["tol"], cert["decrease_slack"])
        dec = check_value_decrease(solution, prob.aug, prob.bundle, taus=(0,),
                                   slack=slack, nodes=np.sort(node_sample),
                                   form="uniform", cap=cap,
                                   value_fn=prob.analytic_value)
        if prob.analytic_value is None:
            dec.notes.append("table-valued Y: slack must absorb the table's own error")
        payload["kl_decrease"] = dec.to_dict()
        checks.append(dec)

    verdict = all(c.passed for c in checks) and (route.accepted or route.route == "none")
    payload["verdict"] = "pass" if verdict else "fail"
    write_json(os.path.join(out, "certification.json"), payload, timestamp)
    print(f"certify: {payload['verdict']} (route {route.route}"
          + ("" if route.accepted else f", rejected: {route.reason}") + ")")
    return EXIT_OK if verdict else EXIT_VERDICT


def run_simulate(cfg: RunConfig, out: str, threads: int, timestamp: bool) -> int:
    prob = build_problem(cfg)
    roll = cfg.rollout
    starts = roll["initial_states"]
    payload = {"problem": cfg.problem_name, "trajectories": [], "controller": roll["controller"]}
    if not starts:
        payload["note"] = "no initial states configured; nothing to simulate"
        write_json(os.path.join(out, "simulation.json"), payload, timestamp)
        print("simulate: no initial states configured (no-op)")
        return EXIT_OK

    solution = None
    controller = prob.analytic_controller
    if roll["controller"] != "analytic":
        solution = _load_solution(cfg, prob, out)
        if solution is None:
            raise ConfigurationError(
                f"missing policy/value files in {out}: run `clockdp solve` first")
        controller = (PolicyController(solution.policy) if roll["controller"] == "policy"
                      else GreedyController(solution.value, prob.aug, prob.input_grid))
    elif controller is None:
        raise ConfigurationError("rollout.controller 'analytic' but the problem has none")

    separable_weight = prob.weight if prob.stage.is_separable else None
    route = choose_route(prob.bundle, separable_weight)
    beta = route.beta if route.accepted else None

    from .core import AugmentedState
    exit_code = EXIT_OK
    # grid confinement only matters when the controller reads tables
    table_backed = roll["controller"] != "analytic"
    grid_arg = prob.grid if table_backed else None
    mask = solution.value.contaminated if solution is not None else None
    for i, x0 in enumerate(starts):
        x0 = np.asarray(x0, dtype=float)
        q0 = AugmentedState(x=x0, tau=roll["start_clock"])
        lo, hi = np.asarray(prob.grid.lo), np.asarray(prob.grid.hi)
        if np.any(x0 < lo) or np.any(x0 > hi):
            payload["trajectories"].append({"index": i, "truncated": True,
                                            "reason": "initial state outside the grid"})
            exit_code = EXIT_VERDICT
            continue
        horizon = roll["horizon"]
        if horizon <= 0:
            s0 = float(prob.sigma(x0))
            horizon = default_horizon(beta, s0, q0.tau) if beta is not None else 100
        traj = rollout(prob.aug, controller, q0, horizon, sigma=prob.sigma,
                       grid=grid_arg, contaminated=mask)
        entry = {"index": i, "horizon": traj.horizon, "truncated": traj.truncated,
                 "boundary_contaminated": traj.boundary_contaminated,
                 "total_cost": traj.total_cost()}
        if solution is not None:
            gamma = solution.gamma if isinstance(solution, DiscountedSolution) else None
            yf = YFunction.from_table(solution.value, prob.bundle, gamma=gamma)
            annotate_y(traj, yf)
        elif prob.analytic_value is not None:
            annotate_y(traj, YFunction(value=prob.analytic_value, bundle=prob.bundle))
        if beta is not None:
            annotate_bound(traj, beta)
            rep = verify_bound(traj, beta, eta=cfg.certification["eta"])
            entry["bound"] = rep.to_dict()
            if not rep.passed:
                exit_code = EXIT_VERDICT
        if traj.truncated:
            exit_code = EXIT_VERDICT
        path = os.path.join(out, f"trajectory_{i}.csv")
        traj.to_csv(path)
        entry["csv"] = os.path.basename(path)
        payload["trajectories"].append(entry)
    payload["verdict"] = "pass" if exit_code == EXIT_OK else "fail"
    write_json(os.path.join(out, "simulation.json"), payload, timestamp)
    print(f"simulate: {payload['verdict']} ({len(starts)} rollouts)")
    return exit_code


def run_verify(cfg: RunConfig, out: str, timestamp: bool) -> int:
    prob = build_problem(cfg)
    separable_weight = prob.weight if prob.stage.is_separable else None
    route = choose_route(prob.bundle, separable_weight)
    payload = {"problem": cfg.problem_name, "route": route.to_dict(), "trajectories": []}
    ok = True
    if prob.weight is not None:
        env_rep = check_envelope(prob.weight, cfg.certification["envelope_k_max"])
        payload["envelope"] = env_rep.to_dict()
        ok = ok and env_rep.passed
    paths = sorted(glob.glob(os.path.join(out, "trajectory_*.csv")))
    if route.beta is not None:
        for path in paths:
            traj = trajectory_from_csv(path)
            rep = verify_bound(traj, route.beta, sigma=prob.sigma,
                               eta=cfg.certification["eta"])
            payload["trajectories"].append({"csv": os.path.basename(path), **rep.to_dict()})
            ok = ok and rep.passed
    elif paths:
        payload["note"] = "no accepted decay route; stored trajectories not re-checked"
    payload["verdict"] = "pass" if ok else "fail"
    write_json(os.path.join(out, "verify_report.json"), payload, timestamp)
    print(f"verify: {payload['verdict']} ({len(paths)} trajectories)")
    return EXIT_OK if ok else EXIT_VERDICT


def run_report(cfg: RunConfig, out: str, timestamp: bool, echo_config: bool) -> int:
    import json
    payload = {"problem": cfg.problem_name, "stages": {}}
    ok = True
    for stage, fname in (("solve", "solve_report.json"), ("certify", "certification.json"),
                         ("simulate", "simulation.json"), ("verify", "verify_report.json")):
        path = os.path.join(out, fname)
        if os.path.exists(path):
            with open(path) as fh:
                stage_payload = json.load(fh)
            payload["stages"][stage] = stage_payload
            verdict = stage_payload.get("verdict")
            if verdict == "fail" or stage_payload.get("converged") is False:
                ok = False
    payload["verdict"] = "pass" if ok else "fail"
    write_json(os.path.join(out, "report.json"), payload, timestamp)
    if echo_config:
        with open(os.path.join(out, "config_echo.yaml"), "w", newline="\n") as fh:
            yaml.safe_dump(cfg.raw, fh, sort_keys=True)
    print(f"report: {payload['verdict']} ({len(payload['stages'])} stages aggregated)")
    return EXIT_OK if ok else EXIT_VERDICT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clockdp",
        description="Clock-augmented dynamic programming with stability certification")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "certify", "simulate", "verify", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default=None, help="output directory (default from config)")
        p.add_argument("--seed", type=int, default=None, help="override certification seed")
        p.add_argument("--no-timestamp", action="store_true",
                       help="omit timestamps for byte-identical reports")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
        if name == "report":
            p.add_argument("--echo-config", action="store_true",
                           help="write the normalized config back out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.certification["seed"] = args.seed
            cfg.raw["certification"]["seed"] = args.seed
        out = args.out or cfg.output_dir
        os.makedirs(out, exist_ok=True)
        timestamp = not args.no_timestamp
        lock = FileLock(os.path.join(out, ".clockdp.lock"))
        try:
            lock.acquire(timeout=0.0)
        except Timeout:
            print(f"error: another run holds the output directory {out}", file=sys.stderr)
            return EXIT_ERROR
        try:
            if args.command == "solve":
                return run_solve(cfg, out, args.threads, timestamp)
            if args.command == "certify":
                return run_certify(cfg, out, args.threads, timestamp)
            if args.command == "simulate":
                return run_simulate(cfg, out, args.threads, timestamp)
            if args.command == "verify":
                return run_verify(cfg, out, timestamp)
            return run_report(cfg, out, timestamp, getattr(args, "echo_config", False))
        finally:
            lock.release()
    except ClockDPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
