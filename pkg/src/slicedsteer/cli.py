"""Command line front end: ``steer``, ``compare`` and ``check``.

Exit codes: 0 success, 1 a certification check failed, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
import time
from contextlib import nullcontext

import numpy as np

from . import __version__
from .analysis import (
    check_convergence,
    check_energy_identity,
    check_fixed_point,
    check_map_monotonicity,
    check_metric_properties,
    check_sw2_derivative,
    check_weighted_energy_identity,
)
from .errors import ConfigurationError, DomainError, IntegrationError
from .gaussian_steering import (
    SteeringProblem,
    brenier_map_gaussian,
    integrate_covariance,
    min_energy_moments,
)
from .particle_sim import DirectionSpec, SimConfig, chord_deviation, run, time_chord_deviation
from .sliced_core import GaussianLaw

log = logging.getLogger("slicedsteer")

DEFAULT_CONFIG = {
    "problem": {
        "m0": [-2.0, 2.0],
        "Sigma0": [[1.0, 0.2], [0.2, 0.5]],
        "mf": [-8.0, 4.0],
        "Sigmaf": [[0.1, 0.0], [0.0, 0.04]],
        "T": 1.0,
    },
    "sim": {
        "controller": "iterative-sliced",
        "T_d": 1000,
        "N": 5000,
        "seed": 0,
        "record_every": 10,
        "particles": True,
        "flow_steps": 4000,
        "epsilon": None,
        "low_discrepancy": False,
        "compare_T_d": 100000,
        "compare_snapshots": 10,
    },
    "dirs": {"M": 512, "scheme": "deterministic-angular", "seed": 0},
    "outputs": {"snapshots": True, "max_particles": None, "ellipse_points": 64},
    "check": {
        "steps": 4000,
        "epsilon": None,
        "energy_rtol": 0.005,
        "convergence_tol": 1e-3,
        "derivative_tol": 1e-4,
        "fd_step": None,
        "fixed_point_tol": 1e-10,
        "probes": 20,
    },
}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def load_config(path: str | None) -> dict:
    """Defaults overlaid with a JSON document; unknown sections or keys are errors."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigurationError("config must be a JSON object")
    for section, values in user.items():
        if section not in cfg:
            raise ConfigurationError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigurationError(f"config section {section!r} must be an object")
        for key, value in values.items():
            if key not in cfg[section]:
                raise ConfigurationError(f"unknown config key {section}.{key}")
            cfg[section][key] = value
    return cfg


def build_problem(cfg: dict) -> SteeringProblem:
    p = cfg["problem"]
    try:
        return SteeringProblem(GaussianLaw(p["m0"], p["Sigma0"]), GaussianLaw(p["mf"], p["Sigmaf"]), float(p["T"]))
    except (DomainError, ValueError, TypeError) as exc:
        raise ConfigurationError(f"problem: {exc}") from None


def build_dirs_spec(cfg: dict) -> DirectionSpec:
    d = cfg["dirs"]
    if not isinstance(d["M"], int) or d["M"] < 1:
        raise ConfigurationError(f"dirs.M must be a positive integer, got {d['M']!r}")
    return DirectionSpec(d["M"], d["scheme"], d["seed"])


def build_sim(cfg: dict, controller: str | None = None, T_d: int | None = None, record_every: int | None = None) -> SimConfig:
    s = cfg["sim"]
    return SimConfig(
        T=float(cfg["problem"]["T"]),
        T_d=s["T_d"] if T_d is None else T_d,
        N=s["N"],
        seed=s["seed"],
        controller=s["controller"] if controller is None else controller,
        dirs=build_dirs_spec(cfg),
        record_every=s["record_every"] if record_every is None else record_every,
        flow_steps=s["flow_steps"],
        epsilon=s["epsilon"],
        low_discrepancy=s["low_discrepancy"],
    )


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return "%.17g" % float(x)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _moment_header(n: int) -> list[str]:
    return ["t"] + [f"m_{i + 1}" for i in range(n)] + [f"Sigma_{i + 1}{j + 1}" for i in range(n) for j in range(n)]


def _moment_row(t, m, S) -> list[str]:
    return [_fmt(t)] + [_fmt(v) for v in m] + [_fmt(v) for v in np.asarray(S).ravel()]


def ellipse_points(m, S, count: int = 64, scale: float = 3.0) -> np.ndarray:
    """``count`` vertices of the ``scale``-sigma ellipse of a planar Gaussian."""
    w, V = np.linalg.eigh(0.5 * (np.asarray(S) + np.asarray(S).T))
    L = V * np.sqrt(np.maximum(w, 0.0))
    phi = 2 * np.pi * np.arange(count) / count
    circle = np.stack([np.cos(phi), np.sin(phi)])
    return np.asarray(m)[None] + scale * (L @ circle).T


def _write_manifest(out: str, command: str, cfg: dict, started: float, outputs: dict, extra: dict) -> str:
    path = os.path.join(out, "manifest.json")
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg["sim"]["seed"],
        "config": cfg,
        "wall_time_s": time.time() - started,
        "outputs": outputs,
        **extra,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_steer(cfg: dict, out: str) -> int:
    started = time.time()
    problem = build_problem(cfg)
    sim = build_sim(cfg)
    n = problem.n
    outputs: dict[str, str] = {}
    extra: dict = {"controller": sim.controller}

    if sim.controller == "ideal-affine" and not cfg["sim"]["particles"]:
        dirs = sim.dirs.build(n)
        flow = integrate_covariance(problem, dirs, sim.flow_steps, sim.epsilon)
        times = [k * sim.h for k in range(0, sim.T_d, sim.record_every)] + [problem.T]
        rows = [_moment_row(t, flow.mean_at(t), flow.covariance_at(t)) for t in times]
        extra["energy_note"] = "particles disabled; no empirical energy"
    else:
        result = run(sim, problem)
        times = result.times
        if cfg["outputs"]["snapshots"]:
            limit = cfg["outputs"]["max_particles"]
            k = sim.N if limit is None else min(int(limit), sim.N)
            path = os.path.join(out, "snapshots.csv")
            header = ["t", "particle_id"] + [f"x_{i + 1}" for i in range(n)]
            _write_csv(
                path,
                header,
                ([_fmt(s.time), str(i)] + [_fmt(v) for v in s.points[i]] for s in result.snapshots for i in range(k)),
            )
            outputs["snapshots"] = path
        rows = [_moment_row(s.time, s.mean(), s.covariance()) for s in result.snapshots]
        energy_path = os.path.join(out, "energy.json")
        with open(energy_path, "w", encoding="utf-8") as fh:
            json.dump({"energy": result.energy, "weighted_energy": result.weighted_energy}, fh, indent=2)
            fh.write("\n")
        outputs["energy"] = energy_path
        paths = result.paths()
        extra["max_chord_deviation"] = float(chord_deviation(paths).max())
        extra["max_time_chord_deviation"] = float(time_chord_deviation(paths, times).max())
        extra["collinear"] = bool(extra["max_chord_deviation"] <= 1e-9)
        log.info("energy %.10g, weighted energy %.10g", result.energy, result.weighted_energy)

    path = os.path.join(out, "moments.csv")
    _write_csv(path, _moment_header(n), rows)
    outputs["moments"] = path
    _write_manifest(out, "steer", cfg, started, outputs, extra)
    return 0


def cmd_compare(cfg: dict, out: str) -> int:
    started = time.time()
    problem = build_problem(cfg)
    if problem.n != 2:
        raise ConfigurationError(f"ellipse output needs a planar problem (n=2), got n={problem.n}")
    K = int(cfg["sim"]["compare_snapshots"])
    T_d = int(cfg["sim"]["compare_T_d"])
    if K < 1 or T_d % K:
        raise ConfigurationError("sim.compare_T_d must be a positive multiple of sim.compare_snapshots")
    count = int(cfg["outputs"]["ellipse_points"])
    times = [i * problem.T / K for i in range(K + 1)]
    sim = build_sim(cfg, controller="iterative-sliced", T_d=T_d, record_every=T_d // K)
    dirs = sim.dirs.build(2)

    iterative = run(sim, problem)
    moments = {"iterative-sliced": [(s.time, s.mean(), s.covariance()) for s in iterative.snapshots]}
    flow = integrate_covariance(problem, dirs, sim.flow_steps, sim.epsilon)
    moments["ideal-affine"] = [(t, flow.mean_at(t), flow.covariance_at(t)) for t in times]
    brenier = brenier_map_gaussian(problem)
    moments["min-energy"] = [(t, *min_energy_moments(problem, t, brenier)) for t in times]

    outputs: dict[str, str] = {}
    ellipse_rows = []
    for name, series in moments.items():
        path = os.path.join(out, f"moments_{name}.csv")
        _write_csv(path, _moment_header(2), (_moment_row(t, m, S) for t, m, S in series))
        outputs[f"moments_{name}"] = path
        for t, m, S in series:
            for j, (a, b) in enumerate(ellipse_points(m, S, count)):
                ellipse_rows.append([name, _fmt(t), str(j), _fmt(a), _fmt(b)])
    path = os.path.join(out, "ellipses.csv")
    _write_csv(path, ["controller", "t", "vertex_index", "x_1", "x_2"], ellipse_rows)
    outputs["ellipses"] = path

    gaps = [
        float(np.linalg.norm(Si - Sa))
        for (_, _, Si), (_, _, Sa) in zip(moments["iterative-sliced"], moments["ideal-affine"])
    ]
    terminal_gap = float(np.linalg.norm(moments["min-energy"][-1][2] - problem.target.covariance))
    extra = {"iterative_vs_ideal_sigma_gap": gaps, "min_energy_terminal_sigma_error": terminal_gap}
    _write_manifest(out, "compare", cfg, started, outputs, extra)
    return 0


def cmd_check(cfg: dict, out: str) -> int:
    started = time.time()
    problem = build_problem(cfg)
    dirs = build_dirs_spec(cfg).build(problem.n)
    c = cfg["check"]
    reports = [
        check_sw2_derivative(problem, dirs, fd_step=c["fd_step"], steps=c["steps"], tolerance=c["derivative_tol"]),
        check_convergence(problem, dirs, c["steps"], c["epsilon"], c["convergence_tol"]),
        check_energy_identity(problem, dirs, c["steps"], c["epsilon"], c["energy_rtol"]),
        check_weighted_energy_identity(problem, dirs, c["steps"], c["epsilon"], c["energy_rtol"]),
        check_fixed_point(problem.target, dirs, 0.0, problem.T, c["fixed_point_tol"], c["probes"], cfg["sim"]["seed"]),
        check_metric_properties(dirs, seed=cfg["sim"]["seed"]),
        check_map_monotonicity(seed=cfg["sim"]["seed"]),
    ]
    path = os.path.join(out, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2)
        fh.write("\n")
    for r in reports:
        print(f"{r.status.upper():12s} {r.name:28s} measured={r.measured:.6g} expected={r.expected:.6g} tol={r.tolerance:.3g}")
    all_pass = all(r.passed for r in reports)
    _write_manifest(out, "check", cfg, started, {"report": path}, {"all_pass": all_pass})
    return 0 if all_pass else 1


COMMANDS = {"steer": cmd_steer, "compare": cmd_compare, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slicedsteer", description="Sliced optimal transport ensemble steering.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (defaults to the built-in planar scenario)")
        p.add_argument("--seed", type=int, help="override sim.seed")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--threads", type=int, help="cap BLAS/OpenMP threads")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigurationError("--seed must be nonnegative")
            cfg["sim"]["seed"] = args.seed
        print(f"seed: {cfg['sim']['seed']}", file=sys.stderr)
        os.makedirs(args.out, exist_ok=True)
        if args.threads is not None:
            from threadpoolctl import threadpool_limits

            limiter = threadpool_limits(limits=args.threads)
        else:
            limiter = nullcontext()
        with limiter:
            return COMMANDS[args.command](cfg, args.out)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, DomainError, ArithmeticError, np.linalg.LinAlgError) as exc:
        where = f" at t={exc.time:.6g}" if getattr(exc, "time", None) is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
