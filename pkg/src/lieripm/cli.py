"""Command-line front end: derivative checks, simulation, optimization, sweeps and benchmarks.

Configuration is a flat text file of ``dotted.key = value`` lines
(``scenario.N = 40``, ``solver.eps_tol = 1e-9``, ``run.seeds = 0-49``).
Any key can be overridden from the environment as ``LIERIPM_`` followed by
the key in upper case with ``__`` in place of the dot, e.g.
``LIERIPM_SOLVER__EPS_TOL=1e-8``.  Command-line flags take precedence over
both.  Every float written to an output file uses 17 significant digits.

Exit codes: 0 converged or passed, 1 solver non-convergence or check
failure, 2 usage or configuration error.
"""

import argparse
import configparser
import csv
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .checks import GRAD_TOL, HESS_TOL, block_catalogue, check_blocks
from .lie import exp_so3, orthonormality_defect
from .rigid_body import BodyState, ConvergenceError, simulate, spatial_angular_momentum
from .ripm import TOLERANCE_PRESETS, SolverError, SolverOptions, solve
from .scenarios import (ScenarioConfig, chain_benchmark, convergence_sweep, drone_docking,
                        loglog_slope, manipulator, sample_initial_pose)

ENV_PREFIX = "LIERIPM_"
COMMANDS = ("check", "simulate", "optimize", "sweep", "bench")
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
TRACE_COLUMNS = ("iter", "E_0", "E_mu", "mu", "cost", "theta", "alpha", "j")
SWEEP_COLUMNS = ("seed", "status", "iters", "E_0_final", "t_per_iter_solver", "t_per_iter_total")
BENCH_COLUMNS = ("depth", "t_residual", "t_gradient", "t_hessian")


class ConfigError(ValueError):
    """Malformed configuration file, key or value."""


def fmt(v):
    """Serialize a value; floats get 17 significant digits (lossless round trip)."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


@dataclass
class RunSettings:
    """Options of the ``run`` namespace."""

    out: str = "."
    tol: str = None
    seeds: tuple = (0,)
    workers: int = 1
    depths: tuple = (2, 4, 8, 16, 32)
    repeats: int = 100
    states: int = 100  # random states per block family for ``check``
    families: tuple = None  # None checks every family
    fault: str = None  # family with an injected Jacobian error
    steps: int = 1000  # simulation length
    omega: tuple = (0.3, 1.0, 2.0)  # initial body angular velocity for ``simulate``
    sim_tol: float = 1e-12


@dataclass
class RunConfig:
    command: str
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    run: RunSettings = field(default_factory=RunSettings)


@dataclass
class ResultRecord:
    """Summary of one solve.  ``t_per_iter_solver`` excludes function evaluation time."""

    status: str
    iterations: int
    E_0: float
    cost: float
    t_total: float
    t_per_iter_solver: float
    t_per_iter_total: float

    def to_line(self):
        return " ".join(f"{k}={fmt(v)}" for k, v in asdict(self).items())

    @classmethod
    def from_line(cls, line):
        kv = dict(tok.split("=", 1) for tok in line.split())
        types = {f.name: f.type for f in fields(cls)}
        if set(kv) != set(types):
            raise ValueError("record fields do not match")
        conv = {"str": str, "int": int, "float": float}
        return cls(**{k: conv[types[k] if isinstance(types[k], str) else types[k].__name__](v)
                      for k, v in kv.items()})


# ------------------------------------------------------------------ config


def _parse_seeds(text):
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _coerce(namespace, key, default, text):
    text = text.strip()
    if text.lower() == "none":
        return None
    try:
        if key == "seeds":
            return _parse_seeds(text)
        if key == "obstacles":
            return tuple(tuple(float(v) for v in o.split(",")) for o in text.split(";") if o.strip())
        if key == "families":
            return tuple(s.strip() for s in text.split(",") if s.strip())
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            cast = int if all(isinstance(v, int) for v in default) else float
            return tuple(cast(v) for v in text.split(",") if v.strip())
        return text or None
    except ValueError:
        raise ConfigError(f"invalid value {text!r} for {namespace}.{key}") from None


def _apply(cfg, overrides, source):
    """Apply ``{dotted_key: text}`` overrides to a :class:`RunConfig`."""
    parts = {"scenario": {}, "solver": {}, "run": {}}
    for key, text in overrides.items():
        ns, _, name = key.partition(".")
        if ns not in parts or not name:
            raise ConfigError(f"{source}: unknown key {key!r}")
        obj = getattr(cfg, ns)
        defaults = {f.name: getattr(obj, f.name) for f in fields(obj)}
        canon = {k.lower(): k for k in defaults}
        if name.lower() not in canon:
            raise ConfigError(f"{source}: unknown key {key!r}")
        name = canon[name.lower()]
        parts[ns][name] = _coerce(ns, name, defaults[name], text)
    try:
        return replace(cfg, scenario=replace(cfg.scenario, **parts["scenario"]),
                       solver=replace(cfg.solver, **parts["solver"]),
                       run=replace(cfg.run, **parts["run"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def read_config_file(path):
    """Flat ``dotted.key = value`` pairs; ``#`` and ``;`` start comments."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_string("[top]\n" + fh.read(), source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    if parser.sections() != ["top"]:
        raise ConfigError(f"malformed config {path}: sections are not allowed")
    return dict(parser["top"])


def env_overrides(environ):
    out = {}
    for k, v in environ.items():
        if k.startswith(ENV_PREFIX):
            out[k[len(ENV_PREFIX):].lower().replace("__", ".")] = v
    return out


def write_config(cfg, path):
    """Write every key of ``cfg`` in the flat format read by :func:`read_config_file`."""
    def text(name, v):
        if v is None:
            return "none"
        if name == "obstacles":
            return ";".join(",".join(fmt(float(c)) for c in o) for o in v)
        if isinstance(v, tuple):
            return ",".join(fmt(c) for c in v)
        return fmt(v)

    with open(path, "w") as fh:
        for ns in ("scenario", "solver", "run"):
            obj = getattr(cfg, ns)
            for f in fields(obj):
                fh.write(f"{ns}.{f.name} = {text(f.name, getattr(obj, f.name))}\n")


def build_config(args, environ=None):
    """Defaults, then the config file, then ``LIERIPM_*`` variables, then flags."""
    environ = os.environ if environ is None else environ
    cfg = RunConfig(command=args.command)
    if args.config:
        cfg = _apply(cfg, read_config_file(args.config), args.config)
    cfg = _apply(cfg, env_overrides(environ), "environment")
    flags = {}
    if args.seed is not None:
        flags["run.seeds"] = str(args.seed)
        flags["scenario.seed"] = str(args.seed)
    if getattr(args, "seeds", None):
        flags["run.seeds"] = args.seeds
    for name in ("tol", "out", "workers", "fault", "states", "depths", "repeats", "steps"):
        val = getattr(args, name, None)
        if val is not None:
            flags[f"run.{name}"] = str(val)
    if getattr(args, "scenario", None):
        flags["scenario.scenario"] = args.scenario
    cfg = _apply(cfg, flags, "command line")
    if cfg.run.tol is not None:
        if cfg.run.tol not in TOLERANCE_PRESETS:
            raise ConfigError(f"unknown tolerance preset {cfg.run.tol!r}")
        cfg = replace(cfg, solver=replace(cfg.solver, eps_tol=TOLERANCE_PRESETS[cfg.run.tol]))
    if cfg.run.workers < 1:
        raise ConfigError("run.workers must be at least 1")
    return cfg


# ---------------------------------------------------------------- commands


def _out_path(cfg, name):
    os.makedirs(cfg.run.out, exist_ok=True)
    return os.path.join(cfg.run.out, name)


def cmd_check(cfg, stream=sys.stdout):
    """Worst-case FD errors per block family; fails if any exceeds the thresholds."""
    blocks = block_catalogue(np.random.default_rng(cfg.scenario.seed))
    if cfg.run.families is not None:
        unknown = set(cfg.run.families) - set(blocks)
        if unknown:
            raise ConfigError(f"unknown block families: {', '.join(sorted(unknown))}")
        blocks = {k: v for k, v in blocks.items() if k in cfg.run.families}
    if cfg.run.fault is not None and cfg.run.fault not in blocks:
        raise ConfigError(f"unknown block family {cfg.run.fault!r}")
    rows = check_blocks(blocks, cfg.run.states, np.random.default_rng(cfg.scenario.seed),
                        fault=cfg.run.fault)
    stream.write(f"{'family':<14} {'grad_err':>12} {'hess_err':>12}  result"
                 f"  (thresholds {GRAD_TOL:g} / {HESS_TOL:g})\n")
    for r in rows:
        stream.write(f"{r.family:<14} {r.grad_err:12.3e} {r.hess_err:12.3e}  "
                     f"{'pass' if r.passed else 'FAIL'}\n")
    failed = [r.family for r in rows if not r.passed]
    stream.write(f"failed: {', '.join(failed)}\n" if failed else "all families pass\n")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_simulate(cfg, stream=sys.stdout):
    """Input-free single-body simulation from a sampled pose; writes ``simulation.csv``."""
    sc = cfg.scenario
    body = sc.body()
    R0, p0 = sample_initial_pose(np.random.default_rng(sc.seed), sc)
    F0 = exp_so3(sc.dt * np.asarray(cfg.run.omega, float))
    init = BodyState(R0, p0, F0, np.zeros(3))
    try:
        traj = simulate(init, None, sc.dt, cfg.run.steps, body, tol=cfg.run.sim_tol)
    except ConvergenceError as exc:
        stream.write(f"simulation failed: {exc}\n")
        return EXIT_FAIL
    path = _out_path(cfg, "simulation.csv")
    L0 = spatial_angular_momentum(traj.R[0, 0], traj.F[0, 0], sc.dt, body.I_ns)
    drift = defect = 0.0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "px", "py", "pz", "Lx", "Ly", "Lz", "orth_defect"])
        for k in range(traj.N + 1):
            L = spatial_angular_momentum(traj.R[k, 0], traj.F[k, 0], sc.dt, body.I_ns)
            d = orthonormality_defect(traj.R[k, 0])
            drift = max(drift, np.linalg.norm(L - L0) / max(np.linalg.norm(L0), 1e-300))
            defect = max(defect, d)
            w.writerow([k, *map(fmt, traj.p[k, 0]), *map(fmt, L), fmt(d)])
    stream.write(f"wrote {path}: {traj.N} steps, momentum drift {drift:.3e}, "
                 f"orthonormality defect {defect:.3e}\n")
    return EXIT_OK


def _build_problem(sc):
    if sc.scenario == "manipulator":
        return manipulator(sc)
    return drone_docking(sc)


def cmd_optimize(cfg, stream=sys.stdout):
    """Solve one instance; writes ``trace.txt`` and ``summary.txt``."""
    prob = _build_problem(cfg.scenario)
    trace_path = _out_path(cfg, "trace.txt")
    with open(trace_path, "w") as fh:
        fh.write("# " + " ".join(TRACE_COLUMNS) + "\n")

        def log(rec):
            fh.write(" ".join(fmt(getattr(rec, c)) for c in TRACE_COLUMNS) + "\n")

        try:
            res = solve(prob.problem, prob.x0, cfg.solver, callback=log)
        except SolverError as exc:
            stream.write(f"solver error: {exc}\n")
            return EXIT_FAIL
    it = max(res.iterations, 1)
    rec = ResultRecord(res.status, res.iterations, res.E_0, res.cost, res.t_total,
                       (res.t_total - res.t_eval) / it, res.t_total / it)
    summary_path = _out_path(cfg, "summary.txt")
    with open(summary_path, "w") as fh:
        fh.write(rec.to_line() + "\n")
    stream.write(f"{rec.to_line()}\nwrote {trace_path} and {summary_path}\n")
    return EXIT_OK if res.converged else EXIT_FAIL


def cmd_sweep(cfg, stream=sys.stdout):
    """Seed sweep of a drone scenario; writes ``sweep.csv``."""
    if cfg.scenario.scenario == "manipulator":
        raise ConfigError("sweeps are defined for the drone scenarios only")
    summ = convergence_sweep(cfg.scenario, cfg.run.seeds, tol=cfg.solver.eps_tol,
                             iter_budget=cfg.solver.N_max, workers=cfg.run.workers,
                             options=cfg.solver)
    path = _out_path(cfg, "sweep.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in summ.records:
            w.writerow([fmt(getattr(r, c)) for c in SWEEP_COLUMNS])
    stream.write(f"converged {summ.fraction:.2f} of {len(summ.records)}, median iterations "
                 f"{summ.median_iters:g}, mean {summ.mean_iters:g}; wrote {path}\n")
    return EXIT_OK


def cmd_bench(cfg, stream=sys.stdout):
    """Derivative evaluation timings of serial chains; writes ``bench.csv``."""
    if any(d < 1 for d in cfg.run.depths):
        raise ConfigError("bench depths must be at least 1")
    recs = chain_benchmark(cfg.run.depths, repeats=cfg.run.repeats, dt=cfg.scenario.dt)
    path = _out_path(cfg, "bench.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_COLUMNS)
        for r in recs:
            w.writerow([r.depth, fmt(r.t_residual), fmt(r.t_gradient), fmt(r.t_hessian)])
    if len(recs) > 1:
        slope = loglog_slope([r.depth for r in recs], [r.t_hessian for r in recs])
        stream.write(f"second-order evaluation log-log slope {slope:.3f}\n")
    stream.write(f"wrote {path}\n")
    return EXIT_OK


HANDLERS = {"check": cmd_check, "simulate": cmd_simulate, "optimize": cmd_optimize,
            "sweep": cmd_sweep, "bench": cmd_bench}


def make_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat dotted-key config file")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--tol", choices=sorted(TOLERANCE_PRESETS))
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--workers", type=int, metavar="K")
    common.add_argument("--scenario",
                        choices=("docking", "docking-constrained", "cluttered", "manipulator"))
    parser = argparse.ArgumentParser(prog="lieripm", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("check", parents=[common], help="finite-difference derivative checks")
    p.add_argument("--fault", metavar="FAMILY", help="inject a Jacobian error into FAMILY")
    p.add_argument("--states", type=int, metavar="N")
    p = sub.add_parser("simulate", parents=[common], help="input-free rigid-body simulation")
    p.add_argument("--steps", type=int, metavar="N")
    sub.add_parser("optimize", parents=[common], help="solve one trajectory optimization")
    p = sub.add_parser("sweep", parents=[common], help="convergence statistics over seeds")
    p.add_argument("--seeds", metavar="LIST", help="e.g. 0-49 or 1,3,5")
    p = sub.add_parser("bench", parents=[common], help="derivative timing of serial chains")
    p.add_argument("--depths", metavar="LIST", help="e.g. 2,4,8")
    p.add_argument("--repeats", type=int, metavar="N")
    return parser


def main(argv=None, environ=None, stream=None):
    stream = sys.stdout if stream is None else stream
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = build_config(args, environ)
        return HANDLERS[cfg.command](cfg, stream)
    except ConfigError as exc:
        sys.stderr.write(f"lieripm: error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"lieripm: error: {exc.filename or ''}: {exc.strerror}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
