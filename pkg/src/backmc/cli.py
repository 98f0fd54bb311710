"""Command-line front end: ``backmc solve | sweep | validate``.

Settings come from defaults, then an optional flat ``key = value`` config
file (``--config``), then command-line flags, later sources winning.
"""
from __future__ import annotations

import argparse
import io
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .backward import solve_backward_grid
from .bench import (
    Method,
    SweepParameter,
    SweepSpec,
    decade_ladder,
    fit_summary,
    int_ladder,
    preset,
    relative_error,
    run_sweep,
)
from .forward import Launch, eval_binned, solve_forward
from .lorentz import LorentzProblem, analytic_solution
from .sde import Boundary, StepScheme, StepTooLargeError, TimeGrid
from .svgplot import Series, loglog_svg

log = logging.getLogger("backmc")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "solve"
    method: str = "backward"
    scheme: str = "low"
    n: int = 10_000
    n_bin: int = 20
    dt: float = 1e-4
    T: float = 0.1
    x0: float = -0.9
    T0: float = 0.1
    x_query: float | None = None
    query_range: str | None = None
    seed: int = 0
    repeats: int = 8
    threads: int = 1
    plot: str | None = None
    paper_scale: bool = False
    boundary: str = "reflect"
    launch: str = "grid"
    bin_range: str | None = None
    out: str | None = None
    fits: str | None = None
    sweep: str | None = None

    def queries(self) -> np.ndarray | None:
        if self.query_range is not None:
            lo, hi, count = parse_range(self.query_range)
            return np.linspace(lo, hi, count)
        if self.x_query is not None:
            return np.array([self.x_query])
        return None

    def bins(self) -> tuple[float, float] | None:
        if self.bin_range is None:
            return None
        try:
            lo, hi = (float(v) for v in self.bin_range.split(":"))
        except ValueError as exc:
            raise ConfigError(f"--bin-range expects lo:hi, got {self.bin_range!r}") from exc
        if not -1 <= lo < hi <= 1:
            raise ConfigError("--bin-range must be a sub-interval of [-1, 1]")
        return lo, hi

    def header(self) -> list[str]:
        return [f"{k}={v}" for k, v in asdict(self).items() if v is not None]


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str, "bool": lambda s: str(s).lower() in ("1", "true", "yes", "on")}


def _cast(name: str, value):
    kind = _TYPES[name].split("|")[0].strip()
    try:
        return _CASTS[kind](value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def parse_range(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError as exc:
        raise ConfigError(f"--query-range expects lo:hi:count, got {text!r}") from exc
    if count < 1 or hi < lo:
        raise ConfigError("--query-range needs count >= 1 and hi >= lo")
    return lo, hi, count


def read_config_file(path: str) -> dict[str, str]:
    out = {}
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{k}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES or key == "command":
            raise ConfigError(f"{path}:{k}: unknown key {key!r}")
        out[key] = value
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("problem and solver")
    g.add_argument("--config", help="flat key = value file; flags override it")
    g.add_argument("--scheme", choices=["low", "high"], help="step scheme (default low)")
    g.add_argument("--n", type=int, help="particles per solve (default 10000)")
    g.add_argument("--n-bin", type=int, dest="n_bin", help="forward bins (default 20)")
    g.add_argument("--dt", type=float, help="time step (default 1e-4)")
    g.add_argument("--T", type=float, dest="T", help="integration time (default 0.1)")
    g.add_argument("--x0", type=float, help="initial peak location (default -0.9)")
    g.add_argument("--T0", type=float, dest="T0", help="initial smoothing time (default 0.1)")
    g.add_argument("--seed", type=int, help="master seed (default 0)")
    g.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    g.add_argument("--boundary", choices=["reflect", "clamp"], help="domain edge policy (default reflect)")
    g.add_argument("--launch", choices=["grid", "uniform", "density"],
                   help="forward launch points: midpoint grid (default), uniform random, or sampled from phi")
    g.add_argument("--out", help="CSV output path (default stdout)")
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="backmc", description="Forward and backward Monte-Carlo solvers for 1D diffusion.")
    parser.add_argument("--version", action="version", version=f"backmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the Lorentz benchmark and compare with the exact solution")
    p.add_argument("--method", choices=["forward", "backward"], help="default backward")
    p.add_argument("--x-query", type=float, dest="x_query", help="single query point")
    p.add_argument("--query-range", dest="query_range", help="lo:hi:count evenly spaced query points")
    p.add_argument("--bin-range", dest="bin_range", help="lo:hi forward histogram range (default whole domain)")
    _add_common(p)

    p = sub.add_parser("sweep", help="error-scaling sweep with log-log slope fits")
    p.add_argument("sweep", choices=["n", "n_bin", "dt"], help="parameter to sweep")
    p.add_argument("--method", choices=["forward", "backward", "both"], help="default both")
    p.add_argument("--repeats", type=int, help="seeds averaged per row (default 8; 1 with --paper-scale)")
    p.add_argument("--paper-scale", action="store_true", dest="paper_scale",
                   help="full published ranges and particle counts, single runs (slow)")
    p.add_argument("--plot", help="write an SVG log-log plot here")
    p.add_argument("--fits", help="fit summary CSV path (default: <out>.fits.csv, or stdout)")
    p.add_argument("--x-query", type=float, dest="x_query", help="error measured here (default x0)")
    _add_common(p)

    p = sub.add_parser("validate", help="run the oracle cross-checks")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def make_config(ns: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(ns, "config", None):
        try:
            values.update(read_config_file(ns.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    explicit = {k: v for k, v in vars(ns).items() if k in _TYPES and v is not None and v is not False}
    values.update(explicit)
    cfg = RunConfig(**{k: _cast(k, v) if isinstance(v, str) and _TYPES[k] not in ("str", "str | None") else v
                       for k, v in values.items()})
    cfg.command = ns.command
    _validate(cfg, set(values))
    return cfg


def _validate(cfg: RunConfig, given: set[str]) -> None:
    if cfg.command == "sweep" and "method" not in given:
        cfg.method = "both"
    if cfg.command == "sweep" and cfg.method == "backward" and "n_bin" in given:
        raise ConfigError("--n-bin has no effect on a backward-only sweep")
    if cfg.command == "solve":
        if cfg.method not in ("forward", "backward"):
            raise ConfigError("solve needs --method forward or backward")
        if cfg.method == "backward" and "n_bin" in given:
            raise ConfigError("--n-bin has no effect on the backward method")
        if cfg.method == "backward" and "launch" in given:
            raise ConfigError("--launch has no effect on the backward method")
        if cfg.method == "backward" and "bin_range" in given:
            raise ConfigError("--bin-range has no effect on the backward method")
        bins = cfg.bins()
        qs = cfg.queries()
        if bins is not None and qs is not None and (np.any(qs < bins[0]) or np.any(qs > bins[1])):
            raise ConfigError("forward query points must lie inside --bin-range")
        if cfg.x_query is not None and cfg.query_range is not None:
            raise ConfigError("give either --x-query or --query-range, not both")
        if cfg.method == "backward" and cfg.queries() is None:
            cfg.x_query = cfg.x0
    if cfg.command == "sweep" and "bin_range" in given:
        raise ConfigError("bin_range applies to forward solves only")
    if cfg.command == "sweep" and cfg.sweep is not None and cfg.sweep.replace("-", "_") in given - {"sweep"}:
        raise ConfigError(f"--{cfg.sweep.replace('_', '-')} is the swept parameter and cannot be fixed")
    for name in ("n", "n_bin", "repeats", "threads"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be positive")
    if not cfg.dt > 0 or cfg.T < 0 or not cfg.T0 > 0:
        raise ConfigError("need dt > 0, T >= 0, T0 > 0")
    if not -1 < cfg.x0 < 1:
        raise ConfigError("x0 must lie in (-1, 1)")
    qs = cfg.queries()
    if qs is not None and (np.any(qs < -1) or np.any(qs > 1)):
        raise ConfigError("query points must lie in [-1, 1]")
    try:
        TimeGrid(cfg.T, cfg.dt)
    except ValueError as exc:
        if cfg.command == "solve":
            raise ConfigError(str(exc)) from exc
    cfg.scheme = StepScheme(cfg.scheme).value
    cfg.boundary = Boundary(cfg.boundary).value
    cfg.launch = Launch(cfg.launch).value


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _open_out(path: str | None):
    return open(path, "w", newline="") if path else _Stdout()


class _Stdout(io.StringIO):
    def close(self):
        sys.stdout.write(self.getvalue())
        super().close()


def _write_csv(path, header_lines, columns, rows):
    fh = _open_out(path)
    try:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")
    finally:
        fh.close()


def cmd_solve(cfg: RunConfig) -> int:
    problem = LorentzProblem(cfg.x0, cfg.T0)
    series = problem.series()
    phi = problem.phi(series)
    grid = TimeGrid(cfg.T, cfg.dt)
    scheme = StepScheme(cfg.scheme)
    rows = []
    if cfg.method == "backward":
        ests = solve_backward_grid(
            problem.model, phi, cfg.queries(), grid, scheme, cfg.n, cfg.seed, Boundary(cfg.boundary), cfg.threads
        )
        for e in ests:
            exact = analytic_solution(problem, series, e.x_query, cfg.T)
            rows.append((e.x_query, e.value, e.std_error, exact, relative_error(e.value, exact)))
        label = "backward point estimates"
    else:
        sol = solve_forward(
            problem.model, phi, grid, scheme, cfg.n, cfg.n_bin, cfg.seed,
            Boundary(cfg.boundary), Launch(cfg.launch), cfg.threads, cfg.bins(),
        )
        xs = cfg.queries()
        xs = sol.centers if xs is None else xs
        for x in xs:
            est = eval_binned(sol, float(x))
            exact = analytic_solution(problem, series, float(x), cfg.T)
            rows.append((float(x), est, None, exact, relative_error(est, exact)))
        label = "forward binned estimates"
    header = [f"backmc {__version__} solve", f"experiment: Lorentz benchmark, {label}", "config: " + " ".join(cfg.header())]
    _write_csv(cfg.out, header, ["x", "estimate", "std_error", "analytic", "rel_error"], rows)
    return EXIT_OK


def sweep_spec_from_config(cfg: RunConfig, given: set[str] | None = None) -> SweepSpec:
    scale = "paper" if cfg.paper_scale else "desk"
    base = preset(cfg.sweep, scale, StepScheme(cfg.scheme), cfg.seed)
    given = given or set()
    fixed = dict(base.fixed)
    for name in ("n", "n_bin", "dt"):
        if name in given and name != cfg.sweep:
            fixed[name] = getattr(cfg, name)
    methods = (Method.FORWARD, Method.BACKWARD) if cfg.method in (None, "both") else (Method(cfg.method),)
    if Method.FORWARD not in methods:
        fixed.pop("n_bin", None)
    if cfg.sweep == "dt":
        values = [v for v in decade_ladder(1e-5, 1e-1) if v <= cfg.T or cfg.T == 0]
        values = [v for v in values if _divides(cfg.T, v)]
    else:
        values = list(base.values)
    repeats = cfg.repeats if "repeats" in given else base.n_repeats
    shown = ", ".join(f"{_NAMES[k]}={fixed[k]:g}" for k in ("n", "n_bin", "dt") if k in fixed)
    label = f"error vs {_NAMES[cfg.sweep]} ({cfg.scheme} order, {shown})"
    return SweepSpec(
        SweepParameter(cfg.sweep), values, fixed, T=cfg.T, x0=cfg.x0, T0=cfg.T0, x_query=cfg.x_query,
        schemes=(StepScheme(cfg.scheme),), methods=methods, n_repeats=repeats, master_seed=cfg.seed,
        boundary=Boundary(cfg.boundary), launch=Launch(cfg.launch), label=label,
    )


_NAMES = {"n": "N", "n_bin": "N_bin", "dt": "dt"}


def _divides(T: float, dt: float) -> bool:
    try:
        TimeGrid(T, dt)
    except ValueError:
        return False
    return True


def cmd_sweep(cfg: RunConfig, given: set[str] | None = None) -> int:
    spec = sweep_spec_from_config(cfg, given)

    def progress(row):
        log.info("%s=%g %s/%s eps=%.4g (%.1fs)", spec.parameter.value, row.param, row.method.value,
                 row.scheme.value, row.epsilon, row.seconds)

    result = run_sweep(spec, progress=progress, workers=cfg.threads)
    scale = "paper scale, single runs" if cfg.paper_scale else f"desk scale, {spec.n_repeats} seed{'' if spec.n_repeats == 1 else 's'} averaged"
    header = [
        f"backmc {__version__} sweep",
        f"experiment: {spec.label} ({scale})",
        "config: " + " ".join(cfg.header()),
        f"fixed: {dict(spec.fixed)} T={spec.T} x_query={spec.query}",
    ]
    _write_csv(
        cfg.out, header, ["param", "method", "scheme", "epsilon", "std_error", "seconds"],
        [(r.param, r.method.value, r.scheme.value, r.epsilon, r.std_error, r.seconds) for r in result.rows],
    )
    fits = fit_summary(result)
    fits_path = cfg.fits or (f"{cfg.out}.fits.csv" if cfg.out else None)
    _write_csv(
        fits_path, header, ["method", "scheme", "slope", "intercept", "points_used", "excluded", "regime"],
        [
            (f.method.value, f.scheme.value,
             f.fit.slope if f.fit else math.nan, f.fit.intercept if f.fit else math.nan,
             f.fit.n_points_used if f.fit else 0,
             " ".join(str(i) for i in f.fit.excluded_indices) if f.fit else f.note, f.regime)
            for f in fits
        ],
    )
    if cfg.plot:
        colors = {Method.FORWARD: "blue", Method.BACKWARD: "red"}
        series = []
        for method in spec.methods:
            p, e, _ = result.series(method, spec.schemes[0])
            for f in fits:
                if f.method is method and f.fit is not None and f.regime != "backward-range":
                    used = np.delete(p, [i for i in f.fit.excluded_indices if i < len(p)])
                    series.append(Series(f"{method.value} ({f.regime})", [], [], colors[method],
                                         (f.fit.slope, f.fit.intercept, used.min(), used.max())))
            series.append(Series(method.value, list(p), list(e), colors[method]))
        Path(cfg.plot).write_text(loglog_svg(series, spec.label, _NAMES[cfg.sweep], "relative error"))
    if result.failures:
        for r in result.failures:
            print(f"row {r.param:g} {r.method.value}/{r.scheme.value} failed: {r.error}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_validate(verbose: bool = False) -> int:
    from .validation import run_checks

    checks = run_checks()
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL'}  {c.detail}")
    failed = [c.name for c in checks if not c.passed]
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _glue_ranges(argv: list[str]) -> list[str]:
    # "--query-range -0.95:-0.85:3" would otherwise be read as an unknown option
    out, it = [], iter(argv)
    for a in it:
        if a in ("--query-range", "--bin-range"):
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(_glue_ranges(sys.argv[1:] if argv is None else list(argv)))
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(message)s")
    if ns.command == "validate":
        return cmd_validate(ns.verbose)
    try:
        cfg = make_config(ns)
        given = {k for k, v in vars(ns).items() if v is not None and v is not False}
        if getattr(ns, "config", None):
            given |= set(read_config_file(ns.config))
    except ConfigError as exc:
        print(f"backmc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if cfg.command == "solve":
            return cmd_solve(cfg)
        return cmd_sweep(cfg, given)
    except (StepTooLargeError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"backmc: {cfg.command} failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
