"""Command-line front end for the solvers and the sweep plots.

Outputs are deterministic. Floats are written with ``repr`` (shortest
round-trip form) in grid order, and nothing time-dependent is embedded.
Progress and run metadata go to stderr as JSON lines; a failure ends with a
single JSON error line and a nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from importlib import metadata as importlib_metadata
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .bounds import DEFAULT_SMITH_TOL, DEFAULT_TOL, BoundsReport, sweep
from .model import ChannelParams, DomainError, EnergyViolationError, validate_params
from .power_control import optimal_allocation
from .simulator import InsufficientEpochsError, epoch_statistics, make_policy, simulate
from .smith import DEFAULT_GRID, NonConvergenceError, capacity_amplitude_constrained

__all__ = [
    "CSV_HEADER",
    "SERIES",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_SOLVER",
    "EXIT_IO",
    "GridSpec",
    "RunConfig",
    "parse_grid",
    "write_csv",
    "read_csv",
    "write_svg_plot",
    "build_parser",
    "config_from_args",
    "run",
    "main",
]

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

# CSV column -> BoundsReport attribute
SERIES = {
    "causal_upper_bits": "causal_upper",
    "causal_lower_bits": "causal_lower",
    "noncausal_upper_bits": "noncausal_upper",
    "noncausal_lower_analytic_bits": "noncausal_lower_analytic",
    "noncausal_lower_smith_bits": "noncausal_lower_smith",
    "infinite_battery_bits": "infinite_battery_upper",
}
CSV_HEADER = ("p", "b_bar", "n_tilde", *SERIES)

_STYLE = {
    "causal_upper": ("#1f4e9c", "", "causal upper bound"),
    "causal_lower": ("#1f4e9c", "6 4", "causal lower bound"),
    "noncausal_upper": ("#b5321f", "", "noncausal upper bound"),
    "noncausal_lower_analytic": ("#b5321f", "6 4", "noncausal lower bound (analytic)"),
    "noncausal_lower_smith": ("#2c8a3e", "", "noncausal lower bound (discrete input)"),
    "infinite_battery_upper": ("#555555", "2 3", "infinite battery"),
}


class ConfigError(ValueError):
    pass


def _version() -> str:
    try:
        return importlib_metadata.version("rbrcap")
    except importlib_metadata.PackageNotFoundError:
        return "unknown"


@dataclass(frozen=True)
class GridSpec:
    start: float
    stop: float
    count: int = 1
    spacing: str = "log"

    def __post_init__(self):
        if self.spacing not in ("linear", "log"):
            raise ConfigError(f"grid spacing must be 'linear' or 'log', got {self.spacing!r}")
        if self.count < 1:
            raise ConfigError(f"grid count must be >= 1, got {self.count}")
        if self.count > 1 and not self.start < self.stop:
            raise ConfigError(f"grid needs start < stop, got {self.start!r}:{self.stop!r}")
        if self.spacing == "log" and self.count > 1 and self.start <= 0:
            raise ConfigError("log-spaced grid needs a positive start")

    def values(self) -> list[float]:
        if self.count == 1:
            return [float(self.start)]
        if self.spacing == "log":
            pts = np.geomspace(self.start, self.stop, self.count)
        else:
            pts = np.linspace(self.start, self.stop, self.count)
        return [float(v) for v in pts]


def parse_grid(text: str) -> GridSpec:
    """``start:stop:count[:spacing]`` or a single number."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            v = float(parts[0])
            return GridSpec(v, v, 1, "linear")
        if len(parts) not in (3, 4):
            raise ConfigError(f"grid must be start:stop:count[:spacing], got {text!r}")
        spacing = parts[3] if len(parts) == 4 else "log"
        return GridSpec(float(parts[0]), float(parts[1]), int(parts[2]), spacing)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse grid {text!r}: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    command: str
    p: Optional[float] = None
    grid: Optional[GridSpec] = None
    tol: float = DEFAULT_TOL
    smith_tol: float = DEFAULT_SMITH_TOL
    grid_size: int = DEFAULT_GRID
    energy_lattice: Optional[float] = None
    threads: Optional[int] = None
    seed: int = 0
    steps: int = 1_000_000
    policy: str = "optimal"
    fraction: Optional[float] = None
    amplitude: Optional[float] = None
    input: Optional[str] = None
    out: Optional[str] = None
    format: str = "csv"
    series: tuple = ()
    title: Optional[str] = None
    argv: tuple = field(default=(), compare=False)

    def to_metadata(self) -> dict:
        meta = asdict(self)
        meta["argv"] = list(self.argv)
        meta["series"] = list(self.series)
        meta["version"] = _version()
        return meta


# ---------------------------------------------------------------- CSV


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(fh, reports: Sequence[BoundsReport]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerow([_fmt(r.params.p), _fmt(r.params.b_bar), str(int(r.n_tilde))]
                        + [_fmt(getattr(r, attr)) for attr in SERIES.values()])


def write_csv(reports: Sequence[BoundsReport], path) -> None:
    """Header plus one row per report; floats in shortest round-trip form."""
    if not reports:
        raise DomainError("no reports to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_rows(fh, reports)


def read_csv(path) -> list[BoundsReport]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ConfigError(f"{path}: header does not match the bounds CSV layout")
    reports = []
    for row in rows[1:]:
        rec = dict(zip(CSV_HEADER, row))
        reports.append(BoundsReport(
            params=ChannelParams(float(rec["p"]), float(rec["b_bar"])),
            n_tilde=int(rec["n_tilde"]),
            **{attr: float(rec[col]) for col, attr in SERIES.items()},
        ))
    return reports


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def _write_sidecar(path, config: RunConfig) -> None:
    _sidecar(path).write_text(json.dumps(config.to_metadata(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


# ---------------------------------------------------------------- SVG

WIDTH, HEIGHT = 760, 500
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 60
PLOT_W = WIDTH - LEFT - RIGHT
PLOT_H = HEIGHT - TOP - BOTTOM


def _is_log_spaced(xs: Sequence[float]) -> bool:
    if xs[0] <= 0:
        return False
    if len(xs) < 3:
        return xs[-1] / xs[0] >= 100.0
    ratios = np.diff(np.log(xs))
    return bool(np.allclose(ratios, ratios[0], rtol=1e-6, atol=0.0))


def _nice_step(span: float, target: int = 6) -> float:
    raw = span / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if mult * mag >= raw:
            return mult * mag
    return 10.0 * mag


def _comment_safe(text: str) -> str:
    # "--" is not allowed inside an XML comment; - keeps the JSON decodable
    return text.replace("--", "-\\u002d")


def write_svg_plot(reports: Sequence[BoundsReport], path, options: Optional[dict] = None) -> None:
    """Hand-written SVG of bound series against ``b_bar``.

    ``options`` keys: ``series`` (attribute names, default all six),
    ``log_x`` (default: detected from the grid), ``title``, ``metadata``
    (JSON-serialisable, embedded as a comment). Negative values are drawn
    clamped at zero.
    """
    options = dict(options or {})
    if len(reports) < 2:
        raise DomainError("a plot needs at least two grid points")
    series = list(options.get("series") or SERIES.values())
    unknown = [s for s in series if s not in _STYLE]
    if unknown:
        raise DomainError(f"unknown plot series {unknown}")
    xs = [r.params.b_bar for r in reports]
    log_x = options.get("log_x")
    if log_x is None:
        log_x = _is_log_spaced(xs)
    if log_x and min(xs) <= 0:
        raise DomainError("log x-axis needs positive b_bar values")

    tx = np.log10(xs) if log_x else np.asarray(xs, dtype=float)
    x_lo, x_hi = float(tx[0]), float(tx[-1])
    values = {s: np.maximum([getattr(r, s) for r in reports], 0.0) for s in series}
    y_top = max(float(np.max(v)) for v in values.values())
    step = _nice_step(y_top if y_top > 0 else 1.0)
    y_max = step * math.ceil((y_top if y_top > 0 else 1.0) / step)

    def px(t):
        return LEFT + (t - x_lo) / (x_hi - x_lo) * PLOT_W

    def py(v):
        return TOP + (1.0 - v / y_max) * PLOT_H

    def pts(ts, vs):
        return " ".join(f"{px(a):.3f},{py(b):.3f}" for a, b in zip(ts, vs))

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" data-y-max="{y_max!r}" '
           f'data-x-scale="{"log" if log_x else "linear"}">']
    if options.get("metadata") is not None:
        blob = json.dumps(options["metadata"], indent=1, sort_keys=True)
        out.append("<!-- rbrcap run metadata\n" + _comment_safe(blob) + "\n-->")
    out.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')

    if "causal_upper" in series and "causal_lower" in series:
        upper, lower = values["causal_upper"], values["causal_lower"]
        ring = pts(tx, upper) + " " + pts(tx[::-1], lower[::-1])
        out.append(f'<polygon id="causal-band" points="{ring}" fill="#1f4e9c" '
                   'fill-opacity="0.15" stroke="none"/>')

    # axes and ticks
    out.append(f'<g font-family="sans-serif" font-size="12" fill="black">')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{PLOT_W}" height="{PLOT_H}" '
               'fill="none" stroke="black"/>')
    y = 0.0
    while y <= y_max + 1e-12 * y_max:
        yy = py(y)
        out.append(f'<line x1="{LEFT - 5}" y1="{yy:.3f}" x2="{LEFT}" y2="{yy:.3f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{yy + 4:.3f}" text-anchor="end">{y:g}</text>')
        y += step
    if log_x:
        ticks = [(float(d), f"1e{d}") for d in range(math.ceil(x_lo - 1e-9), math.floor(x_hi + 1e-9) + 1)]
    else:
        xstep = _nice_step(x_hi - x_lo)
        first = math.ceil(x_lo / xstep)
        ticks = [(k * xstep, f"{k * xstep:g}")
                 for k in range(first, math.floor(x_hi / xstep + 1e-9) + 1)]
    for t, label in ticks:
        xx = px(t)
        out.append(f'<line x1="{xx:.3f}" y1="{TOP + PLOT_H}" x2="{xx:.3f}" '
                   f'y2="{TOP + PLOT_H + 5}" stroke="black"/>')
        out.append(f'<text x="{xx:.3f}" y="{TOP + PLOT_H + 20}" text-anchor="middle">{label}</text>')
    out.append(f'<text x="{LEFT + PLOT_W / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">'
               'battery capacity b_bar</text>')
    out.append(f'<text x="18" y="{TOP + PLOT_H / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + PLOT_H / 2:.1f})">bits per channel use</text>')
    if options.get("title"):
        out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
                   f'{escape(str(options["title"]))}</text>')
    out.append('</g>')

    for s in series:
        colour, dash, _ = _STYLE[s]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline id="{s}" points="{pts(tx, values[s])}" fill="none" '
                   f'stroke="{colour}" stroke-width="1.8"{dash_attr}/>')

    # legend, top left inside the plot area
    out.append('<g font-family="sans-serif" font-size="11">')
    for i, s in enumerate(series):
        colour, dash, label = _STYLE[s]
        ly = TOP + 16 + 16 * i
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{LEFT + 10}" y1="{ly}" x2="{LEFT + 40}" y2="{ly}" '
                   f'stroke="{colour}" stroke-width="1.8"{dash_attr}/>')
        out.append(f'<text x="{LEFT + 46}" y="{ly + 4}">{escape(label)}</text>')
    out.append('</g>')
    out.append('</svg>')

    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


# ---------------------------------------------------------------- commands


def _emit(stream, **record) -> None:
    print(json.dumps(record, sort_keys=True), file=stream, flush=True)


def _need(value, name):
    if value is None:
        raise ConfigError(f"--{name} is required for this command")
    return value


def _params(config: RunConfig, b_bar: float) -> ChannelParams:
    return validate_params(_need(config.p, "p"), b_bar)


def _single_b(config: RunConfig) -> float:
    grid = _need(config.grid, "bbar")
    if grid.count != 1:
        raise ConfigError("this command takes a single --bbar value")
    return grid.start


def _svg_path(config: RunConfig) -> Path:
    out = Path(config.out)
    return out if out.suffix == ".svg" else out.with_suffix(".svg")


def _run_bounds(config: RunConfig, stdout, stderr) -> None:
    grid = _need(config.grid, "bbar")
    reports = sweep(_need(config.p, "p"), grid.values(), config.tol, config.smith_tol,
                    config.grid_size, config.energy_lattice, config.threads)
    if config.out is None:
        _write_rows(stdout, reports)
        return
    if config.format in ("csv", "both"):
        path = Path(config.out) if config.format == "csv" else Path(config.out).with_suffix(".csv")
        write_csv(reports, path)
        _write_sidecar(path, config)
        _emit(stderr, event="wrote", path=str(path), rows=len(reports))
    if config.format in ("svg", "both"):
        path = _svg_path(config)
        write_svg_plot(reports, path, {"series": list(config.series) or None,
                                       "title": config.title,
                                       "log_x": grid.spacing == "log" and grid.count > 1,
                                       "metadata": config.to_metadata()})
        _emit(stderr, event="wrote", path=str(path))


def _run_plot(config: RunConfig, stdout, stderr) -> None:
    source = _need(config.input, "input")
    reports = read_csv(source)
    meta = {"plot": config.to_metadata()}
    side = _sidecar(source)
    if side.exists():
        meta["source"] = json.loads(side.read_text(encoding="utf-8"))
    path = Path(_need(config.out, "out"))
    write_svg_plot(reports, path, {"series": list(config.series) or None,
                                   "title": config.title, "metadata": meta})
    _emit(stderr, event="wrote", path=str(path))


def _run_policy(config: RunConfig, stdout, stderr) -> None:
    sol = optimal_allocation(_params(config, _single_b(config)))
    print(f"n_tilde {sol.n_tilde}", file=stdout)
    print(f"lambda_tilde_nats {sol.lambda_tilde!r}", file=stdout)
    print(f"value_bits {sol.value_bits!r}", file=stdout)
    for age, e in enumerate(sol.eps, start=1):
        print(f"eps {age} {e!r}", file=stdout)


def _run_simulate(config: RunConfig, stdout, stderr) -> None:
    params = _params(config, _single_b(config))
    policy = make_policy(config.policy, params, config.fraction)
    rep = simulate(params, policy, config.steps, config.seed)
    mean, var, pval = epoch_statistics(params, config.steps, config.seed)
    print(f"throughput_bits {rep.empirical_throughput_bits!r} +- {rep.std_error_bits!r}", file=stdout)
    print(f"policy {rep.policy}", file=stdout)
    print(f"steps {rep.steps} seed {rep.seed}", file=stdout)
    print(f"epochs {rep.epoch_count} mean_length {mean!r} variance {var!r} "
          f"geometric_fit_pvalue {pval!r}", file=stdout)
    print(f"battery_violations {rep.battery_violations}", file=stdout)


def _run_smith(config: RunConfig, stdout, stderr) -> None:
    sol = capacity_amplitude_constrained(_need(config.amplitude, "amplitude"),
                                         tol=config.smith_tol, m=config.grid_size)
    print(f"capacity_bits {sol.capacity_bits!r}", file=stdout)
    print(f"optimality_gap_bits {sol.optimality_gap_bits!r}", file=stdout)
    print(f"support_points {len(sol.support)}", file=stdout)
    for x, w in sol.support:
        print(f"mass {x!r} {w!r}", file=stdout)


_COMMANDS = {
    "bounds": _run_bounds,
    "plot": _run_plot,
    "policy": _run_policy,
    "simulate": _run_simulate,
    "smith": _run_smith,
}


def _error(stderr, code: int, kind: str, exc: BaseException) -> int:
    message = " ".join(str(exc).split())
    _emit(stderr, event="error", kind=kind, exit=code, type=type(exc).__name__, message=message)
    return code


def run(config: RunConfig, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    _emit(stderr, event="config", **config.to_metadata())
    try:
        if config.command not in _COMMANDS:
            raise ConfigError(f"unknown command {config.command!r}")
        if config.format not in ("csv", "svg", "both"):
            raise ConfigError(f"format must be csv, svg or both, got {config.format!r}")
        if config.out is not None and not Path(config.out).resolve().parent.is_dir():
            # fail before a long sweep rather than after it
            raise FileNotFoundError(f"output directory for {config.out!r} does not exist")
        _COMMANDS[config.command](config, stdout, stderr)
    except (ConfigError, DomainError) as exc:
        return _error(stderr, EXIT_CONFIG, "config", exc)
    except OSError as exc:
        return _error(stderr, EXIT_IO, "io", exc)
    except (NonConvergenceError, EnergyViolationError, InsufficientEpochsError,
            RuntimeError, ArithmeticError) as exc:
        return _error(stderr, EXIT_SOLVER, "solver", exc)
    _emit(stderr, event="done", exit=EXIT_OK)
    return EXIT_OK


# ---------------------------------------------------------------- argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _grid_arg(text: str) -> GridSpec:
    try:
        return parse_grid(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rbrcap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, *, grid=True, tolerances=True):
        if grid:
            sp.add_argument("--p", type=float, required=True, help="recharge probability")
            sp.add_argument("--bbar", type=_grid_arg, dest="grid", required=True,
                            help="battery capacity or start:stop:count[:linear|log]")
        if tolerances:
            sp.add_argument("--tol", type=float, default=DEFAULT_TOL, help="series truncation")
            sp.add_argument("--smith-tol", type=float, default=DEFAULT_SMITH_TOL)
            sp.add_argument("--grid-size", type=int, default=DEFAULT_GRID,
                            help="Smith amplitude grid points (odd)")

    sp = sub.add_parser("bounds", help="capacity bounds over a b_bar grid")
    common(sp)
    sp.add_argument("--lattice", type=float, dest="energy_lattice", default=None,
                    help="round per-slot energies down to powers of this ratio")
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", choices=("csv", "svg", "both"), default="csv")
    sp.add_argument("--series", default="", help="comma-separated series for the SVG")
    sp.add_argument("--title", default=None)

    sp = sub.add_parser("plot", help="SVG plot from a bounds CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--series", default="")
    sp.add_argument("--title", default=None)

    sp = sub.add_parser("policy", help="optimal online power allocation")
    common(sp, tolerances=False)

    sp = sub.add_parser("simulate", help="Monte-Carlo throughput of a power policy")
    common(sp, tolerances=False)
    sp.add_argument("--policy", choices=("optimal", "greedy", "constant_fraction", "zero"),
                    default="optimal")
    sp.add_argument("--fraction", type=float, default=None)
    sp.add_argument("--steps", type=int, default=1_000_000)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("smith", help="amplitude-constrained AWGN capacity")
    sp.add_argument("--amplitude", type=float, required=True)
    sp.add_argument("--smith-tol", type=float, default=DEFAULT_SMITH_TOL)
    sp.add_argument("--grid-size", type=int, default=DEFAULT_GRID)
    return parser


def _series_names(text: str) -> tuple:
    names = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        name = SERIES.get(item, item)
        if name not in _STYLE:
            raise ConfigError(f"unknown series {item!r}")
        names.append(name)
    return tuple(names)


def config_from_args(argv: Sequence[str]) -> RunConfig:
    ns = vars(build_parser().parse_args(list(argv)))
    ns["series"] = _series_names(ns.get("series", ""))
    known = set(RunConfig.__dataclass_fields__)
    return RunConfig(argv=tuple(argv), **{k: v for k, v in ns.items() if k in known})


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config = config_from_args(argv)
    except ConfigError as exc:
        return _error(sys.stderr, EXIT_CONFIG, "config", exc)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
