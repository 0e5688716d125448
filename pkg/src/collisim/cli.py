"""Command-line experiment presets and CSV output.

Examples
--------
::

    collisim run --gamma 0.05 --delta 0.95pi/2 --strategy 2 --out traj.csv
    collisim sweep-delta --points 100 --steps 3000 --out sweep.csv
    collisim sec-bound --theta1 0 --theta2 pi/2 --steps 2000 --out sec.csv
"""
import argparse
import csv
import io
import math
import os
import re
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .engine import ModelParams, Strategy, run_exact_oracle, run_trajectory
from .nonmarkov import (
    blp_measure,
    delta_sweep,
    distance_series,
    optimize_measure,
    sec_bound_series,
    threshold_sweep,
    total_variation,
)
from .qmath import bloch_state, env_state

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "CsvTable",
    "parse_angle",
    "parse_config",
    "run_preset",
    "emit_plot_data",
    "main",
]

SEED_ENV = "COLLISIM_SEED"

COMMANDS = {
    "run": "trajectory",
    "homogenize": "homogenize",
    "sweep-delta": "delta-sweep",
    "sweep-threshold": "threshold-sweep",
    "sec-bound": "sec-bound",
    "oracle-check": "oracle-check",
}
PRESETS = tuple(COMMANDS.values())
SWEEPS = ("delta-sweep", "threshold-sweep")

DEFAULTS = {
    "gamma": 0.05,
    "delta": math.pi / 2,
    "steps": 30_000,
    "strategy": 2,
    "theta1": math.pi / 2,
    "theta2": 0.0,
    "grid": 64,
    "prob": 1.0,
    "seed": 0,
    "env_excited": 0.0,
    "downsample": 1,
    "pairs": "orthogonal",
}
PRESET_DEFAULTS = {
    "homogenize": {"delta": 0.0, "steps": 2000},
    "oracle-check": {"steps": 8, "points": 50},
    "delta-sweep": {"points": 100, "optimize": True},
    "threshold-sweep": {"points": 20, "optimize": True},
}

_ANGLE = re.compile(r"^\s*([-+]?)((?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)?\s*\*?\s*pi\s*(?:/\s*(\d+))?\s*$")


class ConfigError(ValueError):
    """Bad configuration key or value."""


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "trajectory"
    model: ModelParams = field(default_factory=ModelParams)
    theta1: float = DEFAULTS["theta1"]
    theta2: float = DEFAULTS["theta2"]
    optimize: bool = False
    grid: int = 64
    output_path: str = None
    workers: int = 1
    downsample: int = 1
    points: int = 0
    pairs: str = "orthogonal"


@dataclass(frozen=True)
class CsvTable:
    columns: tuple
    rows: np.ndarray
    int_columns: frozenset = frozenset({"step"})

    def __len__(self):
        return self.rows.shape[0]

    def column(self, name):
        return self.rows[:, self.columns.index(name)]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        ints = [c in self.int_columns for c in self.columns]
        for row in self.rows:
            writer.writerow(
                [str(int(v)) if is_int else format(float(v), ".17g") for v, is_int in zip(row, ints)]
            )
        return buf.getvalue()


def parse_angle(text):
    """Radians from ``1.57``, ``pi/2``, ``0.95pi/2`` or ``2pi``."""
    if isinstance(text, (int, float)):
        return float(text)
    m = _ANGLE.match(str(text))
    if m:
        coef = float(m.group(2)) if m.group(2) else 1.0
        if m.group(1) == "-":
            coef = -coef
        den = int(m.group(3)) if m.group(3) else 1
        if den == 0:
            raise ValueError(f"bad angle {text!r}")
        return coef * math.pi / den
    return float(text)


def _angle_arg(text):
    try:
        value = parse_angle(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid angle {text!r}; use radians or <real>pi/2")
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"angle must be finite, got {text!r}")
    return value


def _flags(parser):
    parser.add_argument("--gamma", type=_angle_arg, default=None)
    parser.add_argument("--delta", type=_angle_arg, default=None)
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--strategy", type=int, default=None)
    parser.add_argument("--theta1", type=_angle_arg, default=None)
    parser.add_argument("--theta2", type=_angle_arg, default=None)
    parser.add_argument("--optimize", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--grid", type=int, default=None)
    parser.add_argument("--prob", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--env-excited", dest="env_excited", type=float, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--config", default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--downsample", type=int, default=None)
    parser.add_argument("--pairs", choices=("orthogonal", "all"), default=None,
                        help="candidate pairs searched when optimising")
    parser.add_argument("--points", type=int, default=None,
                        help="number of sweep values, or random triples for oracle-check")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="collisim", description="Collision-model non-Markovianity experiments."
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, preset in COMMANDS.items():
        p = sub.add_parser(name, help=f"{preset} preset")
        _flags(p)
    return parser


_FILE_KEYS = {
    "preset", "gamma", "delta", "steps", "strategy", "theta1", "theta2", "optimize", "grid",
    "prob", "seed", "env_excited", "out", "workers", "downsample", "points", "pairs",
}
_ANGLE_KEYS = {"gamma", "delta", "theta1", "theta2"}
_INT_KEYS = {"steps", "strategy", "grid", "seed", "workers", "downsample", "points"}
_FLOAT_KEYS = {"prob", "env_excited"}


def _read_config_file(path):
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FILE_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return values


def _convert(key, value):
    if key in _ANGLE_KEYS:
        return parse_angle(value)
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key == "optimize":
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(value)
    if key == "pairs" and value not in ("orthogonal", "all"):
        raise ValueError(value)
    if key == "preset":
        value = COMMANDS.get(value, value)
        if value not in PRESETS:
            raise ValueError(value)
    return value


def _check_range(key, value, low=None, high=None, kind="value"):
    if (low is not None and value < low) or (high is not None and value > high):
        lo = "-inf" if low is None else low
        hi = "inf" if high is None else high
        raise ConfigError(f"{key}={value!r} out of range; valid {kind} range is [{lo}, {hi}]")


def parse_config(cli_args=(), file=None):
    """Build an :class:`ExperimentConfig` from CLI tokens and an optional key=value file.

    Precedence: CLI flag, then config-file key, then the ``COLLISIM_SEED``
    environment variable (seed only), then preset and built-in defaults.
    """
    parser = build_parser()
    tokens = list(cli_args)
    if tokens and tokens[0] not in COMMANDS and not tokens[0].startswith("-"):
        raise ConfigError(f"unknown command {tokens[0]!r}; choose from {', '.join(COMMANDS)}")
    if tokens and tokens[0].startswith("-"):
        tokens = ["run"] + tokens
    try:
        ns = parser.parse_args(tokens)
    except SystemExit as exc:
        raise ConfigError(f"invalid arguments: {' '.join(tokens)}") from exc
    cli = {k: v for k, v in vars(ns).items() if k != "command" and v is not None}

    path = cli.pop("config", None) or file
    from_file = _read_config_file(path) if path else {}

    preset = COMMANDS[ns.command] if ns.command else from_file.get("preset", "trajectory")
    merged = dict(DEFAULTS)
    merged.update({"optimize": False, "workers": os.cpu_count() or 1, "out": f"{preset}.csv",
                   "points": 0})
    merged.update(PRESET_DEFAULTS.get(preset, {}))
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None and env_seed.strip():
        try:
            merged["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={env_seed!r} is not an integer") from exc
    merged.update({k: v for k, v in from_file.items() if k != "preset"})
    merged.update(cli)

    _check_range("steps", merged["steps"], 1, kind="integer")
    if merged["strategy"] not in (1, 2):
        raise ConfigError(f"strategy={merged['strategy']!r} out of range; valid values are 1 or 2")
    _check_range("grid", merged["grid"], 2, kind="integer")
    _check_range("prob", merged["prob"], 0.0, 1.0)
    _check_range("env_excited", merged["env_excited"], 0.0, 1.0)
    _check_range("seed", merged["seed"], 0, 2**64 - 1, kind="integer")
    _check_range("workers", merged["workers"], 1, kind="integer")
    _check_range("downsample", merged["downsample"], 1, kind="integer")
    _check_range("points", merged["points"], 0, kind="integer")
    if preset in SWEEPS:
        _check_range("points", merged["points"], 1, kind="integer")
    if preset == "oracle-check":
        _check_range("steps", merged["steps"], 1, 13, kind="integer")
    for key in ("gamma", "delta", "theta1", "theta2"):
        if not math.isfinite(merged[key]):
            raise ConfigError(f"{key} must be finite")
    if not merged["out"]:
        raise ConfigError("missing output path (--out)")

    model = ModelParams(
        gamma=merged["gamma"],
        delta=merged["delta"],
        steps=merged["steps"],
        strategy=merged["strategy"],
        env_prep=env_state(merged["env_excited"]),
        collision_probability=merged["prob"],
        seed=merged["seed"],
    )
    return ExperimentConfig(
        preset=preset,
        model=model,
        theta1=merged["theta1"],
        theta2=merged["theta2"],
        optimize=bool(merged["optimize"]),
        grid=merged["grid"],
        output_path=merged["out"],
        workers=merged["workers"],
        downsample=merged["downsample"],
        points=merged["points"],
        pairs=merged["pairs"],
    )


# -- presets --------------------------------------------------------------

def _pair(config):
    """Bloch angles to use: optimised over the grid, or the configured pair."""
    if config.optimize:
        res = optimize_measure(config.model, config.grid, config.pairs)
        return res.best_pair
    return config.theta1, config.theta2


def _homogenize(config):
    t1, t2 = _pair(config)
    a = run_trajectory(bloch_state(t1), config.model)
    b = run_trajectory(bloch_state(t2), config.model)
    d = distance_series(a, b)
    fid = a.system[:, 0, 0].real
    steps = np.arange(len(d))
    table = CsvTable(("step", "trace_distance", "fidelity"), np.column_stack([steps, d, fid]))
    return table, blp_measure(d)[0], (t1, t2), d


def _trajectory(config):
    t1, t2 = _pair(config)
    a = run_trajectory(bloch_state(t1), config.model)
    b = run_trajectory(bloch_state(t2), config.model)
    d = distance_series(a, b)
    table = CsvTable(("step", "trace_distance"), np.column_stack([np.arange(len(d)), d]))
    return table, blp_measure(d)[0], (t1, t2), d


def _sec_bound(config):
    t1, t2 = _pair(config)
    a = run_trajectory(bloch_state(t1), config.model)
    b = run_trajectory(bloch_state(t2), config.model)
    sb = sec_bound_series(a, b, config.model)
    d = distance_series(a, b)
    table = CsvTable(
        ("step", "dD", "env_term", "sec_term"),
        np.column_stack([np.arange(len(sb)), sb.discrete_derivative, sb.env_term, sb.sec_term]),
    )
    return table, blp_measure(d)[0], (t1, t2), d


def _sweep_pair(config):
    return None if config.optimize else (config.theta1, config.theta2)


def _delta_sweep(config):
    deltas = np.linspace(0.0, math.pi / 2, config.points)
    cols = {}
    best = (-1.0, None)
    for strategy in Strategy:
        base = config.model.replace(strategy=strategy)
        results = delta_sweep(base, deltas, config.grid, config.workers,
                              _sweep_pair(config), config.pairs)
        cols[strategy] = results
        for _, r in results:
            if r.n_value > best[0]:
                best = (r.n_value, r.best_pair)
    rows = []
    for k, d in enumerate(deltas):
        r1 = cols[Strategy.ERASE][k][1]
        r2 = cols[Strategy.RETAIN][k][1]
        rows.append([d, r1.n_value, r2.n_value, *r1.best_pair, *r2.best_pair])
    table = CsvTable(
        ("delta", "n_measure_s1", "n_measure_s2",
         "best_theta1_s1", "best_theta2_s1", "best_theta1_s2", "best_theta2_s2"),
        np.array(rows, dtype=float),
    )
    return table, best[0], best[1], None


def _threshold_sweep(config):
    ps = np.linspace(0.0, 1.0, config.points)
    results = threshold_sweep(config.model, ps, config.grid, config.workers,
                              _sweep_pair(config), config.pairs)
    table = CsvTable(("p", "n_measure"), np.array([[p, r.n_value] for p, r in results]))
    top = max(results, key=lambda pr: pr[1].n_value)[1]
    return table, top.n_value, top.best_pair, None


def _oracle_check(config):
    model = config.model.replace(strategy=Strategy.RETAIN)
    chain = model.steps
    rng = np.random.Generator(np.random.PCG64(model.seed))
    cases = [(model, config.theta1), (model, config.theta2)]
    for g, d, t in rng.uniform(0.0, 2 * math.pi, size=(config.points, 3)):
        cases.append((model.replace(gamma=g, delta=d), t))
    dev = np.zeros(chain + 1)
    for params, theta in cases:
        rho = bloch_state(theta)
        fast = run_trajectory(rho, params).system
        exact = run_exact_oracle(rho, params, chain).system
        dev = np.maximum(dev, np.abs(fast - exact).max(axis=(1, 2)))
    a = run_trajectory(bloch_state(config.theta1), model)
    b = run_trajectory(bloch_state(config.theta2), model)
    d = distance_series(a, b)
    table = CsvTable(("step", "max_abs_deviation"), np.column_stack([np.arange(chain + 1), dev]))
    return table, blp_measure(d)[0], (config.theta1, config.theta2), d


_RUNNERS = {
    "homogenize": _homogenize,
    "trajectory": _trajectory,
    "sec-bound": _sec_bound,
    "delta-sweep": _delta_sweep,
    "threshold-sweep": _threshold_sweep,
    "oracle-check": _oracle_check,
}


def emit_plot_data(table, style="raw"):
    """Thin a table for plotting.

    ``style`` is ``"raw"`` or an integer ``k``; downsampling keeps every
    ``k``-th row plus the local and global extrema of the trace-distance
    column (every data column when a table has none).
    """
    if len(table) == 0:
        raise ValueError("cannot emit an empty table")
    if style in ("raw", 1, None):
        return table
    k = int(style)
    if k < 1:
        raise ValueError(f"downsampling factor must be >= 1, got {k}")
    keep = np.zeros(len(table), dtype=bool)
    keep[::k] = True
    names = ["trace_distance"] if "trace_distance" in table.columns else list(table.columns[1:])
    for name in names:
        col = table.column(name)
        for sign in (1.0, -1.0):
            peaks, _ = find_peaks(sign * col)
            keep[peaks] = True
            keep[int(np.argmax(sign * col))] = True
    return CsvTable(table.columns, table.rows[keep], table.int_columns)


def _validate(table, config):
    if not np.all(np.isfinite(table.rows)):
        raise RuntimeError("output table holds non-finite values")
    expected = config.points if config.preset in SWEEPS else config.model.steps + 1
    if len(table) != expected:
        raise RuntimeError(f"output table has {len(table)} rows, expected {expected}")


def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".collisim-", suffix=".csv", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_preset(config, stream=None):
    """Run ``config.preset``, write its CSV and print the summary line.

    Returns the full-resolution table; the file receives the downsampled
    version when ``config.downsample > 1``.
    """
    stream = sys.stdout if stream is None else stream
    start = time.perf_counter()
    table, n_value, pair, series = _RUNNERS[config.preset](config)
    _validate(table, config)
    out = emit_plot_data(table, config.downsample)
    _write_atomic(config.output_path, out.to_csv())
    elapsed = time.perf_counter() - start
    line = (f"N={n_value:.17g} pair=({pair[0]:.17g},{pair[1]:.17g}) "
            f"steps={config.model.steps} elapsed={elapsed:.3f}")
    if series is not None:
        line += f" total_variation={total_variation(series):.17g}"
    print(line, file=stream)
    return table


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        build_parser().print_help()
        return 0
    if "-h" in argv or "--help" in argv:
        build_parser().parse_args(argv)
        return 0
    try:
        config = parse_config(argv)
    except ConfigError as exc:
        print(f"collisim: error: {exc}", file=sys.stderr)
        return 2
    try:
        run_preset(config)
    except Exception as exc:  # noqa: BLE001 - any worker failure maps to exit 1
        print(f"collisim: {config.preset} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
