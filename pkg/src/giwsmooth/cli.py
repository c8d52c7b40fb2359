"""Command-line front end.

    giwsmooth simulate --config cv_lowpd --out results/ [--runs N] [--seed S]
                       [--trackers ccv,fcv,fct] [--workers W]
    giwsmooth selftest [--level basic|deep]

Config files are INI text with a single ``[scenario]`` section; every key
is optional and defaults to the ``ScenarioConfig`` value.  ``--config``
takes either a path or the name of a bundled preset.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import re
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_selftest
from .simulation import MODES, ScenarioConfig, run_monte_carlo

__all__ = [
    "ConfigError",
    "PRESETS",
    "load_config",
    "parse_config_text",
    "write_outputs",
    "cmd_simulate",
    "cmd_selftest",
    "main",
]

PRESETS = ("cv_lowpd", "cv_highpd", "ct_lowpd", "ct_highpd")
SECTION = "scenario"
DIVERGENCE_LIMIT = 0.10

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


class ConfigError(ValueError):
    """Bad config file; the message carries the offending line and field."""


def _float_list(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _name_list(text: str) -> tuple:
    return tuple(x.strip().upper() for x in text.split(",") if x.strip())


def _pi_float(text: str) -> float:
    # Allow "pi/180" style entries for angular rates.
    t = text.strip().lower().replace(" ", "")
    m = re.fullmatch(r"([0-9.eE+-]*)\*?pi(?:/([0-9.eE+-]+))?", t)
    if m:
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    return float(text)


def _int(text: str) -> int:
    return int(text.strip())


_FIELDS = {
    "truth_model": str,
    "T": float,
    "K": _int,
    "sigma_a": float,
    "sigma_omega": _pi_float,
    "p_D": float,
    "N_z": _int,
    "extent_semiaxes": _float_list,
    "trackers": _name_list,
    "num_runs": _int,
    "seed": _int,
    "initial_speed": float,
    "initial_turn_rate": float,
}
_LOWER = {k.lower(): k for k in _FIELDS}


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*[=:]", re.IGNORECASE)
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return None


def _where(source: str, text: str, key: str | None) -> str:
    line = _line_of(text, key) if key else None
    return f"{source}:{line}" if line else source


def parse_config_text(text: str, source: str = "<config>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if not parser.has_section(SECTION):
        raise ConfigError(f"{source}: missing [{SECTION}] section")
    extra = [s for s in parser.sections() if s != SECTION]
    if extra:
        raise ConfigError(f"{source}: unexpected section [{extra[0]}]")
    values = {}
    for key, raw in parser.items(SECTION):
        name = _LOWER.get(key.lower())
        if name is None:
            raise ConfigError(f"{_where(source, text, key)}: unknown field {key!r}")
        try:
            values[name] = _FIELDS[name](raw)
        except ValueError:
            raise ConfigError(f"{_where(source, text, key)}: field {name!r}: cannot parse {raw!r}") from None
    try:
        return ScenarioConfig(**values)
    except ValueError as exc:
        field = next((f for f in _FIELDS if str(exc).startswith(f)), None)
        raise ConfigError(f"{_where(source, text, field)}: field {field or '?'!r}: {exc}") from None


def load_config(source: str) -> ScenarioConfig:
    """Read a config from a path, or from a bundled preset by name."""
    path = Path(source)
    if path.is_file():
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{source}: {exc}") from None
        return parse_config_text(text, str(path))
    name = source[:-4] if source.endswith(".ini") else source
    if name in PRESETS:
        text = resources.files("giwsmooth").joinpath("presets", f"{name}.ini").read_text()
        return parse_config_text(text, f"preset:{name}")
    raise ConfigError(f"{source}: no such file or preset (presets: {', '.join(PRESETS)})")


# -- outputs ---------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _median_table(table) -> dict:
    """Median GWD per tracker; trackers without any valid run give NaN."""
    out = {}
    for t, name in enumerate(table.trackers):
        mask = table.valid[:, t]
        vals = table.gwd[mask, t]
        out[name] = np.median(vals, axis=0) if len(vals) else np.full(table.gwd.shape[2:], np.nan)
    return out


def write_outputs(table, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["run", "tracker", "k", "mode", "gwd"])
    for run, name, k, mode, val in table.rows():
        w.writerow([run, name, k, mode, _fmt(val)])
    (out_dir / "gwd.csv").write_bytes(buf.getvalue().encode())

    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["tracker", "k", "mode", "median_gwd"])
    medians = _median_table(table)
    for name in table.trackers:
        for k in range(table.K):
            for j, mode in enumerate(MODES):
                w.writerow([name, k + 1, mode, _fmt(medians[name][k, j])])
    (out_dir / "summary.csv").write_bytes(buf.getvalue().encode())


def cmd_simulate(config_path: str, out_dir, overrides: dict | None = None, workers: int = 1) -> int:
    start = time.perf_counter()
    try:
        config = load_config(config_path)
        config = config.with_overrides(**(overrides or {}))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: command-line override: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(out_dir)
    table = run_monte_carlo(config, workers=max(1, int(workers)))
    write_outputs(table, out_dir)

    divergences = table.divergence_counts()
    manifest = {
        "tool": "giwsmooth",
        "version": __version__,
        "config_source": str(config_path),
        "config": config.to_dict(),
        "seed": int(config.seed),
        "seed_splitting": "numpy SeedSequence(seed, spawn_key=(run,)) -> PCG64",
        "workers": int(workers),
        "divergences": divergences,
        "smoother_counters": table.counters,
        "wall_clock_seconds": round(time.perf_counter() - start, 3),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    bad = {k: v for k, v in divergences.items() if v > DIVERGENCE_LIMIT * table.num_runs}
    if bad:
        print(f"divergence above {DIVERGENCE_LIMIT:.0%} of runs: {bad}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"wrote {out_dir / 'gwd.csv'}, {out_dir / 'summary.csv'}, {out_dir / 'manifest.json'}")
    return EXIT_OK


def cmd_selftest(level: str = "basic", stream=None) -> int:
    stream = stream or sys.stdout
    if level not in ("basic", "deep"):
        print(f"unknown level {level!r}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_selftest(level)
    width = max(len(r.name) for r in results)
    print(f"{'check':<{width}}  result  detail", file=stream)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}", file=stream)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed", file=stream)
    return EXIT_OK if failed == 0 else EXIT_FAILED


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="giwsmooth", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"giwsmooth {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a Monte Carlo scenario and write CSV results")
    s.add_argument("--config", required=True, help=f"config path or preset ({', '.join(PRESETS)})")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--runs", type=int, help="override num_runs")
    s.add_argument("--seed", type=int, help="override the 64-bit master seed")
    s.add_argument("--trackers", help="comma-separated subset of ccv,fcv,fct")
    s.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")

    t = sub.add_parser("selftest", help="run the built-in identity and oracle checks")
    t.add_argument("--level", choices=("basic", "deep"), default="basic")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "simulate":
        overrides = {
            "num_runs": args.runs,
            "seed": args.seed,
            "trackers": _name_list(args.trackers) if args.trackers else None,
        }
        return cmd_simulate(args.config, args.out, overrides, workers=args.workers)
    return cmd_selftest(args.level)


if __name__ == "__main__":
    sys.exit(main())
