"""Command-line entry point: config loading, single runs and sweeps, CSV output.

Config files are flat ``key = value`` lines using :class:`SimConfig` field
names; ``#`` starts a comment. Units: ``*_dbm`` in dBm, ``theta_db`` in dB,
``lambda_*`` per square meter, ``xi_*`` packets per slot, lengths in meters.
Missing keys keep their defaults.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import sys
import types
import typing

from .engine import SimConfig, run_experiment
from .exceptions import ConfigError, ParameterError, TopologyError
from .scheduling import Scheme

CSV_COLUMNS = [
    "scheme", "direction", "theta_db", "k_s", "realizations", "horizon", "seed",
    "mean_throughput", "ci95_throughput", "mean_delay", "ci95_delay",
    "pr_empty_q", "ci95_pr_empty_q", "resampled_topologies",
]
SWEEPABLE = ("theta_db", "k_s")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _field_types():
    hints = typing.get_type_hints(SimConfig)
    return {f.name: hints[f.name] for f in dataclasses.fields(SimConfig)}


def _convert(raw: str, kind):
    optional = typing.get_origin(kind) in (typing.Union, types.UnionType)
    if optional:
        if raw.lower() in ("none", "null", "auto", ""):
            return None
        kind = next(a for a in typing.get_args(kind) if a is not type(None))
    if kind is bool:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        value = float(raw)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    if kind is float:
        value = float(raw)
        if math.isnan(value):
            raise ValueError("NaN is not a valid value")
        return value
    if kind is Scheme:
        return Scheme.parse(raw)
    raise TypeError(f"unsupported field type {kind}")


def parse_config(text: str, base: SimConfig | None = None) -> SimConfig:
    field_types = _field_types()
    cfg = base or SimConfig()
    seen = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in field_types:
            raise ConfigError("unknown key", key=key, line=lineno)
        if key in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[key]})", key=key, line=lineno)
        seen[key] = lineno
        try:
            value = _convert(raw, field_types[key])
        except (ValueError, ParameterError) as exc:
            raise ConfigError(f"malformed value {raw!r}: {exc}", key=key, line=lineno) from None
        try:
            cfg = cfg.replace(**{key: value})
        except ParameterError as exc:
            raise ConfigError(str(exc), key=key, line=lineno) from None
    return cfg


def load_config(path) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def parse_values(text: str, variable: str):
    """``lo:hi:step`` (inclusive) or a comma list; must be strictly ordered."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("range must be lo:hi:step")
        lo, hi, step = (float(p) for p in parts)
        if step == 0 or (hi - lo) / step < 0:
            raise ValueError("step must be nonzero and point from lo to hi")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        values = [lo + i * step for i in range(n)]
    else:
        values = [float(v) for v in text.split(",") if v.strip()]
    if not values:
        raise ValueError("no sweep values given")
    if variable == "k_s":
        if any(not v.is_integer() for v in values):
            raise ValueError("k_s values must be integers")
        values = [int(v) for v in values]
    else:
        values = [round(v, 12) + 0.0 for v in values]
    diffs = [b - a for a, b in zip(values, values[1:])]
    if diffs and not (all(d > 0 for d in diffs) or all(d < 0 for d in diffs)):
        raise ValueError("sweep values must be strictly ordered")
    return values


def parse_schemes(text: str):
    out = []
    for item in text.split(","):
        item = item.strip()
        if item.lower() == "all":
            out.extend(Scheme)
        elif item:
            out.append(Scheme.parse(item))
    if not out:
        raise ValueError("no schemes given")
    return list(dict.fromkeys(out))


def _num(x):
    return "" if x is None else repr(float(x))


def result_rows(cfg: SimConfig, agg):
    for direction in ("UL", "DL"):
        d = agg.direction(direction)
        yield {
            "scheme": cfg.scheme.value,
            "direction": direction,
            "theta_db": repr(float(cfg.theta_db)),
            "k_s": str(cfg.k_s),
            "realizations": str(cfg.realizations),
            "horizon": str(cfg.horizon),
            "seed": str(cfg.master_seed),
            "mean_throughput": _num(d.throughput.mean),
            "ci95_throughput": _num(d.throughput.ci95),
            "mean_delay": _num(d.delay.mean),
            "ci95_delay": _num(d.delay.ci95),
            "pr_empty_q": _num(d.pr_empty_queue.mean),
            "ci95_pr_empty_q": _num(d.pr_empty_queue.ci95),
            "resampled_topologies": str(agg.resampled_topologies),
        }


def describe(cfg: SimConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.resolved().items())


def build_parser():
    p = argparse.ArgumentParser(
        prog="tddsim",
        description="Monte Carlo comparison of S-TDD, fixed D-TDD and MWU D-TDD in small-cell networks.",
    )
    p.add_argument("--config", help="key = value config file (missing keys keep defaults)")
    p.add_argument("--scheme", "--schemes", dest="scheme", default=None,
                   help="stdd | dtdd-fixed | dtdd-mwu | all, or a comma list")
    p.add_argument("--sweep", choices=SWEEPABLE, help="parameter to sweep")
    p.add_argument("--values", help="sweep values: lo:hi:step (inclusive) or a comma list")
    p.add_argument("--realizations", type=int)
    p.add_argument("--seed", type=int, help="master seed (64-bit unsigned)")
    p.add_argument("--horizon", type=int, help="slots per realization")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--describe", action="store_true",
                   help="print the resolved config and embed it as a commented CSV preamble")
    return p


def _glue_negative_values(argv):
    # argparse reads "--values -10:10:2" as two flags
    out = list(argv)
    for i, tok in enumerate(out[:-1]):
        if tok == "--values" and out[i + 1].startswith("-"):
            out[i:i + 2] = [f"--values={out[i + 1]}"]
            break
    return out


def run_cli(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    args = parser.parse_args(_glue_negative_values(argv))
    if (args.sweep is None) != (args.values is None):
        parser.error("--sweep and --values must be given together")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        schemes = parse_schemes(args.scheme) if args.scheme else None
        values = parse_values(args.values, args.sweep) if args.sweep else None
    except (ValueError, ParameterError) as exc:
        parser.error(str(exc))

    try:
        cfg = load_config(args.config) if args.config else SimConfig()
        overrides = {k: getattr(args, a) for k, a in
                     (("realizations", "realizations"), ("master_seed", "seed"), ("horizon", "horizon"))
                     if getattr(args, a) is not None}
        if "horizon" in overrides and cfg.warmup is not None and cfg.warmup >= overrides["horizon"]:
            raise ParameterError("warmup from the config is not below the --horizon override")
        cfg = cfg.replace(**overrides)
        schemes = schemes or [cfg.scheme]
        points = []
        for scheme in schemes:
            for value in (values if values is not None else [None]):
                change = {"scheme": scheme}
                if value is not None:
                    change[args.sweep] = value
                points.append(cfg.replace(**change))

        if args.describe:
            sys.stdout.write(describe(cfg))

        buf = io.StringIO()
        if args.describe:
            for line in describe(cfg).splitlines():
                buf.write(f"# {line}\n")
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for point in points:
            agg = run_experiment(point, threads=args.threads)
            writer.writerows(result_rows(point, agg))

        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())
    except (ConfigError, ParameterError, TopologyError, OSError, RuntimeError) as exc:
        print(f"tddsim: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
