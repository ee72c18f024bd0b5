"""Command-line front end.

Subcommands::

    optimize   one channel realisation: allocation, SCP and AO trace
    sweep      run a sweep from a config file and write the CSV
    compare    RSMA against NOMA summary table for a sweep
    oracle     brute-force grid check of one realisation

Config files are flat TOML (no tables). Keys are the :class:`SystemConfig`
fields except ``Pt`` (set through ``snr_db``), the sweep keys ``axis``,
``values``, ``n_realizations``, ``seed``, ``schemes`` and ``tie_tasks``, and
for single-instance commands optionally ``g1``, ``g2`` and ``grid_density``.

Exit codes: 0 success, 1 bad flag or config, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import fields

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .ao import SolverFailure, brute_force_oracle, optimize, optimize_noma
from .harness import (
    AXES,
    DEFAULT_SNR_DB,
    SCHEMES,
    SweepSpec,
    draw_channel,
    realization_rng,
    rows_to_csv,
    run_sweep,
)
from .streams import ChannelRealization
from .system import SystemConfig

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

_SYSTEM_KEYS = {f.name for f in fields(SystemConfig)} - {"Pt"}
_NUMBER = (int, float)
# key -> (accepted types, human description)
_SCHEMA = {
    **{k: (_NUMBER, "a number") for k in _SYSTEM_KEYS},
    "N": ((int,), "an integer"),
    "snr_db": (_NUMBER, "a number"),
    "axis": ((str,), f"one of {', '.join(AXES)}"),
    "values": ((list,), "a list of numbers"),
    "n_realizations": ((int,), "an integer"),
    "seed": ((int,), "a non-negative integer"),
    "schemes": ((list,), f"a list drawn from {', '.join(SCHEMES)}"),
    "tie_tasks": ((bool,), "true or false"),
    "g1": (_NUMBER, "a number"),
    "g2": (_NUMBER, "a number"),
    "grid_density": ((int,), "an integer"),
}


class ConfigError(ValueError):
    """Malformed config or flag; the message names the offending field."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid TOML: {exc}") from exc
    return validate_config(raw)


def validate_config(raw: dict) -> dict:
    for key, value in raw.items():
        if key == "Pt":
            raise ConfigError("config field 'Pt': set the power budget through 'snr_db'")
        if key not in _SCHEMA:
            raise ConfigError(f"config field '{key}': unknown key")
        types, desc = _SCHEMA[key]
        # bool is an int subclass; only tie_tasks may be boolean
        if not isinstance(value, types) or (isinstance(value, bool) and key != "tie_tasks"):
            raise ConfigError(f"config field '{key}': expected {desc}, got {value!r}")
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"config field '{key}': must be finite")
    if "values" in raw and not all(isinstance(v, _NUMBER) and not isinstance(v, bool) for v in raw["values"]):
        raise ConfigError("config field 'values': expected a list of numbers")
    if "schemes" in raw and not all(s in SCHEMES for s in raw["schemes"]):
        raise ConfigError(f"config field 'schemes': entries must be drawn from {', '.join(SCHEMES)}")
    if "axis" in raw and raw["axis"] not in AXES:
        raise ConfigError(f"config field 'axis': expected one of {', '.join(AXES)}, got {raw['axis']!r}")
    if raw.get("seed", 0) < 0:
        raise ConfigError("config field 'seed': must be non-negative")
    return dict(raw)


def system_from(conf: dict) -> SystemConfig:
    over = {k: conf[k] for k in _SYSTEM_KEYS if k in conf}
    try:
        return SystemConfig(**over).with_snr_db(float(conf.get("snr_db", DEFAULT_SNR_DB)))
    except ValueError as exc:
        raise ConfigError(f"config field {_field_of(exc)}: {exc}") from exc


def sweep_from(conf: dict, seed: int | None, scheme: str | None) -> SweepSpec:
    for key in ("axis", "values"):
        if key not in conf:
            raise ConfigError(f"config field '{key}': required for sweeps")
    fixed = {k: conf[k] for k in (_SYSTEM_KEYS | {"snr_db"}) if k in conf}
    try:
        return SweepSpec(
            axis=conf["axis"],
            values=tuple(conf["values"]),
            fixed=fixed,
            n_realizations=conf.get("n_realizations", 100),
            seed=seed if seed is not None else conf.get("seed", 42),
            schemes=(scheme,) if scheme else tuple(conf.get("schemes", SCHEMES)),
            tie_tasks=conf.get("tie_tasks", False),
        )
    except ValueError as exc:
        raise ConfigError(f"config field {_field_of(exc)}: {exc}") from exc


def _field_of(exc: Exception) -> str:
    text = str(exc)
    for name in sorted(_SCHEMA, key=len, reverse=True):
        if text.startswith(name) or f" {name} " in f" {text} ":
            return f"'{name}'"
    return "(value)"


def channel_from(conf: dict, seed: int) -> ChannelRealization:
    if ("g1" in conf) != ("g2" in conf):
        raise ConfigError("config field 'g1'/'g2': give both gains or neither")
    if "g1" in conf:
        try:
            return ChannelRealization(float(conf["g1"]), float(conf["g2"]))
        except ValueError as exc:
            raise ConfigError(f"config field 'g1'/'g2': {exc}") from exc
    return draw_channel(realization_rng(seed, 0), conf.get("snr_db"))


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _describe(alloc, res) -> list[str]:
    pw, lam, beta = alloc.pw, alloc.lam, alloc.beta
    return [
        f"lambda=({lam.lambda1:.6g}, {lam.lambda2:.6g})",
        f"power p11={pw.p11:.6g} p12={pw.p12:.6g} p2={pw.p2:.6g}",
        f"beta_a={beta.beta_a:.6g} beta_c={beta.beta_c:.6g}",
        f"eps1={res.eps1:.6g} eps2={res.eps2:.6g} feasible={res.feasible}",
        f"scp={res.scp}",
    ]


def cmd_optimize(args, conf) -> int:
    seed = args.seed if args.seed is not None else conf.get("seed", 42)
    cfg, ch = system_from(conf), channel_from(conf, seed)
    print(f"channel g1={ch.g1:.6g} g2={ch.g2:.6g} Pt={cfg.Pt:.6g} N={cfg.N}")
    if args.scheme == "noma":
        alloc, res = optimize_noma(cfg, ch)
        print("\n".join(_describe(alloc, res)))
        return EXIT_OK
    alloc, res, trace = optimize(cfg, ch)
    print("\n".join(_describe(alloc, res)))
    print(f"iterations={trace.iterations} converged={trace.converged} picked={trace.picked}")
    print("trace=" + ",".join(f"{v:.6g}" for v in trace.objectives))
    return EXIT_OK


def cmd_sweep(args, conf) -> int:
    spec = sweep_from(conf, args.seed, args.scheme)
    _emit(rows_to_csv(run_sweep(spec, args.jobs)), args.out)
    return EXIT_OK


def cmd_compare(args, conf) -> int:
    spec = sweep_from(conf, args.seed, None)
    if tuple(spec.schemes) != SCHEMES:
        spec = SweepSpec(spec.axis, spec.values, spec.fixed, spec.n_realizations, spec.seed, SCHEMES, spec.tie_tasks)
    rows = run_sweep(spec, args.jobs)
    if args.out:
        _emit(rows_to_csv(rows), args.out)
    table = {(r.axis, r.scheme): r for r in rows}
    print(f"{spec.axis:>12} {'rsma':>10} {'noma':>10} {'gap':>10}")
    for value in spec.values:
        a, b = table[(float(value), "rsma")], table[(float(value), "noma")]
        print(f"{value:>12.6g} {a.mean_scp:>10.4f} {b.mean_scp:>10.4f} {a.mean_scp - b.mean_scp:>+10.4f}")
    return EXIT_OK


def cmd_oracle(args, conf) -> int:
    seed = args.seed if args.seed is not None else conf.get("seed", 42)
    cfg, ch = system_from(conf), channel_from(conf, seed)
    density = conf.get("grid_density", 33)
    if density < 17:
        raise ConfigError("config field 'grid_density': must be at least 17")
    o_alloc, o_res = brute_force_oracle(cfg, ch, density)
    _, a_res, _ = optimize(cfg, ch)
    print(f"channel g1={ch.g1:.6g} g2={ch.g2:.6g} Pt={cfg.Pt:.6g} N={cfg.N}")
    print("\n".join(_describe(o_alloc, o_res)))
    print(f"ao_scp={a_res.scp} difference={a_res.scp - o_res.scp:+.3g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat TOML config file")
    common.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    common.add_argument("--out", help="CSV output path (default: stdout)")
    common.add_argument("--scheme", choices=SCHEMES, help="restrict to one scheme")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    parser = _Parser(prog="rsma-mec", description="SCP optimisation for two-user uplink RSMA edge computing.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn, text in (
        ("optimize", cmd_optimize, "optimise one channel realisation"),
        ("sweep", cmd_sweep, "run a sweep and write CSV"),
        ("compare", cmd_compare, "RSMA vs NOMA summary table"),
        ("oracle", cmd_oracle, "brute-force check of one realisation"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("flag '--seed': must be non-negative")
        if args.jobs < 1:
            raise ConfigError("flag '--jobs': must be at least 1")
        conf = load_config(args.config)
        return args.func(args, conf)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
