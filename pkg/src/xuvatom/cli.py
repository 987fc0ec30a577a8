"""Command-line driver.

Subcommands: eigen, propagate, analyze, kh, ie, sweep, validate-config.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Environment: XUVATOM_OUTPUT_ROOT prefixes relative output directories,
XUVATOM_THREADS caps worker threads.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .eigensolve import EigensolveError
from .propagation import PropagationError
from .runner import (
    ATTOSECONDS_PER_AU,
    ConfigError,
    PRESETS,
    RunConfig,
    config_from_dict,
    config_to_dict,
    derived_quantities,
    load_config,
    preset,
    pulse_from_config,
    run_analyze,
    run_eigen,
    run_ie,
    run_kh,
    run_propagate,
    run_sweep,
    validate_config_dict,
)

logger = logging.getLogger(__name__)


def _apply_thread_override() -> None:
    n = os.environ.get("XUVATOM_THREADS")
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n)
    try:
        import numba

        numba.set_num_threads(int(n))
    except (ImportError, ValueError):
        pass


def _apply_overrides(raw: dict, sets: list[str]) -> dict:
    for item in sets:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set {item!r}: expected dotted.key=value")
        if val == "":
            parsed = None  # KEY= clears a value (e.g. switch alpha0 -> e0)
        else:
            try:
                parsed = json.loads(val)
            except json.JSONDecodeError:
                parsed = val
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {item!r}: {part} is not a section")
        node[parts[-1]] = parsed
    return raw


def _config_from_args(args) -> RunConfig:
    if args.config is None and args.preset is None:
        raise ConfigError("give --config FILE or --preset NAME")
    if args.config is not None:
        raw = json.loads(Path(args.config).read_text())
    else:
        raw = config_to_dict(preset(args.preset))
    if args.set:
        raw = _apply_overrides(raw, args.set)
    cfg = config_from_dict(raw)
    if args.out is not None:
        raw["output"] = {"directory": args.out}
        cfg = config_from_dict(raw)
    return cfg


def _print_derived(cfg: RunConfig) -> None:
    d = derived_quantities(pulse_from_config(cfg.pulse))
    print(
        "pulse [a.u.]: E0={e0:.6g}  alpha0=E0/omega^2={alpha0:.6g}  A0={a0:.6g}  "
        "omega={omega:.6g}  cycles={n}  Up={up:.6g}".format(
            e0=d["e0"], alpha0=d["alpha0"], a0=d["a0"], omega=d["omega"],
            n=d["n_cycles"], up=d["ponderomotive_energy"],
        )
    )
    print(
        f"duration: T={d['duration_au']:.6g} a.u. = {d['duration_as']:.6g} as "
        f"(1 a.u. = {ATTOSECONDS_PER_AU:.3f} as)"
    )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", choices=sorted(PRESETS), help="shipped configuration")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (dotted path, JSON value)")
    p.add_argument("--out", help="output directory (overrides output.directory)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xuvatom",
        description="Atoms in superintense ultrashort pulses: eigenstates, propagation, spectra.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, hlp in (
        ("eigen", "field-free bound levels"),
        ("propagate", "drive the ground state through the pulse"),
        ("kh", "quiver-averaged potential and dressed levels"),
        ("ie", "independent-electron run"),
    ):
        p = sub.add_parser(name, help=hlp)
        _add_common(p)

    p = sub.add_parser("analyze", help="ionization bookkeeping of a saved state")
    _add_common(p)
    p.add_argument("--state", required=True, help="final_state.npz from a propagate run")

    p = sub.add_parser("sweep", help="pulse-parameter sweep")
    _add_common(p)
    p.add_argument("--axis", required=True, choices=("alpha0", "omega", "cycles"))
    p.add_argument("--values", required=True,
                   help="comma-separated values, e.g. 0.2,0.4,0.6")
    p.add_argument("--jobs", type=int, default=1, help="parallel points (processes)")

    p = sub.add_parser("validate-config", help="check a configuration and echo it normalized")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    return parser


def _cmd_validate(args) -> int:
    raw = json.loads(Path(args.config).read_text())
    if args.set:
        raw = _apply_overrides(raw, args.set)
    errors = validate_config_dict(raw)
    if errors:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    cfg = config_from_dict(raw)
    print(json.dumps(config_to_dict(cfg), indent=2))
    _print_derived(cfg)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        datefmt="%H:%M:%S",
    )
    _apply_thread_override()

    try:
        if args.command == "validate-config":
            return _cmd_validate(args)
        cfg = _config_from_args(args)
        if args.command in ("propagate", "ie", "sweep") or args.verbose:
            _print_derived(cfg)
        if args.command == "eigen":
            out = run_eigen(cfg)
        elif args.command == "propagate":
            out = run_propagate(cfg)
        elif args.command == "analyze":
            out = run_analyze(cfg, args.state)
        elif args.command == "kh":
            out = run_kh(cfg)
        elif args.command == "ie":
            out = run_ie(cfg)
        elif args.command == "sweep":
            values = [float(v) for v in args.values.replace(",", " ").split()]
            out = run_sweep(cfg, args.axis, values, jobs=args.jobs)
            if out["failed"]:
                print(f"{out['failed']} sweep point(s) failed; see point manifests", file=sys.stderr)
        print(f"run complete: {out['dir']}")
        return 0
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (PropagationError, EigensolveError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
