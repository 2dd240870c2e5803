"""Command-line entry point.

Subcommands: single, ac, ap, sweep (run a configuration), couplings
(print the coupling constants of one geometry), ensemble dump (emit the
sampled geometry table of the configured scenario).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .model import Geometry, PhysParams
from .couplings import all_couplings, ConsistencyError
from .dynamics import IntegrationError
from .config import ConfigError, dump_ensemble, parse_config, run


def _add_run_opts(sub):
    sub.add_argument("--config", required=True, help="path to the JSON run config")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--threads", type=int, default=None,
                     help="parallel member integrations (default: all cores)")
    sub.add_argument("--verify", action="store_true",
                     help="enable contraction-vs-closed-form and fixed-step "
                          "oracle checks")


def _load_config(path: str):
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    method = args.command
    if method != cfg.method:
        cfg = type(cfg)(params=cfg.params, scenario=cfg.scenario, method=method,
                        initial_state=cfg.initial_state,
                        integrator=cfg.integrator, sweep=cfg.sweep,
                        threads=cfg.threads)
        if method == "single" and cfg.sweep is not None:
            raise ConfigError("sweep: not allowed with method 'single'")
        if method == "single" and cfg.scenario.get("kind") != "fixed":
            raise ConfigError("scenario.kind: method 'single' requires kind 'fixed'")
    outcome = run(cfg, args.out, threads=args.threads, verify=args.verify)
    for name, path in outcome.outputs.items():
        print(f"{name}: {path}")
    return outcome.exit_code


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    if cfg.sweep is None:
        raise ConfigError("sweep: config has no sweep block")
    if cfg.method == "single":
        raise ConfigError("sweep: not allowed with method 'single'")
    outcome = run(cfg, args.out, threads=args.threads, verify=args.verify)
    for name, path in outcome.outputs.items():
        print(f"{name}: {path}")
    return outcome.exit_code


def _cmd_couplings(args) -> int:
    g = Geometry(args.r12, args.theta, args.phi)
    p = PhysParams(gamma1=args.gamma1, gamma2=args.gamma2)
    c = all_couplings(g, p, verify=args.verify)
    fields = ("gamma1_dd", "omega1_dd", "gamma2_dd", "omega2_dd",
              "gamma_vc", "omega_vc")
    if args.json:
        print(json.dumps({k: getattr(c, k) for k in fields}, indent=2))
    else:
        for k in fields:
            print(f"{k} = {getattr(c, k):.12g}")
    return 0


def _cmd_ensemble(args) -> int:
    if args.ensemble_command != "dump":
        raise ConfigError(f"unknown ensemble subcommand {args.ensemble_command!r}")
    cfg = _load_config(args.config)
    text = dump_ensemble(cfg)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "ensemble.csv"
        path.write_text(text, encoding="utf-8")
        print(f"ensemble: {path}")
    else:
        sys.stdout.write(text)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dipolepair",
        description="Collective fluorescence of two dipole-dipole coupled "
                    "three-level atoms in time-dependent geometries")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, hint in (("single", "one fixed geometry"),
                       ("ac", "adiabatic-case average"),
                       ("ap", "averaged-potential run")):
        sub = subs.add_parser(name, help=f"integrate {hint}")
        _add_run_opts(sub)
        sub.set_defaults(func=_cmd_run)

    sub = subs.add_parser("sweep", help="run the configured parameter sweep")
    _add_run_opts(sub)
    sub.set_defaults(func=_cmd_sweep)

    sub = subs.add_parser("couplings",
                          help="print the coupling constants of one geometry")
    sub.add_argument("--r12", type=float, required=True, help="separation [lambda]")
    sub.add_argument("--theta", type=float, required=True, help="polar angle [rad]")
    sub.add_argument("--phi", type=float, required=True, help="azimuth [rad]")
    sub.add_argument("--gamma1", type=float, default=1.0)
    sub.add_argument("--gamma2", type=float, default=1.0)
    sub.add_argument("--json", action="store_true", help="emit JSON instead of text")
    sub.add_argument("--verify", action="store_true",
                     help="cross-check closed form against tensor contraction")
    sub.set_defaults(func=_cmd_couplings)

    sub = subs.add_parser("ensemble", help="ensemble table utilities")
    esubs = sub.add_subparsers(dest="ensemble_command", required=True)
    dump = esubs.add_parser("dump", help="emit the sampled (r, theta, phi, weight) table")
    dump.add_argument("--config", required=True)
    dump.add_argument("--out", default=None, help="directory (stdout if omitted)")
    dump.set_defaults(func=_cmd_ensemble)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConsistencyError, IntegrationError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
