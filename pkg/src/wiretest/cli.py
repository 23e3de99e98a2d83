"""Command-line entry point: ``wiretest <subcommand> [flags]``.

Exit status is 0 on success, 2 on a configuration error and 3 on a
numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import experiments, io
from .errors import ConfigError, ContractError, DomainError, NotFoundError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
SECTIONS = {
    "efficiency": "efficiency",
    "freq-response": "freq_response",
    "prestretch": "prestretch",
    "force-control": "force_control",
    "solve": "solve",
}


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "expected a mapping of scenario sections")
    unknown = set(cfg) - set(SECTIONS.values()) - {"robot"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level section")
    return cfg


def _section(cfg: dict, command: str) -> dict:
    section = dict(cfg.get(SECTIONS[command]) or {})
    # a shared top-level robot applies to robot-based scenarios
    if command in ("force-control", "solve") and "robot" in cfg and "robot" not in section:
        section["robot"] = cfg["robot"]
    return section


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wiretest", description="Virtual wire testing machine experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", type=Path, help="YAML scenario file")
        p.add_argument("--seed", type=int, default=0)
        if out:
            p.add_argument("--out", type=Path, default=Path("out"), help="output directory")

    p = sub.add_parser("efficiency", help="pulley transmission efficiency sweep")
    common(p)
    p.add_argument("--trials", type=int, help="pulls per grid point (default 20)")
    p.add_argument("--noise", type=float, help="relative sd of output tension readings")

    p = sub.add_parser("freq-response", help="chirp frequency response, free and fixed load")
    common(p)

    p = sub.add_parser("prestretch", help="creep elongation schedule")
    common(p)

    p = sub.add_parser("force-control", help="end-effector force ramp with/without loss compensation")
    common(p)
    p.add_argument("--compensate", choices=("on", "off", "both"))
    p.add_argument("--noise", type=float, help="relative sd of actuator tension error")

    p = sub.add_parser("solve", help="one-shot tension distribution")
    common(p, out=False)
    p.add_argument("--out", type=Path, help="optional directory for solve.csv")
    p.add_argument("--compensate", choices=("on", "off"))
    p.add_argument("--wrench", type=float, nargs=2, metavar=("FX", "FY"), help="end-effector force in N")
    return parser


def _run(args) -> int:
    cfg = load_config(args.config)
    section = _section(cfg, args.command)
    if getattr(args, "trials", None) is not None and args.trials < 1:
        raise ConfigError("--trials", "must be >= 1")
    if getattr(args, "noise", None) is not None and args.noise < 0:
        raise ConfigError("--noise", "must be non-negative")

    if args.command == "solve":
        if args.wrench is not None:
            section["wrench"] = list(args.wrench)
        robot, sol, tau = experiments.solve_once(section, args.compensate)
        names = [w.name for w in robot.wires]
        print("T_ref [N]:        " + "  ".join(f"{n}={t:.6g}" for n, t in zip(names, sol.T_ref)))
        print("tau_ref [N*m]:    " + "  ".join(f"{t:.6g}" for t in tau))
        print("achieved [N*m]:   " + "  ".join(f"{t:.6g}" for t in sol.achieved_torque))
        print(f"torque residual:  {sol.torque_residual:.3e}")
        print(f"KKT residual:     {sol.kkt_residual:.3e}")
        print(f"active bounds:    {sorted(sol.active_set)}  iterations: {sol.iterations}")
        if args.out is not None:
            io.write_csv(args.out / "solve.csv", ("wire", "tension_n"), zip(names, sol.T_ref))
        return EXIT_OK

    if args.command == "efficiency":
        report = experiments.run_efficiency(section, args.out, args.seed, args.trials, args.noise)
    elif args.command == "freq-response":
        report = experiments.run_freq_response(section, args.out, args.seed)
    elif args.command == "prestretch":
        report = experiments.run_prestretch(section, args.out, args.seed)
    else:
        report = experiments.run_force_control_experiment(section, args.out, args.seed, args.compensate, args.noise)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"wiretest: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ContractError, DomainError, NotFoundError) as exc:
        print(f"wiretest: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"wiretest: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
