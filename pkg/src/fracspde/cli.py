"""Command-line entry point.

Exit status: 0 success, 2 configuration parse error, 3 validation error,
4 numerical failure, 1 anything else. Failures print one line
``error[<category>]: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from ._io import config_hash, dumps, versions
from .bench import ExperimentConfig, default_workers, emit_report, spatial_experiment, \
    temporal_experiment
from .config import RunSettings, load_config
from .errors import ConfigParseError, FracSPDEError, NumericalError, ValidationError
from .mlf import mittag_leffler
from .mlop import propagator_for
from .noise import sample_path
from .scheme import step_all, wellposedness_advisory

EXIT_CODES = {ConfigParseError: 2, ValidationError: 3, NumericalError: 4}

log = logging.getLogger("fracspde")


def _exit_code(exc: FracSPDEError) -> int:
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return 1


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid count {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML configuration file")
    common.add_argument("--preset", choices=["P1", "P2", "P3"],
                        help="problem preset (overrides [run] preset)")
    common.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="fracspde",
        description="Finite-element Mittag-Leffler integrator for time-fractional SPDEs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="integrate one noise sample")
    p.add_argument("--sample", type=int, default=0, help="sample index (default 0)")

    for name, helptext in (("converge-time", "temporal strong-error experiment"),
                           ("converge-space", "spatial strong-error experiment")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--workers", type=_positive, default=None,
                       help="worker processes (default: available cores)")
        p.add_argument("--samples", type=_positive, help="Monte Carlo samples (overrides the config)")
        p.add_argument("--no-plot", action="store_true", help="skip the SVG plot")

    p = sub.add_parser("mlf", help="evaluate E_{alpha,beta}(z)")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--z", type=float, required=True)

    sub.add_parser("selftest", help="run the invariant suite")
    return parser


def _settings(args: argparse.Namespace) -> RunSettings:
    s = load_config(args.config, preset=args.preset)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "samples", None) is not None:
        changes["samples"] = args.samples
    return s.replace(**changes) if changes else s


def _out_dir(args: argparse.Namespace, s: RunSettings) -> Path:
    return args.out if args.out is not None else Path(s.out_dir)


def cmd_solve(args: argparse.Namespace) -> int:
    s = _settings(args)
    problem = s.problem()
    op = s.operator()
    prop = propagator_for(op, s.alpha)
    advisory = wellposedness_advisory(problem, prop.dec)
    grid = s.grid()
    path = sample_path(s.qspec(), s.jspec(), grid, s.seed, args.sample)
    traj = step_all(problem, op, prop, path, grid.dt)
    conf = s.to_dict()
    manifest = {
        "command": "solve",
        "config": conf,
        "config_hash": config_hash(conf),
        "seed": s.seed,
        "sample_index": args.sample,
        "dt": grid.dt,
        "n_steps": grid.n_steps,
        "garding_shift": op.c0,
        "advisory": {"value": advisory.value, "passed": advisory.passed,
                     "gamma": advisory.gamma, "C1": advisory.C1, "surrogate": True},
        "versions": versions(),
    }
    csv_path, json_path = traj.write(_out_dir(args, s), manifest)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_converge(args: argparse.Namespace) -> int:
    s = _settings(args)
    kind = "time" if args.command == "converge-time" else "space"
    cfg = ExperimentConfig(s, kind)
    workers = args.workers if args.workers is not None else default_workers()
    run = temporal_experiment if kind == "time" else spatial_experiment
    result = run(cfg, workers=workers)
    paths = emit_report(result, _out_dir(args, s), plot=not args.no_plot)
    for r in result.records:
        print(f"resolution {r.resolution:.6g}  error {r.error:.6e}  stderr {r.stderr:.3e}")
    fit = result.fit
    measured = "n/a" if fit is None else f"{fit.slope:.4f} +/- {fit.slope_stderr:.4f}"
    print(f"measured rate {measured}  predicted rate {cfg.predicted_rate:.4g}")
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return 0


def cmd_mlf(args: argparse.Namespace) -> int:
    print(repr(mittag_leffler(args.z, args.alpha, args.beta)))
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    from .selftest import run_all

    return 0 if run_all() else 4


COMMANDS = {
    "solve": cmd_solve,
    "converge-time": cmd_converge,
    "converge-space": cmd_converge,
    "mlf": cmd_mlf,
    "selftest": cmd_selftest,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FracSPDEError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
