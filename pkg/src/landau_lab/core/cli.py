import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from typing_extensions import override

from landau_lab.core.errors import ConfigValidationError, InvariantBreach
from landau_lab.core.harness import load_config, run_scenario
from landau_lab.core.version import VERSION

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2

# flag dest -> dotted config key, per subcommand
_OVERRIDES: Dict[str, Dict[str, str]] = {
    "penrose": {
        "alpha": "penrose.alpha",
        "k_max": "penrose.k_max",
        "im_max": "penrose.im_max",
        "step": "penrose.step",
        "tol": "penrose.tol",
    },
    "linear": {
        "epsilon": "linear.epsilon",
        "theta1": "linear.theta1",
        "dt": "linear.dt",
        "tmax": "linear.t_max",
        "k_max": "linear.k_max",
        "method": "linear.method",
    },
    "kernel": {
        "epsilon": "linear.epsilon",
        "theta1": "linear.theta1",
        "dt": "linear.dt",
        "tmax": "linear.t_max",
        "k_max": "linear.k_max",
    },
    "nonlinear": {
        "epsilon": "nonlinear.epsilon",
        "amp": "nonlinear.amp",
        "dt": "nonlinear.dt",
        "tmax": "nonlinear.t_max",
        "nx": "nonlinear.n_x",
        "nv": "nonlinear.n_v",
        "vmax": "nonlinear.v_max",
        "snap_every": "snapshot_every",
    },
    "full-report": {},
}


class _UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    @override
    def error(self, message: str):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    default = argparse.SUPPRESS if suppress else None
    parent = _ArgumentParser(add_help=False)
    parent.add_argument("--config", default=default, help="TOML run configuration")
    parent.add_argument("--out", default=default, help="Output directory")
    parent.add_argument(
        "--quiet",
        action="store_true",
        default=argparse.SUPPRESS if suppress else False,
        help="Only log warnings and errors",
    )
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="landau-lab",
        description="Landau damping experiments for a two-species Vlasov-Poisson plasma",
        parents=[_global_flags(suppress=False)],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="scenario", required=True, parser_class=_ArgumentParser)
    parents = [_global_flags(suppress=True)]

    penrose = sub.add_parser("penrose", parents=parents, help="Penrose boundary scan")
    penrose.add_argument("--alpha", type=float, help="Perturbation parameter of D")
    penrose.add_argument("--k-max", dest="k_max", type=int, help="Largest mode component")
    penrose.add_argument("--im-max", dest="im_max", type=float, help="Largest |Im lambda|")
    penrose.add_argument("--step", type=float, help="Im lambda spacing")
    penrose.add_argument("--tol", type=float, help="Quadrature tolerance")

    for name, helptext in (("linear", "Linearized density solve"), ("kernel", "Kernel inversion")):
        cmd = sub.add_parser(name, parents=parents, help=helptext)
        cmd.add_argument("--epsilon", type=float, help="Mass ratio")
        cmd.add_argument("--theta1", type=float, help="Contour offset, below theta0")
        cmd.add_argument("--dt", type=float, help="Time step")
        cmd.add_argument("--tmax", type=float, help="Final time")
        cmd.add_argument("--k-max", dest="k_max", type=int, help="Largest mode component")
        if name == "linear":
            cmd.add_argument("--method", choices=("volterra", "resolvent", "both"))

    nonlinear = sub.add_parser("nonlinear", parents=parents, help="Kinetic simulation")
    nonlinear.add_argument("--epsilon", type=float, help="Mass ratio")
    nonlinear.add_argument("--amp", type=float, help="Seed amplitude")
    nonlinear.add_argument("--dt", type=float, help="Time step")
    nonlinear.add_argument("--tmax", type=float, help="Final time")
    nonlinear.add_argument("--nx", type=int, help="Fourier grid points per dimension")
    nonlinear.add_argument("--nv", type=int, help="Velocity points per dimension")
    nonlinear.add_argument("--vmax", type=float, help="Velocity box half width")
    nonlinear.add_argument("--snap-every", dest="snap_every", type=int, help="Steps per snapshot")

    sub.add_parser("full-report", parents=parents, help="Every stage with its cross-checks")
    return parser


def parse_args(args: Optional[List[str]]) -> argparse.Namespace:
    return build_parser().parse_args(args)


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {"scenario": args.scenario, "output_dir": args.out}
    for dest, key in _OVERRIDES[args.scenario].items():
        overrides[key] = getattr(args, dest, None)
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    """
    Command line entry point.

    Returns:
        int: 0 on success, 2 when a physics or numerics invariant fails, 1 on usage and
        configuration errors.
    """
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except _UsageError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, _overrides(args))
        manifest = run_scenario(cfg)
    except InvariantBreach as e:
        sys.stderr.write(f"Invariant breach ({type(e).__name__}): {e}\n")
        return EXIT_INVARIANT
    except ConfigValidationError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    except (ValueError, OSError) as e:
        sys.stderr.write(f"Error: {e}\n")
        return EXIT_USAGE
    sys.stdout.write(manifest.summary() + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
