"""Command-line harness for the manufactured-solution experiments.

    lieforms run --experiment I --cfl 0.1 --refinements 4,8,16 --out exp1.csv
"""
import argparse
import sys

from .errors import LieFormsError
from .experiments import ExperimentSpec, all_completed, parse_config, run_experiment


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="lieforms", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment sweep and write a CSV table")
    run.add_argument("--experiment", choices=["I", "II", "III", "IV"])
    run.add_argument("--scheme", action="append", dest="schemes", metavar="S",
                     help="scheme (or stationary variant for IV); repeatable")
    run.add_argument("--cfl", action="append", type=float, dest="cfls", metavar="X",
                     help="CFL number; repeatable")
    run.add_argument("--refinements", type=_int_list, metavar="n1,n2,...",
                     help="subdivisions per side of the structured meshes")
    run.add_argument("--epsilon", type=_float_list, dest="epsilons", metavar="E",
                     help="diffusion coefficient(s), comma separated")
    run.add_argument("--t-end", type=float, dest="t_end")
    run.add_argument("--mesh-size", type=float, dest="mesh_size",
                     help="single mesh of this size (Experiment III)")
    run.add_argument("--integrator", choices=["euler", "rk2", "rk4"])
    run.add_argument("--out", metavar="FILE.csv")
    run.add_argument("--vtk", dest="vtk_dir", metavar="DIR", help="write VTK snapshots per step")
    run.add_argument("--config", metavar="FILE", help="key=value file; command-line flags override it")
    run.add_argument("--quiet", action="store_true")
    return parser


def _spec_from_args(args):
    settings = {}
    if args.config:
        with open(args.config) as fh:
            settings.update(parse_config(fh.read()))
    for key in ("experiment", "schemes", "cfls", "refinements", "epsilons", "t_end",
                "mesh_size", "integrator", "out", "vtk_dir"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    if "experiment" not in settings:
        raise LieFormsError("an experiment must be given (--experiment or config file)")
    return ExperimentSpec(**settings)


def _print_row(row):
    rate = row.get("rate", "")
    rate = f"{rate:.3f}" if isinstance(rate, float) else "-"
    print(f"{row['experiment']:>3} {row['scheme']:<26} eps={row['epsilon']:<8g} "
          f"cfl={row.get('cfl', '')!s:<5} n={row['n']:<4} error={row.get('error', float('nan')):.4e} "
          f"rate={rate} {row['status']} {row.get('message', '')}", flush=True)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = _spec_from_args(args)
        rows = run_experiment(spec, log=None if args.quiet else _print_row)
    except (LieFormsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if all_completed(rows) else 1


if __name__ == "__main__":
    sys.exit(main())
